
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knotwire.curves import TWO_PI, make_standard
from knotwire.current import IsoChart, SurfaceCurrent, van_der_corput
from knotwire.errors import NotPeriodic, ValidationFailed
from knotwire.tube import TubeChart

CHART = TubeChart(make_standard("trefoil"), 0.05)
CONCRETE = SurfaceCurrent.concrete(CHART)
WAVY = SurfaceCurrent(CHART, F_cos=[0.0, 0.3, 2.0], F_sin=[0.0, 0.0, 0.5, 0.2],
                      G_cos=[1.0, 0.2], G_sin=[0.0, 0.1])
WAVY_ISO = IsoChart(WAVY)


@pytest.fixture(scope="module")
def iso():
    return IsoChart(CONCRETE)


@pytest.fixture(scope="module")
def iso_wavy():
    return WAVY_ISO


def test_concrete_current_coefficients():
    assert CONCRETE.hyperbolic
    assert CONCRETE.fourier(2) == (2.0, 0.0)
    assert CONCRETE.fourier(7) == (0.0, 0.0)
    th = np.linspace(0, TWO_PI, 13)
    np.testing.assert_allclose(CONCRETE.F(th), 2 * np.cos(2 * th), atol=1e-14)
    np.testing.assert_allclose(CONCRETE.Phi(th), np.sin(2 * th), atol=1e-14)


def test_antiderivatives_by_finite_differences():
    s = np.linspace(0.1, CHART.length - 0.1, 7)
    th = np.linspace(0.1, 6.0, 7)
    h = 1e-6
    np.testing.assert_allclose((WAVY.H(s + h) - WAVY.H(s - h)) / (2 * h), WAVY.G(s), atol=1e-8)
    np.testing.assert_allclose((WAVY.Phi(th + h) - WAVY.Phi(th - h)) / (2 * h), WAVY.F(th), atol=1e-8)
    np.testing.assert_allclose(WAVY.H_inverse(WAVY.H(s)), s, atol=1e-12)


@pytest.mark.parametrize("current", [CONCRETE, WAVY])
def test_current_is_surface_divergence_free(current):
    s = np.linspace(0, CHART.length, 9)
    th = np.linspace(0.2, 6.0, 9)
    S, TH = np.meshgrid(s, th)
    div = current.surface_divergence(S, TH)
    assert np.max(np.abs(div)) < 1e-8
    # without the area factor the density is not conserved on a curved core
    assert np.max(np.abs(current.surface_divergence(S, TH, drop_area_factor=True))) > 1e-3


def test_cartesian_density_matches_surface_derivatives():
    rng = np.random.default_rng(7)
    s = rng.uniform(0, CHART.length, 10)
    th = rng.uniform(0, TWO_PI, 10)
    h = 1e-6
    d_s = (CHART.surface_point(s + h, th) - CHART.surface_point(s - h, th)) / (2 * h)
    d_th = (CHART.surface_point(s, th + h) - CHART.surface_point(s, th - h)) / (2 * h)
    # J dS/(ds dtheta) = eps*A*(J^s d_s + J^theta d_theta)
    js, jt = WAVY.j_eval(s, th)
    A = WAVY.area_factor(s, th)
    expect = CHART.eps * A[:, None] * (js[:, None] * d_s + jt[:, None] * d_th)
    np.testing.assert_allclose(WAVY.cartesian_density(s, th), expect, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.floats(0, TWO_PI))
def test_closed_form_flow(frac, theta0):
    s0 = frac * CHART.length
    e = CHART.eps
    t = np.linspace(0.0, 3 * TWO_PI * e, 7)
    s, th = CONCRETE.closed_form_unscaled(s0, theta0, t)
    expect = s0 + e * (np.sin(2 * theta0 + 2 * t / e) - np.sin(2 * theta0))
    np.testing.assert_allclose(s, expect, atol=1e-12)
    np.testing.assert_allclose(th, theta0 + t / e, atol=1e-14)


def test_closed_form_agrees_with_integration():
    t = np.linspace(0.01, 0.5, 5)
    s_ode, th_ode = CONCRETE.integral_curve(0.4, 1.1, t)
    s_cf, th_cf = CONCRETE.closed_form_unscaled(0.4, 1.1, t)
    np.testing.assert_allclose(s_ode, s_cf, atol=1e-9)
    np.testing.assert_allclose(th_ode, th_cf, atol=1e-9)
    with pytest.raises(ValidationFailed):
        WAVY.closed_form_unscaled(0.0, 0.0, t)


def test_vanishing_G_is_rejected():
    with pytest.raises(ValidationFailed):
        SurfaceCurrent(CHART, F_cos=[0, 0, 2.0], G_cos=[1.0, 1.5])


def test_drifting_current_is_not_periodic():
    with pytest.raises(NotPeriodic):
        IsoChart(SurfaceCurrent(CHART, F_cos=[0.5, 0, 2.0]))


def test_van_der_corput():
    np.testing.assert_array_equal(van_der_corput(8), [0, .5, .25, .75, .125, .625, .375, .875])
    np.testing.assert_allclose(van_der_corput(4, base=3), [0, 1 / 3, 2 / 3, 1 / 9])


def test_period_on_round_torus_is_exact():
    chart = TubeChart(make_standard("circle", R=1.0), 0.1)
    iso = IsoChart(SurfaceCurrent.concrete(chart))
    # theta advances at G/(eps A) and A averages to one along each orbit
    np.testing.assert_allclose(iso.T, TWO_PI * 0.1, rtol=1e-12)


def test_period_and_area_density(iso):
    e = CHART.eps
    assert np.max(np.abs(iso.T / (TWO_PI * e) - 1)) < 10 * e**2
    np.testing.assert_allclose(iso.B, iso.area_density_exact(iso.alpha), rtol=1e-7)
    # B / T = l G with G = 1, so the normalization is the core length
    assert abs(iso.c0 - CHART.length) < 1e-7 * CHART.length
    np.testing.assert_array_equal(iso.Ttilde, iso.T)


def test_orbits_close_after_one_period(iso_wavy):
    a = 0.37
    T = float(iso_wavy.period(np.array(a)))
    s, th = WAVY.integral_curve(a * CHART.length, 0.0, [T], scaled=True)
    assert abs(s[-1] - a * CHART.length) < 1e-9
    assert abs(th[-1] - TWO_PI) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 0.999))
def test_psi_roundtrip(alpha, sigma):
    iso = WAVY_ISO
    s, th = iso.psi_inverse(np.array([alpha]), np.array([sigma]))
    a2, s2 = iso.psi(s, th)
    da = (a2[0] - alpha + 0.5) % 1 - 0.5
    ds = (s2[0] - sigma + 0.5) % 1 - 0.5
    assert abs(da) < 1e-10 and abs(ds) < 1e-10


def test_sampling_measure(iso_wavy):
    u = np.linspace(0.0, 1.0, 11)
    a = iso_wavy.inverse_cdf(u)
    np.testing.assert_allclose(iso_wavy.cdf(a), u, atol=1e-13)
    # density is B/(c0 T) and integrates to one
    grid = np.arange(512) / 512
    assert abs(iso_wavy.density(grid).mean() - 1) < 1e-12
    np.testing.assert_allclose(iso_wavy.density(iso_wavy.alpha),
                               iso_wavy.B / (iso_wavy.c0 * iso_wavy.T), rtol=1e-10)
    alphas = iso_wavy.sample_alphas(16)
    np.testing.assert_allclose(np.sort(iso_wavy.cdf(alphas)), np.arange(16) / 16, atol=1e-12)


def test_iso_chart_csv(iso, tmp_path):
    path = tmp_path / "iso.csv"
    iso.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "alpha,T,Ttilde,B,rho_cdf"
    assert len(rows) == len(iso.alpha) + 1

