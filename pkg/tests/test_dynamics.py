import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knotwire.biot_savart import AsymptoticModel, PerturbedField, SurfaceField
from knotwire.curves import TWO_PI, make_standard
from knotwire.current import SurfaceCurrent
from knotwire.dynamics import (
    find_periodic_orbit,
    floquet_exponents,
    fourier_diff_matrix,
    graph_velocity,
    isotopy_certificate,
    poincare_map,
    trace_field_line,
    trace_in_tube,
    trace_of_jacobian_integral,
    trig_derivative,
    trig_interpolate,
    write_certificate,
)
from knotwire.errors import LeftDomain, NoReturn, TransversalityLost
from knotwire.tube import TubeChart

EPS = 0.05
CHART = TubeChart(make_standard("trefoil"), EPS)
MODEL = AsymptoticModel(SurfaceCurrent.concrete(CHART))


class _Reversed:
    """The model field with the longitudinal component flipped."""

    chart = CHART

    def tube_components(self, s, y):
        c = MODEL.components(s, y)
        c[..., 0] *= -1
        return c


def test_spectral_differentiation_is_exact_for_trig_polynomials():
    L = 3.0
    s = np.arange(16) * (L / 16)
    k = TWO_PI / L
    f = np.sin(3 * k * s) + 0.5 * np.cos(k * s)
    df = 3 * k * np.cos(3 * k * s) - 0.5 * k * np.sin(k * s)
    np.testing.assert_allclose(fourier_diff_matrix(16, L) @ f, df, atol=1e-12)
    t = np.linspace(0, L, 37)
    np.testing.assert_allclose(trig_interpolate(f, L, t), np.sin(3 * k * t) + 0.5 * np.cos(k * t), atol=1e-13)
    np.testing.assert_allclose(trig_derivative(f, L, t),
                               3 * k * np.cos(3 * k * t) - 0.5 * k * np.sin(k * t), atol=1e-12)


def test_spectral_coefficients_decay_for_smooth_data():
    L = 2.0
    s = np.arange(64) * (L / 64)
    f = 1 / (1.5 + np.cos(TWO_PI * s / L))
    c = np.abs(np.fft.rfft(f)) / 64
    assert np.all(np.diff(np.log(c[1:20])) < 0)


def test_model_orbit_is_the_core():
    orbit = find_periodic_orbit(MODEL, CHART, n_modes=32)
    assert orbit.residual < 1e-12
    assert orbit.sup_y < 1e-12


def test_linear_saddle_floquet_exponents():
    orbit = find_periodic_orbit(MODEL, CHART, n_modes=32)
    lp, lm = floquet_exponents(MODEL, orbit)
    # dV/dy = [[0, -1], [-1, 0]] / eps has eigenvalues +-1/eps
    rate = CHART.length / EPS
    assert abs(lp / rate - 1) < 1e-6
    assert abs(lm / rate + 1) < 1e-6
    assert abs(trace_of_jacobian_integral(orbit)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.02, 0.02), st.floats(-0.02, 0.02), st.floats(0, 1))
def test_saddle_conserves_hyperbolic_quadratic(y1, y2, frac):
    s0 = frac * CHART.length
    _, ys = trace_in_tube(MODEL, CHART, s0, [y1, y2], s0 + 0.5 * EPS)
    q = ys[:, 0] ** 2 - ys[:, 1] ** 2
    assert np.max(np.abs(q - q[0])) < 1e-9


def test_escape_raises_no_return():
    with pytest.raises(NoReturn):
        trace_in_tube(MODEL, CHART, 0.0, [0.01, -0.01], CHART.length)
    with pytest.raises(NoReturn):
        poincare_map(MODEL, CHART, 0.0, [0.01, -0.01])


def test_reversed_field_is_not_a_graph():
    with pytest.raises(TransversalityLost):
        graph_velocity(_Reversed(), CHART, np.array([0.0]), np.zeros((1, 2)))


def test_perturbed_orbit_persists():
    shift = np.array([0.0, 0.0, 1.0])
    pert = PerturbedField(MODEL, lambda x: np.broadcast_to(shift, x.shape), 0.01)
    orbit = find_periodic_orbit(pert, CHART, n_modes=256)
    assert orbit.residual < 1e-9
    # a small uniform field moves the line by O(eps * amplitude)
    assert 1e-5 < orbit.sup_y < 0.01
    cert = isotopy_certificate(orbit, pert)
    assert cert["confined"] and cert["s_winding"] == 1


def test_surface_orbit_short_interval_invariance():
    field = SurfaceField(SurfaceCurrent.concrete(CHART))
    orbit = find_periodic_orbit(field, CHART, n_modes=256)
    assert orbit.residual < 1e-9
    s0 = 1.0
    s = np.linspace(s0, s0 + 0.2 * EPS, 5)
    _, ys = trace_in_tube(field, CHART, s0, orbit(np.array(s0)), s[-1], s_eval=s)
    # the orbit is unstable at rate 1/eps, so only short arcs are followed
    np.testing.assert_allclose(ys, orbit(s), atol=1e-8)


def test_certificate_contents(tmp_path):
    orbit = find_periodic_orbit(MODEL, CHART, n_modes=32)
    cert = isotopy_certificate(orbit, MODEL)
    assert cert["graph_over_core"] and cert["confined"]
    assert cert["C_measured"] == pytest.approx(orbit.sup_y / (EPS * math.log(1 / EPS)))
    path = tmp_path / "cert.json"
    write_certificate(path, cert)
    assert '"s_winding": 1' in path.read_text()
    orbit.to_csv(tmp_path / "orbit.csv", n=16)
    assert len((tmp_path / "orbit.csv").read_text().splitlines()) == 17


def test_solenoid_field_lines_close():
    """Inside a round toroidal solenoid the lines are horizontal circles."""
    chart = TubeChart(make_standard("circle", R=1.0), 0.2)
    field = SurfaceField(SurfaceCurrent(chart, F_cos=[0.0]))
    x0 = np.array([1.05, 0.0, 0.03])
    line = trace_field_line(field, x0, TWO_PI * 1.05, tol=1e-10, n_out=9)
    np.testing.assert_allclose(line.points[-1], x0, atol=1e-7)
    np.testing.assert_allclose(np.hypot(line.points[:, 0], line.points[:, 1]), 1.05, atol=1e-8)
    with pytest.raises(LeftDomain):
        trace_field_line(field, x0, 1.0, domain=lambda x: x[1] < 0.5)
