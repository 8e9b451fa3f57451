import json
import math

import numpy as np
import pytest
from scipy.special import ellipe, ellipk

from knotwire.biot_savart import (
    AsymptoticModel,
    EvaluationRegion,
    PolylineBundleField,
    SurfaceField,
    WireField,
    divergence_and_curl,
    evaluate_batch_request,
    field_distance,
    write_field_csv,
)
from knotwire.curves import make_standard
from knotwire.current import SurfaceCurrent
from knotwire.errors import TooCloseToSurface, TooCloseToWire, ValidationFailed
from knotwire.tube import TubeChart

LOOP = make_standard("circle", R=1.0)


def loop_field_oracle(R, rho, z):
    """Field of a unit loop in the plane z = 0 (units with mu0 = 1), from
    complete elliptic integrals; returns (B_rho, B_z)."""
    a2 = (R + rho) ** 2 + z * z
    b2 = (R - rho) ** 2 + z * z
    m = 4 * R * rho / a2
    K, E = ellipk(m), ellipe(m)
    pre = 1 / (2 * math.pi * math.sqrt(a2))
    bz = pre * (K + (R * R - rho * rho - z * z) / b2 * E)
    br = 0.0 if rho == 0 else pre * z / rho * (-K + (R * R + rho * rho + z * z) / b2 * E)
    return br, bz


@pytest.mark.parametrize("z", [0.0, 0.5, 1.0, 2.0])
def test_loop_on_axis(z):
    b = WireField(LOOP)(np.array([[0.0, 0.0, z]]))[0]
    exact = 0.5 / (1 + z * z) ** 1.5
    assert abs(b[2] - exact) <= 1e-8 * exact
    assert abs(b[0]) + abs(b[1]) < 1e-12


@pytest.mark.parametrize("rho,z", [(0.3, 0.2), (0.9, 0.1), (1.5, -0.7), (3.0, 2.0)])
def test_loop_off_axis_matches_elliptic_formula(rho, z):
    b = WireField(LOOP)(np.array([[rho, 0.0, z]]))[0]
    br, bz = loop_field_oracle(1.0, rho, z)
    np.testing.assert_allclose(b, [br, 0.0, bz], atol=1e-9 * math.hypot(br, bz))


def test_segment_formula_converges_to_smooth_quadrature():
    knot = make_standard("trefoil")
    x = np.array([[0.2, 0.1, 0.3], [3.5, 0.0, 0.0], [0.0, -1.0, 1.5]])
    smooth = WireField(knot)(x)
    errs = []
    for n in (512, 1024, 2048):
        errs.append(np.abs(WireField(knot.sample(n, uniform_in="s"))(x) - smooth).max())
    # inscribed polygons converge at second order
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3
    assert errs[2] < 1e-5


def test_wire_clearance():
    f = WireField(LOOP.sample(64))
    with pytest.raises(TooCloseToWire):
        f(LOOP.sample(64).points[:1])
    with pytest.raises(ValidationFailed):
        WireField(np.zeros((4, 3)))


def test_bundle_weights_are_linear():
    a = LOOP.sample(128)
    b = make_standard("circle", R=0.5, center=(0.0, 0.0, 0.4)).sample(96)
    x = np.array([[0.1, 0.2, -0.3], [2.0, 1.0, 0.5]])
    both = PolylineBundleField([a, b], [2.0, -0.5])(x)
    np.testing.assert_allclose(both, 2.0 * WireField(a)(x) - 0.5 * WireField(b)(x), atol=1e-14)
    with pytest.raises(ValidationFailed):
        PolylineBundleField([a], [1.0, 2.0])


def test_weighted_sum():
    a = WireField(LOOP)
    b = WireField(make_standard("circle", R=2.0))
    x = np.array([[0.0, 0.3, 0.2]])
    np.testing.assert_allclose((2.0 * a + b)(x), 2 * a(x) + b(x), rtol=1e-14)


def test_toroidal_solenoid_field():
    """F = 0, G = 1 on a round torus winds the current poloidally: the field
    is R/rho around the axis inside the tube and vanishes outside."""
    R, eps = 1.0, 0.2
    chart = TubeChart(make_standard("circle", R=R), eps)
    cur = SurfaceCurrent(chart, F_cos=[0.0])
    f = SurfaceField(cur)
    inside = np.array([[1.0, 0.0, 0.0], [0.0, 0.9, 0.05], [-1.1, 0.0, -0.1]])
    b = f(inside)
    rho = np.hypot(inside[:, 0], inside[:, 1])
    phi_hat = np.stack([-inside[:, 1], inside[:, 0], 0 * rho], axis=1) / rho[:, None]
    np.testing.assert_allclose(b, (R / rho)[:, None] * phi_hat, atol=1e-9)
    outside = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.6]])
    np.testing.assert_allclose(f(outside), 0.0, atol=1e-9)


def test_surface_field_clearance():
    chart = TubeChart(make_standard("trefoil"), 0.05)
    f = SurfaceField(SurfaceCurrent.concrete(chart))
    with pytest.raises(TooCloseToSurface):
        f(chart.surface_point(np.array([1.0]), np.array([0.3])))


def test_surface_field_quadrature_is_refinement_stable():
    chart = TubeChart(make_standard("trefoil"), 0.05)
    cur = SurfaceCurrent.concrete(chart)
    x = chart.embed(np.array([0.5, 2.0, 7.0]), np.array([[0.0, 0.0], [0.3, 0.2], [-0.5, 0.1]]))
    # check=True raises if the next finer grid moves the value by more than 1e-9
    SurfaceField(cur, check=True)(x)


def test_asymptotic_model_on_the_core():
    chart = TubeChart(make_standard("trefoil"), 0.02)
    cur = SurfaceCurrent.concrete(chart)
    model = AsymptoticModel(cur)
    s = np.linspace(0, chart.length, 8, endpoint=False)
    y = np.zeros((8, 2))
    np.testing.assert_allclose(model.components(s, y)[:, 0], 1.0)
    np.testing.assert_allclose(model.components(s, y)[:, 1:], 0.0, atol=1e-15)
    b = SurfaceField(cur).tube_components(s, y)
    assert np.max(np.abs(b[:, 0] - 1.0)) < 1e-3
    # transverse part of the model is the linear saddle with a2 = 2
    jac = model.components_jacobian(0.0, y[0])
    np.testing.assert_allclose(jac, [[0.0, -1 / 0.02], [-1 / 0.02, 0.0]])


def test_divergence_and_curl_of_loop():
    f = WireField(LOOP)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(10, 3)) * 0.4 + np.array([0.0, 0.0, 0.5])
    div, curl = divergence_and_curl(f, x, 1e-4)
    scale = np.linalg.norm(f(x), axis=1)
    assert np.all(np.abs(div) < 1e-6 * scale / 1e-4)
    assert np.all(np.linalg.norm(curl, axis=1) < 1e-6 * scale / 1e-4)


def test_field_distance_and_region():
    chart = TubeChart(make_standard("trefoil"), 0.05)
    K = EvaluationRegion.tube_annulus(chart, n_s=8)
    assert K.points.shape == (8 * 2 * 8, 3)
    _, y = chart.project(K.points)
    r = np.hypot(y[:, 0], y[:, 1])
    assert r.min() > 0.02 - 1e-12 and r.max() < 0.05 + 1e-12
    f = WireField(chart.core.sample(512))
    assert field_distance(f, f, K, 1) == 0.0
    assert field_distance(f, 2.0 * f, K, 0) == pytest.approx(np.abs(f(K.points)).max())
    with pytest.raises(ValidationFailed):
        field_distance(f, f, K, 2)
    near = EvaluationRegion(K.points, clearance=1.0)
    with pytest.raises(ValidationFailed):
        near.check(f)


def test_batch_request_and_csv(tmp_path):
    req = json.dumps({"source": "loop", "points": [[0, 0, 0.5], [0, 0, 1.0]]})
    out = evaluate_batch_request(req, {"loop": lambda tol: WireField(LOOP, rel_tol=tol)})
    np.testing.assert_allclose(out[:, 2], 0.5 / (1 + np.array([0.25, 1.0])) ** 1.5, rtol=1e-8)
    with pytest.raises(ValidationFailed):
        evaluate_batch_request({"source": "coil", "points": []}, {})
    path = tmp_path / "b.csv"
    write_field_csv(path, [[0, 0, 0.5]], out[:1])
    assert path.read_text().splitlines()[0] == "x,y,z,Bx,By,Bz"
