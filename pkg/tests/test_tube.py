import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knotwire.curves import TWO_PI, make_standard
from knotwire.errors import AmbiguousProjection, OutOfDisk, OutsideTube, ValidationFailed
from knotwire.tube import TubeChart, reach_estimate

TREFOIL = make_standard("trefoil")
CHART = TubeChart(TREFOIL, 0.1)

disk_points = st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 0.95), st.floats(0.0, TWO_PI))


def _y(r, phi):
    return np.array([r * math.cos(phi), r * math.sin(phi)])


def test_embed_zero_is_core():
    s = np.linspace(0, CHART.length, 11)
    np.testing.assert_allclose(CHART.embed(s, np.zeros((11, 2))), TREFOIL.eval(s), atol=1e-14)


def test_coordinate_vectors_match_finite_differences():
    rng = np.random.default_rng(3)
    s = rng.uniform(0, CHART.length, 12)
    y = rng.uniform(-0.6, 0.6, (12, 2))
    ds, d1, d2 = CHART.coordinate_vectors(s, y)
    h = 1e-6
    fd_s = (CHART.embed(s + h, y) - CHART.embed(s - h, y)) / (2 * h)
    e1 = np.array([h, 0.0])
    e2 = np.array([0.0, h])
    fd_1 = (CHART.embed(s, y + e1) - CHART.embed(s, y - e1)) / (2 * h)
    fd_2 = (CHART.embed(s, y + e2) - CHART.embed(s, y - e2)) / (2 * h)
    np.testing.assert_allclose(ds, fd_s, atol=1e-8)
    np.testing.assert_allclose(d1, fd_1, atol=1e-9)
    np.testing.assert_allclose(d2, fd_2, atol=1e-9)


def test_volume_density_is_jacobian_determinant():
    s = np.array([0.3, 2.0, 5.1])
    y = np.array([[0.5, 0.1], [-0.3, 0.7], [0.0, -0.9]])
    ds, d1, d2 = CHART.coordinate_vectors(s, y)
    det = np.einsum("ij,ij->i", ds, np.cross(d1, d2))
    np.testing.assert_allclose(CHART.volume_density(s, y), det, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(disk_points, st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_tube_components_roundtrip(pt, comp):
    frac, r, phi = pt
    s = np.array([frac * CHART.length])
    y = _y(r, phi)[None]
    comp = np.array(comp)[None]
    vec = CHART.from_tube_components(s, y, comp)
    np.testing.assert_allclose(CHART.to_tube_components(s, y, vec), comp, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(disk_points)
def test_project_inverts_embed(pt):
    frac, r, phi = pt
    s = frac * CHART.length
    y = _y(r, phi)
    s2, y2 = CHART.project(CHART.embed(np.array(s), y))
    ds = (s2[0] - s + 0.5 * CHART.length) % CHART.length - 0.5 * CHART.length
    assert abs(ds) < 1e-10
    np.testing.assert_allclose(y2[0], y, atol=1e-10)


def test_surface_area_of_round_torus():
    R, eps = 2.0, 0.3
    chart = TubeChart(make_standard("circle", R=R), eps)
    assert abs(chart.surface_area() - 4 * math.pi**2 * R * eps) < 1e-10


def test_surface_area_is_length_times_circumference():
    # the curvature term integrates to zero in theta
    assert abs(CHART.surface_area() - TWO_PI * CHART.eps * CHART.length) < 1e-9


def test_reach_of_circle_and_trefoil():
    assert abs(reach_estimate(make_standard("circle", R=1.7)) - 1.7) < 1e-12
    kmax = np.max(TREFOIL.frame(np.linspace(0, TREFOIL.length, 2048)).kappa)
    assert reach_estimate(TREFOIL) <= 1 / kmax + 1e-9
    with pytest.raises(ValidationFailed):
        TubeChart(TREFOIL, 1.0)


def test_projection_errors():
    far = TREFOIL.eval(np.array([0.0])) + np.array([[0.0, 0.0, 5.0]])
    with pytest.raises(OutsideTube):
        CHART.project(far)
    flat = TubeChart(make_standard("ellipse", a=3.0, b=0.2), 0.3, check_reach=False)
    with pytest.raises(AmbiguousProjection):
        flat.project(np.zeros((1, 3)))
    with pytest.raises(OutOfDisk):
        CHART.embed(np.array(0.0), np.array([1.5, 0.0]))


def test_surface_points_project_without_checks():
    th = np.linspace(0, TWO_PI, 9)
    s = np.full_like(th, 1.3)
    _, y = CHART.project(CHART.surface_point(s, th), check=False)
    np.testing.assert_allclose(np.hypot(y[:, 0], y[:, 1]), 1.0, atol=1e-12)


def test_surface_mesh_export(tmp_path):
    path = tmp_path / "mesh.csv"
    CHART.export_mesh_csv(path, n_s=8, n_theta=4)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "s,theta,x,y,z"
    assert len(rows) == 33
    assert CHART.surface_self_distance() > 0
