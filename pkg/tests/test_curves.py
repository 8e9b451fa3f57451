import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ellipe

from knotwire.curves import (
    TWO_PI,
    ClosedCurve,
    MappedCurve,
    Polyline,
    framing_twist_N0,
    linking_number,
    make_standard,
    random_rotation,
    total_torsion,
    writhe,
)
from knotwire.errors import CurvesTooClose, InflectionPoint, ValidationFailed
from knotwire.knots import linking_from_diagram

FRAMED_CURVES = [
    ("circle", {"R": 1.3}),
    ("ellipse", {"a": 2.0, "b": 1.0}),
    ("trefoil", {"scale": 1.0}),
    ("figure_eight", {"scale": 1.0}),
    ("torus_knot", {"p": 2, "q": 3, "R": 2.0, "r": 0.6}),
    ("torus_knot", {"p": 2, "q": 5, "R": 2.0, "r": 0.5}),
    ("saddle", {"R": 1.0, "h": 0.3}),
]


def _warp(a):
    def phi(w):
        return (w + a * np.sin(w), 1 + a * np.cos(w), -a * np.sin(w), -a * np.cos(w))
    return phi


def test_circle_geometry():
    c = make_standard("circle", R=2.5)
    assert abs(c.length - TWO_PI * 2.5) < 1e-12
    fr = c.frenet(np.linspace(0, c.length, 17))
    np.testing.assert_allclose(fr.kappa, 1 / 2.5, rtol=1e-12)
    np.testing.assert_allclose(fr.tau, 0.0, atol=1e-12)


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (3.0, 0.5), (1.2, 1.1)])
def test_ellipse_length_matches_complete_elliptic_integral(a, b):
    c = make_standard("ellipse", a=a, b=b)
    assert abs(c.length - 4 * a * ellipe(1 - (b / a) ** 2)) < 1e-11 * c.length


def test_arclength_inverse_roundtrip():
    c = make_standard("trefoil")
    s = np.linspace(0, c.length, 50, endpoint=False)
    u = c.u_of_s(s)
    np.testing.assert_allclose(c.s_of_u(u), s, atol=1e-11)
    # unit speed in arc length
    h = 1e-5
    speed = np.linalg.norm(c.eval(s + h) - c.eval(s - h), axis=1) / (2 * h)
    np.testing.assert_allclose(speed, 1.0, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.sampled_from([0, 2, 3, 4]))
def test_frenet_frame_is_orthonormal_and_right_handed(frac, which):
    kind, params = FRAMED_CURVES[which]
    c = make_standard(kind, **params)
    fr = c.frenet(np.array([frac * c.length]))
    M = np.stack([fr.T[0], fr.N[0], fr.B[0]])
    np.testing.assert_allclose(M @ M.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(M) - 1) < 1e-12


def test_frenet_serret_by_finite_differences():
    c = make_standard("trefoil")
    s = np.linspace(0.1, c.length - 0.1, 9)
    h = 1e-5
    fr, fp, fm = c.frame(s), c.frame(s + h), c.frame(s - h)
    dT = (fp.T - fm.T) / (2 * h)
    dB = (fp.B - fm.B) / (2 * h)
    np.testing.assert_allclose(dT, fr.kappa[:, None] * fr.N, atol=1e-7)
    np.testing.assert_allclose(dB, -fr.tau[:, None] * fr.N, atol=1e-6)


def test_inflection_is_rejected():
    # x = cos u, y = sin 2u is a figure-eight plane curve with inflections
    h = np.zeros((3, 3, 2))
    h[0, 1, 0] = 1.0
    h[1, 2, 1] = 1.0
    with pytest.raises((InflectionPoint, ValidationFailed)):
        ClosedCurve(h, validate=True)


def test_unknown_kind_and_bad_torus_knot():
    with pytest.raises(ValidationFailed):
        make_standard("spiral")
    with pytest.raises(ValidationFailed):
        make_standard("torus_knot", p=2, q=4)


def _pushoff_linking(curve, delta, n=4096):
    s = np.arange(n) * (curve.length / n)
    fr = curve.frame(s)
    p = curve.eval(s)
    return linking_number(Polyline(p), Polyline(p + delta * fr.N)).raw


@pytest.mark.parametrize("kind,params", FRAMED_CURVES[1:6])
def test_twist_plus_writhe_is_frenet_pushoff_linking(kind, params):
    c = make_standard(kind, **params)
    m = framing_twist_N0(c)
    assert m.defect < 1e-3
    # independent route: linking of the curve with its push-off along N
    assert round(_pushoff_linking(c, 1e-3 * c.length)) == m.value


def test_trefoil_framing_values():
    c = make_standard("trefoil")
    # frozen from the push-off linking oracle above and a 512-point writhe rule
    assert framing_twist_N0(c).value == -3
    assert abs(writhe(c) + total_torsion(c) / TWO_PI + 3) < 1e-6


def test_planar_curves_have_no_writhe():
    for kind, params in (FRAMED_CURVES[0], FRAMED_CURVES[1]):
        c = make_standard(kind, **params)
        assert abs(writhe(c)) < 1e-10
        assert abs(total_torsion(c)) < 1e-10


def test_parametrization_invariance():
    base = make_standard("trefoil")
    mapped = MappedCurve(base, _warp(0.4))
    assert abs(mapped.length - base.length) < 1e-8
    s = np.linspace(0, base.length, 23)
    np.testing.assert_allclose(mapped.eval(s), base.eval(s), atol=1e-8)
    np.testing.assert_allclose(mapped.frame(s).tau, base.frame(s).tau, atol=1e-8)
    assert abs(writhe(mapped) - writhe(base)) < 1e-8
    assert abs(total_torsion(mapped) - total_torsion(base)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_writhe_is_rigid_motion_invariant(seed):
    rng = np.random.default_rng(seed)
    c = make_standard("torus_knot", p=2, q=3, R=2.0, r=0.6)
    moved = c.transformed(random_rotation(rng), rng.normal(size=3))
    assert abs(writhe(moved) - writhe(c)) < 1e-9


def test_mirror_flips_writhe():
    c = make_standard("trefoil")
    assert abs(writhe(c.mirrored()) + writhe(c)) < 1e-9


def _hopf():
    a = make_standard("circle", R=1.0)
    h = np.zeros((3, 2, 2))
    h[0, 0, 0] = 1.0
    h[0, 1, 0] = 1.0
    h[2, 1, 1] = 1.0
    b = ClosedCurve(h, validate=True)
    return a, b


def test_hopf_link_smooth_and_polygon_routes_agree():
    a, b = _hopf()
    smooth = linking_number(a, b)
    poly = linking_number(a.sample(400), b.sample(400))
    assert abs(abs(smooth.raw) - 1) < 1e-8
    assert smooth.value == poly.value
    # crossing-count route
    assert linking_from_diagram(a.sample(400).points, b.sample(400).points) == smooth.value
    # reversing one component flips the sign
    assert linking_number(a, b.reversed()).value == -smooth.value


def test_hopf_orientation_convention():
    # (1 + cos u, 0, sin u) pierces the disk of (cos u, sin u, 0) downward at
    # the origin, so the intersection count with the +z oriented disk is -1
    a, b = _hopf()
    assert linking_number(a, b).value == -1
    assert linking_number(a, b.mirrored()).value == 1


def test_unlinked_and_too_close():
    a = make_standard("circle", R=1.0)
    far = make_standard("circle", R=1.0, center=(5.0, 0.0, 0.0))
    assert linking_number(a, far).value == 0
    with pytest.raises(CurvesTooClose):
        linking_number(a.sample(64), a.sample(64))


def test_polyline_csv_roundtrip(tmp_path):
    p = make_standard("figure_eight").sample(100)
    path = tmp_path / "p.csv"
    p.to_csv(path)
    q = Polyline.from_csv(path)
    np.testing.assert_array_equal(q.points, p.points)


def test_polyline_embedding_check():
    p = make_standard("trefoil").sample(256)
    p.check_embedded()
    square = Polyline(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float))
    with pytest.raises(ValidationFailed):
        square.check_embedded()


def test_curve_json_roundtrip():
    c = make_standard("torus_knot", p=3, q=4, R=2.0, r=0.5)
    d = ClosedCurve.from_dict(c.to_dict())
    np.testing.assert_allclose(d.eval(np.linspace(0, c.length, 7)), c.eval(np.linspace(0, c.length, 7)))
    assert math.isclose(d.length, c.length)
