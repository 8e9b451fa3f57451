"""Closed space curves: evaluation, arc length, Frenet frames, writhe,
total torsion, framing twist and linking numbers.

Smooth curves are periodic maps of a native parameter ``u`` in
``[0, 2*pi)``.  The workhorse is :class:`ClosedCurve`, a truncated
trigonometric series per coordinate.  Every public geometric quantity is
expressed in the arc-length parameter ``s`` in ``[0, length)``; the
``u <-> s`` conversion goes through a dense table plus Newton steps.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CurvesTooClose,
    InflectionPoint,
    NotNearInteger,
    QuadratureNotConverged,
    ValidationFailed,
)

TWO_PI = 2.0 * math.pi
_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# Polylines
# ---------------------------------------------------------------------------


class Polyline:
    """An ordered list of points, closed by default.

    The closing point is never stored twice; CSV export repeats it.
    """

    def __init__(self, points, closed=True, orientation=1):
        pts = np.array(points, dtype=float).reshape(-1, 3)
        if closed and len(pts) > 1 and np.allclose(pts[0], pts[-1], rtol=0, atol=1e-14):
            pts = pts[:-1]
        if len(pts) < (3 if closed else 2):
            raise ValidationFailed("polyline needs at least 3 points")
        self.points = pts
        self.closed = bool(closed)
        self.orientation = 1 if orientation >= 0 else -1
        seg = self.segment_vectors()
        if np.any(np.linalg.norm(seg, axis=1) == 0.0):
            raise ValidationFailed("consecutive polyline points coincide")

    def __len__(self):
        return len(self.points)

    def segment_vectors(self):
        if self.closed:
            return np.roll(self.points, -1, axis=0) - self.points
        return np.diff(self.points, axis=0)

    def segments(self):
        """Return ``(starts, ends)`` arrays of shape (m, 3)."""
        if self.closed:
            return self.points, np.roll(self.points, -1, axis=0)
        return self.points[:-1], self.points[1:]

    @property
    def length(self):
        return float(np.linalg.norm(self.segment_vectors(), axis=1).sum())

    def cumulative_length(self):
        d = np.linalg.norm(self.segment_vectors(), axis=1)
        return np.concatenate([[0.0], np.cumsum(d)])

    def reversed(self):
        return Polyline(self.points[::-1], self.closed, -self.orientation)

    def transformed(self, rotation=None, translation=None):
        pts = self.points
        if rotation is not None:
            pts = pts @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            pts = pts + np.asarray(translation, dtype=float)
        return Polyline(pts, self.closed, self.orientation)

    def translated(self, v):
        return self.transformed(translation=v)

    def refined(self, factor=2):
        """Insert ``factor - 1`` equally spaced points in every segment."""
        a, b = self.segments()
        t = np.arange(factor)[None, :, None] / factor
        pts = (a[:, None, :] * (1 - t) + b[:, None, :] * t).reshape(-1, 3)
        if not self.closed:
            pts = np.vstack([pts, self.points[-1]])
        return Polyline(pts, self.closed, self.orientation)

    def min_nonadjacent_distance(self, cutoff, skip=1):
        """Smallest distance between segments more than ``skip`` apart.

        Only pairs closer than ``cutoff`` are examined; returns ``inf``
        when there are none.
        """
        a, b = self.segments()
        return _min_segment_distance(a, b, cutoff, skip, self.closed)

    def check_embedded(self, threshold=None):
        """Raise :class:`ValidationFailed` if two non-adjacent segments
        come closer than ``threshold``."""
        seglen = np.linalg.norm(self.segment_vectors(), axis=1)
        if threshold is None:
            threshold = 1e-9 * max(seglen.max(), 1e-300)
        d = self.min_nonadjacent_distance(threshold)
        if d < threshold:
            raise ValidationFailed(f"polyline self-intersects (segment distance {d:.3e})")
        return True

    # -- I/O ---------------------------------------------------------------
    def to_csv(self, path):
        s = self.cumulative_length()
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        else:
            s = s[: len(pts)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "x", "y", "z"])
            for si, p in zip(s, pts):
                w.writerow([repr(float(si))] + [repr(float(c)) for c in p])

    @classmethod
    def from_csv(cls, path, closed=True):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(rows[:, 1:4], closed=closed)


def _segment_distance(p0, p1, q0, q1):
    """Vectorized distance between segments [p0,p1] and [q0,q1]."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-300, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
    t_low = t < 0
    t_high = t > 1
    t = np.clip(t, 0.0, 1.0)
    s = np.where(t_low, np.clip(-c / a, 0.0, 1.0), s)
    s = np.where(t_high, np.clip((b - c) / a, 0.0, 1.0), s)
    diff = p0 + d1 * s[:, None] - (q0 + d2 * t[:, None])
    return np.linalg.norm(diff, axis=1)


def _min_segment_distance(a, b, cutoff, skip=1, closed=True, a2=None, b2=None):
    """Minimum distance between segment sets, using a k-d tree on midpoints.

    With ``a2``/``b2`` omitted the set is compared with itself and pairs
    whose indices differ by at most ``skip`` (cyclically when ``closed``)
    are ignored.
    """
    self_pairs = a2 is None
    if self_pairs:
        a2, b2 = a, b
    m1 = 0.5 * (a + b)
    m2 = 0.5 * (a2 + b2)
    h1 = 0.5 * np.linalg.norm(b - a, axis=1).max()
    h2 = 0.5 * np.linalg.norm(b2 - a2, axis=1).max()
    radius = cutoff + h1 + h2
    t1 = cKDTree(m1)
    if self_pairs:
        pairs = t1.query_pairs(radius, output_type="ndarray")
        if len(pairs) == 0:
            return math.inf
        i, j = pairs[:, 0], pairs[:, 1]
        gap = np.abs(i - j)
        if closed:
            gap = np.minimum(gap, len(a) - gap)
        keep = gap > skip
        i, j = i[keep], j[keep]
    else:
        t2 = cKDTree(m2)
        lists = t1.query_ball_tree(t2, radius)
        i = np.repeat(np.arange(len(lists)), [len(l) for l in lists])
        j = np.fromiter((k for l in lists for k in l), dtype=np.intp, count=len(i))
    if len(i) == 0:
        return math.inf
    out = math.inf
    for lo in range(0, len(i), 200000):
        sl = slice(lo, lo + 200000)
        d = _segment_distance(a[i[sl]], b[i[sl]], a2[j[sl]], b2[j[sl]])
        out = min(out, float(d.min()))
    return out


# ---------------------------------------------------------------------------
# Smooth closed curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrenetFrame:
    T: np.ndarray
    N: np.ndarray
    B: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray


class CurveBase:
    """Arc-length machinery shared by every smooth closed curve.

    Subclasses implement :meth:`derivatives` in the native parameter
    ``u`` in ``[0, 2*pi)``.  ``breakpoints`` (native parameter values)
    mark places where the parametrization is only finitely smooth; the
    arc-length quadrature panels are aligned with them.
    """

    orientation = 1
    breakpoints = None
    n_panels = 256

    def derivatives(self, u, order):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- arc length --------------------------------------------------------
    def _panel_edges(self):
        if self.breakpoints is None:
            return np.linspace(0.0, TWO_PI, self.n_panels + 1)
        edges = np.unique(np.concatenate([[0.0, TWO_PI], np.asarray(self.breakpoints, float)]))
        return edges

    def _build_arclength(self):
        edges = self._panel_edges()
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        nodes = (lo[:, None] + half[:, None] * (_GL16_X[None, :] + 1.0)).ravel()
        speed = np.linalg.norm(self.derivatives(nodes, 1)[1], axis=-1).reshape(len(lo), 16)
        panel = (speed * _GL16_W[None, :]).sum(axis=1) * half
        self._edges = edges
        self._cum = np.concatenate([[0.0], np.cumsum(panel)])
        self.length = float(self._cum[-1])
        # dense lookup table for the inverse map
        tu = np.concatenate([[0.0], nodes, [TWO_PI]])
        self._table_u = tu
        self._table_s = self.s_of_u(tu, wrap=False)
        self._table_s[-1] = self.length

    def speed(self, u):
        return np.linalg.norm(self.derivatives(u, 1)[1], axis=-1)

    def s_of_u(self, u, wrap=True):
        u = np.asarray(u, dtype=float)
        uu = np.mod(u, TWO_PI) if wrap else u
        k = np.clip(np.searchsorted(self._edges, uu, side="right") - 1, 0, len(self._edges) - 2)
        u0 = self._edges[k]
        half = 0.5 * (uu - u0)
        nodes = u0[..., None] + half[..., None] * (_GL16_X + 1.0)
        sp = self.speed(nodes)
        return self._cum[k] + (sp * _GL16_W).sum(axis=-1) * half

    def u_of_s(self, s, tol=1e-12):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        u = np.interp(s, self._table_s, self._table_u)
        for _ in range(8):
            du = (self.s_of_u(u, wrap=False) - s) / self.speed(u)
            u = u - du
            if np.all(np.abs(du) < tol):
                break
        return u

    # -- geometry in arc length ---------------------------------------------
    def eval(self, s):
        """Point(s) gamma(s); ``s`` is taken modulo the length."""
        return self.derivatives(self.u_of_s(s), 0)[0]

    def tangent(self, s):
        d1 = self.derivatives(self.u_of_s(s), 1)[1]
        return d1 / np.linalg.norm(d1, axis=-1)[..., None]

    def frame_u(self, u):
        _, d1, d2, d3 = self.derivatives(u, 3)
        v = np.linalg.norm(d1, axis=-1)
        c = np.cross(d1, d2)
        cn = np.linalg.norm(c, axis=-1)
        kappa = cn / v**3
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.einsum("...i,...i->...", c, d3) / cn**2
            B = c / cn[..., None]
        T = d1 / v[..., None]
        N = np.cross(B, T)
        return FrenetFrame(T, N, B, kappa, tau)

    def frame(self, s):
        """Frenet data at arc length(s) without the inflection check."""
        return self.frame_u(self.u_of_s(s))

    def frenet(self, s):
        """Frenet frame at ``s``; raises :class:`InflectionPoint` where the
        curvature drops below ``kappa_min``."""
        fr = self.frame(s)
        if np.any(~(fr.kappa >= self.kappa_min)):
            raise InflectionPoint(f"curvature {np.min(fr.kappa):.3e} below kappa_min {self.kappa_min:.3e}")
        return fr

    @property
    def kappa_min(self):
        km = getattr(self, "_kappa_min", None)
        return 1e-6 * TWO_PI / self.length if km is None else km

    def sample(self, n, uniform_in="s"):
        """Polyline of ``n`` points, equally spaced in arc length (default)
        or in the native parameter."""
        if uniform_in == "s":
            pts = self.eval(np.arange(n) * (self.length / n))
        else:
            pts = self.derivatives(np.arange(n) * (TWO_PI / n), 0)[0]
        return Polyline(pts, closed=True, orientation=self.orientation)

    def sample_u(self, n):
        u = np.arange(n) * (TWO_PI / n)
        return u, self.derivatives(u, 1)

    # -- validation ----------------------------------------------------------
    def validate(self, n_check=2048, require_curvature=True):
        u = np.arange(n_check) * (TWO_PI / n_check)
        if require_curvature:
            fr = self.frame_u(u)
            if np.any(~(fr.kappa > self.kappa_min)):
                raise ValidationFailed(
                    f"curvature vanishes (min kappa {np.nanmin(fr.kappa):.3e} <= {self.kappa_min:.3e})"
                )
        poly = Polyline(self.derivatives(u, 0)[0], closed=True)
        seg = np.linalg.norm(poly.segment_vectors(), axis=1)
        tol = 1e-6 * seg.mean()
        if poly.min_nonadjacent_distance(tol, skip=2) < tol:
            raise ValidationFailed("curve self-intersects (or retraces itself)")
        return self


class ClosedCurve(CurveBase):
    """Closed curve given by a truncated trigonometric series.

    Parameters
    ----------
    harmonics : array_like, shape (3, M + 1, 2)
        ``harmonics[c, m] = (a, b)`` so that coordinate ``c`` equals
        ``sum_m a cos(m u) + b sin(m u)``.
    orientation : {+1, -1}
        ``-1`` traverses the same image backwards.
    """

    def __init__(self, harmonics, orientation=1, kind="custom", params=None,
                 kappa_min=None, validate=True, require_curvature=True):
        h = np.array(harmonics, dtype=float)
        if h.ndim != 3 or h.shape[0] != 3 or h.shape[2] != 2:
            raise ValidationFailed("harmonics must have shape (3, M+1, 2)")
        self.harmonics = h
        self.orientation = 1 if orientation >= 0 else -1
        self.kind = kind
        self.params = dict(params or {})
        self._kappa_min = kappa_min
        self._a = h[:, :, 0].copy()
        self._b = h[:, :, 1].copy() * self.orientation
        self._m = np.arange(h.shape[1], dtype=float)
        self._build_arclength()
        if validate:
            self.validate(require_curvature=require_curvature)

    @property
    def order(self):
        return self.harmonics.shape[1] - 1

    def derivatives(self, u, order):
        u = np.asarray(u, dtype=float)
        mu = u[..., None] * self._m
        c, s = np.cos(mu), np.sin(mu)
        out = []
        for k in range(order + 1):
            f = self._m**k
            a, b = self._a * f, self._b * f
            if k % 4 == 0:
                v = c @ a.T + s @ b.T
            elif k % 4 == 1:
                v = c @ b.T - s @ a.T
            elif k % 4 == 2:
                v = -(c @ a.T + s @ b.T)
            else:
                v = s @ a.T - c @ b.T
            out.append(v)
        return out

    # -- derived curves -------------------------------------------------------
    def _with(self, harmonics, orientation=None, **kw):
        return ClosedCurve(harmonics, self.orientation if orientation is None else orientation,
                           kind=kw.get("kind", self.kind), params=self.params,
                           kappa_min=self._kappa_min, validate=False)

    def reversed(self):
        return self._with(self.harmonics, -self.orientation)

    def transformed(self, rotation=None, translation=None):
        h = self.harmonics.copy()
        if rotation is not None:
            h = np.einsum("ij,jmk->imk", np.asarray(rotation, float), h)
        if translation is not None:
            h[:, 0, 0] += np.asarray(translation, float)
        return self._with(h)

    def translated(self, v):
        return self.transformed(translation=v)

    def mirrored(self):
        """Reflection through the plane z = 0."""
        return self.transformed(rotation=np.diag([1.0, 1.0, -1.0]))

    def scaled(self, factor):
        return self._with(self.harmonics * factor)

    def shifted(self, du):
        """Same curve with the native parameter shifted by ``du``."""
        h = self.harmonics.copy()
        a, b = h[:, :, 0].copy(), h[:, :, 1].copy()
        c, s = np.cos(self._m * du), np.sin(self._m * du)
        h[:, :, 0] = a * c + b * s
        h[:, :, 1] = b * c - a * s
        return self._with(h)

    # -- I/O ----------------------------------------------------------------
    def to_dict(self):
        return {
            "kind": self.kind,
            "params": self.params,
            "harmonics": self.harmonics.tolist(),
            "orientation": self.orientation,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d):
        if "harmonics" not in d:
            return make_standard(d["kind"], **d.get("params", {}))
        return cls(d["harmonics"], d.get("orientation", 1), kind=d.get("kind", "custom"),
                   params=d.get("params"))


class MappedCurve(CurveBase):
    """``base`` composed with a diffeomorphism ``phi`` of the circle.

    ``phi`` returns ``(phi, phi', phi'', phi''')`` for an array of ``w``
    with ``phi(w + 2 pi) = phi(w) + 2 pi`` and ``phi' > 0``.
    """

    def __init__(self, base, phi):
        self.base = base
        self.phi = phi
        self.orientation = base.orientation
        self._kappa_min = getattr(base, "_kappa_min", None)
        self._build_arclength()

    def derivatives(self, w, order):
        p = self.phi(np.asarray(w, dtype=float))
        d = self.base.derivatives(p[0], order)
        out = [d[0]]
        if order >= 1:
            out.append(d[1] * p[1][..., None])
        if order >= 2:
            out.append(d[2] * (p[1] ** 2)[..., None] + d[1] * p[2][..., None])
        if order >= 3:
            out.append(d[3] * (p[1] ** 3)[..., None] + 3 * d[2] * (p[1] * p[2])[..., None]
                       + d[1] * p[3][..., None])
        return out


# ---------------------------------------------------------------------------
# Standard curves
# ---------------------------------------------------------------------------


def _empty(M):
    return np.zeros((3, M + 1, 2))


def make_standard(kind, **params):
    """Build a validated standard curve.

    ``kind`` is one of ``circle`` (R), ``ellipse`` (a, b),
    ``torus_knot`` (p, q, R, r), ``trefoil`` (scale), ``figure_eight`` (scale),
    ``saddle`` (R, h) or ``harmonics`` (harmonics, orientation).
    Optional ``center`` translates the result.
    """
    center = params.pop("center", None)
    orientation = params.pop("orientation", 1)
    if kind == "circle":
        R = float(params.get("R", 1.0))
        h = _empty(1)
        h[0, 1, 0] = R
        h[1, 1, 1] = R
    elif kind == "ellipse":
        a, b = float(params.get("a", 2.0)), float(params.get("b", 1.0))
        h = _empty(1)
        h[0, 1, 0] = a
        h[1, 1, 1] = b
    elif kind == "saddle":
        R, hz = float(params.get("R", 1.0)), float(params.get("h", 0.3))
        h = _empty(2)
        h[0, 1, 0] = R
        h[1, 1, 1] = R
        h[2, 2, 0] = hz
    elif kind == "torus_knot":
        p, q = int(params.get("p", 2)), int(params.get("q", 3))
        R, r = float(params.get("R", 2.0)), float(params.get("r", 0.5))
        if p < 1 or q < 1 or math.gcd(p, q) != 1:
            raise ValidationFailed(f"torus knot needs coprime positive (p, q), got ({p}, {q})")
        if not 0 < r < R:
            raise ValidationFailed("torus knot needs 0 < r < R")
        M = p + q
        h = _empty(M)
        # (R + r cos qu) cos pu, (R + r cos qu) sin pu, r sin qu
        h[0, p, 0] += R
        h[0, abs(p - q), 0] += 0.5 * r
        h[0, p + q, 0] += 0.5 * r
        h[1, p, 1] += R
        h[1, p + q, 1] += 0.5 * r
        h[1, abs(p - q), 1] += 0.5 * r * np.sign(p - q)
        h[2, q, 1] += r
    elif kind == "trefoil":
        c = float(params.get("scale", 1.0))
        h = _empty(3)
        # (sin u + 2 sin 2u, cos u - 2 cos 2u, -sin 3u)
        h[0, 1, 1] = c
        h[0, 2, 1] = 2 * c
        h[1, 1, 0] = c
        h[1, 2, 0] = -2 * c
        h[2, 3, 1] = -c
    elif kind == "figure_eight":
        c = float(params.get("scale", 1.0))
        h = _empty(5)
        # (2 + cos 2u) cos 3u, (2 + cos 2u) sin 3u, sin 4u
        h[0, 3, 0] = 2 * c
        h[0, 1, 0] += 0.5 * c
        h[0, 5, 0] += 0.5 * c
        h[1, 3, 1] = 2 * c
        h[1, 5, 1] += 0.5 * c
        h[1, 1, 1] += 0.5 * c
        h[2, 4, 1] = c
    elif kind == "harmonics":
        h = np.array(params["harmonics"], dtype=float)
    else:
        raise ValidationFailed(f"unknown curve kind {kind!r}")
    curve = ClosedCurve(h, orientation=orientation, kind=kind, params=params, validate=True)
    if center is not None:
        curve = curve.translated(center)
    return curve


# ---------------------------------------------------------------------------
# Writhe, torsion, framing, linking
# ---------------------------------------------------------------------------


def _writhe_quadrature(curve, n):
    """Gauss self-linking integral on an n x n' product rule.

    Outer parameter: periodic trapezoid.  Inner offset h in (0, 2 pi):
    composite Gauss-Legendre, which never touches the diagonal where the
    integrand is only Lipschitz.
    """
    n_panels = max(n // 16, 4)
    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    h = (edges[:-1, None] + half * (_GL16_X[None, :] + 1.0)).ravel()
    wh = np.tile(_GL16_W * half, n_panels)
    u = np.arange(n) * (TWO_PI / n)
    p, dp = curve.derivatives(u, 1)
    total = 0.0
    rows = max(1, 400000 // len(h))
    for lo in range(0, n, rows):
        uu = u[lo:lo + rows]
        q, dq = curve.derivatives(uu[:, None] + h[None, :], 1)
        diff = p[lo:lo + rows, None, :] - q
        dist = np.linalg.norm(diff, axis=-1)
        integrand = np.einsum("ijk,ijk->ij", np.cross(dp[lo:lo + rows, None, :], dq), diff) / dist**3
        total += float((integrand * wh).sum())
    return total * (TWO_PI / n) / (4.0 * math.pi)


def writhe(curve, quad_order=256, tol=1e-8):
    """Writhe of a smooth closed curve.

    The product rule of order ``quad_order`` is compared with one of twice
    the order; :class:`QuadratureNotConverged` is raised when they differ
    by more than ``tol``.
    """
    w1 = _writhe_quadrature(curve, quad_order)
    w2 = _writhe_quadrature(curve, 2 * quad_order)
    if abs(w1 - w2) > tol:
        raise QuadratureNotConverged(f"writhe changed by {abs(w1 - w2):.2e} under refinement")
    return w2


def total_torsion(curve, n=None, tol=1e-9):
    """Integral of the torsion over arc length (periodic trapezoid in u)."""
    n = n or 1024
    vals = []
    for m in (n, 2 * n):
        u = np.arange(m) * (TWO_PI / m)
        fr = curve.frame_u(u)
        if np.any(~(fr.kappa >= curve.kappa_min)):
            raise InflectionPoint("curvature vanishes; torsion undefined")
        vals.append(float(np.sum(fr.tau * curve.speed(u)) * (TWO_PI / m)))
    if abs(vals[0] - vals[1]) > tol * max(1.0, abs(vals[1])):
        raise QuadratureNotConverged("total torsion not converged")
    return vals[1]


@dataclass(frozen=True)
class IntegerMeasurement:
    value: int
    raw: float
    defect: float


def framing_twist_N0(curve, quad_order=256, max_defect=0.01):
    """Number of turns of the Frenet frame: total torsion / 2 pi + writhe.

    The sign follows the right-handed (T, N, B) convention.
    """
    raw = total_torsion(curve) / TWO_PI + writhe(curve, quad_order)
    k = int(round(raw))
    defect = abs(raw - k)
    if defect > max_defect:
        raise NotNearInteger(f"twist + writhe = {raw:.6f} is not near an integer")
    return IntegerMeasurement(k, raw, defect)


def _linking_polygons(a, b):
    """Exact Gauss linking number of two closed polygons (point arrays)."""
    a1 = np.roll(a, -1, axis=0)
    b1 = np.roll(b, -1, axis=0)
    total = 0.0
    rows = max(1, 2000000 // len(b))
    for lo in range(0, len(a), rows):
        p, p1 = a[lo:lo + rows, None, :], a1[lo:lo + rows, None, :]
        r1 = p - b[None]
        r2 = p - b1[None]
        r3 = p1 - b1[None]
        r4 = p1 - b[None]
        trip = np.einsum("ijk,ijk->ij", r1, np.cross(r2, r3))
        n1, n2, n3, n4 = (np.linalg.norm(r, axis=-1) for r in (r1, r2, r3, r4))
        dot = lambda x, y: np.einsum("ijk,ijk->ij", x, y)
        d1 = n1 * n2 * n3 + dot(r1, r2) * n3 + dot(r2, r3) * n1 + dot(r3, r1) * n2
        d2 = n1 * n4 * n3 + dot(r1, r4) * n3 + dot(r4, r3) * n1 + dot(r3, r1) * n4
        total += float(np.sum(np.arctan2(trip, d1) + np.arctan2(trip, d2)))
    return total / TWO_PI


def _linking_smooth(c1, c2, n1, n2):
    u1, (p1, d1) = c1.sample_u(n1)
    u2, (p2, d2) = c2.sample_u(n2)
    total = 0.0
    rows = max(1, 2000000 // n2)
    for lo in range(0, n1, rows):
        diff = p1[lo:lo + rows, None, :] - p2[None]
        dist = np.linalg.norm(diff, axis=-1)
        total += float(np.sum(np.einsum("ijk,ijk->ij", np.cross(d1[lo:lo + rows, None, :], d2[None]), diff) / dist**3))
    return total * (TWO_PI / n1) * (TWO_PI / n2) / (4.0 * math.pi)


def _as_points(c, n):
    if isinstance(c, Polyline):
        return c.points
    return c.sample(n).points


def linking_number(c1, c2, min_distance=1e-9, max_defect=0.01, resolution=1024):
    """Gauss linking number of two disjoint closed curves or polylines.

    Polylines use the exact polygon formula; two smooth curves use the
    product trapezoid rule, refined until the value settles.
    """
    pa, pb = _as_points(c1, resolution), _as_points(c2, resolution)
    a0, a1 = pa, np.roll(pa, -1, axis=0)
    b0, b1 = pb, np.roll(pb, -1, axis=0)
    dmin = _min_segment_distance(a0, a1, min_distance, a2=b0, b2=b1)
    if dmin < min_distance:
        raise CurvesTooClose(f"curves are {dmin:.3e} apart")
    if isinstance(c1, Polyline) or isinstance(c2, Polyline):
        raw = _linking_polygons(pa, pb)
    else:
        n = resolution
        raw = _linking_smooth(c1, c2, n, n)
        for _ in range(4):
            nxt = _linking_smooth(c1, c2, 2 * n, 2 * n)
            if abs(nxt - raw) < 1e-10:
                raw = nxt
                break
            raw, n = nxt, 2 * n
    k = int(round(raw))
    defect = abs(raw - k)
    if defect > max_defect:
        raise NotNearInteger(f"linking integral {raw:.6f} is not near an integer")
    return IntegerMeasurement(k, raw, defect)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
