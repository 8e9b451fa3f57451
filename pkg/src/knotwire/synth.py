"""Wire synthesis.

* :func:`integral_wire_collection` - closed integral curves of a surface
  current through equidistributed section points, each carrying ``c0/n``.
* :func:`connect_sum_chain` - band sums joining the collection into one
  unknotted closed wire.
* :func:`far_connect` - band sum of that wire with a far-away knot.
* :func:`smooth_corners` - C^2 rounding of a polygon.
* :func:`cable_wire` - the cable curve winding once along the tube and
  ``n`` times around it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .biot_savart import PolylineBundleField, WireField
from .curves import TWO_PI, CurveBase, Polyline, _min_segment_distance
from .current import IsoChart, SurfaceCurrent
from .errors import (
    ConnectorCollision,
    OrientationConflict,
    RadiusTooLarge,
    SelfIntersection,
    ValidationFailed,
)


# ---------------------------------------------------------------------------
# Integral-curve collections
# ---------------------------------------------------------------------------


@dataclass
class WireCollection:
    """Closed integral curves ``gamma_k`` of ``J`` with common weight ``c0/n``.

    ``theta`` holds the (unwrapped) angle of every polyline vertex, so the
    curves can be cut at prescribed phases.
    """

    current: SurfaceCurrent
    iso: IsoChart
    alphas: np.ndarray
    polylines: list
    s: list
    theta: list
    weight: float

    @property
    def n(self):
        return len(self.polylines)

    def field(self):
        return PolylineBundleField(self.polylines, [self.weight] * self.n)

    def closure_gaps(self):
        """Distance between the start point and the flow-time-one end point."""
        gaps = []
        for a in self.alphas:
            p0 = self.iso.psi_inverse_xyz(np.array([a]), np.array([0.0]))
            p1 = self.iso.psi_inverse_xyz(np.array([a]), np.array([1.0 - 1e-15]))
            gaps.append(float(np.linalg.norm(p1 - p0)))
        return np.array(gaps)


def integral_wire_collection(current: SurfaceCurrent, n, iso=None, samples=128):
    """``n`` closed integral curves of ``current`` through the section points
    ``sample_alphas(n)``, each sampled at ``samples`` equal flow-time steps."""
    if n < 1:
        raise ValidationFailed("n must be positive")
    iso = iso or IsoChart(current)
    alphas = iso.sample_alphas(n)
    sig = np.arange(samples) / samples
    polys, ss, ths = [], [], []
    for a in alphas:
        s, th = iso.psi_inverse(np.full(samples, a), sig)
        polys.append(Polyline(current.chart.surface_point(s, th)))
        ss.append(s)
        ths.append(th)
    return WireCollection(current, iso, alphas, polys, ss, ths, iso.c0 / n)


# ---------------------------------------------------------------------------
# Band sums
# ---------------------------------------------------------------------------


def _tube_point(chart, s, theta, r):
    th = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    y = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    return chart.embed(s, y, check=False)


def _loop_s(wc, k, theta):
    """``s`` on loop ``k`` at angle ``theta`` (closed-form orbit)."""
    cur = wc.current
    return cur.orbit_s(wc.alphas[k] * cur.length, 0.0, theta)


def _connector(wc, k_from, k_to, th_from, th_to, lift, n_pts=12):
    """Connector from loop ``k_from`` at ``th_from`` to loop ``k_to`` at
    ``th_to``, raised radially to ``1 + lift`` tube radii so that the two
    connectors of a band pass over each other."""
    chart = wc.current.chart
    L = chart.length
    lam = np.linspace(0.0, 1.0, n_pts)
    th = th_from + (th_to - th_from) * lam
    s_a = _loop_s(wc, k_from, th)
    s_b = _loop_s(wc, k_to, th)
    # keep s continuous across the periodic seam
    s_b = s_a + np.mod(s_b - s_a + 0.5 * L, L) - 0.5 * L
    s = (1 - lam) * s_a + lam * s_b
    ramp = np.minimum(1.0, np.minimum(lam, 1 - lam) / 0.2)
    r = 1.0 + lift * ramp
    return _tube_point(chart, s, th, r)[1:-1]


def _arc(wc, k, th0, th1, n_per_turn):
    """Loop ``k`` from angle ``th0`` to ``th1 > th0`` (surface points)."""
    m = max(2, int(math.ceil((th1 - th0) / TWO_PI * n_per_turn)) + 1)
    th = np.linspace(th0, th1, m)
    return wc.current.chart.surface_point(_loop_s(wc, k, th), th)


def connect_sum_chain(wc: WireCollection, delta=None, lift=0.15, samples_per_turn=128):
    """Join the loops of ``wc`` into a single closed polyline.

    Loops are ordered by ``alpha``; loop ``k`` is joined to loop ``k+1`` by a
    band at angle ``0`` (even ``k``) or ``pi`` (odd ``k``).  The band removes
    an arc of length about ``delta`` from each loop and inserts two crossing
    connectors raised to different heights, which keeps every retained arc
    in its original direction.
    """
    n = wc.n
    chart = wc.current.chart
    eps = chart.eps
    order = np.argsort(wc.alphas)
    if n == 1:
        return wc.polylines[0], {"delta": 0.0, "bands": 0}
    gaps = np.diff(np.sort(wc.alphas)) * chart.length
    gap = float(gaps.min())
    if delta is None:
        delta = min(1e-2 * chart.length, gap / 5)
    if delta >= gap / 4:
        raise ConnectorCollision(f"delta={delta:.3g} is not below a quarter of the loop gap {gap:.3g}")
    if eps * (1 + 2 * lift) >= chart.reach:
        raise ConnectorCollision("raised connectors leave the embedded tube")
    half = 0.5 * delta / eps  # half of the removed angle

    # cut angles: loop order[j] meets order[j+1] at phase 0 (j even) or pi (j odd)
    cuts = [[] for _ in range(n)]
    for j in range(n - 1):
        ph = 0.0 if j % 2 == 0 else math.pi
        cuts[j].append(ph)
        cuts[j + 1].append(ph)

    # walk: descend along the chain on the "outbound" arcs and come back
    # on the "return" arcs.  Loop j is entered at cut angle +half of the band
    # from j-1 and left at -half of the band towards j+1.
    pieces = []

    def ang(j, ph, side):
        # unwrap so that phase pi is reached after phase 0 in +theta direction
        return ph + side * half

    def outbound(j):
        # loop j (j >= 1) entered from band (j-1, j) at its phase; loop j
        # continues in +theta up to the band (j, j+1), or all the way round
        ph_in = 0.0 if (j - 1) % 2 == 0 else math.pi
        if j == n - 1:
            return _arc(wc, order[j], ph_in + half, ph_in + TWO_PI - half, samples_per_turn)
        ph_out = 0.0 if j % 2 == 0 else math.pi
        a0 = ph_in + half
        a1 = ph_out - half
        while a1 <= a0:
            a1 += TWO_PI
        return _arc(wc, order[j], a0, a1, samples_per_turn)

    def inbound(j):
        # loop j (j >= 1) back from band (j, j+1) to band (j-1, j)
        ph_in = 0.0 if (j - 1) % 2 == 0 else math.pi
        ph_out = 0.0 if j % 2 == 0 else math.pi
        a0 = ph_out + half
        a1 = ph_in - half
        while a1 <= a0:
            a1 += TWO_PI
        return _arc(wc, order[j], a0, a1, samples_per_turn)

    # loop 0: from +half of band (0,1) around to -half
    ph0 = 0.0
    pieces.append(_arc(wc, order[0], ph0 + half, ph0 + TWO_PI - half, samples_per_turn))
    for j in range(n - 1):
        ph = 0.0 if j % 2 == 0 else math.pi
        # connector A_j -> B_{j+1} (low) then later A_{j+1} -> B_j (high)
        pieces.append(_connector(wc, order[j], order[j + 1], ph - half, ph + half, lift))
        pieces.append(outbound(j + 1))
    for j in range(n - 2, -1, -1):
        ph = 0.0 if j % 2 == 0 else math.pi
        pieces.append(_connector(wc, order[j + 1], order[j], ph - half, ph + half, 2 * lift))
        if j >= 1:
            pieces.append(inbound(j))
    pts = np.vstack(pieces)
    poly = Polyline(pts)
    _check_orientation(wc, poly)
    _check_embedded(poly, ConnectorCollision)
    info = {"delta": float(delta), "bands": n - 1, "lift": lift,
            "band_phases": [0.0 if j % 2 == 0 else math.pi for j in range(n - 1)]}
    return poly, info


def _check_orientation(wc, poly):
    """Every retained loop arc must advance in +theta like the original loop."""
    chart = wc.current.chart
    s, y = chart.project(poly.points, check=False)
    on_surface = np.abs(np.hypot(y[:, 0], y[:, 1]) - 1.0) < 1e-9
    th = np.arctan2(y[:, 1], y[:, 0])
    dth = np.mod(np.diff(th) + math.pi, TWO_PI) - math.pi
    both = on_surface[1:] & on_surface[:-1]
    if np.any(dth[both] < -1e-12):
        raise OrientationConflict("a retained arc runs against the current")


def _check_embedded(poly, exc):
    seg = np.linalg.norm(poly.segment_vectors(), axis=1)
    tol = 1e-6 * float(seg.mean())
    if poly.min_nonadjacent_distance(tol, skip=1) < tol:
        raise exc("synthesized wire self-intersects")


def _rotate_to_start(points, i):
    return np.roll(points, -i, axis=0)


def far_connect(gamma, target, R, delta3, region_points=None, direction=(1.0, 0.0, 0.0),
                target_samples=512):
    """Band sum of the closed polyline ``gamma`` with ``target`` placed far away.

    ``target`` (curve or polyline) is translated along ``direction`` so its
    distance to ``region_points`` (default: the vertices of ``gamma``) is
    ``R``.  The points ``P`` of ``gamma`` and ``Q`` of the target that are
    extreme along ``direction`` are opened by about ``delta3`` and joined by
    two straight parallel connectors with opposite currents.
    """
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    g = gamma.points
    tpts = target.points if isinstance(target, Polyline) else target.sample(target_samples).points
    region = g if region_points is None else np.asarray(region_points, dtype=float)
    shift = (region @ e).max() + R - (tpts @ e).min()
    tpts = tpts + shift * e
    # extreme points; choose the vertex whose neighbours are closest to it
    ip = int(np.argmax(g @ e))
    iq = int(np.argmin(tpts @ e))
    g = _rotate_to_start(g, ip)
    tp = _rotate_to_start(tpts, iq)

    def open_at_start(p, gap):
        # remove vertices within gap/2 of p[0] along the polyline
        d_fwd = np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))
        d_bwd = np.cumsum(np.linalg.norm(np.diff(p[::-1], axis=0), axis=1))
        k_out = int(np.searchsorted(d_fwd, gap / 2)) + 1
        k_in = len(p) - 1 - int(np.searchsorted(np.concatenate([[np.linalg.norm(p[-1] - p[0])],
                                                                np.linalg.norm(p[-1] - p[0]) + d_bwd[:-1]]), gap / 2))
        return p[k_out:k_in + 1]

    g_open = open_at_start(g, delta3)     # from P_out ... to P_in
    t_open = open_at_start(tp, delta3)    # from Q_out ... to Q_in
    # P_in -> Q_out, through the target, Q_in -> P_out
    n_conn = max(8, int(math.ceil(np.linalg.norm(t_open[0] - g_open[-1]) / (0.5 * R / 8))))
    lam = np.linspace(0, 1, n_conn + 2)[1:-1, None]
    c1 = g_open[-1] + lam * (t_open[0] - g_open[-1])
    c2 = t_open[-1] + lam * (g_open[0] - t_open[-1])
    pts = np.vstack([g_open, c1, t_open, c2])
    poly = Polyline(pts)
    _check_embedded(poly, ConnectorCollision)
    info = {"R": float(R), "delta3": float(delta3), "shift": float(shift),
            "direction": e.tolist()}
    return poly, Polyline(tpts), info


# ---------------------------------------------------------------------------
# Corner smoothing
# ---------------------------------------------------------------------------


def _quintic_basis(t, order):
    """Quintic Hermite basis (position 0, velocity 0, velocity 1, position 1)
    with zero end accelerations, and its derivatives up to ``order``."""
    polys = [
        np.poly1d([-6, 15, -10, 0, 0, 1]),
        np.poly1d([-3, 8, -6, 0, 1, 0]),
        np.poly1d([-3, 7, -4, 0, 0, 0]),
        np.poly1d([6, -15, 10, 0, 0, 0]),
    ]
    return [np.stack([p.deriv(k)(t) if k else p(t) for p in polys], axis=-1) for k in range(order + 1)]


class BlendedPolygon(CurveBase):
    """Polygon whose corners are replaced by C^2 quintic blends.

    Every piece (corner blend or straight run) is a quintic Hermite segment
    with zero end accelerations; on the straight runs the end velocities
    equal the chord, which reproduces the segment exactly.  The native
    parameter advances at the constant speed ``length / (2 pi)`` on the
    straight runs, so the joins are C^2 in ``u``.
    """

    def __init__(self, points, radius):
        p = np.asarray(points, dtype=float)
        nxt = np.roll(p, -1, axis=0)
        seg = nxt - p
        seglen = np.linalg.norm(seg, axis=1)
        if radius >= 0.5 * seglen.min():
            raise RadiusTooLarge(f"radius {radius} is not below half the shortest segment {seglen.min():.3g}")
        dirs = seg / seglen[:, None]
        prev_dir = np.roll(dirs, 1, axis=0)
        starts = p - radius * prev_dir
        ends = p + radius * dirs
        line_end = nxt - radius * dirs
        blend_len = np.linalg.norm(ends - starts, axis=1)
        line_len = seglen - 2 * radius
        speed = float(line_len.sum() + blend_len.sum()) / TWO_PI
        # pieces alternate: blend at vertex i, then the run towards vertex i+1
        du = np.stack([blend_len, line_len], axis=1).ravel() / speed
        a = np.stack([starts, ends], axis=1).reshape(-1, 3)
        b = np.stack([ends, line_end], axis=1).reshape(-1, 3)
        va = np.stack([prev_dir * speed, dirs * speed], axis=1).reshape(-1, 3)
        vb = np.stack([dirs * speed, dirs * speed], axis=1).reshape(-1, 3)
        lo = np.concatenate([[0.0], np.cumsum(du)[:-1]])
        # absorb rounding so the last piece ends exactly at 2 pi
        du[-1] = TWO_PI - lo[-1]
        self._lo, self._du = lo, du
        self._a, self._b = a, b
        self._va, self._vb = va * du[:, None], vb * du[:, None]
        self.breakpoints = lo[1:]
        self.radius = radius
        self.polygon = p
        self._kappa_min = 0.0
        self._build_arclength()

    def derivatives(self, u, order):
        u = np.mod(np.asarray(u, dtype=float), TWO_PI)
        shape = u.shape
        u = u.ravel()
        k = np.clip(np.searchsorted(self._lo, u, side="right") - 1, 0, len(self._lo) - 1)
        du = self._du[k][:, None]
        t = (u - self._lo[k]) / self._du[k]
        basis = _quintic_basis(t, order)
        out = []
        for j in range(order + 1):
            B = basis[j]
            val = (B[:, 0:1] * self._a[k] + B[:, 1:2] * self._va[k]
                   + B[:, 2:3] * self._vb[k] + B[:, 3:4] * self._b[k]) / du**j
            out.append(val.reshape(shape + (3,)))
        return out


def smooth_corners(poly: Polyline, radius):
    """Round every corner of ``poly`` within ``radius`` of the vertex."""
    return BlendedPolygon(poly.points, radius)


# ---------------------------------------------------------------------------
# Cable curves
# ---------------------------------------------------------------------------


def smoothstep(t):
    """Quintic transition: 0 for ``t <= 0``, 1 for ``t >= 1``, C^2."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def smoothstep_deriv(t):
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    return np.where((t > 0) & (t < 1), 30 * tc * tc * (1 - tc) ** 2, 0.0)


def balanced_step(t):
    """``t - sin(4 pi t) / (4 pi)`` on ``[0, 1]``: C^2 at the ends, and its
    derivative ``1 - cos(4 pi t)`` has no first harmonic, so the drift of a
    cable turn is spread evenly around the tube."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    # clip: the difference cancels to slightly negative values near t = 0
    return np.clip(t - np.sin(2 * TWO_PI * t) / (2 * TWO_PI), 0.0, 1.0)


def balanced_step_deriv(t):
    t = np.asarray(t, dtype=float)
    return np.where((t > 0) & (t < 1), 1 - np.cos(2 * TWO_PI * t), 0.0)


STEPS = {"quintic": (smoothstep, smoothstep_deriv), "balanced": (balanced_step, balanced_step_deriv)}


@dataclass
class CableWire:
    """The cable ``t -> Psi^{-1}(alpha_n(t), t mod 1)``, ``t in [0, n)``."""

    iso: IsoChart
    n: int
    alphas_sorted: np.ndarray
    deltas: np.ndarray
    samples_per_turn: int
    polyline: Polyline = field(repr=False)
    step: str = "quintic"

    def alpha_of_t(self, t, unwrapped=False):
        t = np.asarray(t, dtype=float)
        k = np.arange(1, self.n + 1)
        a = self.alphas_sorted[0] + (self.deltas * STEPS[self.step][0](t[..., None] + 1 - k)).sum(-1)
        return a if unwrapped else np.mod(a, 1.0)

    def alpha_rate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.arange(1, self.n + 1)
        return (self.deltas * STEPS[self.step][1](t[..., None] + 1 - k)).sum(-1)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.iso.psi_inverse_xyz(self.alpha_of_t(t), np.mod(t, 1.0))

    def windings(self):
        """``(alpha winding, sigma winding)`` over one period."""
        a = self.alpha_of_t(np.array([0.0, float(self.n)]), unwrapped=True)
        return int(round(a[1] - a[0])), self.n

    def section_crossings(self):
        """``alpha`` at the points where the cable meets ``theta = 0``."""
        return self.alpha_of_t(np.arange(self.n, dtype=float))

    def tangent_defect(self, n_t=None, h=1e-6):
        """``sup_t |d Gamma/dt - Jtilde(Gamma(t))|`` in space, by central
        differences of ``Psi^{-1}``."""
        n_t = n_t or 16 * self.n
        t = (np.arange(n_t) + 0.37) * (self.n / n_t)
        a, sg = self.alpha_of_t(t), np.mod(t, 1.0)
        g_dot = (self.point(t + h) - self.point(t - h)) / (2 * h)
        j_tilde = (self.iso.psi_inverse_xyz(a, sg + h) - self.iso.psi_inverse_xyz(a, sg - h)) / (2 * h)
        return float(np.max(np.linalg.norm(g_dot - j_tilde, axis=1)))

    def field(self, weight=None):
        w = self.iso.c0 / self.n if weight is None else weight
        return PolylineBundleField([self.polyline], [w])


def cable_wire(current: SurfaceCurrent, n, iso=None, samples_per_turn=64, check=True,
               step="quintic"):
    """Cable curve on the tube surface winding once along ``alpha`` and
    ``n`` times along ``sigma``, meeting the section at ``sample_alphas(n)``.

    ``step`` selects the transition function: ``"quintic"`` (smoothstep) or
    ``"balanced"`` (see :func:`balanced_step`).  Each turn advances ``alpha``
    by ``Delta ~ 1/n``, a net current ``c0/n`` along the core; the quintic
    step bunches it near ``sigma = 1/2`` and so biases the field on the core
    by ``O(c0 / (n eps))``; the balanced step removes the first harmonic of
    that bunching, which shrinks the bias without cancelling it.
    """
    if step not in STEPS:
        raise ValidationFailed(f"unknown step {step!r}")
    iso = iso or IsoChart(current)
    a = np.sort(iso.sample_alphas(n))
    deltas = np.mod(np.roll(a, -1) - a, 1.0)
    if n == 1:
        deltas = np.array([1.0])
    if deltas.max() >= 0.5:
        raise SelfIntersection(f"transitions overlap: max alpha step {deltas.max():.3g} >= 1/2")
    deltas = deltas / deltas.sum()
    tmp = CableWire(iso, n, a, deltas, samples_per_turn, None, step)
    t = np.arange(n * samples_per_turn) / samples_per_turn
    poly = Polyline(tmp.point(t))
    tmp.polyline = poly
    if check:
        _check_embedded(poly, SelfIntersection)
    return tmp


def manifest(path, **constants):
    """Write the synthesis constants as sorted JSON."""
    def conv(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        return v
    with open(path, "w") as fh:
        json.dump({k: conv(v) for k, v in constants.items()}, fh, indent=1, sort_keys=True)
