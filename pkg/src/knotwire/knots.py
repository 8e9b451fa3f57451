"""Knot diagrams, Gauss codes and the Alexander polynomial.

A closed curve is projected along a generic direction; crossings are
found by a segment-intersection scan, encoded as a Gauss code, reduced
by Reidemeister I and II moves and turned into an Alexander matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .curves import CurveBase, Polyline
from .errors import DegenerateDiagram, NoGenericDirection, ValidationFailed


@dataclass
class Crossing:
    over: float          # curve position (segment index + fraction) of the over passage
    under: float         # curve position of the under passage
    sign: int


@dataclass
class KnotDiagram:
    """Crossings of a generic projection plus the derived Gauss code.

    ``gauss_code`` lists ``(crossing id, +1 over / -1 under, sign)`` in
    traversal order.
    """

    direction: np.ndarray
    crossings: list
    gauss_code: list = field(default_factory=list)

    @property
    def n_crossings(self):
        return len({c for c, _, _ in self.gauss_code})

    def simplified(self):
        return KnotDiagram(self.direction, self.crossings, simplify_gauss_code(self.gauss_code))

    def to_dict(self):
        return {
            "direction": [float(v) for v in self.direction],
            "crossings": [{"id": i, "over": c.over, "under": c.under, "sign": c.sign}
                          for i, c in enumerate(self.crossings)],
            "gauss_code": [[int(c), int(o), int(s)] for c, o, s in self.gauss_code],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _polyline_points(curve, n=None):
    if isinstance(curve, Polyline):
        return curve.points
    if isinstance(curve, CurveBase):
        return curve.sample(n or 512).points
    return np.asarray(curve, dtype=float)


def _basis(d):
    d = d / np.linalg.norm(d)
    a = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return d, e1, e2


def _crossings(points, direction, tol=1e-9):
    """Crossings of the closed polygon ``points`` viewed from ``+direction``.

    Returns a list of :class:`Crossing` or ``None`` when the projection is
    not generic (crossing near a vertex, tangency, depth tie or two
    crossings on top of each other).
    """
    d, e1, e2 = _basis(np.asarray(direction, dtype=float))
    n = len(points)
    p2 = np.stack([points @ e1, points @ e2], axis=1)
    h = points @ d
    q2 = np.roll(p2, -1, axis=0)
    seg = q2 - p2
    seglen = np.linalg.norm(seg, axis=1)
    scale = float(seglen.max())
    tree = cKDTree(0.5 * (p2 + q2))
    pairs = tree.query_pairs(scale * 1.0000001, output_type="ndarray")
    if len(pairs) == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    gap = np.abs(i - j)
    keep = np.minimum(gap, n - gap) > 1
    i, j = i[keep], j[keep]
    a, b = seg[i], seg[j]
    den = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    r = p2[j] - p2[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[:, 0] * b[:, 1] - r[:, 1] * b[:, 0]) / den
        u = (r[:, 0] * a[:, 1] - r[:, 1] * a[:, 0]) / den
    hit = (t >= -tol) & (t <= 1 + tol) & (u >= -tol) & (u <= 1 + tol) & np.isfinite(t)
    # adjacent-but-one segments can also meet; they are kept (genuine crossings)
    i, j, t, u, den = i[hit], j[hit], t[hit], u[hit], den[hit]
    if len(i) == 0:
        return []
    if np.any((t < tol) | (t > 1 - tol) | (u < tol) | (u > 1 - tol)):
        return None
    if np.any(np.abs(den) < tol * seglen[i] * seglen[j]):
        return None
    hi = h[i] + t * (np.roll(h, -1)[i] - h[i])
    hj = h[j] + u * (np.roll(h, -1)[j] - h[j])
    if np.any(np.abs(hi - hj) < tol * scale):
        return None
    pos = p2[i] + t[:, None] * seg[i]
    if len(pos) > 1:
        ctree = cKDTree(pos)
        if ctree.query_pairs(1e-7 * scale):
            return None
    out = []
    for k in range(len(i)):
        if hi[k] > hj[k]:
            over, under, ta, tb = i[k] + t[k], j[k] + u[k], seg[i[k]], seg[j[k]]
        else:
            over, under, ta, tb = j[k] + u[k], i[k] + t[k], seg[j[k]], seg[i[k]]
        # right-handed crossing: (T_over x T_under) points toward the viewer
        sign = 1 if ta[0] * tb[1] - ta[1] * tb[0] > 0 else -1
        out.append(Crossing(float(over), float(under), sign))
    return out


def gauss_code_from_crossings(crossings):
    events = []
    for cid, c in enumerate(crossings):
        events.append((c.over, cid, 1, c.sign))
        events.append((c.under, cid, -1, c.sign))
    events.sort()
    return [(cid, o, s) for _, cid, o, s in events]


def project_diagram(curve, direction=None, seed=0, max_attempts=32, n_samples=None,
                    candidates=1):
    """Diagram of a closed curve along a generic projection direction.

    Directions are tried in a deterministic pseudo-random order starting
    from ``direction`` (if given).  With ``candidates > 1`` that many
    generic directions are collected and the one with the fewest crossings
    wins.
    """
    pts = _polyline_points(curve, n_samples)
    rng = np.random.default_rng(seed)
    best = None
    found = 0
    for attempt in range(max_attempts):
        if attempt == 0 and direction is not None:
            d = np.asarray(direction, dtype=float)
        else:
            d = rng.normal(size=3)
        d = d / np.linalg.norm(d)
        cr = _crossings(pts, d)
        if cr is None:
            continue
        found += 1
        if best is None or len(cr) < len(best[1]):
            best = (d, cr)
        if found >= candidates:
            break
    if best is None:
        raise NoGenericDirection(f"no generic projection after {max_attempts} directions")
    return KnotDiagram(best[0], best[1], gauss_code_from_crossings(best[1]))


# ---------------------------------------------------------------------------
# Reidemeister reductions on Gauss codes
# ---------------------------------------------------------------------------


def _r1_pass(code):
    n = len(code)
    if n < 2:
        return code, False
    for k in range(n):
        a, b = code[k], code[(k + 1) % n]
        if a[0] == b[0]:
            cid = a[0]
            return [e for e in code if e[0] != cid], True
    return code, False


def _r2_pass(code):
    n = len(code)
    if n < 4:
        return code, False
    adj = {}
    for k in range(n):
        a, b = code[k], code[(k + 1) % n]
        # a bigon's two crossings always have opposite signs
        if a[0] != b[0] and a[1] == b[1] and a[2] != b[2]:
            key = frozenset((a[0], b[0]))
            adj.setdefault(key, []).append(a[1])
    for key, kinds in adj.items():
        if 1 in kinds and -1 in kinds:
            return [e for e in code if e[0] not in key], True
    return code, False


def simplify_gauss_code(code):
    """Greedy Reidemeister I and II reductions."""
    code = list(code)
    changed = True
    while changed:
        code, c1 = _r1_pass(code)
        if c1:
            continue
        code, changed = _r2_pass(code)
    return code


# ---------------------------------------------------------------------------
# Alexander polynomial
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaurentPoly:
    """Integer Laurent polynomial ``sum_k coeffs[k] t^(min_exponent + k)``."""

    coeffs: tuple
    min_exponent: int

    def __call__(self, t):
        return sum(c * t ** (self.min_exponent + k) for k, c in enumerate(self.coeffs))

    def __str__(self):
        terms = []
        for k, c in reversed(list(enumerate(self.coeffs))):
            if c == 0:
                continue
            e = self.min_exponent + k
            mono = "" if e == 0 else ("t" if e == 1 else f"t^{e}")
            if mono and abs(c) == 1:
                coef = "-" if c < 0 else "+"
            else:
                coef = f"{c:+d}"
            terms.append(f"{coef}{mono}")
        s = "".join(terms) or "0"
        return s[1:] if s.startswith("+") else s

    def to_dict(self):
        return {"coefficients": list(self.coeffs), "min_exponent": self.min_exponent}


def _rotate_cyclic(coeffs):
    """Rotate a cyclically folded coefficient vector so that its longest run
    of zeros sits at the end; returns the rotated list and the span."""
    c = [int(v) for v in coeffs]
    K = len(c)
    nz = [k for k in range(K) if c[k] != 0]
    if not nz:
        return c, -1
    gaps = [((nz[(i + 1) % len(nz)] - nz[i]) % K or K, i) for i in range(len(nz))]
    gap, i = max(gaps)
    start = nz[(i + 1) % len(nz)]
    rot = c[start:] + c[:start]
    return rot, K - gap


def normalize_laurent(coeffs):
    """Strip zeros, centre the exponents and make the top coefficient positive."""
    c = [int(v) for v in coeffs]
    while c and c[-1] == 0:
        c.pop()
    while c and c[0] == 0:
        c.pop(0)
    if not c:
        raise DegenerateDiagram("Alexander determinant vanished")
    if c[-1] < 0:
        c = [-v for v in c]
    span = len(c) - 1
    return LaurentPoly(tuple(c), -(span // 2))


def alexander_matrix(code):
    """Rows per crossing, columns per arc, as three integer arrays so that the
    entry is ``c0 + c1 t``."""
    crossings = sorted({c for c, _, _ in code})
    m = len(crossings)
    idx = {c: k for k, c in enumerate(crossings)}
    n = len(code)
    under_pos = [k for k, e in enumerate(code) if e[1] == -1]
    # arc a starts right after the a-th under passage
    arc_of = np.empty(n, dtype=int)
    first = under_pos[0]
    arc = m - 1
    for step in range(n):
        k = (first + step) % n
        if code[k][1] == -1:
            arc = (arc + 1) % m if step else 0
            # the under passage itself ends the previous arc; positions after it start the new one
        arc_of[k] = arc
    # arc ending at an under passage is the arc of the position just before it
    M0 = np.zeros((m, m), dtype=np.int64)
    M1 = np.zeros((m, m), dtype=np.int64)
    for k, (cid, o, s) in enumerate(code):
        if o != -1:
            continue
        r = idx[cid]
        incoming = arc_of[(k - 1) % n]
        outgoing = arc_of[k]
        over_k = next(j for j, e in enumerate(code) if e[0] == cid and e[1] == 1)
        over = arc_of[over_k]
        M0[r, over] += 1
        M1[r, over] -= 1
        if s > 0:
            M1[r, incoming] += 1
            M0[r, outgoing] -= 1
        else:
            M1[r, outgoing] += 1
            M0[r, incoming] -= 1
    return M0, M1


def _bareiss_det(mat):
    a = [[int(v) for v in row] for row in mat]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if a[r][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _folded_coefficients(A0, A1, K):
    """Coefficients of ``det(A0 + t A1)`` folded modulo ``t^K - 1``."""
    m = A0.shape[0]
    t = np.exp(2j * np.pi * np.arange(K) / K)
    dets = np.empty(K, dtype=complex)
    rows = max(1, 4_000_000 // max(1, m * m))
    for lo in range(0, K, rows):
        tt = t[lo:lo + rows]
        dets[lo:lo + rows] = np.linalg.det(A0[None].astype(complex) + tt[:, None, None] * A1[None])
    coeffs = np.fft.fft(dets) / K
    rounded = np.rint(coeffs.real)
    if np.max(np.abs(coeffs - rounded)) > 1e-3:
        raise DegenerateDiagram("determinant interpolation did not give integer coefficients")
    return rounded


def _minor_polynomial(A0, A1, k_start=16):
    """``det(A0 + t A1)`` up to a unit, as a normalized Laurent polynomial.

    The determinant is sampled at ``K`` roots of unity for ``K = 16, 32,
    ...``; folding only rotates the coefficients while the span is below
    ``K``, so the result is accepted once two successive ``K`` agree with
    span below ``K / 2``, or once ``K`` exceeds the matrix degree (exact).
    Returns ``(poly, unfolded_coefficients)``.
    """
    m = A0.shape[0]
    full = m + 1
    prev = None
    K = min(k_start, full)
    while True:
        rounded = _folded_coefficients(A0, A1, K)
        if K >= full:
            return normalize_laurent(rounded), rounded
        rot, span = _rotate_cyclic(rounded)
        if span < 0:
            raise DegenerateDiagram("Alexander determinant vanished")
        poly = normalize_laurent(rot)
        if prev is not None and poly == prev and span < K // 2:
            # place the exponents as the unfolded determinant would have them
            return poly, np.asarray(rot, dtype=float)
        prev = poly if span < K // 2 else None
        K = min(2 * K, full)


def alexander_polynomial(diagram, simplify=True, exact_check=True):
    """Normalized Alexander polynomial of a knot diagram.

    The first minor of the Alexander matrix is evaluated at roots of unity
    and interpolated by an inverse DFT; the rounded integer coefficients
    are checked against the fraction-free determinant at ``t = 2`` when
    the matrix is small.
    """
    code = diagram.gauss_code if isinstance(diagram, KnotDiagram) else list(diagram)
    if simplify:
        code = simplify_gauss_code(code)
    if not code:
        return LaurentPoly((1,), 0)
    M0, M1 = alexander_matrix(code)
    m = M0.shape[0]
    if m == 1:
        return LaurentPoly((1,), 0)
    A0, A1 = M0[1:, 1:], M1[1:, 1:]
    small = exact_check and m <= 40
    poly, rounded = _minor_polynomial(A0, A1, k_start=m + 1 if small else 16)
    if small:
        exact = _bareiss_det(A0 + 2 * A1)
        val = Fraction(sum(int(c) * 2**k for k, c in enumerate(rounded)))
        if abs(exact) != abs(val):
            raise DegenerateDiagram("exact determinant check failed")
    if abs(poly(1)) != 1:
        raise DegenerateDiagram(f"Alexander polynomial has |Delta(1)| = {abs(poly(1))}")
    return poly


def knot_polynomial(curve, seed=0, **kw):
    return alexander_polynomial(project_diagram(curve, seed=seed, **kw))


def same_knot_type(c1, c2, seed=0):
    """``"distinguished"`` when the Alexander polynomials differ, else
    ``"consistent"``; invariants never prove isotopy."""
    p1 = knot_polynomial(c1, seed=seed)
    p2 = knot_polynomial(c2, seed=seed)
    return "consistent" if p1 == p2 else "distinguished"


TREFOIL = LaurentPoly((1, -1, 1), -1)
FIGURE_EIGHT = LaurentPoly((1, -3, 1), -1)
UNKNOT = LaurentPoly((1,), 0)


def linking_from_diagram(points_a, points_b, direction=None, seed=0):
    """Linking number as half the signed count of inter-component crossings
    (an independent check of the Gauss integral)."""
    rng = np.random.default_rng(seed)
    pa, pb = np.asarray(points_a, float), np.asarray(points_b, float)
    for _ in range(32):
        d = np.asarray(direction, float) if direction is not None else rng.normal(size=3)
        direction = None
        d /= np.linalg.norm(d)
        _, e1, e2 = _basis(d)
        total, ok = 0, True
        a0, a1 = pa, np.roll(pa, -1, 0)
        b0, b1 = pb, np.roll(pb, -1, 0)
        A0 = np.stack([a0 @ e1, a0 @ e2], 1)
        A1 = np.stack([a1 @ e1, a1 @ e2], 1)
        B0 = np.stack([b0 @ e1, b0 @ e2], 1)
        B1 = np.stack([b1 @ e1, b1 @ e2], 1)
        sa, sb = A1 - A0, B1 - B0
        r = B0[None] - A0[:, None]
        den = sa[:, None, 0] * sb[None, :, 1] - sa[:, None, 1] * sb[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (r[..., 0] * sb[None, :, 1] - r[..., 1] * sb[None, :, 0]) / den
            u = (r[..., 0] * sa[:, None, 1] - r[..., 1] * sa[:, None, 0]) / den
        hit = (t > 0) & (t < 1) & (u > 0) & (u < 1)
        ii, jj = np.nonzero(hit)
        for i, j in zip(ii, jj):
            ha = a0[i] @ d + t[i, j] * ((a1[i] - a0[i]) @ d)
            hb = b0[j] @ d + u[i, j] * ((b1[j] - b0[j]) @ d)
            if abs(ha - hb) < 1e-9:
                ok = False
                break
            ta, tb = (sa[i], sb[j]) if ha > hb else (sb[j], sa[i])
            total += 1 if ta[0] * tb[1] - ta[1] * tb[0] > 0 else -1
        if ok:
            return total // 2
    raise NoGenericDirection("no generic direction for the linking count")
