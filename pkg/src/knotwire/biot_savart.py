"""Biot-Savart field evaluators.

Every source is wrapped in a :class:`FieldHandle`, a pure map from an
``(m, 3)`` array of points to an ``(m, 3)`` array of field vectors:

* :class:`WireField` - closed filaments (smooth curves or polylines),
* :class:`SurfaceField` - a surface current on a tube,
* :class:`AsymptoticModel` - the leading-order thin-tube field,
* :class:`WeightedSum` - linear combinations of the above.
"""
from __future__ import annotations

import csv
import json
import math

import numpy as np
from scipy.spatial import cKDTree

from .curves import TWO_PI, CurveBase, Polyline, _GL16_W, _GL16_X
from .current import SurfaceCurrent
from .errors import QuadratureNotConverged, TooCloseToSurface, TooCloseToWire, ValidationFailed

FOUR_PI = 4.0 * math.pi
_CHUNK = 1_500_000


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 3), x.shape


def _kernel_sum(x, nodes, weights):
    """``sum_j weights_j x (x - nodes_j) / |x - nodes_j|^3 / (4 pi)`` for
    every row of ``x``; ``weights`` already include the quadrature weights."""
    out = np.empty((len(x), 3))
    px, py, pz = nodes[:, 0], nodes[:, 1], nodes[:, 2]
    wx, wy, wz = weights[:, 0], weights[:, 1], weights[:, 2]
    rows = max(1, _CHUNK // max(len(nodes), 1))
    for lo in range(0, len(x), rows):
        xc = x[lo:lo + rows]
        rx = xc[:, 0:1] - px
        ry = xc[:, 1:2] - py
        rz = xc[:, 2:3] - pz
        inv = rx * rx + ry * ry + rz * rz
        inv = 1.0 / (inv * np.sqrt(inv))
        out[lo:lo + rows, 0] = ((wy * rz - wz * ry) * inv).sum(1)
        out[lo:lo + rows, 1] = ((wz * rx - wx * rz) * inv).sum(1)
        out[lo:lo + rows, 2] = ((wx * ry - wy * rx) * inv).sum(1)
    return out / FOUR_PI


def _segment_field(x, a, b):
    """Exact field of unit current along straight segments ``a -> b``."""
    out = np.empty((len(x), 3))
    rows = max(1, _CHUNK // max(len(a), 1))
    for lo in range(0, len(x), rows):
        xc = x[lo:lo + rows, None, :]
        r1 = xc - a[None]
        r2 = xc - b[None]
        n1 = np.sqrt((r1 * r1).sum(-1))
        n2 = np.sqrt((r2 * r2).sum(-1))
        c = np.cross(r1, r2)
        dot = (r1 * r2).sum(-1)
        f = (n1 + n2) / (n1 * n2 * (n1 * n2 + dot))
        out[lo:lo + rows] = (c * f[..., None]).sum(1)
    return out / FOUR_PI


class FieldHandle:
    """A pure evaluator ``x -> B(x)``."""

    def __call__(self, x):
        pts, shape = _as_points(x)
        return self.evaluate(pts).reshape(shape)

    def evaluate(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def support_distance(self, x):
        """Distance from each point to the source support."""
        return np.full(len(np.atleast_2d(x)), math.inf)

    def __add__(self, other):
        return WeightedSum([(1.0, self), (1.0, other)])

    def __rmul__(self, c):
        return WeightedSum([(float(c), self)])

    def describe(self):
        return {"type": type(self).__name__}


# ---------------------------------------------------------------------------
# Wires
# ---------------------------------------------------------------------------


class WireField(FieldHandle):
    """Field of a closed filament carrying unit current.

    Polylines use the exact straight-segment formula.  Smooth curves use
    composite 16-point Gauss-Legendre panels in the native parameter,
    doubled until two levels agree to ``rel_tol``.
    """

    def __init__(self, wire, rel_tol=1e-9, clearance=None, max_panels=1 << 15):
        self.wire = wire
        self.rel_tol = rel_tol
        self.max_panels = max_panels
        if isinstance(wire, Polyline):
            self._a, self._b = wire.segments()
            scale = wire.length
        elif isinstance(wire, CurveBase):
            poly = wire.sample(1024, uniform_in="u")
            self._a, self._b = poly.segments()
            scale = wire.length
        else:
            raise ValidationFailed("wire must be a Polyline or a smooth closed curve")
        self.clearance = 1e-9 * scale if clearance is None else clearance
        self._mid = cKDTree(0.5 * (self._a + self._b))
        self._half = 0.5 * float(np.linalg.norm(self._b - self._a, axis=1).max())
        self._panel_cache = {}

    def support_distance(self, x, cutoff=math.inf):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a, b = self._a, self._b
        if math.isinf(cutoff):
            d, i = self._mid.query(x)
            cutoff = float(d.max()) + self._half
        out = np.full(len(x), math.inf)
        lists = self._mid.query_ball_point(x, cutoff + self._half)
        for k, idx in enumerate(lists):
            if not idx:
                continue
            idx = np.asarray(idx)
            d = b[idx] - a[idx]
            t = np.clip(((x[k] - a[idx]) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
            out[k] = np.linalg.norm(a[idx] + t[:, None] * d - x[k], axis=1).min()
        return out

    def _check_clearance(self, x):
        d = self.support_distance(x, cutoff=self.clearance)
        if np.any(d < self.clearance):
            raise TooCloseToWire(f"evaluation point within {self.clearance:.2e} of the wire")

    def _panels(self, n):
        if n not in self._panel_cache:
            edges = np.linspace(0.0, TWO_PI, n + 1)
            half = 0.5 * (edges[1] - edges[0])
            u = (edges[:-1, None] + half * (_GL16_X + 1.0)).ravel()
            w = np.tile(_GL16_W * half, n)
            p, dp = self.wire.derivatives(u, 1)
            self._panel_cache[n] = (p, dp * w[:, None])
        return self._panel_cache[n]

    def evaluate(self, x):
        self._check_clearance(x)
        if isinstance(self.wire, Polyline):
            return _segment_field(x, self._a, self._b)
        d = self.support_distance(x)
        # start with panels no longer than the distance to the wire
        n = 8
        while n < self.max_panels and self.wire.length / n > max(float(d.min()), 1e-300):
            n *= 2
        prev = _kernel_sum(x, *self._panels(n))
        while True:
            n *= 2
            if n > self.max_panels:
                raise QuadratureNotConverged("wire quadrature reached the panel limit")
            cur = _kernel_sum(x, *self._panels(n))
            scale = np.linalg.norm(cur, axis=1)
            err = np.linalg.norm(cur - prev, axis=1)
            if np.all(err <= self.rel_tol * np.maximum(scale, 1e-300) + 1e-300):
                return cur
            prev = cur

    def describe(self):
        return {"type": "wire", "kind": type(self.wire).__name__,
                "length": float(self.wire.length)}


class PolylineBundleField(FieldHandle):
    """Several closed polylines with individual current weights, evaluated
    as one segment set with the exact straight-segment formula."""

    def __init__(self, polylines, weights, clearance=1e-9):
        if len(polylines) != len(weights):
            raise ValidationFailed("one weight per polyline is required")
        a, b, w = [], [], []
        for p, c in zip(polylines, weights):
            pa, pb = p.segments()
            a.append(pa)
            b.append(pb)
            w.append(np.full(len(pa), float(c)))
        self._a = np.concatenate(a)
        self._b = np.concatenate(b)
        self._w = np.concatenate(w)
        self.polylines = list(polylines)
        self.weights = [float(c) for c in weights]
        self.clearance = clearance
        self._mid = cKDTree(0.5 * (self._a + self._b))
        self._half = 0.5 * float(np.linalg.norm(self._b - self._a, axis=1).max())

    support_distance = WireField.support_distance

    def evaluate(self, x):
        d = self.support_distance(x, cutoff=self.clearance)
        if np.any(d < self.clearance):
            raise TooCloseToWire("evaluation point on a wire")
        if np.all(self._w == self._w[0]):
            return self._w[0] * _segment_field(x, self._a, self._b)
        out = np.zeros((len(x), 3))
        for c in np.unique(self._w):
            m = self._w == c
            out += c * _segment_field(x, self._a[m], self._b[m])
        return out

    def describe(self):
        return {"type": "polyline_bundle", "count": len(self.polylines),
                "segments": int(len(self._a))}


def wire_field(wire, x, **kw):
    return WireField(wire, **kw)(x)


# ---------------------------------------------------------------------------
# Surface currents
# ---------------------------------------------------------------------------


def _pow2_at_least(v, lo, hi):
    n = lo
    while n < v and n < hi:
        n *= 2
    return n


class SurfaceField(FieldHandle):
    """Field of a surface current, by a product periodic trapezoid rule.

    Both integrands are smooth and periodic, so the error is controlled by
    the distance of the complex singularities from the real axis.  The
    grid is chosen per point from its distance to the surface.

    Parameters
    ----------
    current : SurfaceCurrent
    clearance : float, optional
        Minimum distance to the surface, default ``eps / 4``.
    check : bool
        Also evaluate on the next finer grid and raise
        :class:`QuadratureNotConverged` if the two differ by more than
        ``quad_tol`` relative.
    """

    def __init__(self, current: SurfaceCurrent, clearance=None, check=False, quad_tol=1e-9,
                 digits=36.0, max_ns=1 << 17, max_ntheta=512):
        self.current = current
        self.chart = current.chart
        self.eps = current.eps
        self.length = current.length
        self.clearance = self.eps / 4 if clearance is None else clearance
        self.check = check
        self.quad_tol = quad_tol
        self.digits = digits
        self.max_ns = max_ns
        self.max_ntheta = max_ntheta
        n_core = max(2048, int(32 * self.length / self.eps))
        s = np.arange(n_core) * (self.length / n_core)
        self._core_tree = cKDTree(self.chart.core.eval(s))
        self._grids = {}
        self._frames = {}

    def core_distance(self, x):
        d, _ = self._core_tree.query(np.atleast_2d(x))
        return d

    def support_distance(self, x):
        return np.abs(self.core_distance(x) - self.eps)

    def _grid(self, n_s, n_t):
        key = (n_s, n_t)
        if key not in self._grids:
            if n_s not in self._frames:
                s = np.arange(n_s) * (self.length / n_s)
                self._frames[n_s] = (s, self.chart.core.eval(s), self.chart.core.frame(s))
            s, p, fr = self._frames[n_s]
            th = np.arange(n_t) * (TWO_PI / n_t)
            S = np.repeat(s, n_t)
            TH = np.tile(th, n_s)
            idx = np.repeat(np.arange(n_s), n_t)
            sub = type(fr)(fr.T[idx], fr.N[idx], fr.B[idx], fr.kappa[idx], fr.tau[idx])
            c, sn = np.cos(TH)[:, None], np.sin(TH)[:, None]
            nodes = p[idx] + self.eps * (c * sub.N + sn * sub.B)
            w = (self.length / n_s) * (TWO_PI / n_t)
            dens = self.current.cartesian_density(S, TH, frame=sub) * w
            self._grids[key] = (nodes, dens)
        return self._grids[key]

    def _levels(self, rho):
        """Grid sizes ``(n_s, n_theta)`` for points at distance ``rho`` from the core."""
        e = self.eps
        d = np.abs(rho - e)
        r = np.maximum(rho, 1e-12 * e)
        beta = np.arccosh(np.maximum((e * e + r * r) / (2 * e * r), 1.0 + 1e-16))
        out = []
        for di, bi in zip(d, beta):
            n_t = _pow2_at_least(self.digits / max(bi, 1e-12), 16, self.max_ntheta)
            n_s = _pow2_at_least(self.digits * self.length / (TWO_PI * di), 256, self.max_ns)
            out.append((n_s, n_t))
        return out

    def evaluate(self, x):
        rho = self.core_distance(x)
        if np.any(np.abs(rho - self.eps) < self.clearance):
            raise TooCloseToSurface(f"evaluation point within {self.clearance:.3g} of the tube surface")
        levels = self._levels(rho)
        out = np.empty((len(x), 3))
        for lev in sorted(set(levels)):
            idx = np.array([i for i, l in enumerate(levels) if l == lev])
            val = _kernel_sum(x[idx], *self._grid(*lev))
            if self.check:
                fine = _kernel_sum(x[idx], *self._grid(2 * lev[0], 2 * lev[1]))
                err = np.linalg.norm(fine - val, axis=1)
                if np.any(err > self.quad_tol * np.linalg.norm(fine, axis=1)):
                    raise QuadratureNotConverged("surface quadrature differs from the refined grid")
            out[idx] = val
        return out

    def tube_components(self, s, y):
        """``(B^s, B^y1, B^y2)`` at tube coordinates ``(s, y)``."""
        x = self.chart.embed(s, y)
        return self.chart.to_tube_components(s, y, self.evaluate(np.atleast_2d(x)).reshape(x.shape))

    def describe(self):
        c = self.current
        return {"type": "surface_current", "eps": self.eps,
                "F_cos": c.F_cos.tolist(), "F_sin": c.F_sin.tolist(),
                "G_cos": c.G_cos.tolist(), "G_sin": c.G_sin.tolist()}


def surface_field(current, x, **kw):
    return SurfaceField(current, **kw)(x)


# ---------------------------------------------------------------------------
# Leading-order model and sums
# ---------------------------------------------------------------------------


class AsymptoticModel(FieldHandle):
    """Leading-order field of a surface current inside its tube:

    ``B^s = G(s)``, ``B^y1 = (b1 + b2 y1 - a2 y2) / (2 eps)``,
    ``B^y2 = -(a1 + a2 y1 + b2 y2) / (2 eps)``.
    """

    def __init__(self, current: SurfaceCurrent):
        self.current = current
        self.chart = current.chart
        self.eps = current.eps

    def components(self, s, y):
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        a1, b1 = self.current.fourier(1)
        a2, b2 = self.current.fourier(2)
        y1, y2 = y[..., 0], y[..., 1]
        e = self.eps
        bs = self.current.G(s) * np.ones_like(y1)
        b_1 = (b1 + b2 * y1 - a2 * y2) / (2 * e)
        b_2 = -(a1 + a2 * y1 + b2 * y2) / (2 * e)
        return np.stack([bs, b_1, b_2], axis=-1)

    def components_jacobian(self, s, y):
        """Derivative of ``(B^y1, B^y2)`` with respect to ``(y1, y2)``."""
        a2, b2 = self.current.fourier(2)
        e = self.eps
        return np.array([[b2, -a2], [-a2, -b2]]) / (2 * e)

    def tube_components(self, s, y):
        return self.components(s, y)

    def evaluate(self, x):
        s, y = self.chart.project(x)
        return self.chart.from_tube_components(s, y, self.components(s, y))

    def describe(self):
        return {"type": "asymptotic_model", "eps": self.eps}


class WeightedSum(FieldHandle):
    """``sum_k c_k B_k``; evaluation is exactly the weighted sum of members."""

    def __init__(self, terms):
        self.terms = []
        for c, h in terms:
            if isinstance(h, WeightedSum):
                self.terms.extend((c * c2, h2) for c2, h2 in h.terms)
            else:
                self.terms.append((float(c), h))

    def evaluate(self, x):
        out = np.zeros((len(x), 3))
        for c, h in self.terms:
            out += c * h.evaluate(x)
        return out

    def support_distance(self, x):
        return np.min([h.support_distance(x) for _, h in self.terms], axis=0)

    def describe(self):
        return {"type": "weighted_sum",
                "terms": [{"weight": c, "source": h.describe()} for c, h in self.terms]}


class PerturbedField(FieldHandle):
    """``base + amplitude * perturbation(x)`` for a smooth vector function."""

    def __init__(self, base, perturbation, amplitude):
        self.base = base
        self.perturbation = perturbation
        self.amplitude = amplitude

    def evaluate(self, x):
        return self.base.evaluate(x) + self.amplitude * self.perturbation(x)

    def support_distance(self, x):
        return self.base.support_distance(x)


# ---------------------------------------------------------------------------
# Derivatives and norms
# ---------------------------------------------------------------------------


def field_jacobian(handle, x, step):
    """Central-difference Jacobian ``J[..., i, j] = dB_i / dx_j``."""
    pts, shape = _as_points(x)
    m = len(pts)
    offs = np.concatenate([np.eye(3) * step, -np.eye(3) * step])
    probe = (pts[:, None, :] + offs[None]).reshape(-1, 3)
    vals = handle.evaluate(probe).reshape(m, 6, 3)
    jac = (vals[:, :3, :] - vals[:, 3:, :]) / (2 * step)
    return np.swapaxes(jac, 1, 2).reshape(shape[:-1] + (3, 3))


def divergence_and_curl(handle, x, step):
    jac = field_jacobian(handle, x, step)
    div = np.trace(jac, axis1=-2, axis2=-1)
    curl = np.stack([jac[..., 2, 1] - jac[..., 1, 2],
                     jac[..., 0, 2] - jac[..., 2, 0],
                     jac[..., 1, 0] - jac[..., 0, 1]], axis=-1)
    return div, curl


class EvaluationRegion:
    """A compact sample set ``K`` kept away from every source support."""

    def __init__(self, points, clearance=0.0):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.clearance = float(clearance)
        lo, hi = self.points.min(0), self.points.max(0)
        self.diameter = float(np.linalg.norm(hi - lo))

    @classmethod
    def tube_annulus(cls, chart, r_in=0.02, r_out=0.05, n_s=64, n_r=2, n_theta=8, clearance=0.0):
        """Grid on ``r_in <= |y| <= r_out`` in the normalized tube chart."""
        s = (np.arange(n_s) + 0.5) * (chart.length / n_s)
        r = np.linspace(r_in, r_out, n_r) if n_r > 1 else np.array([0.5 * (r_in + r_out)])
        th = np.arange(n_theta) * (TWO_PI / n_theta)
        S, R, TH = np.meshgrid(s, r, th, indexing="ij")
        y = np.stack([R * np.cos(TH), R * np.sin(TH)], axis=-1)
        return cls(chart.embed(S.ravel(), y.reshape(-1, 2)), clearance)

    def check(self, *handles):
        for h in handles:
            d = h.support_distance(self.points)
            if np.any(d < self.clearance):
                raise ValidationFailed("evaluation region intersects a source support")


def field_distance(h1, h2, region: EvaluationRegion, m=0, step=None):
    """``C^m(K)`` surrogate distance between two fields.

    Maximum over ``K`` of the componentwise differences of values and, for
    ``m >= 1``, of central-difference first derivatives with step
    ``1e-4 * diam(K)``.
    """
    region.check(h1, h2)
    x = region.points
    diff = h1(x) - h2(x)
    out = float(np.abs(diff).max())
    if m >= 1:
        step = 1e-4 * region.diameter if step is None else step
        j1 = field_jacobian(h1, x, step)
        j2 = field_jacobian(h2, x, step)
        out = max(out, float(np.abs(j1 - j2).max()))
    if m >= 2:
        raise ValidationFailed("derivative order above 1 is not supported")
    return out


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def write_field_csv(path, points, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "Bx", "By", "Bz"])
        for p, b in zip(np.atleast_2d(points), np.atleast_2d(values)):
            w.writerow([repr(float(v)) for v in (*p, *b)])


def evaluate_batch_request(request, sources):
    """Evaluate a batch request ``{"source", "points", "quad_tol"}``.

    ``sources`` maps source names to factories ``quad_tol -> FieldHandle``.
    """
    if isinstance(request, str):
        request = json.loads(request)
    name = request["source"]
    if name not in sources:
        raise ValidationFailed(f"unknown source {name!r}")
    handle = sources[name](float(request.get("quad_tol", 1e-9)))
    pts = np.asarray(request["points"], dtype=float).reshape(-1, 3)
    return handle(pts)
