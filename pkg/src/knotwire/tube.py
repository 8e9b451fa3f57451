"""Tube coordinates around a closed curve.

A point of the solid tube is written ``gamma(s) + eps*y1*N(s) + eps*y2*B(s)``
with ``(T, N, B)`` the Frenet frame of the core and ``|y| <= 1``.
"""
from __future__ import annotations

import csv
import math

import numpy as np
from scipy.spatial import cKDTree

from .curves import TWO_PI, CurveBase, Polyline
from .errors import AmbiguousProjection, OutOfDisk, OutsideTube, ValidationFailed

WORKING_RADIUS = 0.1
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


def reach_estimate(curve: CurveBase, n=1024):
    """Lower estimate of the largest admissible tube width.

    Minimum of ``1/max(kappa)`` and half the smallest distance between
    points whose arc-length separation exceeds ``pi/max(kappa)``.
    """
    s = np.arange(n) * (curve.length / n)
    fr = curve.frame(s)
    kmax = float(np.max(fr.kappa))
    pts = curve.eval(s)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    gap = np.abs(s[:, None] - s[None, :])
    gap = np.minimum(gap, curve.length - gap)
    far = gap > math.pi / kmax
    half_gap = 0.5 * float(d[far].min()) if np.any(far) else math.inf
    return min(1.0 / kmax, half_gap)


class TubeChart:
    """The ``(s, y1, y2)`` chart of width ``eps`` around ``core``.

    Parameters
    ----------
    core : CurveBase
        Validated core curve with positive curvature.
    eps : float
        Tube radius; must be below :func:`reach_estimate`.
    """

    def __init__(self, core, eps, check_reach=True, n_scan=None):
        self.core = core
        self.eps = float(eps)
        if self.eps <= 0:
            raise ValidationFailed("tube width must be positive")
        self.reach = reach_estimate(core)
        if check_reach and self.eps >= self.reach:
            raise ValidationFailed(f"eps={self.eps} exceeds the reach estimate {self.reach:.4g}")
        n_scan = n_scan or max(512, int(8 * core.length / self.eps))
        self._scan_s = np.arange(n_scan) * (core.length / n_scan)
        self._scan_pts = core.eval(self._scan_s)

    @property
    def length(self):
        return self.core.length

    # -- forward map --------------------------------------------------------
    def embed(self, s, y, check=True):
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if check and np.any(np.hypot(y[..., 0], y[..., 1]) > 1.0 + 1e-12):
            raise OutOfDisk("|y| > 1")
        u = self.core.u_of_s(s)
        p = self.core.derivatives(u, 0)[0]
        fr = self.core.frame_u(u)
        e = self.eps
        return p + e * y[..., 0:1] * fr.N + e * y[..., 1:2] * fr.B

    def surface_point(self, s, theta):
        th = np.asarray(theta, dtype=float)
        return self.embed(s, np.stack([np.cos(th), np.sin(th)], axis=-1), check=False)

    def coordinate_vectors(self, s, y):
        """``(d/ds, d/dy1, d/dy2)`` of the embedding, each of shape (..., 3)."""
        fr = self.core.frame(s)
        y = np.asarray(y, dtype=float)
        e = self.eps
        y1, y2 = y[..., 0:1], y[..., 1:2]
        ds = (1 - e * fr.kappa[..., None] * y1) * fr.T + e * fr.tau[..., None] * (y1 * fr.B - y2 * fr.N)
        return ds, e * fr.N, e * fr.B

    def to_tube_components(self, s, y, vec, frame=None):
        """Components of Cartesian vectors in the ``(d/ds, d/dy1, d/dy2)`` basis."""
        fr = self.core.frame(s) if frame is None else frame
        y = np.asarray(y, dtype=float)
        e = self.eps
        y1, y2 = y[..., 0], y[..., 1]
        vt = np.einsum("...i,...i->...", vec, fr.T)
        vn = np.einsum("...i,...i->...", vec, fr.N)
        vb = np.einsum("...i,...i->...", vec, fr.B)
        cs = vt / (1 - e * fr.kappa * y1)
        c1 = (vn + cs * e * fr.tau * y2) / e
        c2 = (vb - cs * e * fr.tau * y1) / e
        return np.stack([cs, c1, c2], axis=-1)

    def from_tube_components(self, s, y, comp):
        ds, d1, d2 = self.coordinate_vectors(s, y)
        comp = np.asarray(comp, dtype=float)
        return comp[..., 0:1] * ds + comp[..., 1:2] * d1 + comp[..., 2:3] * d2

    # -- inverse map --------------------------------------------------------
    def project(self, x, tol=1e-13, check=True):
        """Inverse of :meth:`embed` for points inside the tube.

        Returns ``(s, y)``.  Raises :class:`OutsideTube` if the nearest
        core point is farther than ``eps`` and :class:`AmbiguousProjection`
        if two separate stretches of the core are both within ``eps``.
        ``check=False`` skips both tests (nearest-point projection only).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        core, L = self.core, self.length
        n = len(self._scan_s)
        h = L / n
        d2 = ((x[:, None, :] - self._scan_pts[None, :, :]) ** 2).sum(-1)
        i0 = np.argmin(d2, axis=1)
        if check:
            self._check_unique(d2, i0)
        # golden-section bracketing on |x - gamma(s)|^2
        a = self._scan_s[i0] - h
        b = self._scan_s[i0] + h
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc = ((x - core.eval(c)) ** 2).sum(-1)
        fd = ((x - core.eval(d)) ** 2).sum(-1)
        for _ in range(12):
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            c_new = b - _GOLDEN * (b - a)
            d_new = a + _GOLDEN * (b - a)
            c, d = c_new, d_new
            fc = ((x - core.eval(c)) ** 2).sum(-1)
            fd = ((x - core.eval(d)) ** 2).sum(-1)
        s = 0.5 * (a + b)
        # Newton on f(s) = (x - gamma(s)) . T(s)
        for _ in range(20):
            u = core.u_of_s(s)
            p = core.derivatives(u, 0)[0]
            fr = core.frame_u(u)
            r = x - p
            f = (r * fr.T).sum(-1)
            fp = -1.0 + fr.kappa * (r * fr.N).sum(-1)
            step = f / fp
            s = s - step
            if np.all(np.abs(step) < tol * max(L, 1.0)):
                break
        s = np.mod(s, L)
        u = core.u_of_s(s)
        p = core.derivatives(u, 0)[0]
        fr = core.frame_u(u)
        r = x - p
        y = np.stack([(r * fr.N).sum(-1), (r * fr.B).sum(-1)], axis=-1) / self.eps
        if check and np.any(np.hypot(y[:, 0], y[:, 1]) > 1.0 + 1e-12):
            raise OutsideTube("point farther than eps from the core")
        return s, y

    def _check_unique(self, d2, i0):
        e2 = self.eps**2
        n = d2.shape[1]
        inside = d2 < e2
        # scan indices within eps of the point that are not contiguous with
        # the nearest sample's run signal a second nearby stretch of core
        for k in np.nonzero(inside.sum(1) > 0)[0]:
            idx = np.nonzero(inside[k])[0]
            rel = np.mod(idx - i0[k] + n // 2, n)
            rel.sort()
            if len(rel) > 1 and np.any(np.diff(rel) > 1):
                raise AmbiguousProjection("two stretches of the core lie within eps")
        if np.any(~inside.any(1)):
            raise OutsideTube("point farther than eps from the core")

    # -- densities ----------------------------------------------------------
    def volume_density(self, s, y):
        y = np.asarray(y, dtype=float)
        if np.any(np.hypot(y[..., 0], y[..., 1]) > 1.0 + 1e-12):
            raise OutOfDisk("|y| > 1")
        kappa = self.core.frame(s).kappa
        return self.eps**2 * (1.0 - self.eps * kappa * y[..., 0])

    def surface_density(self, s, theta):
        """``A(s, theta) = 1 - eps*kappa(s)*cos(theta)``; ``dS = eps*A ds dtheta``."""
        kappa = self.core.frame(s).kappa
        return 1.0 - self.eps * kappa * np.cos(theta)

    def surface_area(self, n_s=256, n_theta=64):
        s = np.arange(n_s) * (self.length / n_s)
        th = np.arange(n_theta) * (TWO_PI / n_theta)
        A = self.surface_density(s[:, None], th[None, :])
        return float(self.eps * A.sum() * (self.length / n_s) * (TWO_PI / n_theta))

    # -- export -------------------------------------------------------------
    def surface_mesh(self, n_s=128, n_theta=32):
        s = np.arange(n_s) * (self.length / n_s)
        th = np.arange(n_theta) * (TWO_PI / n_theta)
        S, TH = np.meshgrid(s, th, indexing="ij")
        return S, TH, self.surface_point(S, TH)

    def export_mesh_csv(self, path, n_s=128, n_theta=32):
        S, TH, P = self.surface_mesh(n_s, n_theta)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "theta", "x", "y", "z"])
            for si, ti, p in zip(S.ravel(), TH.ravel(), P.reshape(-1, 3)):
                w.writerow([repr(float(si)), repr(float(ti))] + [repr(float(c)) for c in p])

    def surface_self_distance(self, n_s=256, n_theta=16):
        """Smallest distance between mesh points on far-apart stretches of
        the surface; a positive value means no collision was detected."""
        S, TH, P = self.surface_mesh(n_s, n_theta)
        pts = P.reshape(-1, 3)
        ss = S.ravel()
        tree = cKDTree(pts)
        pairs = tree.query_pairs(4 * self.eps, output_type="ndarray")
        if len(pairs) == 0:
            return math.inf
        gap = np.abs(ss[pairs[:, 0]] - ss[pairs[:, 1]])
        gap = np.minimum(gap, self.length - gap)
        far = gap > math.pi * self.eps + 4 * self.eps
        if not np.any(far):
            return math.inf
        p = pairs[far]
        return float(np.linalg.norm(pts[p[:, 0]] - pts[p[:, 1]], axis=1).min())

    def core_polyline(self, n):
        return self.core.sample(n)
