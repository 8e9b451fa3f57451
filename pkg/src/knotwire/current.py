"""Divergence-free surface currents on the boundary of a thin tube.

On the surface ``r = 1`` of a :class:`~knotwire.tube.TubeChart` the current is

    J = (F(theta) d/ds + G(s)/eps d/dtheta) / (1 - eps*kappa(s)*cos(theta))

with ``F`` a trigonometric series in ``theta`` and ``G > 0`` a
trigonometric series in ``s``.  Every integral curve of ``J`` solves
``dH(s) = eps dPhi(theta)`` with ``H' = G`` and ``Phi' = F``, so the
orbits are closed as soon as ``F`` has zero mean.  :class:`IsoChart`
builds the torus coordinates ``(alpha, sigma)`` in which the period-one
rescaling of ``J`` is ``d/dsigma``.
"""
from __future__ import annotations

import csv
import math

import numpy as np
from scipy.integrate import solve_ivp

from .curves import TWO_PI
from .errors import NotPeriodic, OdeTolerance, ValidationFailed
from .tube import TubeChart


class SurfaceCurrent:
    """Current ``J`` on the tube surface.

    Parameters
    ----------
    chart : TubeChart
    F_cos, F_sin : array_like
        ``F(theta) = sum_n F_cos[n] cos(n theta) + F_sin[n] sin(n theta)``,
        ``n >= 0``.
    G_cos, G_sin : array_like, optional
        ``G(s) = sum_m G_cos[m] cos(2 pi m s / l) + G_sin[m] sin(...)``.
        Default ``G = 1``.
    """

    def __init__(self, chart: TubeChart, F_cos, F_sin=None, G_cos=(1.0,), G_sin=None):
        self.chart = chart
        self.eps = chart.eps
        self.length = chart.length
        fc = np.atleast_1d(np.asarray(F_cos, dtype=float))
        fs = np.zeros_like(fc) if F_sin is None else np.atleast_1d(np.asarray(F_sin, dtype=float))
        nf = max(len(fc), len(fs))
        self.F_cos = np.pad(fc, (0, nf - len(fc)))
        self.F_sin = np.pad(fs, (0, nf - len(fs)))
        self.F_sin[0] = 0.0
        gc = np.atleast_1d(np.asarray(G_cos, dtype=float))
        gs = np.zeros_like(gc) if G_sin is None else np.atleast_1d(np.asarray(G_sin, dtype=float))
        ng = max(len(gc), len(gs))
        self.G_cos = np.pad(gc, (0, ng - len(gc)))
        self.G_sin = np.pad(gs, (0, ng - len(gs)))
        self.G_sin[0] = 0.0
        s = np.linspace(0.0, self.length, 4096, endpoint=False)
        gmin = float(self.G(s).min())
        if not gmin > 0.0:
            raise ValidationFailed(f"G must not vanish (min G = {gmin:.3g})")
        self._n = np.arange(nf, dtype=float)
        self._m = np.arange(ng, dtype=float)
        self._k = TWO_PI * self._m / self.length

    @classmethod
    def concrete(cls, chart):
        """The current ``2 cos(2 theta) d/ds + (1/eps) d/dtheta`` (up to the
        area factor) whose field has a hyperbolic line along the core."""
        return cls(chart, F_cos=[0.0, 0.0, 2.0])

    def fourier(self, n):
        """``(a_n, b_n)`` of ``F``; zero past the stored order."""
        if n < len(self.F_cos):
            return float(self.F_cos[n]), float(self.F_sin[n])
        return 0.0, 0.0

    @property
    def hyperbolic(self):
        a1, b1 = self.fourier(1)
        a2, b2 = self.fourier(2)
        return a1 == 0.0 and b1 == 0.0 and (a2 * a2 + b2 * b2) != 0.0

    # -- series -------------------------------------------------------------
    def F(self, theta):
        th = np.asarray(theta, dtype=float)[..., None] * np.arange(len(self.F_cos))
        return np.cos(th) @ self.F_cos + np.sin(th) @ self.F_sin

    def Phi(self, theta):
        """Antiderivative of ``F`` with ``Phi(0) = 0``."""
        theta = np.asarray(theta, dtype=float)
        n = np.arange(len(self.F_cos), dtype=float)
        th = theta[..., None] * n
        inv = np.zeros_like(n)
        inv[1:] = 1.0 / n[1:]
        out = np.sin(th) @ (self.F_cos * inv) + (1.0 - np.cos(th)) @ (self.F_sin * inv)
        return out + self.F_cos[0] * theta

    def G(self, s):
        ks = np.asarray(s, dtype=float)[..., None] * (TWO_PI * np.arange(len(self.G_cos)) / self.length)
        return np.cos(ks) @ self.G_cos + np.sin(ks) @ self.G_sin

    def H(self, s):
        """Antiderivative of ``G`` with ``H(0) = 0``."""
        s = np.asarray(s, dtype=float)
        k = self._k
        ks = s[..., None] * k
        inv = np.zeros_like(k)
        inv[1:] = 1.0 / k[1:]
        out = np.sin(ks) @ (self.G_cos * inv) + (1.0 - np.cos(ks)) @ (self.G_sin * inv)
        return out + self.G_cos[0] * s

    @property
    def total_G(self):
        """``int_0^l G ds``."""
        return float(self.G_cos[0] * self.length)

    def H_inverse(self, h, tol=1e-14):
        h = np.asarray(h, dtype=float)
        s = h / self.G_cos[0]
        for _ in range(60):
            ds = (self.H(s) - h) / self.G(s)
            s = s - ds
            if np.all(np.abs(ds) <= tol * max(1.0, self.length)):
                break
        return s

    # -- field components ---------------------------------------------------
    def area_factor(self, s, theta):
        return self.chart.surface_density(s, theta)

    def j_eval(self, s, theta):
        """``(J^s, J^theta)`` in the coordinate basis ``(d/ds, d/dtheta)``."""
        A = self.area_factor(s, theta)
        return self.F(theta) / A, self.G(s) / (self.eps * A)

    def surface_divergence(self, s, theta, h=1e-3, drop_area_factor=False):
        """Fourth-order central-difference surface divergence of ``J``.

        ``drop_area_factor=True`` evaluates the field without the
        ``1/(1 - eps kappa cos theta)`` factor, which is not divergence-free.
        """
        def comps(ss, tt):
            js, jt = self.j_eval(ss, tt)
            if drop_area_factor:
                A = self.area_factor(ss, tt)
                js, jt = js * A, jt * A
            return js, jt

        def d(fun, x, step):
            return (-fun(x + 2 * step) + 8 * fun(x + step) - 8 * fun(x - step) + fun(x - 2 * step)) / (12 * step)

        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        A = self.area_factor(s, theta)
        ds_term = d(lambda x: self.area_factor(x, theta) * comps(x, theta)[0], s, h)
        dt_term = d(lambda x: self.area_factor(s, x) * comps(s, x)[1], theta, h)
        return (ds_term + dt_term) / A

    def cartesian_density(self, s, theta, frame=None):
        """Vector ``J dS / (ds dtheta)`` in Cartesian components.

        Equals ``eps [F(theta) d/ds + G(s) (-sin(theta) N + cos(theta) B)]``
        on the surface; no division by the area factor is needed.
        """
        fr = self.chart.core.frame(s) if frame is None else frame
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        e = self.eps
        c, sn = np.cos(theta)[..., None], np.sin(theta)[..., None]
        k, t = fr.kappa[..., None], fr.tau[..., None]
        d_s = (1 - e * k * c) * fr.T + e * t * (c * fr.B - sn * fr.N)
        rot = -sn * fr.N + c * fr.B
        return e * (self.F(theta)[..., None] * d_s + self.G(s)[..., None] * rot)

    # -- integral curves ----------------------------------------------------
    def orbit_s(self, s0, theta0, theta):
        """``s`` along the orbit through ``(s0, theta0)`` as a function of the
        (unwrapped) angle ``theta``."""
        h = self.H(s0) + self.eps * (self.Phi(theta) - self.Phi(theta0))
        return self.H_inverse(h)

    def closed_form_unscaled(self, s0, theta0, t):
        """Exact flow of ``F d/ds + (G/eps) d/dtheta`` for constant ``G``.

        For the concrete current this is
        ``s = s0 + eps (sin(2 theta0 + 2t/eps) - sin(2 theta0))``.
        """
        if np.any(self.G_cos[1:] != 0) or np.any(self.G_sin[1:] != 0):
            raise ValidationFailed("closed form needs constant G")
        g = self.G_cos[0]
        theta = theta0 + g * np.asarray(t, dtype=float) / self.eps
        return self.orbit_s(s0, theta0, theta), theta

    def integral_curve(self, s0, theta0, t, scaled=False, rtol=1e-12, atol=1e-13):
        """Integrate the current from ``(s0, theta0)``.

        ``scaled=False`` integrates ``F d/ds + (G/eps) d/dtheta``; with
        ``scaled=True`` the area factor is included, i.e. ``J`` itself.
        ``t`` may be a scalar or an increasing array of output times.
        Returns ``(s, theta)`` arrays (theta unwrapped).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        kappa = self.chart.core.frame

        def rhs(_, z):
            s, th = z
            A = 1.0 - self.eps * float(kappa(s).kappa) * math.cos(th) if scaled else 1.0
            return [float(self.F(th)) / A, float(self.G(s)) / (self.eps * A)]

        sol = solve_ivp(rhs, (0.0, float(t[-1])), [s0, theta0], method="DOP853",
                        t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise OdeTolerance(sol.message)
        return sol.y[0], sol.y[1]


def van_der_corput(n, base=2):
    """First ``n`` points of the base-``base`` van der Corput sequence,
    starting from index 0 (so the first point is 0)."""
    out = np.zeros(n)
    for i in range(n):
        k, f, x = i, 1.0 / base, 0.0
        while k:
            k, r = divmod(k, base)
            x += r * f
            f /= base
        out[i] = x
    return out


def _spectral_antiderivative(values):
    """Cumulative integral from 0 of a periodic function sampled at
    ``2 pi j / N``.  Returns ``(mean, coeffs)`` so that the integral up to
    ``theta`` equals ``mean*theta + Re(sum_k coeffs[k] (e^{ik theta} - 1))``."""
    N = values.shape[-1]
    c = np.fft.rfft(values, axis=-1) / N
    k = np.arange(c.shape[-1])
    mean = c[..., 0].real
    coef = np.zeros_like(c)
    coef[..., 1:] = 2.0 * c[..., 1:] / (1j * k[1:])
    if N % 2 == 0:
        coef[..., -1] *= 0.5
    return mean, coef


def _eval_antiderivative(mean, coef, theta):
    k = np.arange(coef.shape[-1])
    e = np.exp(1j * theta[..., None] * k) - 1.0
    return mean * theta + np.real((coef * e).sum(-1))


class IsoChart:
    """Torus coordinates ``(alpha, sigma)`` adapted to a surface current.

    The section is ``theta = 0`` with ``alpha = s / l``; ``sigma`` is the
    flow time of ``T J`` from the section, ``T`` being the period of the
    orbit.  ``B(alpha)`` is the density of the surface area form in these
    coordinates and ``d rho = B / (c0 T) d alpha`` the sampling measure.
    """

    def __init__(self, current: SurfaceCurrent, n_alpha=256, n_theta=64, fd_step=1e-5,
                 verify_closure=True):
        if current.F_cos[0] != 0.0:
            raise NotPeriodic("F has nonzero mean; integral curves drift in s and do not close")
        self.current = current
        self.length = current.length
        self.eps = current.eps
        self.n_theta = n_theta
        self.fd_step = fd_step
        self.alpha = np.arange(n_alpha) / n_alpha
        self.T = self.period(self.alpha)
        self.Ttilde = self.T.copy()
        self.B = self.area_density_fd(self.alpha, sigma=0.5)
        ratio = self.B / self.Ttilde
        self.c0 = float(ratio.mean())
        self._dens_mean, self._dens_coef = _spectral_antiderivative(
            ratio / self.c0
        )
        self.rho_cdf = self.cdf(self.alpha)
        if np.any(self.T <= 0) or np.any(self.B <= 0):
            raise NotPeriodic("period or area density not positive")
        if verify_closure:
            self._verify_closure()

    # -- orbit data ---------------------------------------------------------
    def _orbit_table(self, alpha):
        """Orbit of the section point ``(l*alpha, 0)`` sampled on the theta grid:
        returns ``(s_nodes, integrand)`` where the integrand is
        ``d(time)/d(theta) = eps A / G``."""
        N = self.n_theta
        th = np.arange(N) * (TWO_PI / N)
        cur = self.current
        s0 = np.asarray(alpha, dtype=float)[..., None] * self.length
        s = cur.orbit_s(s0, 0.0, th)
        A = cur.area_factor(s, th)
        return s, cur.eps * A / cur.G(s)

    def period(self, alpha):
        """Period of the orbit through the section point at ``alpha``."""
        _, w = self._orbit_table(alpha)
        return w.mean(-1) * TWO_PI

    def _time_of_theta(self, alpha, theta):
        _, w = self._orbit_table(alpha)
        mean, coef = _spectral_antiderivative(w)
        return _eval_antiderivative(mean, coef, theta), mean * TWO_PI, (mean, coef)

    # -- coordinates --------------------------------------------------------
    def psi_inverse(self, alpha, sigma, tol=1e-14):
        """Surface point ``(s, theta)`` reached from the section point at
        ``alpha`` after flow time ``sigma`` of the period-one field.

        ``theta`` is returned unwrapped, ``theta in [2 pi floor(sigma), ...)``.
        """
        alpha = np.asarray(alpha, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        alpha, sigma = np.broadcast_arrays(alpha, sigma)
        shape = alpha.shape
        alpha, sigma = alpha.ravel(), sigma.ravel()
        s_nodes, w = self._orbit_table(alpha)
        mean, coef = _spectral_antiderivative(w)
        T = mean * TWO_PI
        turns = np.floor(sigma)
        frac = sigma - turns
        target = frac * T
        theta = TWO_PI * frac
        k = np.arange(coef.shape[-1])
        for _ in range(50):
            e = np.exp(1j * theta[:, None] * k)
            f = mean * theta + np.real((coef * (e - 1.0)).sum(-1)) - target
            fp = mean + np.real((coef * 1j * k * e).sum(-1))
            step = f / fp
            theta = theta - step
            if np.all(np.abs(step) < tol):
                break
        theta = theta + TWO_PI * turns
        s = self.current.orbit_s(alpha * self.length, 0.0, theta)
        return s.reshape(shape), theta.reshape(shape)

    def psi(self, s, theta):
        """``(alpha, sigma)`` of a surface point; ``alpha, sigma in [0, 1)``."""
        cur = self.current
        s = np.asarray(s, dtype=float)
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        h0 = cur.H(s) - cur.eps * cur.Phi(theta)
        s0 = cur.H_inverse(h0)
        alpha = np.mod(s0 / self.length, 1.0)
        t, T, _ = self._time_of_theta(alpha, theta)
        sigma = np.mod(t / T, 1.0)
        return alpha, sigma

    def psi_inverse_xyz(self, alpha, sigma):
        s, th = self.psi_inverse(alpha, sigma)
        return self.current.chart.surface_point(s, th)

    def area_density_fd(self, alpha, sigma=0.5, h=None):
        """``B(alpha)`` from a central-difference Jacobian of ``Psi^{-1}``
        evaluated at the given ``sigma``."""
        h = self.fd_step if h is None else h
        alpha = np.asarray(alpha, dtype=float)
        sg = np.full_like(alpha, sigma)
        sa1, ta1 = self.psi_inverse(alpha + h, sg)
        sa0, ta0 = self.psi_inverse(alpha - h, sg)
        ss1, ts1 = self.psi_inverse(alpha, sg + h)
        ss0, ts0 = self.psi_inverse(alpha, sg - h)
        ds_da, dt_da = (sa1 - sa0) / (2 * h), (ta1 - ta0) / (2 * h)
        ds_dsig, dt_dsig = (ss1 - ss0) / (2 * h), (ts1 - ts0) / (2 * h)
        s, th = self.psi_inverse(alpha, sg)
        jac = ds_da * dt_dsig - dt_da * ds_dsig
        return self.eps * self.current.area_factor(s, th) * np.abs(jac)

    def area_density_exact(self, alpha):
        """``B(alpha) = l T(alpha) G(l alpha)``: the Jacobian at ``sigma = 0``."""
        alpha = np.asarray(alpha, dtype=float)
        return self.length * self.period(alpha) * self.current.G(alpha * self.length)

    # -- sampling measure ---------------------------------------------------
    def density(self, alpha):
        """Density of ``d rho`` with respect to ``d alpha`` (trigonometric
        interpolation of the tabulated ``B / (c0 T)``)."""
        alpha = np.asarray(alpha, dtype=float)
        k = np.arange(self._dens_coef.shape[-1])
        x = TWO_PI * alpha
        return self._dens_mean + np.real((self._dens_coef * 1j * k * np.exp(1j * x[..., None] * k)).sum(-1))

    def cdf(self, alpha):
        """``rho([0, alpha])`` for ``alpha in [0, 1]``."""
        alpha = np.asarray(alpha, dtype=float)
        return _eval_antiderivative(self._dens_mean, self._dens_coef, TWO_PI * alpha) / TWO_PI

    def inverse_cdf(self, u, tol=1e-15):
        u = np.asarray(u, dtype=float)
        a = u.copy()
        lo, hi = np.zeros_like(u), np.ones_like(u)
        for _ in range(100):
            f = self.cdf(a) - u
            lo = np.where(f < 0, a, lo)
            hi = np.where(f >= 0, a, hi)
            step = f / self.density(a)
            a_new = a - step
            bad = (a_new <= lo) | (a_new >= hi)
            a_new = np.where(bad, 0.5 * (lo + hi), a_new)
            if np.all(np.abs(a_new - a) < tol):
                a = a_new
                break
            a = a_new
        return a

    def sample_alphas(self, n):
        """``n`` section coordinates equidistributed with respect to
        ``d rho`` (inverse-CDF transform of the van der Corput sequence)."""
        if n < 1:
            raise ValidationFailed("n must be positive")
        return self.inverse_cdf(van_der_corput(n))

    # -- checks and export ----------------------------------------------------
    def _verify_closure(self, alphas=(0.0, 0.5), tol=1e-7):
        cur = self.current
        for a in alphas:
            T = float(self.period(np.array(a)))
            s, th = cur.integral_curve(a * self.length, 0.0, [T], scaled=True, rtol=1e-11, atol=1e-12)
            gap = math.hypot((s[-1] - a * self.length) / max(cur.eps, 1e-300), th[-1] - TWO_PI)
            if gap > tol / max(cur.eps, 1e-300) + tol:
                raise NotPeriodic(f"orbit at alpha={a} misses the section by {gap:.2e}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "T", "Ttilde", "B", "rho_cdf"])
            for row in zip(self.alpha, self.T, self.Ttilde, self.B, self.rho_cdf):
                w.writerow([repr(float(v)) for v in row])


def build_iso_chart(current, **kw):
    return IsoChart(current, **kw)
