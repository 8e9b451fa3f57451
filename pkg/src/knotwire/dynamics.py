"""Field lines, periodic orbits and their Floquet exponents.

A closed field line near the core of a tube is sought as a graph
``s -> y(s)`` solving ``dy/ds = V(s, y) = B^y / B^s``.  The orbit is
strongly hyperbolic (exponents of size ``l / eps`` per period), which
rules out shooting; the periodic problem is solved instead by Fourier
collocation and a damped Newton iteration.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .curves import TWO_PI, Polyline
from .errors import (
    LeftDomain,
    NewtonDiverged,
    NoReturn,
    NotAGraph,
    StepUnderflow,
    TransversalityLost,
)
from .tube import WORKING_RADIUS, TubeChart


def tube_components(field, chart: TubeChart, s, y):
    """``(B^s, B^y1, B^y2)`` of ``field`` at tube coordinates ``(s, y)``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    direct = getattr(field, "tube_components", None)
    if direct is not None and getattr(field, "chart", None) is chart:
        return direct(s, y)
    x = chart.embed(s, y, check=False)
    b = field(x.reshape(-1, 3)).reshape(x.shape)
    return chart.to_tube_components(s, y, b)


def graph_velocity(field, chart, s, y):
    """``V = (B^y1, B^y2) / B^s``; raises if ``B^s`` is not positive."""
    c = tube_components(field, chart, s, y)
    if np.any(c[..., 0] <= 0):
        raise TransversalityLost("B^s is not positive; the field line is not a graph over s")
    return c[..., 1:] / c[..., 0:1]


def fourier_diff_matrix(n, period):
    """Spectral differentiation matrix on ``n`` equispaced periodic nodes."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    ik = 1j * k * (TWO_PI / period)
    eye = np.eye(n)
    return np.real(np.fft.ifft(ik[:, None] * np.fft.fft(eye, axis=0), axis=0))


def trig_interpolate(values, period, s):
    """Evaluate the trigonometric interpolant of nodal ``values`` (axis 0)."""
    n = values.shape[0]
    c = np.fft.fft(values, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    s = np.asarray(s, dtype=float)
    e = np.exp(1j * np.multiply.outer(s, k) * (TWO_PI / period))
    if n % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real
        e[..., n // 2] = np.cos(s * (n // 2) * TWO_PI / period)
    out = np.tensordot(e, c, axes=([-1], [0]))
    return np.real(out)


def trig_derivative(values, period, s):
    n = values.shape[0]
    c = np.fft.fft(values, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    w = 1j * k * (TWO_PI / period)
    e = np.exp(1j * np.multiply.outer(np.asarray(s, dtype=float), k) * (TWO_PI / period)) * w
    return np.real(np.tensordot(e, c, axes=([-1], [0])))


@dataclass
class PeriodicOrbit:
    """Closed field line ``y*(s)`` sampled on ``n`` collocation nodes."""

    chart: TubeChart
    s: np.ndarray
    y: np.ndarray
    residual: float
    node_residual: float
    iterations: int
    jac_blocks: np.ndarray = field(repr=False)
    lambda_plus: float = math.nan
    lambda_minus: float = math.nan

    @property
    def n_nodes(self):
        return len(self.s)

    def __call__(self, s):
        return trig_interpolate(self.y, self.chart.length, s)

    @property
    def sup_y(self):
        fine = np.linspace(0.0, self.chart.length, 8 * self.n_nodes, endpoint=False)
        return float(np.max(np.hypot(*self(fine).T)))

    def points(self, n=None):
        n = n or 4 * self.n_nodes
        s = np.arange(n) * (self.chart.length / n)
        return s, self(s), self.chart.embed(s, self(s), check=False)

    def polyline(self, n=None):
        return Polyline(self.points(n)[2])

    def to_csv(self, path, n=None):
        s, y, x = self.points(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "y1", "y2", "x", "y", "z"])
            for row in zip(s, y[:, 0], y[:, 1], x[:, 0], x[:, 1], x[:, 2]):
                w.writerow([repr(float(v)) for v in row])


def _velocity_and_jacobian(field, chart, s, y, h):
    """``V`` at the nodes and the 2x2 blocks ``dV/dy`` by central differences,
    all in one batched field call."""
    n = len(s)
    offs = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]], dtype=float)
    yy = (y[None, :, :] + offs[:, None, :]).reshape(-1, 2)
    ss = np.tile(s, 5)
    V = graph_velocity(field, chart, ss, yy).reshape(5, n, 2)
    jac = np.empty((n, 2, 2))
    jac[:, :, 0] = (V[1] - V[2]) / (2 * h)
    jac[:, :, 1] = (V[3] - V[4]) / (2 * h)
    return V[0], jac


def find_periodic_orbit(field, chart: TubeChart, n_modes=64, tol=1e-9, max_iter=40,
                        y0=None, fd_step=1e-6, check_factor=4):
    """Solve ``y' = V(s, y)`` for a ``l``-periodic ``y`` by collocation.

    Parameters
    ----------
    field : FieldHandle
    chart : TubeChart
    n_modes : int
        Number of collocation nodes per component.
    tol : float
        Target for the off-grid residual ``max |y' - V(s, y)|`` measured on
        a grid ``check_factor`` times finer than the nodes.
    y0 : array, optional
        Initial nodal values; default ``y = 0``.

    Returns
    -------
    PeriodicOrbit
    """
    L = chart.length
    n = int(n_modes)
    s = np.arange(n) * (L / n)
    D = fourier_diff_matrix(n, L)
    y = np.zeros((n, 2)) if y0 is None else np.array(y0, dtype=float).reshape(n, 2)
    V, jac = _velocity_and_jacobian(field, chart, s, y, fd_step)
    F = D @ y - V
    norm = float(np.abs(F).max())
    it = 0
    for it in range(1, max_iter + 1):
        if norm < 0.1 * tol:
            break
        big = np.zeros((2 * n, 2 * n))
        big[0::2, 0::2] = D
        big[1::2, 1::2] = D
        idx = np.arange(n)
        big[2 * idx, 2 * idx] -= jac[:, 0, 0]
        big[2 * idx, 2 * idx + 1] -= jac[:, 0, 1]
        big[2 * idx + 1, 2 * idx] -= jac[:, 1, 0]
        big[2 * idx + 1, 2 * idx + 1] -= jac[:, 1, 1]
        try:
            delta = np.linalg.solve(big, -F.ravel()).reshape(n, 2)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular collocation Jacobian: {exc}") from exc
        step = 1.0
        while True:
            y_new = y + step * delta
            if np.max(np.hypot(*y_new.T)) < 1.0:
                try:
                    V_new, jac_new = _velocity_and_jacobian(field, chart, s, y_new, fd_step)
                    F_new = D @ y_new - V_new
                    norm_new = float(np.abs(F_new).max())
                    if norm_new < (1 - 1e-4 * step) * norm or norm_new < 0.1 * tol:
                        break
                except TransversalityLost:
                    pass
            step *= 0.5
            if step < 1e-6:
                if norm < tol:
                    norm_new = norm
                    y_new, V_new, jac_new, F_new = y, V, jac, F
                    break
                raise NewtonDiverged(f"line search failed at residual {norm:.3e}")
        y, V, jac, F, norm = y_new, V_new, jac_new, F_new, norm_new
    else:
        if norm >= tol:
            raise NewtonDiverged(f"no convergence after {max_iter} iterations (residual {norm:.3e})")
    orbit = PeriodicOrbit(chart, s, y, math.nan, norm, it, jac)
    orbit.residual = orbit_residual(field, orbit, check_factor)
    return orbit


def orbit_residual(field, orbit: PeriodicOrbit, factor=4):
    """``max |y' - V(s, y)|`` on a grid ``factor`` times finer than the nodes,
    shifted so that no check point is a node."""
    L = orbit.chart.length
    m = factor * orbit.n_nodes
    s = (np.arange(m) + 0.5) * (L / m)
    y = orbit(s)
    dy = trig_derivative(orbit.y, L, s)
    return float(np.abs(dy - graph_velocity(field, orbit.chart, s, y)).max())


def floquet_exponents(field, orbit: PeriodicOrbit, steps_per_eps=20, periods=3):
    """Per-period Floquet exponents ``(lambda_plus, lambda_minus)``.

    The variational equation ``w' = A(s) w`` with ``A = dV/dy`` along the
    orbit is integrated with RK4 and a QR re-orthonormalization after each
    step; only log-norms are accumulated.  The last of ``periods`` periods
    is reported, the earlier ones let the frame align with the unstable
    direction.
    """
    L = orbit.chart.length
    eps = orbit.chart.eps
    n_steps = int(math.ceil(steps_per_eps * L / eps))
    h = L / n_steps
    s_nodes = np.arange(2 * n_steps + 1) * (h / 2)
    A = trig_interpolate(orbit.jac_blocks.reshape(orbit.n_nodes, 4), L, s_nodes).reshape(-1, 2, 2)
    A = A.tolist()
    q = [[1.0, 0.0], [0.0, 1.0]]
    acc = [0.0, 0.0]

    def mul(M, X):
        return [[M[0][0] * X[0][0] + M[0][1] * X[1][0], M[0][0] * X[0][1] + M[0][1] * X[1][1]],
                [M[1][0] * X[0][0] + M[1][1] * X[1][0], M[1][0] * X[0][1] + M[1][1] * X[1][1]]]

    def axpy(a, X, Y):
        return [[Y[0][0] + a * X[0][0], Y[0][1] + a * X[0][1]],
                [Y[1][0] + a * X[1][0], Y[1][1] + a * X[1][1]]]

    for p in range(periods):
        acc = [0.0, 0.0]
        for k in range(n_steps):
            A0, A1, A2 = A[2 * k], A[2 * k + 1], A[2 * k + 2]
            k1 = mul(A0, q)
            k2 = mul(A1, axpy(h / 2, k1, q))
            k3 = mul(A1, axpy(h / 2, k2, q))
            k4 = mul(A2, axpy(h, k3, q))
            Y = [[q[i][j] + h / 6 * (k1[i][j] + 2 * k2[i][j] + 2 * k3[i][j] + k4[i][j]) for j in range(2)]
                 for i in range(2)]
            # Gram-Schmidt on the columns
            a0, a1 = Y[0][0], Y[1][0]
            r11 = math.hypot(a0, a1)
            e0, e1 = a0 / r11, a1 / r11
            b0, b1 = Y[0][1], Y[1][1]
            r12 = e0 * b0 + e1 * b1
            b0, b1 = b0 - r12 * e0, b1 - r12 * e1
            r22 = math.hypot(b0, b1)
            q = [[e0, b0 / r22], [e1, b1 / r22]]
            acc[0] += math.log(r11)
            acc[1] += math.log(r22)
    lp, lm = acc
    orbit.lambda_plus, orbit.lambda_minus = lp, lm
    return lp, lm


def trace_of_jacobian_integral(orbit: PeriodicOrbit):
    """``int_0^l tr A ds``; equals ``lambda_plus + lambda_minus``."""
    tr = orbit.jac_blocks[:, 0, 0] + orbit.jac_blocks[:, 1, 1]
    return float(tr.mean() * orbit.chart.length)


def isotopy_certificate(orbit: PeriodicOrbit, field=None):
    """Confinement and graph certificate for a periodic orbit.

    A closed curve that is a graph ``s -> y(s)`` over the core with
    ``|y| < 1/10`` is a section of the tube, hence isotopic to the core.
    """
    if not np.all(np.isfinite(orbit.y)):
        raise NotAGraph("orbit samples are not finite")
    eps = orbit.chart.eps
    if field is not None:
        fine = np.linspace(0.0, orbit.chart.length, 4 * orbit.n_nodes, endpoint=False)
        c = tube_components(field, orbit.chart, fine, orbit(fine))
        if np.any(c[:, 0] <= 0):
            raise NotAGraph("B^s changes sign along the orbit")
    sup_y = orbit.sup_y
    return {
        "confined": bool(sup_y < WORKING_RADIUS),
        "graph_over_core": True,
        "s_winding": 1,
        "sup_y": sup_y,
        "C_measured": sup_y / (eps * math.log(1.0 / eps)) if eps < 1 else math.nan,
        "lambda_plus": orbit.lambda_plus,
        "lambda_minus": orbit.lambda_minus,
        "residual": orbit.residual,
    }


def write_certificate(path, cert):
    with open(path, "w") as fh:
        json.dump(cert, fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Tracing
# ---------------------------------------------------------------------------


def trace_field_line(field, x0, length, tol=1e-10, n_out=None, domain=None, min_field=1e-12):
    """Integrate ``dx/dt = B/|B|`` for arc length ``length``.

    ``domain`` is an optional function ``x -> bool``; leaving it raises
    :class:`LeftDomain`.  Returns the traced points as an open
    :class:`Polyline`.
    """
    def rhs(_, x):
        b = field(x[None, :])[0]
        nb = math.sqrt(float(b @ b))
        if nb < min_field:
            raise StepUnderflow(f"|B| = {nb:.2e} too small to follow the field line")
        return b / nb

    events = None
    if domain is not None:
        def leave(_, x):
            return 1.0 if domain(x) else -1.0
        leave.terminal = True
        events = [leave]
    n_out = n_out or 200
    t_eval = np.linspace(0.0, length, n_out)
    sol = solve_ivp(rhs, (0.0, length), np.asarray(x0, dtype=float), method="DOP853",
                    rtol=tol, atol=tol, t_eval=t_eval, events=events)
    if events is not None and len(sol.t_events[0]):
        raise LeftDomain(f"field line left the domain at t = {sol.t_events[0][0]:.4g}")
    if not sol.success:
        raise StepUnderflow(sol.message)
    return Polyline(sol.y.T, closed=False)


def trace_in_tube(field, chart, s0, y0, s1, tol=1e-11, s_eval=None, radius=WORKING_RADIUS):
    """Integrate ``dy/ds = V(s, y)`` from ``s0`` to ``s1``; raises
    :class:`NoReturn` if ``|y|`` reaches ``radius``."""
    def rhs(s, y):
        return graph_velocity(field, chart, np.array([s]), y[None, :])[0]

    def escape(_, y):
        return radius - math.hypot(y[0], y[1])
    escape.terminal = True
    sol = solve_ivp(rhs, (s0, s1), np.asarray(y0, dtype=float), method="DOP853",
                    rtol=tol, atol=tol * 1e-3, events=[escape], t_eval=s_eval)
    if len(sol.t_events[0]):
        raise NoReturn(f"left |y| < {radius} at s = {sol.t_events[0][0]:.4g}")
    if not sol.success:
        raise StepUnderflow(sol.message)
    return sol.t, sol.y.T


def poincare_map(field, chart, s0, y, tol=1e-11):
    """First return of the field line through ``(s0, y)`` to the disk
    ``{s = s0}`` after one turn around the core."""
    _, ys = trace_in_tube(field, chart, s0, y, s0 + chart.length, tol=tol)
    return ys[-1]
