"""Command-line driver and experiment pipelines.

Every subcommand reads an INI configuration, runs deterministically and
writes CSV/JSON files plus a ``manifest.json`` into the output directory.
The ``run_*`` functions are the programmatic entry points used by the
tests; ``main`` wraps them with argument parsing and exit codes
(0 success, 1 usage, 2 validation, 3 numerical failure).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .biot_savart import (
    EvaluationRegion,
    PolylineBundleField,
    SurfaceField,
    AsymptoticModel,
    field_distance,
)
from .curves import Polyline, linking_number, make_standard
from .current import IsoChart, SurfaceCurrent
from .dynamics import find_periodic_orbit, floquet_exponents, isotopy_certificate, trace_field_line
from .dynamics import tube_components
from .errors import ConvergenceGateFailed, KnotWireError, NumericalError, ValidationError, ValidationFailed
from .knots import alexander_polynomial, project_diagram
from .synth import cable_wire, connect_sum_chain, far_connect, integral_wire_collection, smooth_corners
from .tube import TubeChart

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    """Bad command line or an incomplete configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _parse_scalar(text):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _parse_list(text, conv=float):
    text = text.strip()
    if not text:
        return []
    return [conv(v) for v in text.split(",") if v.strip()]


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_CURVE_SECTIONS = ("core", "line", "wire")


@dataclass
class ExperimentConfig:
    """Typed view of an INI experiment file.

    Curve sections (``core``, ``line``, ``wire``) hold ``kind`` plus the
    parameters of :func:`knotwire.curves.make_standard`.
    """

    core: dict = field(default_factory=lambda: {"kind": "trefoil", "scale": 1.0})
    line: dict = field(default_factory=dict)
    wire: dict = field(default_factory=dict)
    F_cos: list = field(default_factory=lambda: [0.0, 0.0, 2.0])
    F_sin: list = field(default_factory=list)
    G_cos: list = field(default_factory=lambda: [1.0])
    G_sin: list = field(default_factory=list)
    eps: list = field(default_factory=lambda: [0.05])
    n: list = field(default_factory=lambda: [64])
    y_levels: list = field(default_factory=lambda: [0.01, 0.02, 0.04])
    n_modes: int = 256
    wire_modes: int = 0
    tol: float = 1e-9
    gate_rel: float = 0.05
    samples_s: int = 256
    deterministic: bool = True
    delta: float = 0.0
    delta3: float = 0.05
    R: float = 10.0
    lift: float = 0.15
    smoothing_radius: float = 1e-5
    loop_samples: int = 128
    samples_per_turn: int = 64
    step: str = "quintic"
    trace_source: str = "surface"
    trace_start: list = field(default_factory=lambda: [0.0, 0.02, 0.0])
    trace_length: float = 1.0
    out: str = ""

    _LAYOUT = {
        "current": ("F_cos", "F_sin", "G_cos", "G_sin"),
        "run": ("eps", "n", "y_levels", "n_modes", "wire_modes", "tol", "gate_rel",
                "samples_s", "deterministic"),
        "synth": ("delta", "delta3", "R", "lift", "smoothing_radius", "loop_samples",
                  "samples_per_turn", "step"),
        "trace": ("trace_source", "trace_start", "trace_length"),
        "output": ("out",),
    }

    @classmethod
    def from_string(cls, text):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise UsageError(f"cannot parse configuration: {exc}") from exc
        cfg = cls()
        defaults = cls()
        for sec in _CURVE_SECTIONS:
            if cp.has_section(sec):
                setattr(cfg, sec, {k: _parse_scalar(v) for k, v in cp.items(sec)})
        for sec, keys in cls._LAYOUT.items():
            if not cp.has_section(sec):
                continue
            for key, raw in cp.items(sec):
                if key not in keys:
                    raise UsageError(f"unknown key {key!r} in section [{sec}]")
                ref = getattr(defaults, key)
                if isinstance(ref, bool):
                    val = raw.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(ref, list):
                    conv = int if key == "n" else float
                    val = _parse_list(raw, conv)
                elif isinstance(ref, int):
                    val = int(raw)
                elif isinstance(ref, float):
                    val = float(raw)
                else:
                    val = raw.strip()
                setattr(cfg, key, val)
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                return cls.from_string(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read configuration {path!r}: {exc}") from exc

    def to_string(self):
        lines = []
        for sec in _CURVE_SECTIONS:
            spec = getattr(self, sec)
            if spec:
                lines.append(f"[{sec}]")
                lines += [f"{k} = {_fmt(v)}" for k, v in spec.items()]
                lines.append("")
        for sec, keys in self._LAYOUT.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {_fmt(getattr(self, k))}" for k in keys]
            lines.append("")
        return "\n".join(lines)

    def to_dict(self):
        return asdict(self)


def build_curve(spec):
    if not spec or "kind" not in spec:
        raise UsageError("curve section needs a 'kind'")
    params = {k: v for k, v in spec.items() if k != "kind"}
    return make_standard(spec["kind"], **params)


def build_current(cfg, chart):
    return SurfaceCurrent(chart, cfg.F_cos, cfg.F_sin or None, cfg.G_cos, cfg.G_sin or None)


# ---------------------------------------------------------------------------
# Deterministic output
# ---------------------------------------------------------------------------


def _num(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class OutputDir:
    """Collects files written by a run; writes are atomic."""

    def __init__(self, path):
        self.path = path
        self.files = {}
        if path:
            os.makedirs(path, exist_ok=True)

    def write(self, name, text):
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        if not self.path:
            return
        target = os.path.join(self.path, name)
        tmp = target + ".tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)

    def csv(self, name, header, rows):
        self.write(name, _csv_text(header, rows))

    def json(self, name, obj):
        self.write(name, json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")

    def polyline(self, name, poly: Polyline):
        s = poly.cumulative_length()
        pts = poly.points
        self.csv(name, ["s", "x", "y", "z"], [(s[k], *pts[k]) for k in range(len(pts))])

    def manifest(self, command, cfg, constants):
        self.json("manifest.json", {
            "command": command,
            "version": __version__,
            "config": cfg.to_string(),
            "constants": constants,
            "files": dict(sorted(self.files.items())),
        })


def _map(fn, args, jobs):
    if jobs and jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, args))
    return [fn(a) for a in args]


def _elog(eps):
    return eps * math.log(1.0 / eps)


# ---------------------------------------------------------------------------
# verify-asymptotics
# ---------------------------------------------------------------------------


def _asymptotics_cell(args):
    cfg_text, eps = args
    cfg = ExperimentConfig.from_string(cfg_text)
    chart = TubeChart(build_curve(cfg.core), eps)
    cur = build_current(cfg, chart)
    field_J = SurfaceField(cur)
    model = AsymptoticModel(cur)
    ns = cfg.samples_s
    s = np.arange(ns) * (chart.length / ns)
    b0 = tube_components(field_J, chart, s, np.zeros((ns, 2)))
    axial = float(np.max(np.abs(b0[:, 0] - cur.G(s))))
    rows = []
    phases = np.arange(8) * (math.pi / 4)
    s_sub = s[:: max(1, ns // 64)]
    for r in cfg.y_levels:
        S = np.repeat(s_sub, len(phases))
        P = np.tile(phases, len(s_sub))
        y = np.stack([r * np.cos(P), r * np.sin(P)], axis=-1)
        b = tube_components(field_J, chart, S, y)
        m = model.components(S, y)
        res = float(np.max(np.abs(eps * (b[:, 1:] - m[:, 1:]))))
        rows.append((r, res, res / (_elog(eps) + r * r)))
    return {"eps": eps, "axial": axial, "axial_ratio": axial / _elog(eps), "transverse": rows}


def run_verify_asymptotics(cfg: ExperimentConfig, out=None, jobs=1):
    """Residuals between the surface-current field and its leading-order
    model: ``R(eps) = max_s |B^s - G|`` on the core and the transverse
    residual ``eps (B^y - model)`` on circles ``|y| = r``."""
    if not cfg.eps:
        raise UsageError("eps list is empty")
    if not cfg.y_levels:
        raise UsageError("y_levels list is empty")
    # validate the current once up front (zero of G and the like)
    build_current(cfg, TubeChart(build_curve(cfg.core), min(cfg.eps)))
    cells = _map(_asymptotics_cell, [(cfg.to_string(), e) for e in cfg.eps], jobs)
    od = OutputDir(out)
    od.csv("asymptotics_axial.csv", ["eps", "R", "R_over_elog"],
           [(c["eps"], c["axial"], c["axial_ratio"]) for c in cells])
    od.csv("asymptotics_transverse.csv", ["eps", "r", "residual", "C"],
           [(c["eps"], *row) for c in cells for row in c["transverse"]])
    ratios = np.array([c["axial_ratio"] for c in cells])
    Cs = np.array([row[2] for c in cells for row in c["transverse"]])
    report = {
        "axial_ratios": ratios,
        "axial_spread": float(ratios.max() / ratios.min()) if len(ratios) > 1 else 1.0,
        "transverse_C": Cs,
        "transverse_spread": float(Cs.max() / Cs.min()) if len(Cs) > 1 else 1.0,
    }
    if len(cells) > 1:
        e = np.log([c["eps"] for c in cells])
        report["axial_exponent"] = float(np.polyfit(e, np.log([c["axial"] for c in cells]), 1)[0])
    report["axial_verdict"] = bool(report["axial_spread"] <= 2.0)
    report["transverse_verdict"] = bool(report["transverse_spread"] <= 2.0)
    od.json("asymptotics_report.json", report)
    od.manifest("verify-asymptotics", cfg, {"samples_s": cfg.samples_s, "phases": 8})
    report["cells"] = cells
    return report


# ---------------------------------------------------------------------------
# Orbits
# ---------------------------------------------------------------------------


def line_orbit(cfg, chart, field_J, with_exponents=True):
    """Periodic orbit of the surface-current field and its certificate."""
    orbit = find_periodic_orbit(field_J, chart, n_modes=cfg.n_modes, tol=cfg.tol)
    if with_exponents:
        floquet_exponents(field_J, orbit)
    return orbit, isotopy_certificate(orbit, field_J)


def _orbit_rows(orbit, n=None):
    n = n or max(256, orbit.n_nodes)
    s = np.arange(n) * (orbit.chart.length / n)
    y = orbit(s)
    x = orbit.chart.embed(s, y, check=False)
    return [(s[k], y[k, 0], y[k, 1], *x[k]) for k in range(n)]


ORBIT_HEADER = ["s", "y1", "y2", "x", "y", "z"]


def _resample(orbit, n):
    """Nodal values of ``orbit`` on ``n`` equispaced nodes (Newton start)."""
    return orbit(np.arange(n) * (orbit.chart.length / n))


def _polynomial(poly_or_curve, candidates=6):
    d = project_diagram(poly_or_curve, candidates=candidates)
    return alexander_polynomial(d), d.n_crossings


# ---------------------------------------------------------------------------
# theorem1
# ---------------------------------------------------------------------------


def run_theorem1(cfg: ExperimentConfig, out=None, jobs=1):
    """Wire knotted like ``[wire]`` whose field has a periodic line knotted
    like ``[line]``."""
    if not cfg.line or not cfg.wire:
        raise UsageError("theorem1 needs [line] and [wire] curve sections")
    if not cfg.eps or not cfg.n:
        raise UsageError("theorem1 needs eps and n")
    t0 = time.time()
    eps, n = float(cfg.eps[0]), int(cfg.n[0])
    line, wire_knot = build_curve(cfg.line), build_curve(cfg.wire)
    chart = TubeChart(line, eps)
    cur = build_current(cfg, chart)
    iso = IsoChart(cur)
    field_J = SurfaceField(cur)
    od = OutputDir(out)
    stages = {}

    # Step 1: hyperbolic periodic line of the surface-current field
    orbit_J, cert_J = line_orbit(cfg, chart, field_J)
    stages["line_orbit"] = cert_J
    od.csv("orbit_surface.csv", ORBIT_HEADER, _orbit_rows(orbit_J))

    # Step 2: integral-curve collection and the convergence gate
    wc = integral_wire_collection(cur, n, iso=iso, samples=cfg.loop_samples)
    K = EvaluationRegion.tube_annulus(chart)
    E = field_distance(wc.field(), field_J, K, 0)
    scale = float(np.max(np.linalg.norm(field_J(K.points), axis=1)))
    stages["collection"] = {"n": n, "E_n": E, "relative": E / scale, "gate": cfg.gate_rel}
    if E / scale > cfg.gate_rel:
        raise ConvergenceGateFailed(
            f"stage 'collection': field distance on K is {E / scale:.3g} of max|B_J|, above the "
            f"weak-convergence gate {cfg.gate_rel} (increase n)")

    # Step 3: band sums into one unknotted wire
    gamma, chain_info = connect_sum_chain(wc, delta=cfg.delta or None, lift=cfg.lift)
    p_chain, x_chain = _polynomial(gamma)
    stages["chain"] = {**chain_info, "alexander": str(p_chain), "crossings": x_chain}

    # Step 4: connected sum with the far knot, then rounding
    gamma1, target, far_info = far_connect(gamma, wire_knot, cfg.R, cfg.delta3,
                                           region_points=K.points)
    rounded = smooth_corners(gamma1, cfg.smoothing_radius)
    gamma2 = rounded.sample(len(gamma1.points))
    p_final, x_final = _polynomial(gamma2)
    p_target, _ = _polynomial(wire_knot)
    stages["far_connect"] = far_info
    stages["knots"] = {"final": str(p_final), "target": str(p_target), "crossings": x_final,
                       "match": p_final == p_target}

    # periodic line of the final wire's field
    field_w = PolylineBundleField([gamma2], [wc.weight])
    modes = cfg.wire_modes or max(cfg.n_modes, 8 * n)
    orbit_w = find_periodic_orbit(field_w, chart, n_modes=modes, tol=cfg.tol, y0=_resample(orbit_J, modes))
    cert_w = isotopy_certificate(orbit_w, field_w)
    stages["wire_orbit"] = cert_w
    od.polyline("wire_final.csv", gamma2)
    od.polyline("wire_chain.csv", gamma)
    od.csv("orbit_wire.csv", ORBIT_HEADER, _orbit_rows(orbit_w))
    od.json("certificates.json", {"surface": cert_J, "wire": cert_w})
    od.json("knots.json", stages["knots"])
    od.json("stages.json", {k: v for k, v in stages.items()})
    od.manifest("theorem1", cfg, {"eps": eps, "n": n, "delta": chain_info["delta"],
                                  "delta3": cfg.delta3, "R": cfg.R, "lift": cfg.lift,
                                  "smoothing_radius": cfg.smoothing_radius, "modes_wire": modes})
    stages["certified"] = bool(cert_w["confined"] and cert_w["s_winding"] == 1
                               and cert_w["residual"] <= cfg.tol and stages["knots"]["match"])
    stages["runtime"] = time.time() - t0
    stages["orbit_surface"] = orbit_J
    stages["orbit_wire"] = orbit_w
    stages["wire"] = gamma2
    return stages


# ---------------------------------------------------------------------------
# theorem2
# ---------------------------------------------------------------------------


def hausdorff_to_core(poly: Polyline, chart: TubeChart, n_core=4096):
    """Hausdorff distance between a closed polyline and the core curve."""
    _, y = chart.project(poly.points, check=False)
    one = float(np.max(np.hypot(y[:, 0], y[:, 1]))) * chart.eps
    core = chart.core.eval(np.arange(n_core) * (chart.length / n_core))
    a, b = poly.points, np.roll(poly.points, -1, axis=0)
    tree = cKDTree(0.5 * (a + b))
    _, idx = tree.query(core, k=min(8, len(a)))
    ab = b[idx] - a[idx]
    t = np.clip(np.einsum("nkj,nkj->nk", core[:, None] - a[idx], ab) / np.einsum("nkj,nkj->nk", ab, ab), 0, 1)
    d = np.linalg.norm(a[idx] + t[..., None] * ab - core[:, None], axis=-1).min(axis=1)
    return max(one, float(d.max()))


def run_theorem2(cfg: ExperimentConfig, out=None, jobs=1):
    """Cable wires ``Gamma_n`` on the tube and the periodic line of their field."""
    if not cfg.eps or not cfg.n:
        raise UsageError("theorem2 needs eps and n")
    t0 = time.time()
    eps = float(cfg.eps[0])
    core = build_curve(cfg.core)
    chart = TubeChart(core, eps)
    cur = build_current(cfg, chart)
    iso = IsoChart(cur)
    od = OutputDir(out)
    rows, cables = [], {}
    for n in cfg.n:
        cw = cable_wire(cur, int(n), iso=iso, samples_per_turn=cfg.samples_per_turn, step=cfg.step)
        cross = cw.section_crossings()
        target = np.sort(iso.sample_alphas(int(n)))
        cross_err = float(np.max(np.abs((cross - target + 0.5) % 1.0 - 0.5)))
        lk = linking_number(cw.polyline, core)
        haus = hausdorff_to_core(cw.polyline, chart)
        rows.append({"n": int(n), "alpha_winding": cw.windings()[0], "sigma_winding": cw.windings()[1],
                     "crossing_error": cross_err, "tangent_defect": cw.tangent_defect(),
                     "hausdorff": haus, "linking": lk.value, "linking_raw": lk.raw,
                     "lk_minus_n": lk.value - int(n)})
        cables[int(n)] = cw
        od.polyline(f"cable_{int(n)}.csv", cw.polyline)
    keys = list(rows[0])
    od.csv("cables.csv", keys, [[r[k] for k in keys] for r in rows])

    field_J = SurfaceField(cur)
    orbit_J, cert_J = line_orbit(cfg, chart, field_J, with_exponents=False)
    n_max = max(cables)
    cw = cables[n_max]
    field_c = cw.field()
    modes = cfg.wire_modes or max(cfg.n_modes, 8 * n_max)
    orbit_c = find_periodic_orbit(field_c, chart, n_modes=modes, tol=cfg.tol, y0=_resample(orbit_J, modes))
    cert_c = isotopy_certificate(orbit_c, field_c)
    s = np.arange(4 * modes) * (chart.length / (4 * modes))
    sep = float(np.max(np.linalg.norm(orbit_c(s) - orbit_J(s), axis=-1)))
    summary = {
        "rows": rows,
        "surface_orbit": cert_J,
        "cable_orbit": cert_c,
        "orbit_separation": sep,
        "hausdorff_ok": all(r["hausdorff"] <= eps * (1 + 1e-9) for r in rows),
        "lk_minus_n_constant": len({r["lk_minus_n"] for r in rows}) == 1,
        "within_two_sup": bool(cert_c["sup_y"] <= 2 * cert_J["sup_y"]),
    }
    od.csv("orbit_cable.csv", ORBIT_HEADER, _orbit_rows(orbit_c))
    od.csv("orbit_surface.csv", ORBIT_HEADER, _orbit_rows(orbit_J))
    od.json("theorem2.json", summary)
    od.manifest("theorem2", cfg, {"eps": eps, "n": list(cfg.n), "step": cfg.step,
                                  "samples_per_turn": cfg.samples_per_turn, "modes_cable": modes})
    summary["runtime"] = time.time() - t0
    summary["orbit_surface"] = orbit_J
    summary["orbit_cable"] = orbit_c
    summary["cables"] = cables
    return summary


# ---------------------------------------------------------------------------
# sweep-convergence
# ---------------------------------------------------------------------------


def _sweep_cell(args):
    cfg_text, n = args
    cfg = ExperimentConfig.from_string(cfg_text)
    chart = TubeChart(build_curve(cfg.core), float(cfg.eps[0]))
    cur = build_current(cfg, chart)
    iso = IsoChart(cur)
    field_J = SurfaceField(cur)
    K = EvaluationRegion.tube_annulus(chart)
    wc = integral_wire_collection(cur, n, iso=iso, samples=cfg.loop_samples)
    cw = cable_wire(cur, n, iso=iso, samples_per_turn=cfg.samples_per_turn, check=False, step=cfg.step)
    out = {"n": n}
    for name, fld in (("collection", wc.field()), ("cable", cw.field())):
        out[f"{name}_E0"] = field_distance(fld, field_J, K, 0)
        out[f"{name}_E1"] = field_distance(fld, field_J, K, 1)
    return out


def _decreasing(values):
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:])) and v[-1] < v[0] / 2


def run_sweep_convergence(cfg: ExperimentConfig, out=None, jobs=1):
    """``E_n`` table for the wire collection and the cable over ``n``."""
    if not cfg.n:
        raise UsageError("n list is empty")
    if not cfg.eps:
        raise UsageError("eps list is empty")
    ns = sorted(int(v) for v in cfg.n)
    rows = _map(_sweep_cell, [(cfg.to_string(), n) for n in ns], jobs)
    keys = ["n", "collection_E0", "collection_E1", "cable_E0", "cable_E1"]
    od = OutputDir(out)
    od.csv("convergence.csv", keys, [[r[k] for k in keys] for r in rows])
    report = {"rows": rows}
    if len(rows) > 1:
        report["verdict"] = {k: _decreasing(r[k] for r in rows) for k in keys[1:]}
    od.json("convergence.json", report)
    od.manifest("sweep-convergence", cfg, {"eps": cfg.eps[0], "annulus": [0.02, 0.05],
                                           "loop_samples": cfg.loop_samples})
    return report


# ---------------------------------------------------------------------------
# trace, knot-id, export-tube
# ---------------------------------------------------------------------------


def run_trace(cfg: ExperimentConfig, out=None, jobs=1):
    """Field line from a start point given in tube coordinates ``(s, y1, y2)``."""
    eps = float(cfg.eps[0])
    chart = TubeChart(build_curve(cfg.core), eps)
    cur = build_current(cfg, chart)
    if cfg.trace_source == "surface":
        fld = SurfaceField(cur)
    elif cfg.trace_source == "model":
        fld = AsymptoticModel(cur)
    else:
        raise ValidationFailed(f"unknown trace source {cfg.trace_source!r}")
    if len(cfg.trace_start) != 3:
        raise UsageError("trace_start needs s, y1, y2")
    s0, y1, y2 = cfg.trace_start
    x0 = chart.embed(np.array(s0), np.array([y1, y2]))
    line = trace_field_line(fld, x0, cfg.trace_length, n_out=400)
    s, y = chart.project(line.points)
    od = OutputDir(out)
    od.csv("trace.csv", ["t", "x", "y", "z", "s", "y1", "y2"],
           [(k * cfg.trace_length / (len(s) - 1), *line.points[k], s[k], *y[k]) for k in range(len(s))])
    od.manifest("trace", cfg, {"n_out": 400, "source": cfg.trace_source})
    return {"points": line.points, "s": s, "y": y}


def run_knot_id(cfg: ExperimentConfig, out=None, jobs=1):
    curve = build_curve(cfg.core)
    d = project_diagram(curve, candidates=6)
    p = alexander_polynomial(d)
    od = OutputDir(out)
    od.write("diagram.json", d.to_json() + "\n")
    od.json("alexander.json", p.to_dict())
    od.manifest("knot-id", cfg, {"candidates": 6})
    return {"diagram": d, "alexander": p}


def run_export_tube(cfg: ExperimentConfig, out=None, jobs=1):
    eps = float(cfg.eps[0])
    chart = TubeChart(build_curve(cfg.core), eps)
    cur = build_current(cfg, chart)
    iso = IsoChart(cur)
    od = OutputDir(out)
    S, TH, P = chart.surface_mesh()
    od.csv("tube_mesh.csv", ["s", "theta", "x", "y", "z"],
           zip(S.ravel(), TH.ravel(), *P.reshape(-1, 3).T))
    a = iso.alpha
    od.csv("iso_chart.csv", ["alpha", "T", "Ttilde", "B", "rho_cdf"],
           zip(a, iso.T, iso.Ttilde, iso.B, iso.rho_cdf))
    od.manifest("export-tube", cfg, {"n_alpha": len(a), "n_theta": iso.n_theta, "c0": iso.c0})
    return {"c0": iso.c0}


COMMANDS = {
    "verify-asymptotics": run_verify_asymptotics,
    "theorem1": run_theorem1,
    "theorem2": run_theorem2,
    "sweep-convergence": run_sweep_convergence,
    "trace": run_trace,
    "knot-id": run_knot_id,
    "export-tube": run_export_tube,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _error(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def main(argv=None):
    parser = _Parser(prog="knotwire", description="Knotted wires and their magnetic lines.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--jobs", type=int, default=1)
    try:
        args = parser.parse_args(argv)
        cfg = ExperimentConfig.from_file(args.config)
        out = args.out or cfg.out or None
        COMMANDS[args.command](cfg, out=out, jobs=args.jobs)
    except UsageError as exc:
        return _error(EXIT_USAGE, "usage", exc)
    except ValidationError as exc:
        return _error(EXIT_VALIDATION, "validation", exc)
    except (NumericalError, ArithmeticError) as exc:
        return _error(EXIT_NUMERICAL, "numerical", exc)
    except KnotWireError as exc:
        return _error(EXIT_NUMERICAL, "numerical", exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
