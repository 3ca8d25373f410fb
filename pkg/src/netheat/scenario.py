"""Scenario files (JSON), command dispatch and deterministic CSV/JSON output."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import analysis as an
from .analysis import CONVENTIONS
from .coefficients import (
    BoundsCertificate,
    CoefficientError,
    CoefficientSet,
    certify_bounds,
    classify_regime,
    profile_from_dict,
)
from .fem import AssembledSystem, Mesh, build_mesh
from .graph import GraphError, MetricGraph, build_graph
from .integrator import SolverConfig, Trajectory, convergence_study, simulate
from .oracle import refinement_study
from .spectral import SpectralTrack, generalized_eigs, track_spectrum

COMMANDS = ("validate", "spectrum", "simulate", "analyze", "convergence")


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _fmt(x) -> str:
    return format(float(x), ".17g")


# -- time functions for separable forcing -------------------------------------------------

@dataclass(frozen=True)
class TimeFunction:
    kind: str
    a: float = 1.0
    k: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.a + 0.0 * t
        if self.kind == "exp":
            return self.a * np.exp(-self.k * t)
        return self.a * np.sin(self.omega * t + self.phase)

    def integral(self, t_a: float, t_b: float) -> float:
        if self.kind == "constant":
            return self.a * (t_b - t_a)
        if self.kind == "exp":
            if self.k == 0:
                return self.a * (t_b - t_a)
            hi = 0.0 if math.isinf(t_b) else math.exp(-self.k * t_b)
            return self.a * (math.exp(-self.k * t_a) - hi) / self.k
        if math.isinf(t_b):
            raise ScenarioError("forcing", "sin forcing has no integral over [0, inf)")
        w, p = self.omega, self.phase
        if w == 0:
            return self.a * math.sin(p) * (t_b - t_a)
        return self.a * (math.cos(w * t_a + p) - math.cos(w * t_b + p)) / w


_TIME_FIELDS = {"constant": {"value"}, "exp": {"a", "k"}, "sin": {"a", "omega", "phase"}}


def _time_function(d: dict, path: str) -> TimeFunction:
    _require_dict(d, path)
    kind = d.get("kind")
    if kind not in _TIME_FIELDS:
        raise ScenarioError(f"{path}.kind", f"expected one of {sorted(_TIME_FIELDS)}")
    _no_unknown(d, _TIME_FIELDS[kind] | {"kind"}, path)
    if kind == "constant":
        return TimeFunction("constant", a=float(d.get("value", 1.0)))
    if kind == "exp":
        return TimeFunction("exp", a=float(d.get("a", 1.0)), k=float(d.get("k", 1.0)))
    return TimeFunction("sin", a=float(d.get("a", 1.0)), omega=float(d.get("omega", 1.0)),
                        phase=float(d.get("phase", 0.0)))


@dataclass(frozen=True)
class ForcingTerm:
    edge: int  # 1-based
    poly: tuple[float, ...]  # coefficients of 1, x, x^2, ...
    time: TimeFunction


@dataclass(frozen=True)
class Forcing:
    """Sum of separable terms ``g(x) psi(t)`` on individual edges."""

    m: int
    terms: tuple[ForcingTerm, ...] = ()

    def __bool__(self):
        return bool(self.terms)

    def callables(self):
        if not self.terms:
            return None
        per_edge: list[list[ForcingTerm]] = [[] for _ in range(self.m)]
        for term in self.terms:
            per_edge[term.edge - 1].append(term)

        def make(ts):
            if not ts:
                return None

            def f(t, x):
                return sum(np.polynomial.polynomial.polyval(x, tm.poly) * tm.time(t) for tm in ts)
            return f
        return [make(ts) for ts in per_edge]

    def mass(self, t) -> float:
        """``<F(t), e1>_H``."""
        total = sum(_poly_integral(tm.poly) * float(tm.time(t)) for tm in self.terms)
        return total / math.sqrt(self.m)

    def mass_integral(self, t_a: float, t_b: float) -> float:
        return sum(_poly_integral(tm.poly) * tm.time.integral(t_a, t_b) for tm in self.terms) / math.sqrt(self.m)

    def norms(self, times) -> np.ndarray:
        """``|F(t)|_H`` at each time, exact for the polynomial profiles."""
        times = np.asarray(times, dtype=float)
        if not self.terms:
            return np.zeros_like(times)
        deg = max(len(tm.poly) for tm in self.terms)
        xg, wg = np.polynomial.legendre.leggauss(deg + 1)
        xg, wg = 0.5 * (xg + 1.0), 0.5 * wg
        out = np.zeros_like(times)
        for j in range(1, self.m + 1):
            ts = [tm for tm in self.terms if tm.edge == j]
            if not ts:
                continue
            vals = sum(np.outer(tm.time(times), np.polynomial.polynomial.polyval(xg, tm.poly)) for tm in ts)
            out += (vals**2) @ wg
        return np.sqrt(out)


def _poly_integral(poly) -> float:
    return float(sum(c / (i + 1) for i, c in enumerate(poly)))


# -- schema helpers --------------------------------------------------------------------------

def _require_dict(d, path):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")


def _no_unknown(d: dict, allowed: set, path: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ScenarioError(f"{path}.{extra[0]}", "unknown field")


def _number(d: dict, key: str, path: str, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{path}.{key}", "expected a number")
    if kind is int and int(v) != v:
        raise ScenarioError(f"{path}.{key}", "expected an integer")
    return kind(v)


def _bool(d: dict, key: str, path: str, default: bool) -> bool:
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}", "expected true or false")
    return v


DEFAULT_SOLVER = {"N": 31, "dt": 0.01, "theta": 1.0, "t_end": 1.0, "lumped": False, "linear_tol": 1e-12}
DEFAULT_ANALYSIS = {
    "spectral_times": {"start": 0.0, "stop": 1.0, "num": 11},
    "k": 4,
    "window": None,
    "extend_to_limit": True,
    "ptol": 0.0,
    "bound_convention": "divide",
    "output_stride": 1,
    "family": None,
    "family_length": None,
    "refinement_Ns": [15, 31, 63],
    "refinement_index": 2,
    "convergence_dts": None,
}


@dataclass
class Scenario:
    graph: MetricGraph
    coeffs: CoefficientSet
    epsilon: float
    initial: dict
    forcing: Forcing
    solver: dict
    analysis: dict
    source: dict = field(repr=False, default_factory=dict)

    @property
    def config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(dt=s["dt"], theta=s["theta"], t_end=s["t_end"], linear_tol=s["linear_tol"],
                            lumped=s["lumped"])

    @property
    def mesh(self) -> Mesh:
        return build_mesh(self.graph, self.solver["N"])

    def system(self) -> AssembledSystem:
        return AssembledSystem(self.mesh, self.coeffs, lumped=self.solver["lumped"])

    def certificate(self) -> BoundsCertificate:
        return certify_bounds(self.coeffs, self.epsilon, self.solver["t_end"])

    def spectral_times(self) -> np.ndarray:
        st = self.analysis["spectral_times"]
        if isinstance(st, dict):
            return np.linspace(st["start"], st["stop"], st["num"])
        return np.asarray(st, dtype=float)

    def initial_state(self, system: AssembledSystem | None = None) -> np.ndarray:
        system = system or self.system()
        return build_initial(self.initial, system)


def _parse_graph(d, path="graph") -> MetricGraph:
    _require_dict(d, path)
    _no_unknown(d, {"n", "edges", "strict"}, path)
    edges = d.get("edges")
    if not isinstance(edges, list) or not edges:
        raise ScenarioError(f"{path}.edges", "expected a nonempty list of [tail, head] pairs")
    for i, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise ScenarioError(f"{path}.edges[{i}]", "expected [tail, head] integer pair")
    n = d.get("n")
    if n is not None and (not isinstance(n, int) or isinstance(n, bool)):
        raise ScenarioError(f"{path}.n", "expected an integer")
    try:
        return build_graph(edges, strict=_bool(d, "strict", path, False), n=n)
    except GraphError as exc:
        raise ScenarioError(path, str(exc)) from None


def _parse_coefficients(d, m: int, path="coefficients"):
    _require_dict(d, path)
    _no_unknown(d, {"epsilon", "edges"}, path)
    eps = _number(d, "epsilon", path, default=0.1)
    edges = d.get("edges")
    if not isinstance(edges, list):
        raise ScenarioError(f"{path}.edges", "expected a list with one entry per edge")
    if len(edges) != m:
        raise ScenarioError(f"{path}.length", f"graph has {m} edges but {len(edges)} coefficient entries given")
    mu, c = [], []
    for j, e in enumerate(edges):
        p = f"{path}.edges[{j}]"
        _require_dict(e, p)
        _no_unknown(e, {"mu", "c"}, p)
        for key, out in (("mu", mu), ("c", c)):
            if key not in e:
                raise ScenarioError(f"{p}.{key}", "required field missing")
            _require_dict(e[key], f"{p}.{key}")
            try:
                out.append(profile_from_dict(e[key]))
            except CoefficientError as exc:
                raise ScenarioError(f"{p}.{key}", str(exc)) from None
    return CoefficientSet(tuple(mu), tuple(c)), eps


_INITIAL_FIELDS = {
    "constant": {"value"},
    "eigenmode": {"k"},
    "bump": {"edge", "center", "width", "height"},
    "polynomial": {"edges"},
    "samples": {"edges"},
}


def _parse_initial(d, m: int, path="initial") -> dict:
    _require_dict(d, path)
    kind = d.get("kind")
    if kind not in _INITIAL_FIELDS:
        raise ScenarioError(f"{path}.kind", f"expected one of {sorted(_INITIAL_FIELDS)}")
    _no_unknown(d, _INITIAL_FIELDS[kind] | {"kind", "offset", "scale"}, path)
    out = {"kind": kind, "offset": _number(d, "offset", path, 0.0), "scale": _number(d, "scale", path, 1.0)}
    if kind == "constant":
        out["value"] = _number(d, "value", path, 1.0)
    elif kind == "eigenmode":
        out["k"] = _number(d, "k", path, kind=int)
        if out["k"] < 1:
            raise ScenarioError(f"{path}.k", "eigenmode index starts at 1")
    elif kind == "bump":
        out["edge"] = _number(d, "edge", path, kind=int)
        if not 1 <= out["edge"] <= m:
            raise ScenarioError(f"{path}.edge", f"edge must lie in 1..{m}")
        out["center"] = _number(d, "center", path, 0.5)
        out["width"] = _number(d, "width", path, 0.25)
        out["height"] = _number(d, "height", path, 1.0)
        if not 0 < out["width"] <= min(out["center"], 1 - out["center"]):
            raise ScenarioError(path, "initial not in V: bump must vanish at both edge ends")
    else:
        edges = d.get("edges")
        if not isinstance(edges, list) or len(edges) != m:
            raise ScenarioError(f"{path}.edges", f"expected {m} per-edge lists")
        for j, row in enumerate(edges):
            if not isinstance(row, list) or not row or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in row):
                raise ScenarioError(f"{path}.edges[{j}]", "expected a nonempty list of numbers")
        out["edges"] = [[float(v) for v in row] for row in edges]
    return out


def _parse_forcing(d, m: int, path="forcing") -> Forcing:
    if d is None or d == "none":
        return Forcing(m)
    _require_dict(d, path)
    _no_unknown(d, {"terms"}, path)
    terms = []
    for i, t in enumerate(d.get("terms", [])):
        p = f"{path}.terms[{i}]"
        _require_dict(t, p)
        _no_unknown(t, {"edge", "poly", "time"}, p)
        edge = _number(t, "edge", p, kind=int)
        if not 1 <= edge <= m:
            raise ScenarioError(f"{p}.edge", f"edge must lie in 1..{m}")
        poly = t.get("poly")
        if not isinstance(poly, list) or not poly:
            raise ScenarioError(f"{p}.poly", "expected polynomial coefficients [c0, c1, ...]")
        tf = _time_function(t.get("time", {"kind": "constant", "value": 1.0}), f"{p}.time")
        terms.append(ForcingTerm(edge, tuple(float(c) for c in poly), tf))
    return Forcing(m, tuple(terms))


def _parse_solver(d, path="solver") -> dict:
    d = {} if d is None else d
    _require_dict(d, path)
    _no_unknown(d, set(DEFAULT_SOLVER), path)
    out = {
        "N": _number(d, "N", path, DEFAULT_SOLVER["N"], kind=int),
        "dt": _number(d, "dt", path, DEFAULT_SOLVER["dt"]),
        "theta": _number(d, "theta", path, DEFAULT_SOLVER["theta"]),
        "t_end": _number(d, "t_end", path, DEFAULT_SOLVER["t_end"]),
        "lumped": _bool(d, "lumped", path, DEFAULT_SOLVER["lumped"]),
        "linear_tol": _number(d, "linear_tol", path, DEFAULT_SOLVER["linear_tol"]),
    }
    if out["N"] < 1:
        raise ScenarioError(f"{path}.N", "need at least one interior node per edge")
    try:
        SolverConfig(dt=out["dt"], theta=out["theta"], t_end=out["t_end"])
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None
    return out


def _parse_analysis(d, path="analysis") -> dict:
    d = {} if d is None else d
    _require_dict(d, path)
    _no_unknown(d, set(DEFAULT_ANALYSIS), path)
    out = {**DEFAULT_ANALYSIS, **d}
    st = out["spectral_times"]
    if isinstance(st, dict):
        _no_unknown(st, {"start", "stop", "num"}, f"{path}.spectral_times")
        out["spectral_times"] = {
            "start": _number(st, "start", f"{path}.spectral_times", 0.0),
            "stop": _number(st, "stop", f"{path}.spectral_times", 1.0),
            "num": _number(st, "num", f"{path}.spectral_times", 11, kind=int),
        }
    elif not isinstance(st, list) or not st:
        raise ScenarioError(f"{path}.spectral_times", "expected {start, stop, num} or a list of times")
    out["k"] = _number(out, "k", path, kind=int)
    if out["k"] < 2:
        raise ScenarioError(f"{path}.k", "need k >= 2")
    if out["window"] is not None and (not isinstance(out["window"], list) or len(out["window"]) != 2):
        raise ScenarioError(f"{path}.window", "expected [t_a, t_b] or null")
    if out["bound_convention"] not in CONVENTIONS:
        raise ScenarioError(f"{path}.bound_convention", "expected 'divide' or 'multiply'")
    if out["family"] not in (None, "interval", "cycle"):
        raise ScenarioError(f"{path}.family", "expected 'interval', 'cycle' or null")
    out["output_stride"] = _number(out, "output_stride", path, kind=int)
    return out


_TOP = {"graph", "coefficients", "initial", "forcing", "solver", "analysis"}


def scenario_from_dict(data: dict) -> Scenario:
    _require_dict(data, "scenario")
    _no_unknown(data, _TOP, "scenario")
    for key in ("graph", "coefficients", "initial"):
        if key not in data:
            raise ScenarioError(key, "required section missing")
    g = _parse_graph(data["graph"])
    coeffs, eps = _parse_coefficients(data["coefficients"], g.m)
    sc = Scenario(
        graph=g,
        coeffs=coeffs,
        epsilon=eps,
        initial=_parse_initial(data["initial"], g.m),
        forcing=_parse_forcing(data.get("forcing", "none"), g.m),
        solver=_parse_solver(data.get("solver")),
        analysis=_parse_analysis(data.get("analysis")),
        source=data,
    )
    try:
        sc.certificate()
    except CoefficientError as exc:
        raise ScenarioError("coefficients", f"bounds certificate failed: {exc}") from None
    if sc.initial["kind"] in ("polynomial", "samples"):
        try:
            sc.initial_state()
        except GraphError:
            raise ScenarioError("initial", "initial not in V: values disagree at a shared vertex") from None
    return sc


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from None
    return scenario_from_dict(data)


def build_initial(init: dict, system: AssembledSystem) -> np.ndarray:
    mesh = system.mesh
    kind = init["kind"]
    if kind == "constant":
        u = np.full(mesh.total_dofs, init["value"])
    elif kind == "eigenmode":
        k = init["k"]
        u = generalized_eigs(system.K(0.0), system.M, k).eigenvectors[:, k - 1].copy()
    elif kind == "bump":
        c, w, hgt = init["center"], init["width"], init["height"]

        def bump(x):
            r = np.abs(x - c) / w
            return np.where(r < 1, hgt * np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 2, 0.0)

        funcs = [bump if j == init["edge"] - 1 else (lambda x: 0.0 * x) for j in range(mesh.graph.m)]
        u = mesh.interpolate(funcs)
    elif kind == "polynomial":
        funcs = [lambda x, p=p: np.polynomial.polynomial.polyval(x, p) for p in init["edges"]]
        u = mesh.interpolate(funcs)
    else:
        rows = init["edges"]
        npts = mesh.nodes_per_edge + 2
        for j, row in enumerate(rows):
            if len(row) != npts:
                raise ScenarioError(f"initial.edges[{j}]", f"expected {npts} node samples for N={npts - 2}")
        funcs = [lambda x, r=r: np.asarray(r) for r in rows]
        u = mesh.interpolate(funcs)
    return init["scale"] * u + init["offset"]


# -- running commands -----------------------------------------------------------------------

@dataclass
class RunReport:
    command: str
    summary: dict[str, Any]
    files: list[str] = field(default_factory=list)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n")


def _spectrum(sc: Scenario, system: AssembledSystem) -> SpectralTrack:
    return track_spectrum(system, sc.spectral_times(), sc.analysis["k"],
                          extend_to_limit=sc.analysis["extend_to_limit"])


def _validate(sc: Scenario) -> dict:
    cert = sc.certificate()
    system = sc.system()
    lam2 = generalized_eigs(system.K(0.0), system.M, 2).eigenvalues[1]
    regime = classify_regime(sc.coeffs, lam2, sc.solver["t_end"])
    return {
        "n": sc.graph.n,
        "m": sc.graph.m,
        "dofs": system.n_dofs,
        "epsilon": cert.epsilon,
        "beta": cert.beta,
        "lipschitz_mu": list(cert.lipschitz_mu),
        "regime_at_t0_lambda2": str(regime),
        "lambda2_t0": lam2,
    }


def analyze(sc: Scenario, system: AssembledSystem, traj: Trajectory, track: SpectralTrack) -> dict:
    cert = sc.certificate()
    horizon = sc.solver["t_end"]
    regime = classify_regime(sc.coeffs, track.lambda2_lower, horizon)
    lam2 = track.lambda2_lower
    M = system.M
    dec = an.decompose(traj, M)
    ms = an.mass_series(traj, M)
    F_norms = sc.forcing.norms(traj.times) if sc.forcing else None
    out: dict[str, Any] = {
        "regime": str(regime),
        "lambda2_lower": lam2,
        "lambda2_status": track.status,
        "beta": cert.beta,
        "fitted_rate": None,
        "predicted_rate": an.predicted_rate(regime, lam2, cert.beta),
        "bound_satisfied": None,
        "mass_drift": ms.drift,
        "min_value": an.positivity_monitor(traj, sc.analysis["ptol"]).min_value,
        "equilibrium_residual": None,
    }
    decay_ok = None
    try:
        rep = an.fit_decay_rate(dec, sc.analysis["window"], regime, lam2, cert.beta)
        out["fitted_rate"] = rep.fitted_rate
        decay_ok = rep.bound_satisfied
        out["fit_window"] = list(rep.window)
    except an.AnalysisError as exc:
        out["fit_error"] = str(exc)
    if regime.kind != "general":
        g = an.check_gronwall_bound(dec, regime, cert, lam2, F_norms, sc.analysis["bound_convention"])
        t_w, m_w = g.worst
        out["gronwall_rate"] = g.rate
        out["gronwall_worst_time"] = t_w
        out["gronwall_worst_relative_margin"] = m_w
        out["bound_satisfied"] = g.satisfied and decay_ok is not False
    if regime.kind == "b_identity":
        try:
            eq = an.equilibrium_limit(traj, M, sc.forcing.mass if sc.forcing else None)
            out["equilibrium_residual"] = eq.residual
            out["equilibrium_mass"] = eq.predicted_mass
        except an.AnalysisError as exc:
            out["equilibrium_error"] = str(exc)
    return out


def run(sc: Scenario, command: str, out_dir=None) -> RunReport:
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    if command == "validate":
        return RunReport(command, _validate(sc))

    system = sc.system()
    if command == "spectrum":
        track = _spectrum(sc, system)
        summary = {
            "lambda2_lower": track.lambda2_lower,
            "lambda2_status": track.status,
            "continuity_modulus": list(track.continuity_modulus),
            "extended_to": track.extended_to,
        }
        if out is not None:
            k = track.lambdas.shape[1]
            rows = [[t, *lam] for t, lam in zip(track.times, track.lambdas)]
            if track.limit is not None:
                rows.append(["inf", *track.limit])
            _write_csv(out / "spectrum.csv", ["t"] + [f"lambda_{i + 1}" for i in range(k)], rows)
            files.append("spectrum.csv")
        return _finish(command, summary, files, out)

    if command == "convergence":
        summary: dict[str, Any] = {}
        an_cfg = sc.analysis
        if an_cfg["family"] is None and an_cfg["convergence_dts"] is None:
            raise ScenarioError("analysis.family", "convergence needs a closed-form family or convergence_dts")
        if an_cfg["family"] is not None:
            ref = refinement_study(sc.graph, an_cfg["family"], an_cfg["refinement_Ns"], an_cfg["refinement_index"],
                                   an_cfg["family_length"], sc.coeffs)
            summary["spatial_order"] = ref.order
            summary["exact"] = ref.exact
            if out is not None:
                _write_csv(out / "convergence.csv", ["N", "h", "lambda_err", "order"],
                           [[N, h, e, "" if math.isnan(p) else p] for N, h, e, p in ref.rows()])
                files.append("convergence.csv")
        if an_cfg["convergence_dts"] is not None:
            u0 = sc.initial_state(system)
            res = convergence_study(u0, system, an_cfg["convergence_dts"], sc.solver["t_end"],
                                    sc.forcing.callables(), sc.solver["theta"], lumped=sc.solver["lumped"])
            summary["temporal_order"] = res.order
            if out is not None:
                orders = [""] + list(res.orders)
                _write_csv(out / "convergence_time.csv", ["dt", "difference", "order"],
                           [[dt, e, p] for dt, e, p in zip(res.dts[1:], res.errors, orders)])
                files.append("convergence_time.csv")
        return _finish(command, summary, files, out)

    u0 = sc.initial_state(system)
    traj = simulate(u0, system, sc.config, sc.forcing.callables())
    summary = {"steps": len(traj.times) - 1, "t_end": float(traj.times[-1])}
    if out is not None:
        stride = max(1, sc.analysis["output_stride"])
        idx = list(range(0, len(traj.times), stride))
        if idx[-1] != len(traj.times) - 1:
            idx.append(len(traj.times) - 1)
        header = ["t"] + [f"u{i}" for i in range(system.n_dofs)]
        _write_csv(out / "trajectory.csv", header, ([traj.times[i], *traj.states[i]] for i in idx))
        files.append("trajectory.csv")
    if command == "analyze":
        track = _spectrum(sc, system)
        summary = analyze(sc, system, traj, track)
    return _finish(command, summary, files, out)


def _finish(command, summary, files, out):
    if out is not None:
        _write_json(out / "report.json", {"command": command, **summary, "files": files})
        files = files + ["report.json"]
    return RunReport(command, summary, files)
