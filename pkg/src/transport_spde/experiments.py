"""Config-driven experiment drivers, convergence reports and pass/fail gates.

A run is described by an :class:`ExperimentConfig` (JSON on disk).  Each
driver solves the requested problems, measures distances between
trajectories, attaches a certificate block and evaluates its gates.  Reports
are written as ``report.json`` (with timing), ``metrics.json`` (without
timing, byte-stable across reruns) and plot-ready CSV tables.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import convex
from .certify import certify
from .energy import NeumannEnergy, build_energy
from .errors import (ConfigError, DomainError, FlowIntegrityError, NumericError, SolverError, StiffnessError,
                     UsageError)
from .field import Geometry
from .noise import NoisePath, sample_brownian, wong_zakai
from .solver import Problem, Trajectory, _Composed, _g_free, group, solve_spde
from .transport import NoiseOperator, TransportField

THREADS_ENV = "SPDE_THREADS"
KINDS = ("wong_zakai", "stability", "diffusion", "porous_media", "neumann_thermostat", "deterministic_path")
FAMILIES = ("quadratic", "exponent", "forcing", "transport")
DICTIONARY_SIZE = 8


def thread_count() -> int:
    """Worker count from ``SPDE_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


# -- configuration ---------------------------------------------------------------------

def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass
class ProblemConfig:
    """Geometry, energy, transport channels, forcing, initial datum and horizon.

    ``geometry``, ``j`` and ``j0`` are the blocks understood by
    :meth:`Geometry.from_config` and :func:`convex.from_config`; ``transport``
    is a list of ``TransportField`` blocks (one per noise channel).
    ``forcing`` and ``initial`` are lists of separable modes
    ``{"amplitude", "k": [..], "shape": sin|cos|sin2|one, "omega"}``.
    """

    geometry: dict
    form: str
    j: dict
    j0: Optional[dict] = None
    transport: list = field(default_factory=list)
    operator: str = "diffusion"
    forcing: list = field(default_factory=list)
    initial: list = field(default_factory=list)
    T: float = 1.0


@dataclass
class NoiseConfig:
    """Driving path: ``brownian`` (seed, M), ``table`` (CSV file), ``weierstrass`` or ``zero``."""

    kind: str = "brownian"
    seed: int = 0
    M: int = 512
    levels: list = field(default_factory=list)
    kernel: str = "linear"
    file: Optional[str] = None
    weierstrass: dict = field(default_factory=dict)


@dataclass
class SolverConfig:
    K: int = 128
    tol: float = 1e-9
    max_newton: int = 100
    quad_nodes: int = 8
    interpolation: str = "cubic"
    certificate: bool = True


@dataclass
class StabilityConfig:
    """Perturbation family ``X_n`` whose limit ``n -> inf`` is the unperturbed problem."""

    family: str = "quadratic"
    members: list = field(default_factory=lambda: [2, 8, 32])
    coefficient: float = 0.01
    probes: list = field(default_factory=lambda: [-2.0, -0.5, 0.0, 0.7, 1.5])


@dataclass
class GateConfig:
    """Thresholds; the monotonicity slack and floors are engineering choices."""

    slack: float = 0.10
    floor: float = 1e-10
    strong_factor: float = 2.0
    defect_max: float = 1e-3
    conjugate_tol: float = 1e-3


@dataclass
class ExperimentConfig:
    kind: str
    problem: ProblemConfig
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    gates: GateConfig = field(default_factory=GateConfig)
    output: str = "out"
    name: str = ""
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        known = {"kind", "problem", "noise", "solver", "stability", "gates", "output", "name"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        if "kind" not in data or "problem" not in data:
            raise ConfigError("config needs 'kind' and 'problem'")
        cfg = cls(kind=data["kind"],
                  problem=_build(ProblemConfig, data["problem"], "problem"),
                  noise=_build(NoiseConfig, data.get("noise", {}), "noise"),
                  solver=_build(SolverConfig, data.get("solver", {}), "solver"),
                  stability=_build(StabilityConfig, data.get("stability", {}), "stability"),
                  gates=_build(GateConfig, data.get("gates", {}), "gates"),
                  output=data.get("output", "out"), name=data.get("name", ""), base_dir=base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def output_dir(self) -> str:
        return self.output if os.path.isabs(self.output) else os.path.join(self.base_dir, self.output)

    def validate(self) -> None:
        """Check kinds, level ordering and that every block builds."""
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        lv = list(self.noise.levels)
        if any(int(a) >= int(b) for a, b in zip(lv, lv[1:])):
            raise ConfigError("levels must be strictly increasing")
        if lv and self.solver.K < max(lv):
            raise ConfigError("K must be at least the largest level")
        if self.kind == "wong_zakai" and not lv:
            raise ConfigError("wong_zakai needs a list of levels")
        if self.kind == "wong_zakai" and self.noise.kind != "brownian":
            raise ConfigError("wong_zakai needs a brownian noise block")
        if self.kind == "deterministic_path" and self.noise.kind not in ("table", "weierstrass"):
            raise ConfigError("deterministic_path needs a table or weierstrass noise block")
        if self.noise.kind not in ("brownian", "table", "weierstrass", "zero"):
            raise ConfigError(f"unknown noise kind {self.noise.kind!r}")
        if self.noise.kernel not in ("linear", "mollified"):
            raise ConfigError(f"unknown kernel {self.noise.kernel!r}")
        if self.stability.family not in FAMILIES:
            raise ConfigError(f"unknown stability family {self.stability.family!r}")
        members = list(self.stability.members)
        if any(a >= b for a, b in zip(members, members[1:])) or any(m <= 0 for m in members):
            raise ConfigError("stability members must be positive and strictly increasing")
        if self.problem.operator not in NoiseOperator.FORMS:
            raise ConfigError(f"unknown operator form {self.problem.operator!r}")
        if self.solver.K < 1 or self.problem.T <= 0:
            raise ConfigError("K and T must be positive")
        try:
            build_problem(self)
        except (DomainError, UsageError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"problem block: {exc}") from None


# -- problem assembly ------------------------------------------------------------------

def _mode(geometry: Geometry, mode: dict) -> np.ndarray:
    """Separable profile ``amplitude * prod_d shape(2 pi k_d x_d / L_d)`` on all nodes."""
    shape = mode.get("shape", "sin")
    ks = mode.get("k", [1] * geometry.dim)
    ks = [ks] if np.isscalar(ks) else list(ks)
    if len(ks) != geometry.dim:
        raise ConfigError("mode needs one wavenumber per axis")
    out = np.full(geometry.size, float(mode.get("amplitude", 1.0)))
    for d, k in enumerate(ks):
        x = (geometry.coords[:, d] - geometry.origin[d]) / geometry.lengths[d]
        # bounded axes use half-periods so sin vanishes and cos has zero slope at the ends
        arg = (2.0 if geometry.periodic else 1.0) * math.pi * k * x
        if shape == "sin":
            out *= np.sin(arg)
        elif shape == "cos":
            out *= np.cos(arg)
        elif shape == "sin2":
            out *= np.sin(arg) ** 2
        elif shape != "one":
            raise ConfigError(f"unknown mode shape {shape!r}")
    return out


def _superpose(geometry, specs):
    base = [(_mode(geometry, s), float(s.get("omega", 0.0))) for s in specs]

    def at(t):
        v = np.zeros(geometry.size)
        for prof, om in base:
            v += prof * (math.cos(om * t) if om else 1.0)
        return v
    return at


def build_problem(cfg: ExperimentConfig, j_override=None, forcing_extra=None,
                  transport_scale: float = 1.0) -> Problem:
    """Problem for ``cfg``; the keyword hooks build perturbed family members."""
    pc = cfg.problem
    geometry = Geometry.from_config(pc.geometry)
    j = j_override if j_override is not None else convex.from_config(pc.j)
    j0 = convex.from_config(pc.j0) if pc.j0 is not None else None
    energy = build_energy(geometry, pc.form, j, j0)
    ops = []
    for tcfg in pc.transport:
        fld = TransportField.from_config(tcfg)
        if transport_scale != 1.0:
            fld = TransportField(fld.kind, fld.a0 * transport_scale, fld.a1 * transport_scale,
                                 fld.lengths, fld.modes, fld.center, fld.radius)
        ops.append(NoiseOperator(pc.operator, fld, geometry, cfg.solver.interpolation, cfg.solver.quad_nodes))
    forcing = None
    if pc.forcing or forcing_extra is not None:
        f = _superpose(geometry, pc.forcing)
        forcing = f if forcing_extra is None else (lambda t: f(t) + forcing_extra(t))
    x0 = _superpose(geometry, pc.initial)(0.0)
    return Problem(geometry, energy, ops, forcing, x0, pc.T, cfg.solver.tol, cfg.solver.max_newton)


def weierstrass_path(T: float, M: int, seed: int, a: float = 0.5, b: int = 3, terms: int = 12) -> NoisePath:
    """Seeded Weierstrass-type rough signal ``sum_k a^k cos(b^k pi t / T + phase_k)``, shifted to start at 0."""
    rng = np.random.Generator(np.random.Philox(seed))
    phases = rng.uniform(0.0, 2.0 * math.pi, terms)
    fn = lambda t: sum(a ** k * math.cos(b ** k * math.pi * t / T + phases[k]) for k in range(terms))
    return NoisePath.from_function(fn, T, M)


def build_path(cfg: ExperimentConfig) -> NoisePath:
    nc, T = cfg.noise, cfg.problem.T
    channels = max(1, len(cfg.problem.transport))
    if nc.kind == "brownian":
        return sample_brownian(nc.seed, T, nc.M, channels)
    if nc.kind == "zero":
        return NoisePath.zero(T, nc.M, channels)
    if nc.kind == "weierstrass":
        p = weierstrass_path(T, nc.M, nc.seed, **nc.weierstrass)
        return p if channels == 1 else p.with_channels(NoisePath.zero(T, nc.M, 1))
    fname = nc.file if os.path.isabs(nc.file or "") else os.path.join(cfg.base_dir, nc.file or "")
    if not nc.file:
        raise ConfigError("table noise needs a file")
    p = NoisePath.from_csv(fname)
    if abs(p.T - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"path horizon {p.T} differs from T = {T}")
    if p.channels != channels:
        raise ConfigError(f"path has {p.channels} channels, transport has {channels}")
    return p


# -- distances -------------------------------------------------------------------------

def dictionary(geometry: Geometry) -> np.ndarray:
    """Eight smooth test fields (rows, free nodes) adapted to the boundary condition."""
    fields = []
    if geometry.dim == 1:
        x = (geometry.coords[:, 0] - geometry.origin[0]) / geometry.lengths[0]
        for k in range(1, 5):
            if geometry.periodic:
                fields += [np.cos(2 * math.pi * k * x), np.sin(2 * math.pi * k * x)]
            elif geometry.boundary == "dirichlet":
                fields += [np.sin(math.pi * (2 * k - 1) * x), np.sin(math.pi * 2 * k * x)]
            else:
                fields += [np.cos(math.pi * (2 * k - 2) * x), np.cos(math.pi * (2 * k - 1) * x)]
    else:
        x = geometry.coords[:, 0] / geometry.lengths[0]
        y = geometry.coords[:, 1] / geometry.lengths[1]
        pairs = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3), (3, 2)]
        for kx, ky in pairs:
            if geometry.periodic:
                fields.append(np.cos(2 * math.pi * kx * x) * np.sin(2 * math.pi * ky * y))
            elif geometry.boundary == "dirichlet":
                fields.append(np.sin(math.pi * kx * x) * np.sin(math.pi * ky * y))
            else:
                fields.append(np.cos(math.pi * (kx - 1) * x) * np.cos(math.pi * ky * y))
    assert len(fields) == DICTIONARY_SIZE
    return np.array(fields)[:, geometry.free]


def weak_distances(a: Trajectory, b: Trajectory, chi: np.ndarray) -> np.ndarray:
    """``|int_0^T <X_a - X_b, chi_m> dt|`` (trapezoid in time, L2 pairing)."""
    w = a.geometry.weights[a.geometry.free]
    diff = (a.X - b.X) * w
    series = diff @ chi.T
    return np.abs(np.trapezoid(series, a.times, axis=0)) if hasattr(np, "trapezoid") else \
        np.abs(np.trapz(series, a.times, axis=0))


def strong_distance(a: Trajectory, b: Trajectory, P) -> float:
    """``(int_0^T |X_a - X_b|_pivot^2 dt)^(1/2)``."""
    d = a.X - b.X
    sq = np.array([float(v @ (P @ v)) for v in d])
    integ = np.trapezoid(sq, a.times) if hasattr(np, "trapezoid") else np.trapz(sq, a.times)
    return float(math.sqrt(max(integ, 0.0)))


def _monotone(seq, slack, floor):
    return all(b <= (1.0 + slack) * a + floor for a, b in zip(seq, seq[1:]))


# -- reports -----------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """Distances per level (or family member) to a reference run, gates and certificate."""

    kind: str
    name: str
    config: dict
    reference: dict
    rows: list
    certificate: Optional[dict]
    gates: dict
    extra: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.gates.values())

    def metrics(self) -> dict:
        """Everything except timing; stable across reruns."""
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "timing"}
        d["passed"] = self.passed
        return d

    def write(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        m = self.metrics()
        with open(os.path.join(directory, "metrics.json"), "w", encoding="utf-8") as fh:
            fh.write(_dumps(m))
        with open(os.path.join(directory, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(_dumps({**m, "timing": self.timing}))
        render_csv(m, directory)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def render_csv(metrics: dict, directory: str) -> list:
    """Write ``levels.csv`` (one row per level/member) and ``gates.csv``; returns file names."""
    rows = metrics.get("rows", [])
    written = []
    if rows:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        nweak = len(rows[0].get("weak", []))
        w.writerow(["label", "strong"] + [f"weak_{m + 1}" for m in range(nweak)])
        for r in rows:
            w.writerow([r["label"], repr(float(r["strong"]))] + [repr(float(x)) for x in r["weak"]])
        with open(os.path.join(directory, "levels.csv"), "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        written.append("levels.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gate", "passed"])
    for k in sorted(metrics.get("gates", {})):
        w.writerow([k, int(bool(metrics["gates"][k]))])
    with open(os.path.join(directory, "gates.csv"), "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    written.append("gates.csv")
    return written


# -- shared machinery -----------------------------------------------------------------------

def _solve_all(tasks: list) -> list:
    """Run independent ``(label, thunk)`` solves; results come back in input order."""
    n = min(thread_count(), max(1, len(tasks)))

    def run(task):
        label, thunk = task
        t0 = time.perf_counter()
        try:
            return label, thunk(), None, time.perf_counter() - t0
        except (SolverError, NumericError, FlowIntegrityError, StiffnessError) as exc:
            return label, getattr(exc, "partial", None), exc, time.perf_counter() - t0

    if n == 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run, tasks))


def _certificate_block(problem, path, traj, enabled=True):
    if not enabled:
        return None
    rep = certify(traj, problem, path)
    return rep.block()


def _rows(ref, results, chi, P, labels):
    rows = []
    for (label, traj, err, secs), lab in zip(results, labels):
        rows.append({"label": lab, "strong": strong_distance(traj, ref, P),
                     "weak": weak_distances(traj, ref, chi).tolist()})
    return rows


def _failure(cfg, results, t_start):
    bad = [(label, err) for label, _, err, _ in results if err is not None]
    if not bad:
        return None
    notes = [f"{label}: {err}" for label, err in bad]
    return ConvergenceReport(cfg.kind, cfg.name, cfg.to_dict(), {}, [], None,
                             {"all_solves_completed": False}, notes=notes,
                             timing={"total_s": time.perf_counter() - t_start})


def _monotone_gates(rows, gates: GateConfig) -> dict:
    weak = np.array([r["weak"] for r in rows])
    out = {}
    for m in range(weak.shape[1]):
        out[f"weak_{m + 1}_nonincreasing"] = _monotone(list(weak[:, m]), gates.slack, gates.floor)
    return out


# -- drivers ----------------------------------------------------------------------------------

def run_wong_zakai(cfg: ExperimentConfig) -> ConvergenceReport:
    """Limit run with the raw path against runs driven by its level-``n`` approximants."""
    t_start = time.perf_counter()
    path = build_path(cfg)
    K = cfg.solver.K
    levels = [int(n) for n in cfg.noise.levels]
    tasks = [("reference", lambda: solve_spde(build_problem(cfg), path, K))]
    for n in levels:
        tasks.append((f"level_{n}", lambda n=n: solve_spde(build_problem(cfg), wong_zakai(path, n, cfg.noise.kernel), K)))
    results = _solve_all(tasks)
    fail = _failure(cfg, results, t_start)
    if fail:
        return fail
    problem = build_problem(cfg)
    ref = results[0][1]
    chi = dictionary(problem.geometry)
    rows = _rows(ref, results[1:], chi, problem.P, [f"n={n}" for n in levels])
    gates = _monotone_gates(rows, cfg.gates)
    strong = [r["strong"] for r in rows]
    gates["strong_reduction"] = strong[-1] * cfg.gates.strong_factor <= strong[0] + cfg.gates.floor
    cert = _certificate_block(problem, path, ref, cfg.solver.certificate)
    if cert is not None:
        gates["certificate_nonnegative"] = bool(cert["nonnegative"])
    return ConvergenceReport(
        cfg.kind, cfg.name, cfg.to_dict(), _ref_summary(ref, problem), rows, cert, gates,
        extra={"levels": levels, "slack": cfg.gates.slack, "path_steps": path.steps},
        timing={"total_s": time.perf_counter() - t_start, "solves_s": [r[3] for r in results]})


def _ref_summary(ref: Trajectory, problem: Problem) -> dict:
    P = problem.P
    norms = [math.sqrt(float(v @ (P @ v))) for v in ref.X]
    its = [d["iterations"] for d in ref.diagnostics]
    return {"K": ref.K, "final_norm": norms[-1], "max_norm": max(norms),
            "max_newton_iterations": max(its) if its else 0,
            "halvings": int(sum(d.get("halvings", 0) for d in ref.diagnostics))}


def _family_member(cfg: ExperimentConfig, n: float):
    """Problem thunk and potential for member ``n`` (``inf`` is the limit)."""
    st = cfg.stability
    j = convex.from_config(cfg.problem.j)
    if math.isinf(n):
        return (lambda: build_problem(cfg)), j
    eps = 1.0 / n
    if st.family == "quadratic":
        jn = j.plus(convex.Quadratic(st.coefficient * eps))
        return (lambda: build_problem(cfg, j_override=jn)), jn
    if st.family == "exponent":
        if cfg.problem.j.get("kind") != "power":
            raise ConfigError("exponent family needs a power potential")
        jn = convex.Power(cfg.problem.j["p"] + eps, cfg.problem.j.get("a", 1.0))
        return (lambda: build_problem(cfg, j_override=jn)), jn
    if st.family == "forcing":
        def thunk():
            geo = Geometry.from_config(cfg.problem.geometry)
            chi = np.zeros(geo.size)
            chi[geo.free] = dictionary(geo)[0]
            return build_problem(cfg, forcing_extra=lambda t: st.coefficient * eps * chi)
        return thunk, j
    return (lambda: build_problem(cfg, transport_scale=1.0 + eps)), j


def run_stability(cfg: ExperimentConfig) -> ConvergenceReport:
    """Perturbed family ``X_n`` against the limit run, all with the same path."""
    t_start = time.perf_counter()
    path = build_path(cfg)
    K = cfg.solver.K
    members = [float(m) for m in cfg.stability.members]
    tasks = []
    potentials = []
    for n in [math.inf] + members:
        thunk, jn = _family_member(cfg, n)
        potentials.append(jn)
        tasks.append((f"n={n:g}", lambda thunk=thunk: solve_spde(thunk(), path, K)))
    results = _solve_all(tasks)
    fail = _failure(cfg, results, t_start)
    if fail:
        return fail
    problem = build_problem(cfg)
    ref = results[0][1]
    chi = dictionary(problem.geometry)
    rows = _rows(ref, results[1:], chi, problem.P, [f"n={int(m)}" for m in members])
    gates = _monotone_gates(rows, cfg.gates)
    # conjugate samples psi_n*(z) -> psi*(z) at the probe points
    probes = np.asarray(cfg.stability.probes, dtype=float)
    limit_conj = potentials[0].conjugate(0.0, probes)
    conj_rows = []
    for m, jn in zip(members, potentials[1:]):
        vals = jn.conjugate(0.0, probes)
        conj_rows.append({"member": int(m), "values": vals.tolist(),
                          "max_error": float(np.max(np.abs(vals - limit_conj)))})
    errs = [r["max_error"] for r in conj_rows]
    gates["conjugate_samples_converge"] = errs[-1] <= cfg.gates.conjugate_tol
    gates["conjugate_errors_nonincreasing"] = _monotone(errs, cfg.gates.slack, cfg.gates.floor)
    psi = [jn.eval(0.0, probes) for jn in potentials]
    cert = _certificate_block(problem, path, ref, cfg.solver.certificate)
    if cert is not None:
        gates["certificate_nonnegative"] = bool(cert["nonnegative"])
    return ConvergenceReport(
        cfg.kind, cfg.name, cfg.to_dict(), _ref_summary(ref, problem), rows, cert, gates,
        extra={"family": cfg.stability.family, "members": [int(m) for m in members],
               "probes": probes.tolist(), "limit_conjugate": limit_conj.tolist(), "conjugates": conj_rows,
               "potential_errors": [float(np.max(np.abs(p - psi[0]))) for p in psi[1:]],
               "slack": cfg.gates.slack},
        timing={"total_s": time.perf_counter() - t_start, "solves_s": [r[3] for r in results]})


def _p1(problem: Problem) -> float:
    return float(problem.energy.j.growth.p1)


def _v_norm(problem: Problem, y: np.ndarray, p: float) -> float:
    """Discrete ``V`` norm: ``W^{1,p}`` seminorm (plus boundary trace for Neumann) or ``L^p``."""
    e = problem.energy
    inner = getattr(e, "interior", e)
    if hasattr(inner, "G"):
        gs = [G @ y for G in inner.G]
        r = gs[0] if len(gs) == 1 else np.hypot(gs[0], gs[1])
        total = float(inner.cw @ np.abs(r) ** p)
        if isinstance(e, NeumannEnergy):
            total += float(e.bm @ np.abs(y[e.bidx]) ** p)
        return total ** (1.0 / p)
    return float(e.weights @ np.abs(y) ** p) ** (1.0 / p)


def _regularity(problem: Problem, path: NoisePath, traj: Trajectory) -> dict:
    """Discrete energy-estimate surrogates: ``sup_k |y_k|`` and ``sum_k tau |y_k|_V^p1``."""
    p = _p1(problem)
    norms = [problem.pnorm(v) for v in traj.y]
    gnorm = 0.0
    if problem.forcing is not None:
        gnorm = sum(traj.tau * problem.pnorm(_g_free(problem, path, float(t))) for t in traj.times[1:])
    vint = sum(traj.tau * _v_norm(problem, v, p) ** p for v in traj.y[1:])
    bound = problem.pnorm(traj.y[0]) + gnorm
    return {"sup_norm": max(norms), "energy_bound": bound, "v_integral": vint, "p1": p,
            "bounded": bool(math.isfinite(vint) and max(norms) <= 1.01 * bound + 1e-12)}


def _thermostat_flux(problem: Problem, path: NoisePath, traj: Trajectory) -> dict:
    """Relay part of the boundary flux, ``xi - kappa y_b``, against ``[-alpha2, alpha1]``."""
    e = problem.energy
    j0 = e.j0
    worst = 0.0
    lo_seen, hi_seen = math.inf, -math.inf
    for k in range(1, traj.K + 1):
        t = float(traj.times[k])
        y = traj.y[k]
        comp = _Composed(problem, group(problem, path, t), t)
        total = problem.P @ traj.u[k - 1]
        xi = (total[e.bidx] - comp.smooth_grad(y)[e.bidx]) / e.bm
        relay = xi - getattr(j0, "kappa", 0.0) * y[e.bidx]
        a1, a2 = j0.alphas(t) if hasattr(j0, "alphas") else (math.inf, math.inf)
        worst = max(worst, float(np.max(np.maximum(relay - a1, -a2 - relay))))
        lo_seen, hi_seen = min(lo_seen, float(relay.min())), max(hi_seen, float(relay.max()))
    return {"min_relay_flux": lo_seen, "max_relay_flux": hi_seen, "max_violation": max(worst, 0.0)}


def run_example(cfg: ExperimentConfig) -> ConvergenceReport:
    """Single solve with certificate and regularity surrogates."""
    t_start = time.perf_counter()
    path = build_path(cfg)
    problem = build_problem(cfg)
    results = _solve_all([("solve", lambda: solve_spde(problem, path, cfg.solver.K))])
    fail = _failure(cfg, results, t_start)
    if fail:
        return fail
    traj = results[0][1]
    reg = _regularity(problem, path, traj)
    gates = {"regularity_bounded": reg["bounded"]}
    extra = {"regularity": reg}
    cert = _certificate_block(problem, path, traj, cfg.solver.certificate)
    if cert is not None:
        gates["certificate_nonnegative"] = bool(cert["nonnegative"])
        gates["certificate_defect"] = cert["defect"] is not None and abs(cert["defect"]) <= cfg.gates.defect_max
    if cfg.kind == "neumann_thermostat":
        if not isinstance(problem.energy, NeumannEnergy):
            raise ConfigError("thermostat example needs the neumann energy form")
        flux = _thermostat_flux(problem, path, traj)
        extra["flux"] = flux
        gates["flux_in_range"] = flux["max_violation"] <= 1e-7
    return ConvergenceReport(cfg.kind, cfg.name, cfg.to_dict(), _ref_summary(traj, problem), [], cert, gates,
                             extra=extra, timing={"total_s": time.perf_counter() - t_start})


def run_deterministic_path(cfg: ExperimentConfig) -> ConvergenceReport:
    """Pathwise solve for a tabulated (or generated rough) signal, plus its approximants."""
    t_start = time.perf_counter()
    path = build_path(cfg)
    K = cfg.solver.K
    levels = [int(n) for n in cfg.noise.levels]
    tasks = [("reference", lambda: solve_spde(build_problem(cfg), path, K))]
    for n in levels:
        tasks.append((f"level_{n}", lambda n=n: solve_spde(build_problem(cfg), wong_zakai(path, n, cfg.noise.kernel), K)))
    results = _solve_all(tasks)
    fail = _failure(cfg, results, t_start)
    if fail:
        return fail
    problem = build_problem(cfg)
    ref = results[0][1]
    chi = dictionary(problem.geometry)
    rows = _rows(ref, results[1:], chi, problem.P, [f"n={n}" for n in levels])
    gates = {"solve_completed": True}
    if rows:
        gates.update(_monotone_gates(rows, cfg.gates))
    cert = _certificate_block(problem, path, ref, cfg.solver.certificate)
    if cert is not None:
        gates["certificate_nonnegative"] = bool(cert["nonnegative"])
    return ConvergenceReport(cfg.kind, cfg.name, cfg.to_dict(), _ref_summary(ref, problem), rows, cert, gates,
                             extra={"levels": levels, "path_steps": path.steps},
                             timing={"total_s": time.perf_counter() - t_start})


DRIVERS: dict = {
    "wong_zakai": run_wong_zakai,
    "stability": run_stability,
    "diffusion": run_example,
    "porous_media": run_example,
    "neumann_thermostat": run_example,
    "deterministic_path": run_deterministic_path,
}


def run(cfg: ExperimentConfig, write: bool = True) -> ConvergenceReport:
    """Dispatch on ``cfg.kind``; writes the report into the output directory."""
    report = DRIVERS[cfg.kind](cfg)
    if write:
        report.write(cfg.output_dir())
    return report
