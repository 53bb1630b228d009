"""Brezis-Ekeland certificates for trajectories of the transformed equation.

For a trajectory ``y_0..y_K`` the continuous-time functional is evaluated on
the piecewise-linear interpolant.  On step ``k`` the velocity is
``dy = (y_k - y_{k-1}) / tau`` and the control that satisfies the constraint
``y' + Gamma y = g - u`` at the two endpoints is

    ``u_left  = g_{k-1} - dy - Gamma_{k-1} y_{k-1}``,
    ``u_right = g_k     - dy - Gamma_k y_k``.

Trapezoidal quadrature of ``phi(y) + phi*(u) - <g, y>`` plus
``(|y_K|^2 - |y_0|^2) / 2`` gives the primal value ``J``.  Because the
trapezoid rule integrates ``<y', y>`` exactly on linear pieces,
``J = trap(gap) - trap(<Gamma y, y>)`` holds algebraically; the gaps are
non-negative by Fenchel-Young, and ``Gamma`` is skew, so ``J >= 0`` up to the
skewness defect of the discrete ``Gamma``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .energy import GradientEnergy, NeumannEnergy, PointwiseEnergy
from .errors import NumericError, UnboundedConjugateError, UsageError
from .noise import NoisePath
from .solver import (Problem, Trajectory, _Composed, _dense, _g_fast, _prox_newton, _semismooth_newton,
                     gamma, group)

PROX_POINT_TAU = 1e8
INNER_TOL = 1e-9


def _eps_cert(J: float) -> float:
    return 1e-7 * (1.0 + abs(J))


class _Level:
    """Transformation data frozen at one time level."""

    def __init__(self, problem: Problem, path: NoisePath, t: float):
        self.t = t
        self.S = group(problem, path, t)
        self.Gam = gamma(problem, path, t)
        self.g = _g_fast(problem, path, t)
        self.comp = _Composed(problem, self.S, t)

    def gamma_apply(self, y):
        return np.zeros_like(y) if self.Gam is None else self.Gam @ y


def conjugate_value(problem: Problem, level: _Level, v: np.ndarray, w0: Optional[np.ndarray] = None) -> float:
    """``phi*(t, v) = sup_w <v, w>_P - phi(t, w)`` for a pivot-space ``v``.

    Pointwise energies use the closed form ``sum_i W_i j*((S^-T P v)_i / W_i)``;
    other forms maximise by proximal-point iterations with inner Newton solves.
    Raises :class:`UnboundedConjugateError` when ``v`` charges a direction in
    which ``phi`` is flat (constants on the torus).
    """
    e = problem.energy
    Pv = problem.P @ v
    if isinstance(e, PointwiseEnergy):
        s = Pv if level.S is None else np.linalg.solve(_dense(level.S).T, Pv)
        return float(e.weights @ e.j.conjugate(level.t, s / e.weights))
    if isinstance(e, GradientEnergy) and problem.geometry.periodic:
        mass = float(Pv.sum())
        scale = float(np.abs(Pv).sum()) + 1e-300
        if abs(mass) > 1e-8 * scale:
            raise UnboundedConjugateError("phi* is infinite off the mean-zero subspace")
        v = v - mass / float(e.weights.sum())
    w = np.zeros(problem.n) if w0 is None else np.array(w0, dtype=float)
    nonsmooth = isinstance(e, NeumannEnergy) and not e.smooth
    tau = PROX_POINT_TAU
    for _ in range(200):
        z = w + tau * v
        if nonsmooth:
            w_new, _ = _semismooth_newton(problem, level.comp, z, tau, w)
        else:
            w_new, _ = _prox_newton(problem, level.comp, z, tau, w)
        moved = problem.pnorm(w_new - w) / tau
        w = w_new
        if moved <= INNER_TOL:
            return problem.pinner(v, w) - level.comp.value(w)
    raise NumericError("conjugate maximisation did not converge", residual=moved)


def fenchel_gap(problem: Problem, level: _Level, y: np.ndarray, v: np.ndarray) -> tuple:
    """``(gap, phi(y), phi*(v))`` with ``gap = phi(y) + phi*(v) - <v, y>_P``."""
    fy = level.comp.value(y)
    fs = conjugate_value(problem, level, v, w0=y)
    return fy + fs - problem.pinner(v, y), fy, fs


@dataclass
class CertificateReport:
    """Primal/dual values and residuals of one trajectory.

    ``primal`` is the trapezoidal space-time functional, ``gap_form`` the same
    value assembled as ``trap(gap) - trap(<Gamma y, y>)`` and
    ``identity_defect`` their difference.  ``costate_form`` evaluates the
    functional with the step co-states on right endpoints instead.
    """

    primal: float
    gap_form: float
    identity_defect: float
    gamma_term: float
    costate_form: float
    control_mismatch: float
    dual: Optional[float]
    defect: Optional[float]
    gaps: list
    max_gap: float
    min_gap: float
    energy_residual: float
    available: bool
    K: int
    N: int
    interpolation: str
    eps_cert: float
    notes: list = field(default_factory=list)

    @property
    def nonnegative(self) -> bool:
        return self.primal >= -self.eps_cert and self.min_gap >= -self.eps_cert

    def block(self) -> dict:
        """Summary for reports (no per-step arrays)."""
        d = asdict(self)
        d.pop("gaps")
        d["nonnegative"] = self.nonnegative
        return d


def _levels(problem, path, times):
    return [_Level(problem, path, float(t)) for t in times]


def _trap_terms(problem, levels, y, forcing_sign=1.0):
    """Per-step endpoint controls for a trajectory ``y`` (forcing ``sign * g``)."""
    K = y.shape[0] - 1
    tau = float(levels[1].t - levels[0].t)
    out = []
    for k in range(1, K + 1):
        dy = (y[k] - y[k - 1]) / tau
        L0, L1 = levels[k - 1], levels[k]
        u_l = forcing_sign * L0.g - dy - L0.gamma_apply(y[k - 1])
        u_r = forcing_sign * L1.g - dy - L1.gamma_apply(y[k])
        out.append((u_l, u_r))
    return tau, out


def primal_objective(traj: Trajectory, problem: Problem, path: NoisePath, _levels_cache=None) -> CertificateReport:
    """Brezis-Ekeland value of a trajectory (no dual)."""
    y = traj.y
    K = traj.K
    levels = _levels_cache or _levels(problem, path, traj.times)
    tau, ctrl = _trap_terms(problem, levels, y)
    notes = []
    gaps = np.zeros((K, 2))
    integrand = np.zeros((K, 2))
    gam = np.zeros((K, 2))
    available = True
    for k in range(1, K + 1):
        for side, (idx, u) in enumerate(((k - 1, ctrl[k - 1][0]), (k, ctrl[k - 1][1]))):
            L = levels[idx]
            try:
                gap, fy, fs = fenchel_gap(problem, L, y[idx], u)
            except (UnboundedConjugateError, NumericError) as exc:
                available = False
                notes.append(f"step {k}: {exc}")
                gap, fy, fs = np.nan, np.nan, np.nan
            gaps[k - 1, side] = gap
            integrand[k - 1, side] = fy + fs - problem.pinner(L.g, y[idx])
            gam[k - 1, side] = problem.pinner(L.gamma_apply(y[idx]), y[idx])
    boundary = 0.5 * (problem.pinner(y[-1], y[-1]) - problem.pinner(y[0], y[0]))
    J = float(0.5 * tau * integrand.sum() + boundary)
    gam_term = float(0.5 * tau * gam.sum())
    gap_form = float(0.5 * tau * gaps.sum() - gam_term)
    # co-state variant: step co-states at right endpoints, rectangle rule
    costate = boundary
    mismatch = 0.0
    for k in range(1, K + 1):
        L = levels[k]
        u = traj.u[k - 1]
        try:
            fs = conjugate_value(problem, L, u, w0=y[k])
        except (UnboundedConjugateError, NumericError):
            fs = np.nan
        costate += tau * (L.comp.value(y[k]) + fs - problem.pinner(L.g, y[k]))
        implied = L.g - (y[k] - y[k - 1]) / tau - levels[k].gamma_apply(y[k - 1])
        mismatch = max(mismatch, problem.pnorm(u - implied))
    finite = gaps[np.isfinite(gaps)]
    return CertificateReport(
        primal=J, gap_form=gap_form, identity_defect=float(J - gap_form) if available else np.nan,
        gamma_term=gam_term, costate_form=float(costate), control_mismatch=float(mismatch),
        dual=None, defect=None, gaps=gaps.tolist(),
        max_gap=float(finite.max()) if finite.size else np.nan,
        min_gap=float(finite.min()) if finite.size else np.nan,
        energy_residual=energy_identity_residual(traj, problem), available=available, K=K,
        N=problem.n, interpolation=_interp_kind(problem), eps_cert=_eps_cert(J), notes=notes)


def _interp_kind(problem: Problem) -> str:
    kinds = {op.interpolation for op in problem.operators if op.form == "diffusion"}
    return ",".join(sorted(kinds)) if kinds else "none"


def dual_objective(p: np.ndarray, v: np.ndarray, problem: Problem, path: NoisePath, _levels_cache=None) -> float:
    """Value of ``int [phi(-p) + phi*(v) + <g, p>] dt + |p(T)|^2/2 + <p(0), x0> + |x0|^2/2``.

    The dual constraint is ``p' + Gamma p = v - g``.  ``p`` has ``K + 1`` rows
    and ``v`` has ``K`` rows of right-endpoint controls satisfying
    ``(p_k - p_{k-1})/tau + Gamma_k p_{k-1} = v_k - g_k``.  The integral uses
    the same endpoint-control trapezoid rule as the primal.  The two terms in
    ``x0`` vanish for a zero datum.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    K = p.shape[0] - 1
    if p.ndim != 2 or p.shape[1] != problem.n or v.shape != (K, problem.n):
        raise UsageError("p needs K + 1 rows and v one row per step")
    times = np.linspace(0.0, problem.T, K + 1)
    levels = _levels_cache or _levels(problem, path, times)
    tau = problem.T / K
    for k in range(1, K + 1):
        L = levels[k]
        lhs = (p[k] - p[k - 1]) / tau + L.gamma_apply(p[k - 1])
        err = problem.pnorm(lhs - v[k - 1] + L.g)
        if err > 1e-9 * (1.0 + problem.pnorm(L.g) + problem.pnorm(lhs)):
            raise UsageError(f"dual pair violates the constraint at step {k} (residual {err:.3e})")
    x0 = problem.x0
    total = 0.5 * problem.pinner(p[-1], p[-1]) + problem.pinner(p[0], x0) + 0.5 * problem.pinner(x0, x0)
    for k in range(1, K + 1):
        dp = (p[k] - p[k - 1]) / tau
        for idx in (k - 1, k):
            L = levels[idx]
            vv = dp + L.gamma_apply(p[idx]) + L.g
            fs = conjugate_value(problem, L, vv, w0=-p[idx])
            total += 0.5 * tau * (L.comp.value(-p[idx]) + fs + problem.pinner(L.g, p[idx]))
    return float(total)


def dual_pair(traj: Trajectory):
    """Dual candidate from the optimality relations: ``p = -q`` and ``v = u``.

    For a step-solver trajectory the adjoint of the Euler-Lagrange system is
    driven by ``dphi(y_k) - u_k``, which is at the prox tolerance, so ``q = y``.
    """
    return -np.array(traj.y), np.array(traj.u)


def duality_defect(traj: Trajectory, problem: Problem, path: NoisePath) -> float:
    return certify(traj, problem, path).defect


def certify(traj: Trajectory, problem: Problem, path: NoisePath, dual: bool = True) -> CertificateReport:
    """Primal value, dual value and their sum for a solver trajectory."""
    levels = _levels(problem, path, traj.times)
    rep = primal_objective(traj, problem, path, levels)
    if dual and rep.available:
        try:
            p, v = dual_pair(traj)
            rep.dual = dual_objective(p, v, problem, path, levels)
            rep.defect = float(rep.primal + rep.dual)
        except (UnboundedConjugateError, NumericError, UsageError) as exc:
            rep.notes.append(f"dual unavailable: {exc}")
    return rep


def energy_identity_residual(traj: Trajectory, problem: Problem) -> float:
    """``|(|y_K|^2 - |y_0|^2)/2 - sum_k <y_k - y_{k-1}, y_k>|`` in the pivot metric.

    Evaluating the pairing at the implicit point makes the residual equal to
    ``sum_k |y_k - y_{k-1}|^2 / 2``, which is ``O(tau)`` for smooth solutions.
    """
    y = traj.y
    lhs = 0.5 * (problem.pinner(y[-1], y[-1]) - problem.pinner(y[0], y[0]))
    rhs = sum(problem.pinner(y[k] - y[k - 1], y[k]) for k in range(1, y.shape[0]))
    return float(abs(lhs - rhs))
