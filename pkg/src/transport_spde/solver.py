"""Pathwise integrator for the transformed equation ``y' + (dphi + Gamma) y = g``.

With ``S(t) = exp(sum_j beta_j(t) B_j(t))`` the SPDE state is ``X = S y`` and

* ``phi(t, y) = psi(t, S(t) y)`` (composed energy),
* ``Gamma(t) = sum_j int_0^beta_j exp(-s B_j) dB_j/dt exp(s B_j) ds``,
* ``g(t) = S(t)^-1 f(t)``.

Each implicit step minimises ``|y - z|_P^2 / (2 tau) + phi(t, y)`` with
``z = y_prev - tau Gamma y_prev + tau g`` by damped Newton; ``P`` is the Gram
matrix of the pivot space (L2 or H^-1).  Kinked boundary potentials are
handled by a semismooth prox-Newton iteration on the boundary nodes.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import Energy, NeumannEnergy, PointwiseEnergy
from .errors import ConfigError, NumericError, SolverError, StepError, UsageError
from .field import Geometry, ScalarField, dump_fields
from .noise import NoisePath
from .transport import NoiseOperator, commutator_defect

MAX_HALVINGS = 3


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def _matmul(A, B):
    if A is None:
        return B
    if sp.issparse(A) and not sp.issparse(B):
        return A @ B
    if sp.issparse(B) and not sp.issparse(A):
        return (B.T @ A.T).T
    return A @ B


@dataclass
class Problem:
    """Geometry, energy, noise operators (one per driving channel), forcing and data.

    ``forcing`` maps a time to a node vector (length ``geometry.size``); ``x0``
    is a node vector, a free-node vector or a :class:`ScalarField`.
    """

    geometry: Geometry
    energy: Energy
    operators: Sequence[NoiseOperator] = ()
    forcing: Optional[Callable[[float], np.ndarray]] = None
    x0: Optional[np.ndarray] = None
    T: float = 1.0
    tol: float = 1e-9
    max_newton: int = 100

    def __post_init__(self):
        self.operators = tuple(self.operators)
        if len(self.operators) > 2:
            raise ConfigError("at most two noise channels are supported")
        for op in self.operators:
            if op.geometry != self.geometry:
                raise ConfigError("noise operator lives on a different geometry")
            if op.space != self.energy.space:
                raise ConfigError(f"{op.form} noise needs an energy on {op.space}, got {self.energy.space}")
            if isinstance(self.energy, NeumannEnergy):
                op.field.check_geometry(self.geometry, require_zero_on_boundary=True)
        if len(self.operators) == 2:
            for t in (0.0, 0.5 * self.T, self.T):
                if commutator_defect(self.operators[0], self.operators[1], t) > 1e-8:
                    raise ConfigError("noise operators do not commute")
        n = self.geometry.free.size
        if self.x0 is None:
            x = np.zeros(n)
        elif isinstance(self.x0, ScalarField):
            x = self.x0.values[self.geometry.free]
        else:
            x = np.asarray(self.x0, dtype=float)
            if x.size == self.geometry.size and x.size != n:
                x = x[self.geometry.free]
        if x.shape != (n,):
            raise ConfigError(f"initial datum has shape {x.shape}, expected ({n},)")
        self.x0 = x
        if not self.T > 0:
            raise ConfigError("horizon must be positive")
        self.P = self.energy.pivot()

    @property
    def n(self) -> int:
        return self.geometry.free.size

    @property
    def space(self) -> str:
        return self.energy.space

    def forcing_free(self, t: float) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.n)
        f = np.asarray(self.forcing(t), dtype=float)
        return f[self.geometry.free] if f.size == self.geometry.size else f

    def pinv(self, v):
        return self.energy.pivot_inverse_apply(v)

    def pinner(self, a, b) -> float:
        return float(a @ (self.P @ b))

    def pnorm(self, a) -> float:
        return float(np.sqrt(max(self.pinner(a, a), 0.0)))


# -- transformation pieces -------------------------------------------------------

def _betas(problem: Problem, path: NoisePath, t: float):
    if not problem.operators:
        return ()
    if path.channels < len(problem.operators):
        raise UsageError("path has fewer channels than noise operators")
    b = path.eval(t)
    return tuple(float(b[j]) for j in range(len(problem.operators)))


def group(problem: Problem, path: NoisePath, t: float, sign: float = 1.0):
    """Matrix of ``exp(sign * sum_j beta_j(t) B_j(t))`` on free nodes (None for identity)."""
    S = None
    for op, beta in zip(problem.operators, _betas(problem, path, t)):
        if beta == 0.0 or op.field.is_zero:
            continue
        S = _matmul(S, op.group_matrix(t, sign * beta)) if S is not None else op.group_matrix(t, sign * beta)
    return S


def gamma(problem: Problem, path: NoisePath, t: float):
    """``Gamma(t)`` summed over channels; None when it vanishes identically."""
    G = None
    for op, beta in zip(problem.operators, _betas(problem, path, t)):
        if op.field.autonomous or op.field.is_zero or beta == 0.0:
            continue
        term = op.gamma_matrix(t, beta)
        G = term if G is None else G + term
    return G


def _g_free(problem: Problem, path: NoisePath, t: float) -> np.ndarray:
    f = problem.forcing_free(t)
    Sinv = group(problem, path, t, -1.0)
    return f if Sinv is None else Sinv @ f


def assemble_g(problem: Problem, path: NoisePath, t: float) -> ScalarField:
    """Transformed forcing ``exp(-beta B) f(t)`` as a field."""
    return _to_field(problem, _g_free(problem, path, t))


def _to_field(problem: Problem, v: np.ndarray) -> ScalarField:
    out = np.zeros(problem.geometry.size)
    out[problem.geometry.free] = v
    return ScalarField(problem.geometry, out, problem.space)


def _free(problem: Problem, y) -> np.ndarray:
    if isinstance(y, ScalarField):
        if y.space != problem.space:
            raise UsageError(f"expected a {problem.space} field, got {y.space}")
        return y.values[problem.geometry.free]
    return np.asarray(y, dtype=float)


class _Composed:
    """``phi(t, .) = psi(t, S .)`` with value, Euclidean gradient and Hessian."""

    def __init__(self, problem: Problem, S, t: float):
        self.e = problem.energy
        self.S = S
        self.t = t

    def _w(self, y):
        return y if self.S is None else self.S @ y

    def _back(self, v):
        return v if self.S is None else self.S.T @ v

    def value(self, y):
        return self.e.value(self.t, self._w(y))

    def smooth_grad(self, y):
        e = self.e
        gfun = e.smooth_grad if isinstance(e, NeumannEnergy) else e.grad
        return self._back(gfun(self.t, self._w(y)))

    def grad(self, y):
        """Euclidean gradient; minimal-norm boundary section for kinked boundary terms."""
        g = self.smooth_grad(y)
        e = self.e
        if isinstance(e, NeumannEnergy):
            lo, hi = e.j0.subgradient(self.t, y[e.bidx])
            xi = np.clip(-g[e.bidx] / e.bm, lo, hi)
            g = g.copy()
            g[e.bidx] += e.bm * xi
        return g

    def smooth_hess(self, y):
        e = self.e
        hfun = e.smooth_hess if isinstance(e, NeumannEnergy) else e.hess
        H = hfun(self.t, self._w(y))
        if self.S is None:
            return H
        S = self.S
        if sp.issparse(S):
            return (S.T @ H @ S).tocsr()
        return S.T @ _dense(H @ S)


class _GammaOp:
    """Matrix-free ``Gamma(t)`` for one time level."""

    def __init__(self, terms, t):
        self.terms = terms
        self.t = t

    def __matmul__(self, v):
        out = np.zeros_like(v, dtype=float)
        for op, beta in self.terms:
            out += op.apply_gamma(self.t, beta, v)
        return out


def _gamma_op(problem: Problem, path: NoisePath, t: float):
    terms = [(op, beta) for op, beta in zip(problem.operators, _betas(problem, path, t))
             if not (op.field.autonomous or op.field.is_zero or beta == 0.0)]
    return _GammaOp(terms, t) if terms else None


def _g_fast(problem: Problem, path: NoisePath, t: float) -> np.ndarray:
    v = problem.forcing_free(t)
    if problem.forcing is None:
        return v
    for op, beta in zip(problem.operators, _betas(problem, path, t)):
        v = op.apply_group(t, -beta, v)
    return v


def _context(problem: Problem, path: NoisePath, t: float):
    return group(problem, path, t), _gamma_op(problem, path, t), _g_fast(problem, path, t)


def composed_energy(problem: Problem, path: NoisePath, t: float, y) -> float:
    return _Composed(problem, group(problem, path, t), t).value(_free(problem, y))


def composed_subgradient(problem: Problem, path: NoisePath, t: float, y) -> ScalarField:
    """Pivot-space element of ``dphi(t, y)`` (minimal-norm selection at kinks)."""
    c = _Composed(problem, group(problem, path, t), t)
    return _to_field(problem, problem.pinv(c.grad(_free(problem, y))))


# -- one implicit step -------------------------------------------------------------

@dataclass
class StepInfo:
    iterations: int
    residual: float
    halvings: int = 0


def _solve_lin(H, rhs):
    if sp.issparse(H):
        return spla.spsolve(H.tocsc(), rhs)
    return sla.solve(H, rhs, assume_a="sym")


def _residual(problem, grad):
    return float(np.sqrt(max(grad @ problem.pinv(grad), 0.0)))


def _prox_newton(problem: Problem, comp: _Composed, z: np.ndarray, tau: float, y0: np.ndarray):
    """Minimise ``|y - z|_P^2/(2 tau) + phi(y)`` for differentiable ``phi``."""
    P = problem.P
    F = lambda y: 0.5 * float((y - z) @ (P @ (y - z))) / tau + comp.value(y)
    G = lambda y: P @ (y - z) / tau + comp.grad(y)
    y = y0.copy()
    g = G(y)
    res = _residual(problem, g)
    for it in range(1, problem.max_newton + 1):
        if res <= problem.tol:
            return y, StepInfo(it - 1, res)
        H = comp.smooth_hess(y)
        H = (P / tau + H).tocsr() if sp.issparse(P) and sp.issparse(H) else _dense(P) / tau + _dense(H)
        d = -_solve_lin(H, g)
        # accept the full step when it halves the residual (robust near roundoff)
        y_new = y + d
        g_new = G(y_new)
        res_new = _residual(problem, g_new)
        if not res_new <= 0.5 * res:
            f0, slope, alpha = F(y), float(g @ d), 1.0
            while alpha > 1e-12:
                y_new = y + alpha * d
                if F(y_new) <= f0 + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                raise StepError("Newton line search stagnated", residual=res)
            g_new = G(y_new)
            res_new = _residual(problem, g_new)
        y, g, res = y_new, g_new, res_new
    if res <= problem.tol:
        return y, StepInfo(problem.max_newton, res)
    raise StepError("Newton iteration did not converge", residual=res)


def _semismooth_newton(problem: Problem, comp: _Composed, z: np.ndarray, tau: float, y0: np.ndarray):
    """Prox-Newton for a smooth interior plus kinked boundary potential ``j0``."""
    e = comp.e
    P = problem.P
    b, bm, t = e.bidx, e.bm, comp.t
    Gs = lambda y: P @ (y - z) / tau + comp.smooth_grad(y)

    def system(y):
        gs = Gs(y)
        Hs = P / tau + comp.smooth_hess(y)
        Hs = Hs.tocsr() if sp.issparse(Hs) else sp.csr_matrix(np.asarray(Hs))
        c = float(np.mean(bm / Hs.diagonal()[b]))
        arg = y[b] - c * gs[b] / bm
        x = e.j0.prox(t, arg, c)
        R = gs.copy()
        R[b] = (bm / c) * (y[b] - x)
        lo, hi = e.j0.subgradient(t, x)
        kink = (hi - lo) > 1e-12
        D = np.where(kink, 0.0, 1.0 / (1.0 + c * e.j0.curvature(t, x)))
        scale = np.ones(Hs.shape[0])
        scale[b] = D
        extra = np.zeros(Hs.shape[0])
        extra[b] = (bm / c) * (1.0 - D)
        J = sp.diags(scale) @ Hs + sp.diags(extra)
        return R, J.tocsr()

    def inclusion(y):
        # boundary values sitting within roundoff of a kink are snapped onto it
        gs = Gs(y)
        c = float(np.mean(bm)) / max(float(np.mean(np.abs(gs))), 1.0)
        x = e.j0.prox(t, y[b] - c * gs[b] / bm, c)
        ys = y.copy()
        near = np.abs(y[b] - x) <= 1e-11 * (1.0 + np.abs(x))
        ys[b] = np.where(near, x, y[b])
        gs = Gs(ys)
        lo, hi = e.j0.subgradient(t, ys[b])
        xi = np.clip(-gs[b] / bm, lo, hi)
        gs[b] += bm * xi
        return _residual(problem, gs), ys

    y = y0.copy()
    R, J = system(y)
    rn = np.linalg.norm(R)
    for it in range(1, problem.max_newton + 1):
        res, ys = inclusion(y)
        if res <= problem.tol:
            return ys, StepInfo(it - 1, res)
        d = -_solve_lin(J, R)
        alpha = 1.0
        while True:
            y_new = y + alpha * d
            R_new, J_new = system(y_new)
            rn_new = np.linalg.norm(R_new)
            if rn_new <= (1 - 1e-4 * alpha) * rn or alpha < 1e-6:
                break
            alpha *= 0.5
        y, R, J, rn = y_new, R_new, J_new, rn_new
    res, ys = inclusion(y)
    if res <= problem.tol:
        return ys, StepInfo(problem.max_newton, res)
    raise StepError("semismooth Newton did not converge", residual=res)


def _step_raw(problem, path, y_prev, t_next, tau, ctx=None):
    S, Gam, g = ctx if ctx is not None else _context(problem, path, t_next)
    z = y_prev + tau * g if Gam is None else y_prev - tau * (Gam @ y_prev) + tau * g
    comp = _Composed(problem, S, t_next)
    if isinstance(problem.energy, NeumannEnergy) and not problem.energy.smooth:
        y, info = _semismooth_newton(problem, comp, z, tau, y_prev)
    else:
        y, info = _prox_newton(problem, comp, z, tau, y_prev)
    return y, (z - y) / tau, info


def step(problem: Problem, path: NoisePath, y_prev, t_next: float, tau: float):
    """One implicit step; returns ``(y_next, u_next)`` as fields.

    Raises :class:`StepError` carrying the last residual when Newton stalls.
    """
    if not tau > 0:
        raise UsageError("step size must be positive")
    y, u, _ = _step_raw(problem, path, _free(problem, y_prev), t_next, tau)
    return _to_field(problem, y), _to_field(problem, u)


def _step_retry(problem, path, y_prev, t_prev, tau, depth=0):
    try:
        y, _, info = _step_raw(problem, path, y_prev, t_prev + tau, tau)
        return y, info
    except StepError:
        if depth >= MAX_HALVINGS:
            raise
    y_mid, i1 = _step_retry(problem, path, y_prev, t_prev, tau / 2, depth + 1)
    y, i2 = _step_retry(problem, path, y_mid, t_prev + tau / 2, tau / 2, depth + 1)
    return y, StepInfo(i1.iterations + i2.iterations, i2.residual, 1 + max(i1.halvings, i2.halvings))


# -- trajectories -----------------------------------------------------------------

@dataclass
class Trajectory:
    """Solution on the uniform mesh ``t_k = k T / K`` (free-node arrays).

    ``u[k-1]`` is the co-state selected at step ``k``; ``X`` holds the
    back-transformed SPDE states once :func:`transform_back` has run.
    """

    geometry: Geometry
    space: str
    times: np.ndarray
    y: np.ndarray
    u: np.ndarray
    X: Optional[np.ndarray] = None
    diagnostics: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.times.size - 1

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])

    def field(self, k: int, which: str = "y") -> ScalarField:
        arr = {"y": self.y, "X": self.X, "u": self.u}[which]
        if arr is None:
            raise UsageError(f"trajectory has no {which} fields")
        out = np.zeros(self.geometry.size)
        out[self.geometry.free] = arr[k]
        return ScalarField(self.geometry, out, self.space)

    def node_array(self, which: str = "y") -> np.ndarray:
        arr = {"y": self.y, "X": self.X, "u": self.u}[which]
        out = np.zeros((arr.shape[0], self.geometry.size))
        out[:, self.geometry.free] = arr
        return out

    def export(self, directory, problem: Optional[Problem] = None, path: Optional[NoisePath] = None):
        """Write ``y.bin`` (and ``X.bin``) plus an ``index.csv`` per step."""
        os.makedirs(directory, exist_ok=True)
        dump_fields(os.path.join(directory, "y.bin"), list(self.node_array("y")), self.geometry.shape)
        if self.X is not None:
            dump_fields(os.path.join(directory, "X.bin"), list(self.node_array("X")), self.geometry.shape)
        w = self.geometry.weights[self.geometry.free]
        with open(os.path.join(directory, "index.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["step", "time", "l2_norm", "energy", "prox_iterations"])
            for k, t in enumerate(self.times):
                d = self.diagnostics[k - 1] if k > 0 and self.diagnostics else {}
                energy = d.get("energy", "")
                if k == 0 and problem is not None and path is not None:
                    energy = composed_energy(problem, path, float(t), self.y[0])
                wr.writerow([k, repr(float(t)), repr(float(np.sqrt(w @ self.y[k] ** 2))),
                             repr(float(energy)) if energy != "" else "", d.get("iterations", 0)])


class RunFailure(SolverError):
    """A solve failed after retries; ``partial`` holds the steps completed so far."""

    def __init__(self, message, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


def solve_random_pde(problem: Problem, path: NoisePath, K: int) -> Trajectory:
    """March the implicit scheme over ``K`` uniform steps."""
    if K < 1:
        raise UsageError("K must be >= 1")
    if abs(path.T - problem.T) > 1e-12 * max(1.0, problem.T) and problem.operators:
        raise UsageError("path horizon differs from the problem horizon")
    tau = problem.T / K
    times = np.linspace(0.0, problem.T, K + 1)
    ys = np.empty((K + 1, problem.n))
    us = np.empty((K, problem.n))
    ys[0] = problem.x0
    diags = []
    for k in range(1, K + 1):
        tk = float(times[k])
        try:
            ctx = _context(problem, path, tk)
            try:
                y, u, info = _step_raw(problem, path, ys[k - 1], tk, tau, ctx)
            except StepError:
                y, info = _step_retry(problem, path, ys[k - 1], float(times[k - 1]), tau)
                S, Gam, g = ctx
                gy = 0.0 if Gam is None else Gam @ ys[k - 1]
                u = g - gy - (y - ys[k - 1]) / tau
        except (StepError, NumericError) as exc:
            part = Trajectory(problem.geometry, problem.space, times[:k], ys[:k].copy(), us[:k - 1].copy(),
                              diagnostics=diags)
            raise RunFailure(f"step {k} failed: {exc}", part) from exc
        ys[k], us[k - 1] = y, u
        diags.append({"iterations": info.iterations, "residual": info.residual, "halvings": info.halvings,
                      "energy": _Composed(problem, ctx[0], tk).value(y)})
    return Trajectory(problem.geometry, problem.space, times, ys, us, diagnostics=diags)


def transform_back(traj: Trajectory, problem: Problem, path: NoisePath) -> Trajectory:
    """``X(t_k) = exp(beta(t_k) B(t_k)) y_k``; uses each operator's output interpolation."""
    X = np.empty_like(traj.y)
    for k, t in enumerate(traj.times):
        v = traj.field(k)
        for op, beta in zip(problem.operators, _betas(problem, path, float(t))):
            if beta != 0.0:
                v = op.group_apply(float(t), beta, v)
        X[k] = v.values[problem.geometry.free]
    return Trajectory(traj.geometry, traj.space, traj.times, traj.y, traj.u, X, traj.diagnostics)


def solve_spde(problem: Problem, path: NoisePath, K: int) -> Trajectory:
    return transform_back(solve_random_pde(problem, path, K), problem, path)


# -- Euler-Lagrange iteration ---------------------------------------------------------

@dataclass
class EulerLagrangeResult:
    trajectory: Trajectory
    q: np.ndarray
    residuals: list
    steps: list


def solve_euler_lagrange(problem: Problem, path: NoisePath, K: int, sweeps: int,
                         w0: Optional[np.ndarray] = None, method: str = "lbfgs") -> EulerLagrangeResult:
    """Gradient algorithm for the Euler-Lagrange system of the space-time functional.

    The control is parametrised as ``u_k = dphi(w_k)`` (``w = A^-1 u``).  Every
    sweep runs the explicit forward recursion
    ``y_k = (I - tau Gamma_k) y_{k-1} + tau (g_k - u_k)`` and the backward
    recursion ``lam_k = r_k + (I - tau Gamma_{k+1})^* lam_{k+1}`` with
    ``r_k = dphi(y_k) - u_k``; then ``q = y + tau lam``.  The residual is the
    Fenchel-gap sum ``J = sum_k tau D_phi(y_k, w_k)``, zero exactly at the
    implicit-Euler trajectory.

    ``method="mirror"`` applies ``w <- w - rho (w - q)`` (``rho = 1`` is the
    classical update ``u <- u - A^-1 u + q`` in mirror coordinates), halving
    ``rho`` until ``J`` does not increase.  ``method="lbfgs"`` feeds the same
    gradient ``tau d^2phi(w_k)(w_k - q_k)`` to a limited-memory quasi-Newton
    minimiser, one sweep per iteration.  Both keep ``J`` non-increasing.
    """
    if sweeps < 1:
        raise UsageError("sweeps must be >= 1")
    if method not in ("mirror", "lbfgs"):
        raise UsageError(f"unknown method {method!r}")
    if isinstance(problem.energy, NeumannEnergy) and not problem.energy.smooth:
        raise UsageError("the gradient algorithm needs a differentiable energy")
    tau = problem.T / K
    times = np.linspace(0.0, problem.T, K + 1)
    ctx = [None] + [(group(problem, path, float(t)), gamma(problem, path, float(t)), _g_fast(problem, path, float(t)))
                    for t in times[1:]]
    comp = [None] + [_Composed(problem, c[0], float(t)) for c, t in zip(ctx[1:], times[1:])]
    n = problem.n
    w = np.zeros((K + 1, n)) if w0 is None else np.array(w0, dtype=float)

    def forward(w):
        u = np.zeros((K + 1, n))
        y = np.zeros((K + 1, n))
        y[0] = problem.x0
        for k in range(1, K + 1):
            u[k] = problem.pinv(comp[k].grad(w[k]))
            Gam, g = ctx[k][1], ctx[k][2]
            prev = y[k - 1] if Gam is None else y[k - 1] - tau * (Gam @ y[k - 1])
            y[k] = prev + tau * (g - u[k])
        return y, u

    def residual(w, y, u):
        tot = 0.0
        for k in range(1, K + 1):
            tot += tau * (comp[k].value(y[k]) - comp[k].value(w[k]) - problem.pinner(u[k], y[k] - w[k]))
        return tot

    def backward(y, u):
        q = np.zeros_like(y)
        lam = np.zeros(n)
        for k in range(K, 0, -1):
            r = problem.pinv(comp[k].grad(y[k])) - u[k]
            if k < K:
                Gam = ctx[k + 1][1]
                if Gam is not None:
                    lam = lam - tau * problem.pinv(Gam.T @ (problem.P @ lam))
                lam = r + lam
            else:
                lam = r
            q[k] = y[k] + tau * lam
        return q

    y, u = forward(w)
    J = residual(w, y, u)
    history = [J]
    steps = []
    q = backward(y, u)

    if method == "mirror":
        for _ in range(sweeps):
            rho = 1.0
            while True:
                w_new = w.copy()
                w_new[1:] = w[1:] - rho * (w[1:] - q[1:])
                y_new, u_new = forward(w_new)
                J_new = residual(w_new, y_new, u_new)
                if J_new <= J or rho < 1e-10:
                    break
                rho *= 0.5
            if J_new > 10 * max(history[0], 1e-300) and J_new > J:
                raise NumericError("gradient algorithm diverged", residual=J_new)
            if J_new <= J:
                w, y, u, J = w_new, y_new, u_new, J_new
                q = backward(y, u)
            history.append(J)
            steps.append(rho)
    else:
        from scipy.optimize import minimize

        def fun(flat):
            wk = np.vstack([w[:1], flat.reshape(K, n)])
            yk, uk = forward(wk)
            Jk = residual(wk, yk, uk)
            qk = backward(yk, uk)
            grad = np.empty((K, n))
            for k in range(1, K + 1):
                H = comp[k].smooth_hess(wk[k])
                grad[k - 1] = tau * (H @ (wk[k] - qk[k]))
            return Jk, grad.ravel()

        def record(xk):
            wk = np.vstack([w[:1], xk.reshape(K, n)])
            yk, uk = forward(wk)
            history.append(residual(wk, yk, uk))
            steps.append(1.0)

        res = minimize(fun, w[1:].ravel(), jac=True, method="L-BFGS-B", callback=record,
                       options={"maxiter": sweeps, "maxcor": 50, "ftol": 0.0, "gtol": 0.0, "maxls": 40})
        w = np.vstack([w[:1], res.x.reshape(K, n)])
        y, u = forward(w)
        J = residual(w, y, u)
        q = backward(y, u)
    traj = Trajectory(problem.geometry, problem.space, times, y, u[1:],
                      diagnostics=[{"iterations": len(steps), "residual": history[-1]}] * K)
    return EulerLagrangeResult(traj, q, history, steps)
