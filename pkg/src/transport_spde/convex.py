"""Scalar convex potentials: values, conjugates, subdifferentials and proximal maps.

Every potential ``j(t, r)`` is a convex function of the real variable ``r``,
optionally multiplied by a positive time weight ``w(t)``.  All methods accept
scalars or numpy arrays and are vectorized over ``r``.

Multivalued subdifferentials are returned as closed intervals ``(lo, hi)``.
Where a single value is needed the minimal-norm element of the interval is
used (:meth:`ConvexPotential.section`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, NumericError, UnboundedConjugateError

BRACKET_CAP = 2.0**60


@dataclass(frozen=True)
class Growth:
    """Coercivity/growth certificate ``g1 + a1|r|^p1 <= j <= g2 + a2|r|^p2``."""

    p1: float
    p2: float
    alpha1: float
    alpha2: float
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        if not (self.p1 > 1 and self.p2 >= self.p1):
            raise DomainError(f"need 1 < p1 <= p2, got p1={self.p1}, p2={self.p2}")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise DomainError("growth constants alpha1, alpha2 must be positive")


def _as_array(r, name="r"):
    a = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(a)):
        raise DomainError(f"non-finite {name}")
    return a


def _out(a, like):
    return float(a) if np.ndim(like) == 0 else a


def numeric_conjugate(fn: Callable[[float], float], s: float, tol: float = 1e-12) -> float:
    """``sup_r (r s - fn(r))`` by bounded Brent maximization on a growing bracket.

    The bracket starts at ``[-1, 1]`` and doubles until the maximizer is
    interior and the value is confirmed on the next, wider bracket.  Failure
    below ``2**60`` means the supremum is not attained.
    """
    R = 1.0
    prev = None
    while R <= BRACKET_CAP:
        res = minimize_scalar(
            lambda r: fn(r) - r * s, bounds=(-R, R), method="bounded",
            options={"xatol": tol * max(1.0, R), "maxiter": 500},
        )
        r = float(res.x)
        val = r * s - fn(r)
        if abs(r) < R * (1.0 - 1e-6):
            if prev is not None and abs(val - prev) <= 1e-11 * max(1.0, abs(val)):
                return max(val, prev)
            prev = val
        else:
            prev = None
        R *= 2.0
    raise UnboundedConjugateError(f"conjugate at s={s} did not stabilize below {BRACKET_CAP:g}")


def _bisect_monotone(fn, target, lo, hi, iters=200):
    """Vectorized bisection for increasing ``fn`` with ``fn(lo) <= target <= fn(hi)``."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = fn(mid) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


class ConvexPotential:
    """Base class; subclasses implement the unweighted ``_j``, ``_conj``, ``_sub``, ``_prox``."""

    kind = "abstract"

    def __init__(self, growth: Growth, weight: Optional[Callable[[float], float]] = None,
                 symmetry: Optional[tuple[float, float]] = None):
        self.growth = growth
        self.weight = weight
        if symmetry is None:
            symmetry = self._default_symmetry()
        self.symmetry = symmetry

    # -- time weight ---------------------------------------------------
    def w(self, t: float) -> float:
        if self.weight is None:
            return 1.0
        val = float(self.weight(t))
        if not val > 0:
            raise DomainError(f"time weight must be positive, got {val} at t={t}")
        return val

    @property
    def time_dependent(self) -> bool:
        return self.weight is not None

    def _default_symmetry(self):
        g = self.growth
        if g.p1 != g.p2:
            raise DomainError("symmetry constants must be declared when p1 != p2")
        c1 = g.alpha2 / g.alpha1
        return (c1, max(0.0, g.gamma2 - c1 * g.gamma1))

    # -- public interface ---------------------------------------------
    def eval(self, t, r):
        a = _as_array(r)
        return _out(self.w(t) * self._j(t, a), r)

    def conjugate(self, t, s):
        a = _as_array(s, "s")
        w = self.w(t)
        return _out(w * self._conj(t, a / w), s)

    def subgradient(self, t, r):
        a = _as_array(r)
        w = self.w(t)
        lo, hi = self._sub(t, a)
        return _out(w * lo, r), _out(w * hi, r)

    def section(self, t, r):
        """Minimal-norm element of the subdifferential."""
        lo, hi = self.subgradient(t, r)
        return _out(np.clip(0.0, lo, hi), r)

    def curvature(self, t, r):
        """Second derivative where it exists (right-sided at kinks)."""
        a = _as_array(r)
        return _out(self.w(t) * self._curv(t, a), r)

    def prox(self, t, z, lam):
        if not lam > 0:
            raise DomainError("prox step must be positive")
        a = _as_array(z, "z")
        return _out(self._prox(t, a, lam * self.w(t)), z)

    def fenchel_gap(self, t, r, s):
        r_a = _as_array(r)
        s_a = _as_array(s, "s")
        gap = self.w(t) * self._j(t, r_a) + self.w(t) * self._conj(t, s_a / self.w(t)) - r_a * s_a
        return _out(gap, np.broadcast(r_a, s_a))

    def check_growth(self, t, r) -> bool:
        g = self.growth
        r = _as_array(r)
        j = self.eval(t, r)
        lo = g.gamma1 + g.alpha1 * np.abs(r) ** g.p1
        hi = g.gamma2 + g.alpha2 * np.abs(r) ** g.p2
        tol = 1e-12 * (1 + np.abs(j))
        return bool(np.all(lo <= j + tol) and np.all(j <= hi + tol))

    def check_symmetry(self, t, r) -> bool:
        c1, c2 = self.symmetry
        r = _as_array(r)
        jm = self.eval(t, -r)
        jp = self.eval(t, r)
        return bool(np.all(jm <= c1 * jp + c2 + 1e-12 * (1 + np.abs(jm))))

    def scaled(self, factor: float) -> "ConvexPotential":
        """Return ``factor * j`` (used for constructing perturbation families)."""
        return _Scaled(self, factor)

    def plus(self, other: "ConvexPotential") -> "ConvexPotential":
        return _Sum(self, other)

    def config(self) -> dict:
        raise NotImplementedError

    # -- defaults for subclasses --------------------------------------
    def _curv(self, t, r):
        lo, _ = self._sub(t, r)
        d = 1e-6 * np.maximum(1.0, np.abs(r))
        lo2, _ = self._sub(t, r + d)
        return (lo2 - lo) / d

    def _conj(self, t, s):
        return np.vectorize(lambda v: numeric_conjugate(lambda r: float(self._j(t, np.float64(r))), v))(s)

    def _prox(self, t, z, lam):
        def one(zz):
            width = 1.0 + abs(zz)
            while width < BRACKET_CAP:
                res = minimize_scalar(
                    lambda r: float(self._j(t, np.float64(r))) + (r - zz) ** 2 / (2 * lam),
                    bounds=(zz - width, zz + width), method="bounded",
                    options={"xatol": 1e-13 * max(1.0, width), "maxiter": 500},
                )
                if abs(res.x - zz) < width * (1 - 1e-6):
                    return float(res.x)
                width *= 2
            raise NumericError(f"prox of custom potential failed at z={zz}")

        return np.vectorize(one)(z)

    def __repr__(self):
        return f"{type(self).__name__}({self.config()})"


class Quadratic(ConvexPotential):
    """``j(r) = c r^2 / 2``."""

    kind = "quadratic"

    def __init__(self, c: float = 1.0, weight=None):
        if not c > 0:
            raise DomainError("quadratic coefficient must be positive")
        self.c = float(c)
        super().__init__(Growth(2.0, 2.0, c / 2, c / 2), weight, symmetry=(1.0, 0.0))

    def _j(self, t, r):
        return 0.5 * self.c * r * r

    def _conj(self, t, s):
        return 0.5 * s * s / self.c

    def _sub(self, t, r):
        g = self.c * r
        return g, g

    def _curv(self, t, r):
        return np.full_like(r, self.c)

    def _prox(self, t, z, lam):
        return z / (1.0 + lam * self.c)

    def config(self):
        return {"kind": "quadratic", "c": self.c}


class Power(ConvexPotential):
    """``j(r) = a |r|^p`` with ``p > 1``."""

    kind = "power"

    def __init__(self, p: float, a: float = 1.0, weight=None):
        if not p > 1:
            raise DomainError("power exponent must exceed 1")
        if not a > 0:
            raise DomainError("power coefficient must be positive")
        self.p = float(p)
        self.a = float(a)
        super().__init__(Growth(p, p, a, a), weight, symmetry=(1.0, 0.0))

    def _j(self, t, r):
        return self.a * np.abs(r) ** self.p

    def _conj(self, t, s):
        p, a = self.p, self.a
        q = p / (p - 1.0)
        return (p - 1.0) * a * (np.abs(s) / (a * p)) ** q

    def _sub(self, t, r):
        g = self.a * self.p * np.abs(r) ** (self.p - 1.0) * np.sign(r)
        return g, g

    def _curv(self, t, r):
        p = self.p
        with np.errstate(divide="ignore"):
            c = self.a * p * (p - 1.0) * np.abs(r) ** (p - 2.0)
        return np.minimum(c, 1e300)

    def _prox(self, t, z, lam):
        p, a = self.p, self.a
        target = np.abs(z)
        rho = _bisect_monotone(lambda x: x + lam * a * p * x ** (p - 1.0), target,
                               np.zeros_like(target), target)
        # Newton polish on rho + lam*a*p*rho^(p-1) = |z|
        for _ in range(2):
            f = rho + lam * a * p * rho ** (p - 1.0) - target
            with np.errstate(divide="ignore", invalid="ignore"):
                df = 1.0 + lam * a * p * (p - 1.0) * rho ** (p - 2.0)
                step = np.where(np.isfinite(df) & (rho > 0), f / df, 0.0)
            rho = np.clip(rho - step, 0.0, target)
        return np.sign(z) * rho

    def config(self):
        return {"kind": "power", "p": self.p, "a": self.a}


class Piecewise(ConvexPotential):
    """Piecewise linear-quadratic potential with possibly discontinuous slope.

    On segment ``i`` (between consecutive breakpoints) the derivative is
    ``m_i + k_i r``; jumps of the derivative at breakpoints are filled by the
    whole interval between the one-sided slopes.  ``j(0) = 0``.
    """

    kind = "piecewise"

    def __init__(self, breakpoints, slopes, curvatures, weight=None):
        b = np.asarray(breakpoints, dtype=float)
        m = np.asarray(slopes, dtype=float)
        k = np.asarray(curvatures, dtype=float)
        if b.ndim != 1 or m.shape != (b.size + 1,) or k.shape != (b.size + 1,):
            raise DomainError("need len(slopes) == len(curvatures) == len(breakpoints) + 1")
        if np.any(np.diff(b) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(k < 0) or k[0] <= 0 or k[-1] <= 0:
            raise DomainError("curvatures must be >= 0 and positive on the outer segments")
        left = m[:-1] + k[:-1] * b
        right = m[1:] + k[1:] * b
        if np.any(left > right + 1e-14):
            raise DomainError("derivative must be non-decreasing across breakpoints")
        self.b, self.m, self.k = b, m, k
        # constants making j continuous with j(0) = 0
        F = lambda i, r: m[i] * r + 0.5 * k[i] * r * r
        C = np.zeros(b.size + 1)
        i0 = int(np.searchsorted(b, 0.0, side="right"))
        for i in range(i0, b.size):
            C[i + 1] = F(i, b[i]) + C[i] - F(i + 1, b[i])
        for i in range(i0 - 1, -1, -1):
            C[i] = F(i + 1, b[i]) + C[i + 1] - F(i, b[i])
        self.C = C
        super().__init__(self._exact_growth(), weight)

    def _seg(self, r):
        return np.searchsorted(self.b, r, side="right")

    def _j(self, t, r):
        i = self._seg(r)
        return self.m[i] * r + 0.5 * self.k[i] * r * r + self.C[i]

    def _sub(self, t, r):
        i = self._seg(r)
        val = self.m[i] + self.k[i] * r
        lo = val.copy() if np.ndim(val) else np.array(val)
        hi = lo.copy()
        for j, bj in enumerate(self.b):
            at = r == bj
            if np.any(at):
                lo = np.where(at, self.m[j] + self.k[j] * bj, lo)
                hi = np.where(at, self.m[j + 1] + self.k[j + 1] * bj, hi)
        return lo, hi

    def _curv(self, t, r):
        return self.k[self._seg(r)].astype(float)

    def _edges(self):
        return np.concatenate(([-np.inf], self.b, [np.inf]))

    def _invert(self, s, lam):
        """Solve ``s in r/lam' + dj(r)`` style inclusions; lam=None inverts dj alone."""
        e = self._edges()
        r = np.full(np.shape(s), np.nan)
        for i in range(self.b.size + 1):
            lo_e, hi_e = e[i], e[i + 1]
            if lam is None:
                if self.k[i] > 0:
                    cand = (s - self.m[i]) / self.k[i]
                else:
                    cand = np.where(s == self.m[i], np.clip(0.0, lo_e, hi_e), np.nan)
            else:
                cand = (s - lam * self.m[i]) / (1.0 + lam * self.k[i])
            ok = (cand >= lo_e) & (cand <= hi_e) & np.isnan(r)
            r = np.where(ok, cand, r)
        for j, bj in enumerate(self.b):
            a_l = self.m[j] + self.k[j] * bj
            a_r = self.m[j + 1] + self.k[j + 1] * bj
            if lam is None:
                lo_s, hi_s = a_l, a_r
            else:
                lo_s, hi_s = bj + lam * a_l, bj + lam * a_r
            ok = (s >= lo_s) & (s <= hi_s) & np.isnan(r)
            r = np.where(ok, bj, r)
        if np.any(np.isnan(r)):
            raise NumericError("piecewise inversion failed")
        return r

    def _conj(self, t, s):
        r = self._invert(s, None)
        return s * r - self._j(t, r)

    def _prox(self, t, z, lam):
        return self._invert(z, lam)

    def _quad_extreme(self, alpha, find_min):
        e = self._edges()
        vals = []
        for i in range(self.b.size + 1):
            coef = 0.5 * self.k[i] - alpha
            cands = [x for x in (e[i], e[i + 1]) if np.isfinite(x)]
            if coef != 0:
                v = -self.m[i] / (2 * coef)
                cands.append(float(np.clip(v, e[i], e[i + 1])))
            for x in cands:
                if np.isfinite(x):
                    vals.append(self.m[i] * x + coef * x * x + self.C[i])
        return min(vals) if find_min else max(vals)

    def _exact_growth(self):
        a1 = 0.25 * min(self.k[0], self.k[-1])
        a2 = 0.5 * float(self.k.max()) + 1.0
        g1 = self._quad_extreme(a1, True)
        g2 = self._quad_extreme(a2, False)
        margin = 1e-12 * (1 + abs(g1) + abs(g2))
        return Growth(2.0, 2.0, a1, a2, g1 - margin, g2 + margin)

    def config(self):
        return {"kind": "piecewise", "breakpoints": self.b.tolist(),
                "slopes": self.m.tolist(), "curvatures": self.k.tolist()}


class Thermostat(ConvexPotential):
    """Relay potential ``a1(t) r^+ + a2(t) r^- + kappa r^2/2``.

    Its subdifferential at ``r = 0`` is ``[-a2(t), a1(t)]``.  The quadratic
    part (``kappa > 0``) supplies the quadratic growth bound.  The relay
    coefficients may be modulated in time as ``a_i (1 + eps sin(2 pi t / period))``.
    """

    kind = "thermostat"

    def __init__(self, alpha1: float = 1.0, alpha2: float = 1.0, kappa: float = 1.0,
                 modulation: float = 0.0, period: float = 1.0, weight=None):
        if not (alpha1 > 0 and alpha2 > 0 and kappa > 0):
            raise DomainError("thermostat needs alpha1, alpha2, kappa > 0")
        if not 0 <= modulation < 1:
            raise DomainError("modulation must lie in [0, 1)")
        self.alpha1_0, self.alpha2_0 = float(alpha1), float(alpha2)
        self.kappa = float(kappa)
        self.modulation, self.period = float(modulation), float(period)
        amax = max(alpha1, alpha2) * (1 + modulation)
        growth = Growth(2.0, 2.0, kappa / 2, (amax + kappa) / 2, 0.0, amax / 2)
        super().__init__(growth, weight)

    @property
    def time_dependent(self):
        return self.weight is not None or self.modulation != 0

    def _mod(self, t):
        return 1.0 + self.modulation * math.sin(2 * math.pi * t / self.period)

    def alphas(self, t):
        f = self._mod(t)
        return self.alpha1_0 * f, self.alpha2_0 * f

    def _j(self, t, r):
        a1, a2 = self.alphas(t)
        return a1 * np.maximum(r, 0) + a2 * np.maximum(-r, 0) + 0.5 * self.kappa * r * r

    def _sub(self, t, r):
        a1, a2 = self.alphas(t)
        base = self.kappa * r
        lo = np.where(r > 0, a1 + base, np.where(r < 0, -a2 + base, -a2))
        hi = np.where(r > 0, a1 + base, np.where(r < 0, -a2 + base, a1))
        return lo, hi

    def _curv(self, t, r):
        return np.full_like(r, self.kappa)

    def _conj(self, t, s):
        a1, a2 = self.alphas(t)
        over = np.maximum(s - a1, 0) + np.minimum(s + a2, 0)
        return 0.5 * over * over / self.kappa

    def _prox(self, t, z, lam):
        a1, a2 = self.alphas(t)
        shrunk = np.where(z > lam * a1, z - lam * a1, np.where(z < -lam * a2, z + lam * a2, 0.0))
        return shrunk / (1.0 + lam * self.kappa)

    def config(self):
        return {"kind": "thermostat", "alpha1": self.alpha1_0, "alpha2": self.alpha2_0,
                "kappa": self.kappa, "modulation": self.modulation, "period": self.period}


class Custom(ConvexPotential):
    """User-supplied convex integrand ``fn(t, r)`` with a declared growth certificate.

    Conjugates and proxes are computed numerically; the subdifferential is the
    outer approximation by one-sided difference quotients (exact when
    ``derivative`` is supplied).
    """

    kind = "custom"

    def __init__(self, fn, growth: Growth, derivative=None, symmetry=None, weight=None,
                 label="custom"):
        self.fn = fn
        self.derivative = derivative
        self.label = label
        super().__init__(growth, weight, symmetry)

    def _j(self, t, r):
        return np.asarray(self.fn(t, r), dtype=float)

    def _sub(self, t, r):
        if self.derivative is not None:
            g = np.asarray(self.derivative(t, r), dtype=float)
            return g, g
        d = 1e-6 * np.maximum(1.0, np.abs(r))
        j0 = self._j(t, r)
        return (j0 - self._j(t, r - d)) / d, (self._j(t, r + d) - j0) / d

    def config(self):
        return {"kind": "custom", "label": self.label}


class _Scaled(ConvexPotential):
    kind = "scaled"

    def __init__(self, base: ConvexPotential, factor: float):
        if not factor > 0:
            raise DomainError("scale factor must be positive")
        self.base, self.factor = base, float(factor)
        g = base.growth
        growth = Growth(g.p1, g.p2, factor * g.alpha1, factor * g.alpha2,
                        factor * g.gamma1, factor * g.gamma2)
        c1, c2 = base.symmetry
        super().__init__(growth, None, symmetry=(c1, factor * c2))

    @property
    def time_dependent(self):
        return self.base.time_dependent

    def _j(self, t, r):
        return self.factor * self.base.w(t) * self.base._j(t, r)

    def _conj(self, t, s):
        c = self.factor * self.base.w(t)
        return c * self.base._conj(t, s / c)

    def _sub(self, t, r):
        c = self.factor * self.base.w(t)
        lo, hi = self.base._sub(t, r)
        return c * lo, c * hi

    def _curv(self, t, r):
        return self.factor * self.base.w(t) * self.base._curv(t, r)

    def _prox(self, t, z, lam):
        return self.base._prox(t, z, lam * self.factor * self.base.w(t))

    def config(self):
        return {"kind": "scaled", "factor": self.factor, "base": self.base.config()}


class _Sum(ConvexPotential):
    """Sum of two potentials; prox and conjugate are computed numerically when no closed form exists."""

    kind = "sum"

    def __init__(self, first: ConvexPotential, second: ConvexPotential):
        self.first, self.second = first, second
        g1, g2 = first.growth, second.growth
        p1 = max(g1.p1, g2.p1)
        p2 = max(g1.p2, g2.p2)
        # the term with the larger lower exponent dominates; the other is >= its gamma1
        dom, other = (g1, g2) if g1.p1 >= g2.p1 else (g2, g1)
        a1, gam1 = dom.alpha1, dom.gamma1 + other.gamma1
        # |r|^q <= 1 + |r|^p2 for q <= p2
        a2 = g1.alpha2 + g2.alpha2
        gam2 = g1.gamma2 + g2.gamma2 + a2
        if p1 == p2:
            symmetry = None
        else:
            symmetry = (max(first.symmetry[0], second.symmetry[0]),
                        first.symmetry[1] + second.symmetry[1])
        super().__init__(Growth(p1, p2, a1, a2, gam1, gam2), None, symmetry)

    @property
    def time_dependent(self):
        return self.first.time_dependent or self.second.time_dependent

    def _j(self, t, r):
        return self.first.eval(t, r) + self.second.eval(t, r)

    def _sub(self, t, r):
        l1, h1 = self.first.subgradient(t, r)
        l2, h2 = self.second.subgradient(t, r)
        return np.asarray(l1) + l2, np.asarray(h1) + h2

    def _curv(self, t, r):
        return np.asarray(self.first.curvature(t, r)) + self.second.curvature(t, r)

    def _prox(self, t, z, lam):
        # z in r + lam (dj1 + dj2)(r): the graph is strictly increasing, bisect on it
        def lo_graph(x):
            lo, _ = self._sub(t, x)
            return x + lam * lo

        def hi_graph(x):
            _, hi = self._sub(t, x)
            return x + lam * hi

        left = np.minimum(z, self.first.prox(t, z, lam)) - 1.0
        right = np.maximum(z, self.first.prox(t, z, lam)) + 1.0
        while np.any(lo_graph(left) > z):
            left = np.where(lo_graph(left) > z, 2 * left - np.abs(z) - 1, left)
        while np.any(hi_graph(right) < z):
            right = np.where(hi_graph(right) < z, 2 * right + np.abs(z) + 1, right)
        return _bisect_monotone(lo_graph, z, left, right)

    def _conj(self, t, s):
        # j*(s) = s r - j(r) at any r with s in dj(r); locate r on the monotone subgradient graph
        s = np.asarray(s, dtype=float)
        lo_graph = lambda x: self._sub(t, x)[0]
        hi_graph = lambda x: self._sub(t, x)[1]
        left = np.full(s.shape, -1.0)
        right = np.full(s.shape, 1.0)
        while np.any(hi_graph(left) > s):
            if np.min(left) < -BRACKET_CAP:
                raise UnboundedConjugateError("conjugate of sum is not attained")
            left = np.where(hi_graph(left) > s, 2 * left, left)
        while np.any(lo_graph(right) < s):
            if np.max(right) > BRACKET_CAP:
                raise UnboundedConjugateError("conjugate of sum is not attained")
            right = np.where(lo_graph(right) < s, 2 * right, right)
        r = _bisect_monotone(lo_graph, s, left, right)
        return s * r - np.asarray(self._j(t, r))

    def config(self):
        return {"kind": "sum", "terms": [self.first.config(), self.second.config()]}


def from_config(cfg: dict) -> ConvexPotential:
    """Build a potential from its experiment-config block."""
    kind = cfg.get("kind")
    if kind == "quadratic":
        return Quadratic(cfg.get("c", 1.0))
    if kind == "power":
        return Power(cfg["p"], cfg.get("a", 1.0))
    if kind == "piecewise":
        return Piecewise(cfg["breakpoints"], cfg["slopes"], cfg["curvatures"])
    if kind == "thermostat":
        return Thermostat(cfg.get("alpha1", 1.0), cfg.get("alpha2", 1.0), cfg.get("kappa", 1.0),
                          cfg.get("modulation", 0.0), cfg.get("period", 1.0))
    if kind == "sum":
        first, second = (from_config(c) for c in cfg["terms"])
        return first.plus(second)
    if kind == "scaled":
        return from_config(cfg["base"]).scaled(cfg["factor"])
    raise DomainError(f"unknown potential kind {kind!r}")
