"""Divergence-free transport fields and the skew-adjoint noise operators they generate.

Every velocity field here factors as ``b(t, x) = A(t) * b0(x)`` with a scalar
amplitude ``A`` that is affine in time, so ``dB/dt = A'(t) B0`` and the group
``exp(s B(t))`` depends on ``s * A(t)`` only.  Two operator forms are
supported:

* ``diffusion``: ``B u = b . grad u`` on L2, group applied semi-Lagrangian
  style by interpolating ``u`` at the characteristic foot ``Z(s, x)``;
* ``porous_media``: ``B u = b . grad((-lap)^-1 u)`` on H^-1, group obtained
  by RK4 integration of ``du/ds = B u``.

All matrices act on the free-node vector of the geometry (see
:attr:`Geometry.free`).
"""
from __future__ import annotations

import math
from collections import OrderedDict
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import DomainError, FlowIntegrityError, StiffnessError, UsageError
from .field import Geometry, ScalarField

FLOW_RTOL = 1e-12
FLOW_ATOL = 1e-13
PM_SUBSTEP = 0.02


class TransportField:
    """Velocity field ``A(t) b0(x)`` with ``A(t) = a0 + a1 t``.

    kinds
    -----
    ``zero``         b = 0 in any dimension
    ``constant1d``   b0 = 1 on a circle (translation)
    ``stream2d``     b0 = rot(sigma0), sigma0 = sin^2(mx pi x/Lx) sin^2(my pi y/Ly)
    ``rotation2d``   b0 = g(r) (-(y-yc), x-xc), g = (1 - r^2/R^2)^2 inside radius R
                     (``R = None`` gives a rigid rotation, usable for flows only)
    """

    KINDS = ("zero", "constant1d", "stream2d", "rotation2d")

    def __init__(self, kind: str, a0: float = 0.0, a1: float = 0.0, lengths=(1.0, 1.0),
                 modes=(1, 1), center=(0.5, 0.5), radius: Optional[float] = None):
        if kind not in self.KINDS:
            raise DomainError(f"unknown transport kind {kind!r}")
        self.kind = kind
        self.a0, self.a1 = (0.0, 0.0) if kind == "zero" else (float(a0), float(a1))
        self.lengths = tuple(float(x) for x in lengths)
        self.modes = tuple(int(m) for m in modes)
        self.center = tuple(float(c) for c in center)
        self.radius = None if radius is None else float(radius)

    @classmethod
    def from_config(cls, cfg: dict) -> "TransportField":
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        if kind == "constant1d" and "c" in cfg:
            cfg["a0"] = cfg.pop("c")
        if kind == "rotation2d" and "omega" in cfg:
            cfg["a0"] = cfg.pop("omega")
        return cls(kind, **cfg)

    def config(self) -> dict:
        out = {"kind": self.kind, "a0": self.a0, "a1": self.a1}
        if self.kind == "stream2d":
            out.update(lengths=list(self.lengths), modes=list(self.modes))
        if self.kind == "rotation2d":
            out.update(center=list(self.center), radius=self.radius)
        return out

    @property
    def dim(self) -> Optional[int]:
        return {"zero": None, "constant1d": 1, "stream2d": 2, "rotation2d": 2}[self.kind]

    @property
    def autonomous(self) -> bool:
        return self.a1 == 0.0

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.a0 == 0.0 and self.a1 == 0.0)

    def amplitude(self, t: float) -> float:
        return self.a0 + self.a1 * t

    def amplitude_dot(self, t: float) -> float:
        return self.a1

    # -- profile b0 --------------------------------------------------------
    def profile(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == "zero":
            return np.zeros_like(pts)
        if self.kind == "constant1d":
            return np.ones_like(pts)
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "stream2d":
            (Lx, Ly), (mx, my) = self.lengths, self.modes
            kx, ky = mx * math.pi / Lx, my * math.pi / Ly
            sx, sy = np.sin(kx * x) ** 2, np.sin(ky * y) ** 2
            dsx, dsy = kx * np.sin(2 * kx * x), ky * np.sin(2 * ky * y)
            return np.stack([sx * dsy, -dsx * sy], axis=1)
        xc, yc = self.center
        dx, dy = x - xc, y - yc
        return self._taper(dx, dy)[:, None] * np.stack([-dy, dx], axis=1)

    def _taper(self, dx, dy):
        if self.radius is None:
            return np.ones_like(dx)
        q = (dx * dx + dy * dy) / self.radius**2
        return np.where(q < 1.0, (1.0 - q) ** 2, 0.0)

    def stream0(self, pts: np.ndarray) -> np.ndarray:
        """Stream function of the profile (2-D kinds), ``b0 = (d_y, -d_x) sigma0``."""
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "stream2d":
            (Lx, Ly), (mx, my) = self.lengths, self.modes
            return np.sin(mx * math.pi * x / Lx) ** 2 * np.sin(my * math.pi * y / Ly) ** 2
        if self.kind == "rotation2d":
            xc, yc = self.center
            r2 = (x - xc) ** 2 + (y - yc) ** 2
            if self.radius is None:
                return -0.5 * r2
            R2 = self.radius**2
            q = np.minimum(r2 / R2, 1.0)
            return -(R2 / 6.0) * (1.0 - (1.0 - q) ** 3)
        raise UsageError(f"{self.kind} has no stream function")

    def velocity(self, t: float, pts) -> np.ndarray:
        return self.amplitude(t) * self.profile(pts)

    def velocity_dt(self, t: float, pts) -> np.ndarray:
        return self.amplitude_dot(t) * self.profile(pts)

    # -- admissibility -----------------------------------------------------
    def check_geometry(self, geometry: Geometry, require_zero_on_boundary: bool = False) -> None:
        """Reject fields that are not divergence-free and tangential on ``geometry``."""
        if self.is_zero:
            return
        if self.dim != geometry.dim:
            raise DomainError(f"{self.kind} transport does not fit a {geometry.dim}-D geometry")
        if geometry.dim == 1 and not geometry.periodic:
            raise DomainError(
                "on a bounded interval div b = 0 and b.n = 0 force b = 0; "
                "use a periodic geometry or zero transport")
        if self.kind == "rotation2d" and self.radius is None:
            raise DomainError("rigid rotation does not fit a grid domain; set a radius")
        if self.kind == "rotation2d":
            xc, yc = self.center
            Lx, Ly = geometry.lengths
            if not (self.radius <= min(xc, yc, Lx - xc, Ly - yc) + 1e-12):
                raise DomainError("rotation disk must lie inside the domain")
        if not geometry.periodic or require_zero_on_boundary:
            b = self.profile(geometry.coords)[geometry.boundary_mask]
            if require_zero_on_boundary and np.max(np.abs(b), initial=0.0) > 1e-12:
                raise DomainError("this energy form needs b = 0 on the boundary")
            if not geometry.periodic and geometry.dim == 2:
                c = geometry.coords[geometry.boundary_mask]
                Lx, Ly = geometry.lengths
                nx = np.where(np.isclose(c[:, 0], 0) | np.isclose(c[:, 0], Lx), 1.0, 0.0)
                ny = np.where(np.isclose(c[:, 1], 0) | np.isclose(c[:, 1], Ly), 1.0, 0.0)
                if np.max(np.abs(b[:, 0] * nx) + np.abs(b[:, 1] * ny), initial=0.0) > 1e-12:
                    raise DomainError("b . n must vanish on the boundary")

    def discrete_profile(self, geometry: Geometry) -> np.ndarray:
        """Node samples of b0, shape ``(dim, size)``; 2-D fields come from central
        differences of the sampled stream function so their discrete divergence vanishes."""
        if self.is_zero:
            return np.zeros((geometry.dim, geometry.size))
        if self.kind == "constant1d":
            return np.ones((1, geometry.size))
        sigma = self.stream0(geometry.coords)
        Dx, Dy = _interior_central(geometry)
        return np.stack([Dy @ sigma, -(Dx @ sigma)])

    # -- characteristics -----------------------------------------------------
    def sup_norm(self, t: float) -> float:
        if self.is_zero:
            return 0.0
        if self.kind == "constant1d":
            return abs(self.amplitude(t))
        if self.kind == "stream2d":
            (Lx, Ly), (mx, my) = self.lengths, self.modes
            m = max(my * math.pi / Ly, mx * math.pi / Lx)
            return abs(self.amplitude(t)) * m
        if self.radius is None:
            return abs(self.amplitude(t)) * 2.0 * max(self.lengths)
        return abs(self.amplitude(t)) * self.radius

    def flow(self, t: float, s: float, pts, period=None) -> np.ndarray:
        """Integrate ``dZ/ds = b(t, Z)`` (t frozen) from ``Z(0) = pts`` with an adaptive DOP853 scheme."""
        pts = np.array(np.atleast_2d(pts), dtype=float)
        if s == 0.0 or self.is_zero:
            return pts
        if self.kind == "constant1d":
            # uniform velocity: the characteristic is an explicit translation
            z = pts + s * self.amplitude(t)
            return np.mod(z, period) if period is not None else z
        a = self.amplitude(t)
        shape = pts.shape
        rhs = lambda _, z: a * self.profile(z.reshape(shape)).ravel()
        sol = solve_ivp(rhs, (0.0, s), pts.ravel(), method="DOP853", rtol=FLOW_RTOL, atol=FLOW_ATOL)
        if not sol.success:
            raise FlowIntegrityError(f"characteristic integration failed: {sol.message}")
        z = sol.y[:, -1].reshape(shape)
        if period is not None:
            z = np.mod(z, period)
        return z


def _interior_central(geometry: Geometry):
    """Central differences without boundary closures (rows at the boundary are zero)."""
    from .field import _fd_1d

    mats = []
    for ax in range(geometry.dim):
        bc = "periodic" if geometry.periodic else "dirichlet"
        n = geometry.shape[ax]
        if bc == "periodic":
            D = _fd_1d(n, geometry.h[ax], bc, "central")
        else:
            D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [1, -1], shape=(n, n), format="lil")
            D[0, :] = 0
            D[n - 1, :] = 0
            D = sp.csr_matrix(D) / (2 * geometry.h[ax])
        ms = [sp.identity(geometry.shape[a]) for a in range(geometry.dim)]
        ms[ax] = D
        mats.append(ms[0] if geometry.dim == 1 else sp.kron(ms[0], ms[1], format="csr"))
    return mats


# -- interpolation -----------------------------------------------------------

def _cubic_weights(theta):
    t = theta
    return np.stack([
        -t * (t - 1) * (t - 2) / 6.0,
        (t + 1) * (t - 1) * (t - 2) / 2.0,
        -(t + 1) * t * (t - 2) / 2.0,
        (t + 1) * t * (t - 1) / 6.0,
    ], axis=-1)


def _axis_stencil(x, origin, h, n, bc, kind):
    """Indices, weights and reflection signs of the 1-D interpolation stencil."""
    u = (x - origin) / h
    i0 = np.floor(u)
    theta = u - i0
    snap_up = theta > 1 - 1e-12
    i0 = np.where(snap_up, i0 + 1, i0).astype(int)
    theta = np.where(snap_up | (theta < 1e-12), 0.0, theta)
    if kind == "linear":
        offs = np.array([0, 1])
        w = np.stack([1 - theta, theta], axis=-1)
    else:
        offs = np.array([-1, 0, 1, 2])
        w = _cubic_weights(theta)
    idx = i0[:, None] + offs[None, :]
    sign = np.ones_like(w)
    if bc == "periodic":
        idx = np.mod(idx, n)
    else:
        odd = -1.0 if bc == "dirichlet" else 1.0
        lo = idx < 0
        idx = np.where(lo, -idx, idx)
        sign = np.where(lo, odd, sign)
        hi = idx > n - 1
        idx = np.where(hi, 2 * (n - 1) - idx, idx)
        sign = np.where(hi, odd * sign, sign)
        if np.any((idx < 0) | (idx > n - 1)):
            raise FlowIntegrityError("interpolation point far outside the domain")
    return idx, w * sign


def _stencil_arrays(geometry: Geometry, pts: np.ndarray, kind: str):
    """Column indices and weights, shape ``(npts, stencil)``, of the interpolant at ``pts``."""
    if kind not in ("linear", "cubic"):
        raise DomainError(f"interpolation kind {kind!r} is not linear")
    pts = np.atleast_2d(pts)
    npts = pts.shape[0]
    stencils = [
        _axis_stencil(pts[:, ax], geometry.origin[ax] if ax < len(geometry.origin) else 0.0,
                      geometry.h[ax], geometry.shape[ax], geometry.boundary, kind)
        for ax in range(geometry.dim)
    ]
    if geometry.dim == 1:
        return stencils[0]
    (ix, wx), (iy, wy) = stencils
    ny = geometry.shape[1]
    cols = (ix[:, :, None] * ny + iy[:, None, :]).reshape(npts, -1)
    vals = (wx[:, :, None] * wy[:, None, :]).reshape(npts, -1)
    return cols, vals


def interpolation_matrix(geometry: Geometry, pts: np.ndarray, kind: str = "cubic") -> sp.csr_matrix:
    """Sparse matrix mapping node values to values at ``pts`` (linear or cubic Lagrange)."""
    cols, vals = _stencil_arrays(geometry, pts, kind)
    npts = cols.shape[0]
    rows = np.repeat(np.arange(npts), cols.shape[1])
    return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(npts, geometry.size))


def interpolate(geometry: Geometry, values: np.ndarray, pts: np.ndarray, kind: str = "cubic") -> np.ndarray:
    """Interpolate node values at ``pts``; ``cubic_clamped`` limits cubic values to the
    range of the enclosing cell (monotonicity-preserving, nonlinear)."""
    if kind != "cubic_clamped":
        return interpolation_matrix(geometry, pts, kind) @ values
    cubic = interpolation_matrix(geometry, pts, "cubic") @ values
    lin = interpolation_matrix(geometry, pts, "linear").tocsr()
    lo = np.empty(lin.shape[0])
    hi = np.empty(lin.shape[0])
    for r in range(lin.shape[0]):
        seg = lin.indices[lin.indptr[r]:lin.indptr[r + 1]]
        wts = lin.data[lin.indptr[r]:lin.indptr[r + 1]]
        vals = values[seg] * np.sign(wts + (wts == 0))
        lo[r], hi[r] = vals.min(), vals.max()
    return np.clip(cubic, lo, hi)


class NoiseOperator:
    """Skew-adjoint operator ``B(t)`` built from a transport field on a geometry."""

    FORMS = ("diffusion", "porous_media")
    # "exponential" uses exp(sigma B0) of the discrete skew generator: exactly
    # isometric and invertible, at the cost of a dense matrix
    INTERPOLATIONS = ("cubic", "linear", "cubic_clamped", "exponential")

    def __init__(self, form: str, field: TransportField, geometry: Geometry,
                 interpolation: str = "cubic", quad_nodes: int = 8, cache_size: int = 64):
        if form not in self.FORMS:
            raise DomainError(f"unknown operator form {form!r}")
        if form == "porous_media" and geometry.boundary == "neumann":
            raise DomainError("the H^-1 pivot needs a Dirichlet or periodic geometry")
        field.check_geometry(geometry)
        if interpolation not in self.INTERPOLATIONS:
            raise UsageError(f"unknown interpolation {interpolation!r}")
        self.form = form
        self.field = field
        self.geometry = geometry
        self.interpolation = interpolation
        self.quad_nodes = int(quad_nodes)
        self.space = "L2" if form == "diffusion" else "Hminus1"
        self._cache = OrderedDict()
        self._stencil_cache = OrderedDict()
        self._cache_size = cache_size
        self._build()

    def _build(self):
        g = self.geometry
        f = g.free
        w = g.weights
        b0 = self.field.discrete_profile(g)
        terms = []
        for k, D in enumerate(g.central):
            BD = sp.diags(b0[k]) @ D
            terms.append(BD)
        BD = sum(terms[1:], terms[0]).tocsr()
        if g.boundary == "neumann":
            # b vanishes on the boundary: decouple boundary nodes so exp(sB) fixes them
            keep = sp.diags((~g.boundary_mask).astype(float))
            BD = (keep @ BD @ keep).tocsr()
        winv = np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 0.0)
        B0 = 0.5 * (BD - sp.diags(winv) @ BD.T @ sp.diags(w))
        self.B0_l2 = sp.csr_matrix(B0)[f][:, f].tocsr()
        self.b0 = b0
        if self.form == "porous_media":
            self.Linv = g.inv_lap_dense
            self.B0 = self.B0_l2 @ self.Linv
            self._B0_norm = float(np.linalg.norm(self.B0, 2)) if self.B0.size else 0.0
        else:
            self.B0 = self.B0_l2
        self.n = f.size

    # -- operators -------------------------------------------------------------
    def matrix(self, t: float):
        return self.field.amplitude(t) * self.B0

    def matrix_dot(self, t: float):
        return self.field.amplitude_dot(t) * self.B0

    def apply(self, t: float, u: ScalarField) -> ScalarField:
        self._check_space(u)
        out = np.zeros(self.geometry.size)
        out[self.geometry.free] = self.matrix(t) @ u.values[self.geometry.free]
        return u.with_values(out)

    def _check_space(self, u: ScalarField):
        if u.space != self.space:
            raise UsageError(f"{self.form} operator acts on {self.space} fields, got {u.space}")
        if u.geometry != self.geometry:
            raise UsageError("field lives on a different geometry")

    # -- group -----------------------------------------------------------------
    def _key(self, sigma):
        return float(np.round(sigma, 14))

    def group_matrix(self, t: float, s: float):
        """Linear operator ``exp(s B(t))`` on the free-node vector."""
        sigma = s * self.field.amplitude(t)
        if sigma == 0.0 or self.field.is_zero:
            return sp.identity(self.n, format="csr") if self.form == "diffusion" else np.eye(self.n)
        key = self._key(sigma)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        if self.form == "diffusion" and self.interpolation == "exponential":
            M = sla.expm(sigma * self.B0.toarray())
        elif self.form == "diffusion":
            M = self._semi_lagrangian(sigma, self.interpolation if self.interpolation != "cubic_clamped" else "cubic")
        else:
            M = self._rk4_propagator(sigma)
        self._cache[key] = M
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return M

    def _foot_points(self, sigma):
        g = self.geometry
        period = np.array(g.lengths) if g.periodic else None
        fld = self.field
        # flow of the unit-amplitude profile for "time" sigma
        unit = TransportField(fld.kind, 1.0, 0.0, fld.lengths, fld.modes, fld.center, fld.radius)
        pts = g.coords[g.free]
        z = unit.flow(0.0, sigma, pts, period)
        if not g.periodic:
            lo = np.array(g.origin[: g.dim]) if len(g.origin) >= g.dim else np.zeros(g.dim)
            hi = lo + np.array(g.lengths)
            tol = np.array(g.h)
            if np.any(z < lo - tol) or np.any(z > hi + tol):
                raise FlowIntegrityError("characteristic escaped the domain")
            z = np.clip(z, lo, hi)
        return z

    def _stencil(self, sigma):
        key = self._key(sigma)
        hit = self._stencil_cache.get(key)
        if hit is None:
            kind = "linear" if self.interpolation == "linear" else "cubic"
            hit = _stencil_arrays(self.geometry, self._foot_points(sigma), kind)
            self._stencil_cache[key] = hit
            if len(self._stencil_cache) > self._cache_size:
                self._stencil_cache.popitem(last=False)
        return hit

    def apply_group(self, t: float, s: float, v: np.ndarray) -> np.ndarray:
        """``exp(s B(t)) v`` on a free-node vector without assembling a matrix."""
        sigma = s * self.field.amplitude(t)
        if sigma == 0.0 or self.field.is_zero:
            return np.array(v, dtype=float)
        if self.form == "porous_media" or self.interpolation == "exponential":
            return self.group_matrix(t, s) @ v
        cols, wts = self._stencil(sigma)
        full = np.zeros(self.geometry.size)
        full[self.geometry.free] = v
        return np.einsum("ij,ij->i", full[cols], wts)

    def apply_gamma(self, t: float, beta_t: float, v: np.ndarray, nodes: Optional[int] = None) -> np.ndarray:
        """``Gamma(t) v`` on a free-node vector; same quadrature as :meth:`gamma_matrix`."""
        nodes = nodes or self.quad_nodes
        if self.field.autonomous or beta_t == 0.0 or self.field.is_zero:
            return np.zeros_like(v, dtype=float)
        x, wq = np.polynomial.legendre.leggauss(nodes)
        Bd = self.matrix_dot(t)
        out = np.zeros(self.n)
        for s, w in zip(0.5 * beta_t * (x + 1.0), 0.5 * beta_t * wq):
            out += w * self.apply_group(t, -s, Bd @ self.apply_group(t, s, v))
        return out

    def _semi_lagrangian(self, sigma, kind):
        g = self.geometry
        S = interpolation_matrix(g, self._foot_points(sigma), kind)
        return S[:, g.free].tocsr()

    def _rk4_propagator(self, sigma):
        norm = abs(sigma) * self._B0_norm
        n_steps = max(1, math.ceil(norm / PM_SUBSTEP))
        h = sigma / n_steps
        if abs(h) < 1e-14 and norm > 0:
            raise StiffnessError("RK4 step underflow in porous-media group")
        A = h * self.B0
        A2 = A @ A
        A3 = A2 @ A
        R = np.eye(self.n) + A + A2 / 2 + A3 / 6 + A3 @ A / 24
        return np.linalg.matrix_power(R, n_steps)

    def group_apply(self, t: float, s: float, u: ScalarField) -> ScalarField:
        self._check_space(u)
        if s == 0.0:
            return u.with_values(u.values.copy())
        g = self.geometry
        out = np.zeros(g.size)
        if self.form == "diffusion" and self.interpolation == "cubic_clamped":
            sigma = s * self.field.amplitude(t)
            out[g.free] = interpolate(g, u.values, self._foot_points(sigma), "cubic_clamped")
        else:
            out[g.free] = self.group_matrix(t, s) @ u.values[g.free]
        return u.with_values(out)

    # -- correction operator ---------------------------------------------------
    def gamma_matrix(self, t: float, beta_t: float, nodes: Optional[int] = None):
        """``int_0^beta exp(-s B) dB/dt exp(s B) ds`` by Gauss-Legendre quadrature."""
        nodes = nodes or self.quad_nodes
        if self.field.autonomous or beta_t == 0.0 or self.field.is_zero:
            return sp.csr_matrix((self.n, self.n)) if self.form == "diffusion" else np.zeros((self.n, self.n))
        x, wq = np.polynomial.legendre.leggauss(nodes)
        s_nodes = 0.5 * beta_t * (x + 1.0)
        w_nodes = 0.5 * beta_t * wq
        Bd = self.matrix_dot(t)
        total = None
        for s, w in zip(s_nodes, w_nodes):
            term = w * (self.group_matrix(t, -s) @ (Bd @ self.group_matrix(t, s)))
            total = term if total is None else total + term
        return total

    def gamma_apply(self, t: float, beta_t: float, y: ScalarField, nodes: Optional[int] = None) -> ScalarField:
        self._check_space(y)
        G = self.gamma_matrix(t, beta_t, nodes)
        out = np.zeros(self.geometry.size)
        out[self.geometry.free] = G @ y.values[self.geometry.free]
        return y.with_values(out)

    # -- diagnostics -------------------------------------------------------------
    def pivot_matrix(self):
        """Gram matrix of the pivot inner product on free nodes."""
        w = self.geometry.weights[self.geometry.free]
        if self.form == "diffusion":
            return sp.diags(w).tocsr()
        return w[:, None] * self.geometry.inv_lap_dense

    def skewness_defect(self, t: float, u: ScalarField) -> float:
        self._check_space(u)
        v = u.values[self.geometry.free]
        P = self.pivot_matrix()
        nrm = float(v @ (P @ v))
        if nrm == 0.0:
            return 0.0
        return abs(float(v @ (P @ (self.matrix(t) @ v)))) / nrm


def commutator_defect(op1: NoiseOperator, op2: NoiseOperator, t: float, samples: int = 3, seed: int = 0) -> float:
    """Relative size of ``B1 B2 u - B2 B1 u`` over random ``u``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        u = rng.standard_normal(op1.n)
        a = op1.matrix(t) @ (op2.matrix(t) @ u)
        b = op2.matrix(t) @ (op1.matrix(t) @ u)
        scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
        worst = max(worst, float(np.linalg.norm(a - b) / scale) if scale > 1e-300 else 0.0)
    return worst
