"""Uniform grids, grid functions and finite-difference calculus.

A :class:`Geometry` describes a 1-D interval/circle or a 2-D rectangle/torus
with a uniform node lattice.  Operators are sparse matrices acting on the
flattened (C-order) node vector.  Dirichlet geometries keep boundary nodes in
the vector but every operator is restricted to the free (interior) nodes, so
``-laplacian`` is symmetric positive definite there.

The L2 pairing is the weighted node sum ``sum(w * u * v)`` with trapezoid
weights; the H^-1 pairing is ``<u, (-lap)^-1 v>_L2`` (mean-zero subspace on
periodic grids).
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, ShapeError, SolverError, UsageError

MAGIC = b"STFD1"
SPACES = ("L2", "Hminus1")


def _fd_1d(n_nodes, h, bc, kind):
    """1-D difference matrices on ``n_nodes`` nodes.

    ``kind`` is ``"central"`` (node -> node), ``"forward"`` (node -> edge) or
    ``"lap"`` (node -> node, second difference).
    """
    n = n_nodes
    if kind == "central":
        if bc == "periodic":
            D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [1, -1], shape=(n, n), format="lil")
            D[0, n - 1] = -1.0
            D[n - 1, 0] = 1.0
            return D.tocsr() / (2 * h)
        D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [1, -1], shape=(n, n), format="lil") / (2 * h)
        if bc == "dirichlet":
            D[0, :] = 0
            D[n - 1, :] = 0
            D[:, 0] = 0
            D[:, n - 1] = 0
        else:  # neumann: first-order one-sided closure (SBP with trapezoid weights)
            D[0, 0], D[0, 1] = -1 / h, 1 / h
            D[n - 1, n - 2], D[n - 1, n - 1] = -1 / h, 1 / h
        return sp.csr_matrix(D)
    if kind == "forward":
        if bc == "periodic":
            F = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
            F[n - 1, 0] = 1.0
            return F.tocsr() / h
        return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h
    if kind == "lap":
        F = _fd_1d(n, h, bc, "forward")
        L = -(F.T @ F)
        if bc == "neumann":
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            return sp.diags(1.0 / w) @ L
        if bc == "dirichlet":
            L = L.tolil()
            L[0, :] = 0
            L[n - 1, :] = 0
            L[:, 0] = 0
            L[:, n - 1] = 0
            return L.tocsr()
        return L.tocsr()
    raise ValueError(kind)


@dataclass(frozen=True)
class Geometry:
    """Uniform grid on an interval, circle, rectangle or 2-torus.

    ``counts`` are interval counts per axis.  Periodic axes have ``N`` nodes,
    bounded axes ``N + 1`` (boundary nodes included).
    """

    kind: str
    lengths: tuple
    counts: tuple
    boundary: str
    origin: tuple = (0.0,)

    def __post_init__(self):
        if self.boundary not in ("periodic", "dirichlet", "neumann"):
            raise DomainError(f"unknown boundary {self.boundary!r}")
        if len(self.lengths) != len(self.counts) or len(self.counts) not in (1, 2):
            raise DomainError("only 1-D and 2-D grids are supported")
        if any(n < 4 for n in self.counts):
            raise DomainError("need at least 4 intervals per axis")
        if any(not L > 0 for L in self.lengths):
            raise DomainError("domain lengths must be positive")

    # -- constructors ---------------------------------------------------
    @classmethod
    def torus1d(cls, L, N):
        return cls("torus1d", (float(L),), (int(N),), "periodic", (0.0,))

    @classmethod
    def interval_dirichlet(cls, a, b, N):
        return cls("interval_dirichlet", (float(b - a),), (int(N),), "dirichlet", (float(a),))

    @classmethod
    def interval_neumann(cls, a, b, N):
        return cls("interval_neumann", (float(b - a),), (int(N),), "neumann", (float(a),))

    @classmethod
    def rect2d(cls, Lx, Ly, Nx, Ny, boundary="dirichlet"):
        return cls("rect2d", (float(Lx), float(Ly)), (int(Nx), int(Ny)), boundary, (0.0, 0.0))

    @classmethod
    def from_config(cls, cfg):
        kind = cfg["kind"]
        if kind == "torus1d":
            return cls.torus1d(cfg.get("L", 1.0), cfg["N"])
        if kind == "interval_dirichlet":
            return cls.interval_dirichlet(cfg.get("a", 0.0), cfg.get("b", 1.0), cfg["N"])
        if kind == "interval_neumann":
            return cls.interval_neumann(cfg.get("a", 0.0), cfg.get("b", 1.0), cfg["N"])
        if kind == "rect2d":
            return cls.rect2d(cfg.get("Lx", 1.0), cfg.get("Ly", 1.0), cfg["Nx"], cfg["Ny"],
                              cfg.get("boundary", "dirichlet"))
        raise DomainError(f"unknown geometry kind {kind!r}")

    def config(self):
        if self.kind == "rect2d":
            return {"kind": "rect2d", "Lx": self.lengths[0], "Ly": self.lengths[1],
                    "Nx": self.counts[0], "Ny": self.counts[1], "boundary": self.boundary}
        out = {"kind": self.kind, "N": self.counts[0]}
        if self.kind == "torus1d":
            out["L"] = self.lengths[0]
        else:
            out["a"] = self.origin[0]
            out["b"] = self.origin[0] + self.lengths[0]
        return out

    # -- basic attributes -------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @cached_property
    def shape(self) -> tuple:
        return tuple(n if self.periodic else n + 1 for n in self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def h(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.counts))

    @cached_property
    def axes(self) -> tuple:
        return tuple(o + np.arange(n) * hh for o, n, hh in zip(self.origin, self.shape, self.h))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            if self.dim == 1:
                mask[0] = mask[-1] = True
            else:
                mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of unknowns (interior nodes for Dirichlet, all nodes otherwise)."""
        if self.boundary == "dirichlet":
            return np.flatnonzero(~self.boundary_mask)
        return np.arange(self.size)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights per node (zero on Dirichlet boundary)."""
        ws = []
        for n, hh in zip(self.shape, self.h):
            w = np.full(n, hh)
            if not self.periodic:
                w[0] = w[-1] = 0.5 * hh
            ws.append(w)
        w = ws[0] if self.dim == 1 else np.outer(ws[0], ws[1]).ravel()
        if self.boundary == "dirichlet":
            w = np.where(self.boundary_mask, 0.0, w)
        return w

    @cached_property
    def boundary_measure(self) -> np.ndarray:
        """Boundary quadrature weights per node (points count 1 in 1-D)."""
        m = np.zeros(self.size)
        if self.periodic:
            return m
        if self.dim == 1:
            m[0] = m[-1] = 1.0
            return m
        hx, hy = self.h
        grid = np.zeros(self.shape)
        grid[:, 0] += hx
        grid[:, -1] += hx
        grid[0, :] += hy
        grid[-1, :] += hy
        grid[0, 0] = grid[0, -1] = grid[-1, 0] = grid[-1, -1] = 0.5 * (hx + hy)
        return grid.ravel()

    # -- assembled operators ---------------------------------------------
    def _kron(self, mats_per_axis):
        if self.dim == 1:
            return sp.csr_matrix(mats_per_axis[0])
        return sp.kron(mats_per_axis[0], mats_per_axis[1], format="csr")

    def _eye(self, axis):
        return sp.identity(self.shape[axis], format="csr")

    @cached_property
    def central(self) -> tuple:
        """Centered first-difference matrices, one per axis."""
        out = []
        for ax in range(self.dim):
            D = _fd_1d(self.shape[ax], self.h[ax], self.boundary, "central")
            mats = [self._eye(a) for a in range(self.dim)]
            mats[ax] = D
            out.append(self._kron(mats))
        return tuple(out)

    @cached_property
    def divergence_ops(self) -> tuple:
        """Negative weighted adjoints of :attr:`central` (summation by parts)."""
        w = self.weights
        inv = np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 0.0)
        return tuple(-(sp.diags(inv) @ D.T @ sp.diags(w)).tocsr() for D in self.central)

    @cached_property
    def lap(self) -> sp.csr_matrix:
        """Five-point (three-point in 1-D) Laplacian on the node vector."""
        terms = []
        for ax in range(self.dim):
            L = _fd_1d(self.shape[ax], self.h[ax], self.boundary, "lap")
            mats = [self._eye(a) for a in range(self.dim)]
            if self.boundary == "dirichlet":
                for a in range(self.dim):
                    if a != ax:
                        e = np.ones(self.shape[a])
                        e[0] = e[-1] = 0
                        mats[a] = sp.diags(e)
            mats[ax] = L
            terms.append(self._kron(mats))
        return sum(terms[1:], terms[0]).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """``K = -W lap`` restricted to free nodes: the Dirichlet form ``u^T K u = int |grad u|^2``."""
        f = self.free
        K = -(sp.diags(self.weights) @ self.lap)
        return ((K + K.T) * 0.5).tocsr()[f][:, f].tocsr()

    @cached_property
    def edge_gradient(self) -> tuple:
        """Forward-difference gradient for energies: ``(G_axes, cell_weights)``.

        In 1-D each edge is a cell.  On the 2-torus cell ``(i, j)`` pairs the
        x-edge and y-edge leaving node ``(i, j)``; on rectangles each square
        contributes two corner pairings of half weight.  Isotropic integrands
        ``j(|grad u|)`` are evaluated cell by cell.
        """
        if self.dim == 1:
            F = _fd_1d(self.shape[0], self.h[0], self.boundary, "forward")
            return (F.tocsr(),), np.full(F.shape[0], self.h[0])
        nx, ny = self.shape
        hx, hy = self.h
        Fx = _fd_1d(nx, hx, self.boundary, "forward")
        Fy = _fd_1d(ny, hy, self.boundary, "forward")
        if self.periodic:
            Gx = sp.kron(Fx, sp.identity(ny), format="csr")
            Gy = sp.kron(sp.identity(nx), Fy, format="csr")
            return (Gx, Gy), np.full(Gx.shape[0], hx * hy)
        # each square cell contributes its lower-left and upper-right corner
        # pairings with half weight, so boundary edges get trapezoid weights
        lo_x, hi_x = sp.eye(nx - 1, nx), sp.eye(nx - 1, nx, k=1)
        lo_y, hi_y = sp.eye(ny - 1, ny), sp.eye(ny - 1, ny, k=1)
        Gx = sp.vstack([sp.kron(Fx, lo_y), sp.kron(Fx, hi_y)], format="csr")
        Gy = sp.vstack([sp.kron(lo_x, Fy), sp.kron(hi_x, Fy)], format="csr")
        return (Gx, Gy), np.full(Gx.shape[0], 0.5 * hx * hy)

    @cached_property
    def _poisson_factor(self):
        if self.boundary != "dirichlet":
            raise SolverError("sparse Poisson factor only for Dirichlet geometries")
        f = self.free
        A = (-self.lap)[f][:, f].tocsc()
        return spla.splu(A)

    @cached_property
    def _fourier_symbol(self):
        parts = []
        for n, hh in zip(self.shape, self.h):
            k = np.arange(n)
            parts.append(4.0 / hh**2 * np.sin(np.pi * k / n) ** 2)
        if self.dim == 1:
            return parts[0]
        return parts[0][:, None] + parts[1][None, :]

    def solve_poisson(self, rhs: np.ndarray) -> tuple:
        """Return ``(v, centered)`` with ``-lap v = rhs`` (free nodes)."""
        rhs = np.asarray(rhs, dtype=float).ravel()
        if rhs.size != self.size:
            raise ShapeError("rhs does not match geometry")
        if self.boundary == "dirichlet":
            v = np.zeros(self.size)
            v[self.free] = self._poisson_factor.solve(rhs[self.free])
            return v, False
        if self.boundary == "neumann":
            raise SolverError("Neumann Laplacian is singular; no inverse")
        grid = rhs.reshape(self.shape)
        mean = grid.mean()
        centered = abs(mean) > 1e-12
        grid = grid - mean
        lam = self._fourier_symbol.copy()
        lam.flat[0] = 1.0
        vhat = np.fft.fftn(grid) / lam
        vhat.flat[0] = 0.0
        return np.real(np.fft.ifftn(vhat)).ravel(), centered

    @cached_property
    def inv_lap_dense(self) -> np.ndarray:
        """Dense ``(-lap)^-1`` on free nodes (mean-zero inverse on periodic grids)."""
        if self.boundary == "dirichlet":
            return self._poisson_factor.solve(np.eye(self.free.size))
        if self.boundary == "neumann":
            raise SolverError("Neumann Laplacian is singular; no inverse")
        cols = [self.solve_poisson(e - e.mean())[0] for e in np.eye(self.size)]
        return np.stack(cols, axis=1)

    def check(self, arr) -> np.ndarray:
        a = np.asarray(arr, dtype=float)
        if a.size != self.size:
            raise ShapeError(f"array of size {a.size} does not match geometry size {self.size}")
        return a.reshape(self.size)


@dataclass
class ScalarField:
    """Node values on a geometry, tagged with the pivot space they live in."""

    geometry: Geometry
    values: np.ndarray
    space: str = "L2"
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.space not in SPACES:
            raise DomainError(f"unknown space tag {self.space!r}")
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.geometry.size:
            raise ShapeError(f"{v.size} values for a geometry with {self.geometry.size} nodes")
        if self.geometry.boundary == "dirichlet":
            v[self.geometry.boundary_mask] = 0.0
        self.values = v

    @classmethod
    def from_function(cls, geometry, fn, space="L2"):
        c = geometry.coords
        return cls(geometry, fn(*[c[:, k] for k in range(geometry.dim)]), space)

    @property
    def grid(self):
        return self.values.reshape(self.geometry.shape)

    def with_values(self, values, space=None, flags=None):
        return ScalarField(self.geometry, values, space or self.space,
                           self.flags if flags is None else flags)

    def __add__(self, other):
        _same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__


def _same(u: ScalarField, v: ScalarField):
    if u.geometry != v.geometry:
        raise ShapeError("fields live on different geometries")


def gradient(u: ScalarField) -> np.ndarray:
    """Centered gradient, shape ``(dim, size)``."""
    if u.space != "L2":
        raise UsageError("gradient expects an L2-tagged field")
    return np.stack([D @ u.values for D in u.geometry.central])


def divergence(w: np.ndarray, geometry: Geometry) -> ScalarField:
    """Discrete divergence, the negative L2-adjoint of :func:`gradient`."""
    w = np.asarray(w, dtype=float)
    if w.shape != (geometry.dim, geometry.size):
        raise ShapeError(f"vector field of shape {w.shape} does not match geometry")
    return ScalarField(geometry, sum(Dv @ w[k] for k, Dv in enumerate(geometry.divergence_ops)))


def laplacian(u: ScalarField) -> ScalarField:
    if u.space != "L2":
        raise UsageError("laplacian expects an L2-tagged field")
    return u.with_values(u.geometry.lap @ u.values)


def inv_laplacian(u: ScalarField) -> ScalarField:
    """Solve ``-lap v = u``; periodic inputs with nonzero mean are centered first."""
    v, centered = u.geometry.solve_poisson(u.values)
    flags = u.flags | {"centered"} if centered else u.flags
    return ScalarField(u.geometry, v, "L2", flags)


def inner(u: ScalarField, v: ScalarField, space: Optional[str] = None) -> float:
    _same(u, v)
    space = space or u.space
    if space != u.space or space != v.space:
        raise UsageError(f"space tags {u.space}/{v.space} do not match requested {space}")
    w = u.geometry.weights
    if space == "L2":
        return float(np.dot(w * u.values, v.values))
    z, _ = u.geometry.solve_poisson(v.values)
    return float(np.dot(w * u.values, z))


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_seminorm: float
    lp: float
    hminus1: float


def norms(u: ScalarField, p: float = 2.0) -> Norms:
    if p < 1:
        raise DomainError("lp norm needs p >= 1")
    g = u.geometry
    w = g.weights
    vals = u.values
    l2 = float(np.sqrt(np.dot(w * vals, vals)))
    Gs, cw = g.edge_gradient
    h1 = float(np.sqrt(sum(np.dot(cw * (G @ vals), G @ vals) for G in Gs)))
    lp = float(np.sum(w * np.abs(vals) ** p) ** (1.0 / p))
    if g.boundary == "neumann":
        hm1 = float("nan")
    else:
        z, _ = g.solve_poisson(vals)
        hm1 = float(np.sqrt(max(np.dot(w * vals, z), 0.0)))
    return Norms(l2, h1, lp, hm1)


# -- serialization ---------------------------------------------------------

def field_to_csv(u: ScalarField) -> str:
    g = u.geometry
    names = ["x", "y"][: g.dim]
    buf = io.StringIO()
    buf.write("index," + ",".join(names) + ",value\n")
    for i in range(g.size):
        coords = ",".join(repr(float(c)) for c in g.coords[i])
        buf.write(f"{i},{coords},{float(u.values[i])!r}\n")
    return buf.getvalue()


def dump_fields(path, arrays, shape) -> None:
    """Write a stack of node arrays as ``STFD1`` + header + little-endian doubles."""
    data = np.asarray(arrays, dtype="<f8").reshape(len(arrays), -1)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", data.shape[0], len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(data.tobytes())


def load_fields(path) -> tuple:
    """Inverse of :func:`dump_fields`; returns ``(array(nfields, *shape), shape)``."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not an STFD1 dump")
        nfields, ndim = struct.unpack("<II", fh.read(8))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape((nfields,) + tuple(shape)).astype(float), tuple(shape)
