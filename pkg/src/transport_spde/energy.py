"""Discrete energy functionals ``psi(t, w)`` on free-node vectors.

Derivatives returned here are Euclidean (with respect to the coordinate
vector); the solver converts them to pivot-space gradients.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .convex import ConvexPotential, Piecewise
from .errors import DomainError
from .field import Geometry

CURV_CAP = 1e12


def _is_smooth(j: ConvexPotential, t: float = 0.0) -> bool:
    pts = np.concatenate([np.linspace(-10, 10, 2001), [0.0], j.b if isinstance(j, Piecewise) else []])
    lo, hi = j.subgradient(t, pts)
    return bool(np.max(hi - lo) <= 1e-10 * (1 + np.max(np.abs(hi))))


def _is_even(j: ConvexPotential, t: float = 0.0) -> bool:
    r = np.linspace(0, 10, 101)
    a, b = j.eval(t, r), j.eval(t, -r)
    return bool(np.max(np.abs(a - b)) <= 1e-12 * (1 + np.max(np.abs(a))))


class Energy:
    """Base: ``value``, ``grad``, ``hess`` on free-node vectors; ``space`` names the pivot."""

    kind = "abstract"
    space = "L2"
    smooth = True

    def __init__(self, geometry: Geometry, j: ConvexPotential):
        self.geometry = geometry
        self.j = j
        self.free = geometry.free
        self.n = self.free.size
        self.weights = geometry.weights[self.free]

    def pivot(self):
        return sp.diags(self.weights).tocsr()

    def pivot_inverse_apply(self, v):
        return v / self.weights

    def config(self) -> dict:
        return {"form": self.kind, "j": self.j.config()}


class GradientEnergy(Energy):
    """``psi(w) = sum_cells |cell| j(|G w|)`` with forward-difference cell gradients.

    In 2-D the integrand acts on the Euclidean length of the cell gradient, so
    ``j`` must be even.  ``j`` must also be differentiable: kinks make the
    Newton system ill-posed in this form.
    """

    kind = "gradient_type"

    def __init__(self, geometry: Geometry, j: ConvexPotential):
        super().__init__(geometry, j)
        if not _is_smooth(j):
            raise DomainError("gradient-type energy needs a differentiable integrand")
        if geometry.dim == 2 and not _is_even(j):
            raise DomainError("2-D gradient-type energy needs an even integrand")
        Gs, cw = geometry.edge_gradient
        self.G = tuple(G[:, self.free].tocsr() for G in Gs)
        self.cw = cw

    def _grads(self, w):
        return [G @ w for G in self.G]

    def value(self, t, w):
        gs = self._grads(w)
        r = gs[0] if len(gs) == 1 else np.hypot(gs[0], gs[1])
        return float(self.cw @ self.j.eval(t, r))

    def grad(self, t, w):
        gs = self._grads(w)
        if len(gs) == 1:
            return self.G[0].T @ (self.cw * self.j.section(t, gs[0]))
        rho = np.hypot(gs[0], gs[1])
        c = self.cw * self._ratio(t, rho)
        return self.G[0].T @ (c * gs[0]) + self.G[1].T @ (c * gs[1])

    def _ratio(self, t, rho):
        """``j'(rho)/rho`` with the limit ``j''(0)`` at the origin."""
        small = rho < 1e-12
        safe = np.where(small, 1.0, rho)
        d2 = np.minimum(self.j.curvature(t, rho), CURV_CAP)
        return np.where(small, d2, self.j.section(t, safe) / safe)

    def hess(self, t, w):
        gs = self._grads(w)
        if len(gs) == 1:
            d2 = np.minimum(self.j.curvature(t, gs[0]), CURV_CAP)
            G = self.G[0]
            return (G.T @ sp.diags(self.cw * d2) @ G).tocsr()
        gx, gy = gs
        rho = np.hypot(gx, gy)
        ratio = self._ratio(t, rho)
        d2 = np.minimum(self.j.curvature(t, rho), CURV_CAP)
        safe = np.where(rho < 1e-12, 1.0, rho)
        ex = np.where(rho < 1e-12, 1.0, gx / safe)
        ey = np.where(rho < 1e-12, 0.0, gy / safe)
        # block d2 e e^T + ratio (I - e e^T); at rho = 0 both terms equal j''(0) I
        hxx = d2 * ex * ex + ratio * (1 - ex * ex)
        hyy = d2 * ey * ey + ratio * (1 - ey * ey)
        hxy = (d2 - ratio) * ex * ey
        Gx, Gy = self.G
        cw = self.cw
        H = (Gx.T @ sp.diags(cw * hxx) @ Gx + Gy.T @ sp.diags(cw * hyy) @ Gy
             + Gx.T @ sp.diags(cw * hxy) @ Gy + Gy.T @ sp.diags(cw * hxy) @ Gx)
        return H.tocsr()


class PointwiseEnergy(Energy):
    """``psi(w) = sum_i W_i j(w_i)`` on the H^-1 pivot (Dirichlet geometries)."""

    kind = "pointwise"
    space = "Hminus1"

    def __init__(self, geometry: Geometry, j: ConvexPotential):
        if geometry.boundary != "dirichlet":
            raise DomainError("pointwise energy uses the H^-1 pivot, available on Dirichlet geometries")
        super().__init__(geometry, j)
        if not _is_smooth(j):
            raise DomainError("pointwise energy needs a differentiable integrand")
        self.Linv = geometry.inv_lap_dense
        L = -geometry.lap[self.free][:, self.free]
        self.L = L.tocsr()

    def pivot(self):
        return self.weights[:, None] * self.Linv

    def pivot_inverse_apply(self, v):
        return self.L @ (v / self.weights)

    def value(self, t, w):
        return float(self.weights @ self.j.eval(t, w))

    def grad(self, t, w):
        return self.weights * self.j.section(t, w)

    def hess(self, t, w):
        return sp.diags(self.weights * np.minimum(self.j.curvature(t, w), CURV_CAP)).tocsr()


class NeumannEnergy(Energy):
    """Interior gradient energy plus a boundary potential ``sum_b |dS|_b j0(w_b)``.

    ``j0`` may have kinks (relay/thermostat laws); the solver treats the
    boundary nodes with a semismooth prox-Newton iteration.
    """

    kind = "neumann"

    def __init__(self, geometry: Geometry, j: ConvexPotential, j0: ConvexPotential):
        if geometry.boundary != "neumann":
            raise DomainError("neumann energy needs a Neumann geometry")
        super().__init__(geometry, j)
        self.interior = GradientEnergy(geometry, j)
        self.j0 = j0
        self.bidx = np.flatnonzero(geometry.boundary_mask)
        self.bm = geometry.boundary_measure[self.bidx]
        self.smooth = _is_smooth(j0)

    def config(self):
        return {"form": self.kind, "j": self.j.config(), "j0": self.j0.config()}

    def boundary_value(self, t, w):
        return float(self.bm @ self.j0.eval(t, w[self.bidx]))

    def value(self, t, w):
        return self.interior.value(t, w) + self.boundary_value(t, w)

    def grad(self, t, w):
        """Minimal-norm element of the subdifferential (boundary section clipped)."""
        gi = self.interior.grad(t, w)
        lo, hi = self.j0.subgradient(t, w[self.bidx])
        xi = np.clip(-gi[self.bidx] / self.bm, lo, hi)
        out = gi.copy()
        out[self.bidx] += self.bm * xi
        return out

    def smooth_grad(self, t, w):
        return self.interior.grad(t, w)

    def smooth_hess(self, t, w):
        return self.interior.hess(t, w)

    def hess(self, t, w):
        H = self.interior.hess(t, w).tolil()
        d2 = self.j0.curvature(t, w[self.bidx])
        for k, i in enumerate(self.bidx):
            H[i, i] += self.bm[k] * d2[k]
        return H.tocsr()


def build_energy(geometry: Geometry, form: str, j: ConvexPotential, j0: ConvexPotential = None) -> Energy:
    if form == "gradient_type":
        return GradientEnergy(geometry, j)
    if form == "pointwise":
        return PointwiseEnergy(geometry, j)
    if form == "neumann":
        if j0 is None:
            raise DomainError("neumann energy needs a boundary potential j0")
        return NeumannEnergy(geometry, j, j0)
    raise DomainError(f"unknown energy form {form!r}")
