import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import simpson
from hypothesis import given, settings, strategies as st

from transport_spde.errors import DomainError, UsageError
from transport_spde.field import Geometry, ScalarField
from transport_spde.transport import (
    NoiseOperator, TransportField, _interior_central, commutator_defect, interpolate,
)

TORUS = Geometry.torus1d(1.0, 32)
RECT_D = Geometry.rect2d(1.0, 1.0, 8, 8, "dirichlet")
RECT_N = Geometry.rect2d(1.0, 1.0, 8, 8, "neumann")


def dense(M):
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M)


def ops():
    return [
        NoiseOperator("diffusion", TransportField("constant1d", 1.0, 0.5), TORUS),
        NoiseOperator("diffusion", TransportField("stream2d", 1.0, 0.3), RECT_D),
        NoiseOperator("diffusion", TransportField("stream2d", 1.0), RECT_N, interpolation="exponential"),
        NoiseOperator("porous_media", TransportField("stream2d", 0.7, 0.2), RECT_D),
        NoiseOperator("porous_media", TransportField("constant1d", 1.0), TORUS),
    ]


@pytest.mark.parametrize("op", ops(), ids=lambda o: f"{o.form}-{o.geometry.kind}-{o.geometry.boundary}")
def test_generator_is_skew_in_pivot(op):
    P = dense(op.pivot_matrix())
    PB = P @ dense(op.B0)
    assert np.max(np.abs(PB + PB.T)) <= 1e-9 * max(1.0, np.max(np.abs(PB)))
    u = ScalarField(op.geometry, np.random.default_rng(0).standard_normal(op.geometry.size), op.space)
    assert op.skewness_defect(0.3, u) < 1e-10


def test_discrete_profile_is_divergence_free():
    f = TransportField("stream2d", 1.0, modes=(1, 2))
    b = f.discrete_profile(RECT_D)
    Dx, Dy = _interior_central(RECT_D)
    assert np.max(np.abs(Dx @ b[0] + Dy @ b[1])) < 1e-12


def test_exponential_group_is_isometric_and_fixes_neumann_boundary():
    op = NoiseOperator("diffusion", TransportField("stream2d", 1.0), RECT_N, interpolation="exponential")
    S = op.group_matrix(0.0, 0.37)
    W = np.diag(RECT_N.weights)
    assert np.allclose(S.T @ W @ S, W, atol=1e-12)
    bnd = RECT_N.boundary_mask
    assert np.allclose(S[np.ix_(bnd, bnd)], np.eye(bnd.sum()), atol=1e-13)
    assert np.allclose(S @ op.group_matrix(0.0, -0.37), np.eye(S.shape[0]), atol=1e-11)


def test_porous_group_matches_matrix_exponential():
    op = NoiseOperator("porous_media", TransportField("stream2d", 1.0), RECT_D)
    sigma = 0.4
    exact = sla.expm(sigma * op.B0)
    assert np.max(np.abs(op.group_matrix(0.0, sigma) - exact)) < 1e-8


def test_translation_group_on_torus():
    op = NoiseOperator("diffusion", TransportField("constant1d", 1.0), TORUS)
    x = TORUS.coords[:, 0]
    u = np.sin(2 * np.pi * x)
    h = TORUS.h[0]
    # whole-cell shift is an exact permutation
    assert np.allclose(op.apply_group(0.0, 3 * h, u), np.sin(2 * np.pi * (x - 3 * h)), atol=1e-14) or \
        np.allclose(op.apply_group(0.0, 3 * h, u), np.sin(2 * np.pi * (x + 3 * h)), atol=1e-14)
    # fractional shift: cubic interpolation of a smooth wave, fourth-order accurate
    s = 0.37 * h
    v = op.apply_group(0.0, s, u)
    err = min(np.max(np.abs(v - np.sin(2 * np.pi * (x - s)))), np.max(np.abs(v - np.sin(2 * np.pi * (x + s)))))
    assert err < 1e-4


def test_gamma_vanishes_for_autonomous_fields():
    op = NoiseOperator("diffusion", TransportField("constant1d", 1.0), TORUS)
    assert dense(op.gamma_matrix(0.2, 0.5)).any() == False  # noqa: E712


def test_gamma_reduces_to_beta_times_derivative_when_commuting():
    # B(t) = (a0 + a1 t) B0 commutes with its derivative, so Gamma = beta a1 B0
    op = NoiseOperator("diffusion", TransportField("constant1d", 1.0, 0.5), TORUS, interpolation="exponential")
    G = dense(op.gamma_matrix(0.3, 0.8))
    assert np.allclose(G, 0.8 * 0.5 * dense(op.B0), atol=1e-10)
    v = np.random.default_rng(2).standard_normal(op.n)
    assert np.allclose(op.apply_gamma(0.3, 0.8, v), G @ v, atol=1e-10)


def test_gamma_matrix_against_dense_quadrature():
    op = NoiseOperator("porous_media", TransportField("stream2d", 1.0, 0.4), RECT_D)
    beta, t = 0.6, 0.1
    B = op.matrix(t)
    Bd = op.matrix_dot(t)
    xs = np.linspace(0.0, beta, 2001)
    vals = np.array([sla.expm(-s * B) @ Bd @ sla.expm(s * B) for s in xs[::100]])
    # Simpson on 21 nodes is accurate to ~1e-7 here
    ref = simpson(vals, x=xs[::100], axis=0)
    assert np.max(np.abs(op.gamma_matrix(t, beta) - ref)) < 1e-6


def test_bounded_interval_rejects_transport():
    g = Geometry.interval_dirichlet(0.0, 1.0, 16)
    with pytest.raises(DomainError):
        NoiseOperator("diffusion", TransportField("constant1d", 1.0), g)
    NoiseOperator("diffusion", TransportField("zero"), g)


def test_rotation_disk_must_fit():
    with pytest.raises(DomainError):
        NoiseOperator("diffusion", TransportField("rotation2d", 1.0, radius=0.7), RECT_D)
    with pytest.raises(DomainError):
        NoiseOperator("diffusion", TransportField("rotation2d", 1.0), RECT_D)


def test_invalid_choices():
    with pytest.raises(DomainError):
        TransportField("shear")
    with pytest.raises(DomainError):
        NoiseOperator("heat", TransportField("zero"), TORUS)
    with pytest.raises(UsageError):
        NoiseOperator("diffusion", TransportField("zero"), TORUS, interpolation="spline")
    with pytest.raises(DomainError):
        NoiseOperator("porous_media", TransportField("zero"), RECT_N)
    op = ops()[0]
    with pytest.raises(UsageError):
        op.apply(0.0, ScalarField(TORUS, np.zeros(TORUS.size), "Hminus1"))


@given(st.floats(-2.0, 2.0))
@settings(max_examples=30, deadline=None)
def test_rotation_flow_preserves_radius(s):
    f = TransportField("rotation2d", 1.0, center=(0.5, 0.5), radius=0.4)
    pts = np.array([[0.6, 0.5], [0.5, 0.75], [0.3, 0.4]])
    z = f.flow(0.0, s, pts)
    r0 = np.hypot(*(pts - 0.5).T)
    r1 = np.hypot(*(z - 0.5).T)
    assert np.allclose(r0, r1, atol=1e-6)


def test_clamped_interpolation_stays_in_cell_range():
    g = Geometry.torus1d(1.0, 16)
    vals = np.where(g.coords[:, 0] < 0.5, 1.0, 0.0)
    pts = np.linspace(0.0, 0.99, 77)[:, None]
    out = interpolate(g, vals, pts, "cubic_clamped")
    assert out.min() >= -1e-15 and out.max() <= 1 + 1e-15


def test_commutator_defect():
    a = NoiseOperator("diffusion", TransportField("constant1d", 1.0), TORUS)
    assert commutator_defect(a, a, 0.0) < 1e-14
    b = NoiseOperator("diffusion", TransportField("stream2d", 1.0, modes=(1, 1)), RECT_D)
    c = NoiseOperator("diffusion", TransportField("stream2d", 1.0, modes=(2, 1)), RECT_D)
    assert commutator_defect(b, c, 0.0) > 1e-3


def test_config_roundtrip():
    f = TransportField("stream2d", 0.5, 0.1, modes=(2, 1))
    g = TransportField.from_config(f.config())
    assert g.config() == f.config()
    assert TransportField.from_config({"kind": "constant1d", "c": 2.0}).a0 == 2.0
