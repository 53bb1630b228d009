import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from transport_spde.errors import DomainError, ShapeError, SolverError, UsageError
from transport_spde.field import (
    Geometry, ScalarField, divergence, dump_fields, field_to_csv, gradient, inner, inv_laplacian,
    laplacian, load_fields, norms,
)

GEOMETRIES = [
    Geometry.torus1d(1.0, 16),
    Geometry.interval_dirichlet(0.0, 1.0, 16),
    Geometry.interval_neumann(0.0, 2.0, 12),
    Geometry.rect2d(1.0, 1.0, 6, 8, "dirichlet"),
    Geometry.rect2d(1.0, 2.0, 6, 6, "neumann"),
    Geometry.rect2d(1.0, 1.0, 8, 8, "periodic"),
]
ids = [f"{g.kind}-{g.boundary}" for g in GEOMETRIES]


def rand_field(g, seed=0):
    return ScalarField(g, np.random.default_rng(seed).standard_normal(g.size))


@pytest.mark.parametrize("g", GEOMETRIES, ids=ids)
def test_divergence_is_negative_adjoint_of_gradient(g):
    rng = np.random.default_rng(1)
    u = rand_field(g, 2)
    w = rng.standard_normal((g.dim, g.size))
    if g.boundary == "dirichlet":
        w[:, g.boundary_mask] = 0.0
    lhs = sum(np.dot(g.weights * gradient(u)[k], w[k]) for k in range(g.dim))
    rhs = -inner(u, divergence(w, g))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("g", GEOMETRIES, ids=ids)
def test_laplacian_is_weighted_symmetric_and_nonpositive(g):
    u, v = rand_field(g, 3), rand_field(g, 4)
    a = inner(laplacian(u), v)
    b = inner(u, laplacian(v))
    assert a == pytest.approx(b, rel=1e-10, abs=1e-10)
    assert inner(laplacian(u), u) <= 1e-10


@pytest.mark.parametrize("g", GEOMETRIES, ids=ids)
def test_stiffness_matches_edge_gradient_energy(g):
    u = rand_field(g, 5)
    Gs, cw = g.edge_gradient
    energy = sum(np.dot(cw * (G @ u.values), G @ u.values) for G in Gs)
    f = g.free
    assert u.values[f] @ (g.stiffness @ u.values[f]) == pytest.approx(energy, rel=1e-10)


def test_trapezoid_weights_integrate_constants():
    for g in GEOMETRIES:
        total = np.prod(g.lengths)
        s = g.weights.sum()
        if g.boundary == "dirichlet":
            assert s < total
        else:
            assert s == pytest.approx(total)


def test_laplacian_second_order_on_sine():
    errs = []
    for n in (16, 32, 64):
        g = Geometry.torus1d(1.0, n)
        u = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        exact = -(2 * np.pi) ** 2 * u.values
        errs.append(np.max(np.abs(laplacian(u).values - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


@pytest.mark.parametrize("g", [GEOMETRIES[0], GEOMETRIES[1], GEOMETRIES[3], GEOMETRIES[5]],
                         ids=["torus1d", "interval", "rect", "torus2d"])
def test_poisson_solve_inverts_laplacian(g):
    u = rand_field(g, 6)
    if g.periodic:
        u = u.with_values(u.values - u.values.mean())
    v = inv_laplacian(u)
    back = -laplacian(v).values
    assert np.allclose(back[g.free], u.values[g.free], atol=1e-9)
    assert "centered" not in v.flags


def test_periodic_inverse_flags_centering():
    g = GEOMETRIES[0]
    v = inv_laplacian(ScalarField(g, np.ones(g.size)))
    assert "centered" in v.flags


def test_neumann_inverse_refused():
    with pytest.raises(SolverError):
        inv_laplacian(rand_field(GEOMETRIES[2]))


@given(arrays(np.float64, 16, elements=st.floats(-10, 10)))
@settings(max_examples=50, deadline=None)
def test_hminus1_pairing_is_positive(vals):
    g = GEOMETRIES[0]
    u = ScalarField(g, vals - vals.mean(), "Hminus1")
    assert inner(u, u) >= -1e-12


def test_dirichlet_boundary_zeroed_and_shape_checked():
    g = GEOMETRIES[1]
    u = ScalarField(g, np.ones(g.size))
    assert u.values[0] == 0.0 and u.values[-1] == 0.0
    with pytest.raises(ShapeError):
        ScalarField(g, np.ones(g.size + 1))
    with pytest.raises(ShapeError):
        inner(u, rand_field(GEOMETRIES[0]))


def test_space_tags_enforced():
    g = GEOMETRIES[0]
    u = rand_field(g)
    with pytest.raises(UsageError):
        inner(u, u.with_values(u.values, space="Hminus1"))
    with pytest.raises(UsageError):
        gradient(u.with_values(u.values, space="Hminus1"))
    with pytest.raises(DomainError):
        ScalarField(g, u.values, "H1")


def test_invalid_geometry():
    with pytest.raises(DomainError):
        Geometry.torus1d(1.0, 2)
    with pytest.raises(DomainError):
        Geometry.from_config({"kind": "sphere", "N": 8})
    with pytest.raises(DomainError):
        Geometry.torus1d(-1.0, 8)


@pytest.mark.parametrize("g", GEOMETRIES, ids=ids)
def test_config_roundtrip(g):
    assert Geometry.from_config(g.config()) == g


def test_norms_of_constant():
    g = Geometry.torus1d(2.0, 8)
    n = norms(ScalarField(g, np.full(g.size, 3.0)), p=4)
    assert n.l2 == pytest.approx(3.0 * np.sqrt(2.0))
    assert n.lp == pytest.approx(3.0 * 2.0 ** 0.25)
    assert n.h1_seminorm == 0.0
    assert n.hminus1 == pytest.approx(0.0, abs=1e-12)
    assert np.isnan(norms(rand_field(GEOMETRIES[2])).hminus1)


def test_binary_dump_roundtrip(tmp_path):
    arrs = np.random.default_rng(0).standard_normal((3, 5, 4))
    p = tmp_path / "f.bin"
    dump_fields(p, arrs, (5, 4))
    back, shape = load_fields(p)
    assert shape == (5, 4)
    assert np.array_equal(back, arrs)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_fields(tmp_path / "bad.bin")


def test_csv_has_one_row_per_node():
    g = GEOMETRIES[3]
    text = field_to_csv(rand_field(g))
    lines = text.strip().splitlines()
    assert lines[0] == "index,x,y,value"
    assert len(lines) == g.size + 1
