import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minlag.cochain import Cochain
from minlag.dec import (
    DecOperators,
    angular_cochain,
    boundary_circulations,
    cochain_to_csv,
    one_form_cochain,
)
from minlag.errors import ValidationError
from minlag.generators import generate_mesh
from minlag.mesh import SimplicialPatch, boundary_data, volume_cochain

SHAPES = ["disk", "annulus", "pants"]


@pytest.fixture(scope="module")
def ops_by_shape():
    return {s: DecOperators(generate_mesh(s, 16)) for s in SHAPES}


def closed_surface():
    verts = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]], float)
    return SimplicialPatch(verts, [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def test_coboundary_on_triangle(triangle):
    ops = DecOperators(triangle)
    df = ops.coboundary(Cochain(triangle, 0, np.array([0.0, 1.0, 0.0])))
    assert (df.on((0, 1)), df.on((1, 2)), df.on((0, 2))) == (1.0, -1.0, 0.0)
    assert df.on((1, 0)) == -1.0


def test_coboundary_of_constant(annulus16):
    ops = DecOperators(annulus16)
    assert not np.any(ops.coboundary(Cochain(annulus16, 0, np.full(annulus16.num_vertices, 2.5))).values)


def test_coboundary_degree_checked(triangle):
    ops = DecOperators(triangle)
    with pytest.raises(ValidationError):
        ops.coboundary(Cochain(triangle, 2, np.ones(1)))


@pytest.mark.parametrize("shape", SHAPES)
def test_d_squared_is_zero(shape, ops_by_shape):
    ops = ops_by_shape[shape]
    prod = ops.d_matrix(1) @ ops.d_matrix(0)
    assert prod.count_nonzero() == 0 or np.abs(prod.toarray()).max() == 0
    assert set(np.unique(ops.d_matrix(0).data)) <= {-1, 1}


def test_star0_is_dual_area(triangle):
    ops = DecOperators(triangle)
    # the right triangle is not well-centered: barycentric cells of area 1/6
    assert ops.dual_type == "barycentric"
    assert np.allclose(ops.star_diagonals[0], 1 / 6)
    assert ops.hodge_star(Cochain(triangle, 0, np.array([1.0, 0, 0]))).values[0] == pytest.approx(1 / 6)


@pytest.mark.parametrize("shape", SHAPES)
def test_dual_cells_tile_the_patch(shape, ops_by_shape):
    ops = ops_by_shape[shape]
    assert ops.dual_type == "circumcentric"
    area = ops.patch.simplex_volumes.sum()
    assert ops.star_diagonals[0].sum() == pytest.approx(area, rel=1e-12)
    assert np.allclose(np.asarray(ops.top_to_dual.sum(axis=0)).ravel(), 1.0, atol=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_stars_positive(shape, ops_by_shape):
    for k in range(3):
        d = ops_by_shape[shape].star_diagonals[k]
        assert np.all(np.isfinite(d)) and d.min() > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 2))
def test_star_star_sign(seed, k, ops_by_shape):
    ops = ops_by_shape["annulus"]
    v = np.random.default_rng(seed).standard_normal(ops.patch.num_faces(k))
    c = Cochain(ops.patch, k, v)
    twice = ops.hodge_star(ops.hodge_star(c))
    assert twice.degree == k and not twice.dual
    assert np.allclose(twice.values, (-1) ** (k * (2 - k)) * v, atol=1e-12, rtol=0)


def test_integrate_volume(triangle):
    assert DecOperators(triangle).integrate(volume_cochain(triangle)) == 0.5


def test_stokes_on_closed_surface():
    patch = closed_surface()
    ops = DecOperators(patch)
    beta = Cochain(patch, 1, np.random.default_rng(3).standard_normal(patch.num_faces(1)))
    assert abs(ops.integrate(ops.coboundary(beta))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shape=st.sampled_from(SHAPES))
def test_discrete_stokes(seed, shape, ops_by_shape):
    ops = ops_by_shape[shape]
    beta = Cochain(ops.patch, 1, np.random.default_rng(seed).standard_normal(ops.patch.num_faces(1)))
    assert ops.integrate(ops.coboundary(beta)) == pytest.approx(ops.boundary_trace(beta).integrate(),
                                                                abs=1e-12)


def test_trace_of_interior_cochain(disk16):
    ops = DecOperators(disk16)
    mask = disk16.boundary_simplex_mask[1]
    c = Cochain(disk16, 1, np.where(mask, 0.0, 1.0))
    assert not np.any(ops.boundary_trace(c).values)


def test_trace_commutes_with_coboundary(pants16):
    ops = DecOperators(pants16)
    f = Cochain(pants16, 0, np.arange(pants16.num_vertices, dtype=float))
    lhs = ops.boundary_coboundary(ops.boundary_trace(f))
    rhs = ops.boundary_trace(ops.coboundary(f))
    assert np.array_equal(lhs.indices, rhs.indices)
    assert np.array_equal(lhs.values, rhs.values)


def test_disk_angular_circulation(disk16):
    ops = DecOperators(disk16)
    c = angular_cochain(disk16)
    assert ops.boundary_trace(c).integrate() == pytest.approx(2 * np.pi, abs=1e-10)


def test_annulus_rim_circulations(annulus16):
    ops = DecOperators(annulus16)
    circ = boundary_circulations(ops, angular_cochain(annulus16))
    assert sorted(circ) == pytest.approx([-2 * np.pi, 2 * np.pi], abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shape=st.sampled_from(SHAPES))
def test_green_identity_with_weak_neumann(seed, shape, ops_by_shape):
    # <df, eta> = -sum_v f_v (d*eta)_v with no boundary term: the dual cells
    # are closed off at the boundary with zero flux
    ops = ops_by_shape[shape]
    rng = np.random.default_rng(seed)
    f = Cochain(ops.patch, 0, rng.standard_normal(ops.patch.num_vertices))
    eta = Cochain(ops.patch, 1, rng.standard_normal(ops.patch.num_faces(1)))
    lhs = ops.inner(ops.coboundary(f), eta)
    assert lhs == pytest.approx(-f.values @ ops.d_star(eta).values, abs=1e-10)
    assert lhs == pytest.approx(ops.inner(f, ops.codifferential(eta)), abs=1e-10)


def test_linearity(annulus16):
    ops = DecOperators(annulus16)
    rng = np.random.default_rng(7)
    a = Cochain(annulus16, 1, rng.standard_normal(annulus16.num_faces(1)))
    b = Cochain(annulus16, 1, rng.standard_normal(annulus16.num_faces(1)))
    for op in (ops.coboundary, ops.codifferential, ops.d_star, ops.hodge_star):
        assert np.allclose(op(a * 2.0 + b).values, 2.0 * op(a).values + op(b).values, atol=1e-12)


def test_normal_component_of_zero(disk16):
    ops = DecOperators(disk16)
    assert not np.any(ops.normal_component(Cochain(disk16, 1, np.zeros(disk16.num_faces(1))),
                                           boundary_data(disk16)))


def test_normal_component_tangent_field():
    errs = []
    for res in (16, 32):
        patch = generate_mesh("disk", res)
        rot = one_form_cochain(patch, lambda p: np.stack([-p[:, 2], 0 * p[:, 0], p[:, 0], 0 * p[:, 0]], 1))
        errs.append(np.abs(DecOperators(patch).normal_component(rot, boundary_data(patch))).max())
    assert errs[0] <= 2 * np.pi / 16
    assert errs[1] < errs[0]


def test_normal_component_radial_field(disk16):
    radial = one_form_cochain(disk16, lambda p: p)
    vals = DecOperators(disk16).normal_component(radial, boundary_data(disk16))
    # eta(N) = p . N = -1 on the unit rim
    assert np.abs(np.abs(vals) - 1).max() <= 2 * np.pi / 16


def test_one_form_of_gradient_is_exact(pants16):
    ops = DecOperators(pants16)
    f = lambda p: p[:, 0] ** 2 - 3 * p[:, 2]
    grad = one_form_cochain(pants16, lambda p: np.stack([2 * p[:, 0], 0 * p[:, 0], -3 + 0 * p[:, 0], 0 * p[:, 0]], 1))
    df = ops.coboundary(Cochain(pants16, 0, f(pants16.vertices)))
    assert np.allclose(grad.values, df.values, atol=1e-13)


def test_csv_export(triangle):
    text = cochain_to_csv(Cochain(triangle, 1, np.array([0.1, -2.0, 1 / 3])))
    lines = text.splitlines()
    assert lines[0] == f"# degree=1 kind=primal patch={triangle.digest}"
    assert lines[1] == "simplex_index,value"
    assert lines[4] == "2,0.33333333333333331"
