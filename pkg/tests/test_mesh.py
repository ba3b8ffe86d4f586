"""Mesh geometry, assembled operators, projections, and mesh nesting."""

import numpy as np
import pytest

from sacpde.errors import ValidationError
from sacpde.mesh_fem import (
    FemSpace,
    Field,
    PeriodicMesh,
    discrete_laplacian,
    l2_project,
    nodal_interpolant,
    norms,
    prolongate,
    prolongation_matrix,
)


def test_mesh_counts_1d():
    mesh = PeriodicMesh(1, 1.0, 4)
    assert mesh.dof_count == 4
    assert len(mesh.elements) == 4
    np.testing.assert_allclose(mesh.volumes, 0.25)


def test_mesh_counts_2d():
    mesh = PeriodicMesh(2, 1.0, 2)
    assert mesh.dof_count == 4
    assert len(mesh.elements) == 8
    np.testing.assert_allclose(mesh.volumes, 0.125)
    assert mesh.volumes.sum() == pytest.approx(1.0)


def test_mesh_counts_3d():
    mesh = PeriodicMesh(3, 2.0, 2)
    assert mesh.dof_count == 8
    assert len(mesh.elements) == 48
    assert mesh.volumes.sum() == pytest.approx(8.0)


def test_mesh_validation():
    with pytest.raises(ValidationError):
        PeriodicMesh(4, 1.0, 4)
    with pytest.raises(ValidationError):
        PeriodicMesh(1, 1.0, 1)
    with pytest.raises(ValidationError):
        PeriodicMesh(1, -2.0, 4)
    with pytest.raises(ValidationError):
        PeriodicMesh(1, 1.0, 4.5)


def test_mass_matrix_row_1d():
    """Interior row of the periodic P1 mass matrix is (h/6, 2h/3, h/6)."""
    n = 8
    space = FemSpace(PeriodicMesh(1, 1.0, n))
    h = 1.0 / n
    row = space.mass[3].toarray().ravel()
    expected = np.zeros(n)
    expected[2], expected[3], expected[4] = h / 6.0, 2.0 * h / 3.0, h / 6.0
    np.testing.assert_allclose(row, expected, atol=1e-15)


def test_stiffness_matrix_row_1d():
    n = 8
    space = FemSpace(PeriodicMesh(1, 1.0, n))
    row = space.stiffness[3].toarray().ravel()
    expected = np.zeros(n)
    expected[2], expected[3], expected[4] = -8.0, 16.0, -8.0
    np.testing.assert_allclose(row, expected, atol=1e-12)


@pytest.mark.parametrize("d,n", [(1, 8), (2, 4), (3, 3)])
def test_operator_identities(d, n):
    """Constants are in the stiffness kernel; the mass entries sum to R^d."""
    R = 1.5
    space = FemSpace(PeriodicMesh(d, R, n))
    ones = np.ones(space.mesh.dof_count)
    np.testing.assert_allclose(space.stiffness @ ones, 0.0, atol=1e-12)
    assert ones @ (space.mass @ ones) == pytest.approx(R**d, rel=1e-13)
    # both operators are symmetric
    assert abs(space.mass - space.mass.T).max() < 1e-15
    assert abs(space.stiffness - space.stiffness.T).max() < 1e-12


def test_l2_projection_of_constant_is_exact():
    space = FemSpace(PeriodicMesh(2, 1.0, 4))
    u = l2_project(space, lambda x: np.full(x.shape[:-1], 0.7))
    np.testing.assert_allclose(u.coeffs, 0.7, atol=1e-12)


def test_l2_projection_orthogonality():
    """The projection residual b - M c vanishes on the whole basis."""
    space = FemSpace(PeriodicMesh(1, 1.0, 32))
    g = lambda x: np.exp(np.sin(2.0 * np.pi * x[..., 0]))
    xq = space.physical_quad_points()
    b = space.load_vector(np.asarray(g(xq)))
    c = l2_project(space, g).coeffs
    resid = np.max(np.abs(space.mass @ c - b))
    assert resid <= 1e-10 * (1.0 + np.max(np.abs(b)))


def test_interpolant_norms_match_analytic():
    """L2 and H1 norms of the cos interpolant converge to 1/2 and 2 pi^2."""
    space = FemSpace(PeriodicMesh(1, 1.0, 256))
    u = nodal_interpolant(space, lambda x: np.cos(2.0 * np.pi * x[..., 0]))
    l2, h1 = norms(space, u)
    assert l2**2 == pytest.approx(0.5, rel=1e-3)
    assert h1**2 == pytest.approx(2.0 * np.pi**2, rel=1e-3)


def test_discrete_laplacian_pairing():
    """(lap_h u, v)_M = -(grad u, grad v) for arbitrary fields."""
    space = FemSpace(PeriodicMesh(2, 1.0, 6))
    rng = np.random.default_rng(3)
    u = rng.standard_normal(space.mesh.dof_count)
    v = rng.standard_normal(space.mesh.dof_count)
    w = discrete_laplacian(space, u)
    lhs = w.coeffs @ (space.mass @ v)
    rhs = -(u @ (space.stiffness @ v))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    # constants sit in the kernel
    z = discrete_laplacian(space, np.ones(space.mesh.dof_count))
    np.testing.assert_allclose(z.coeffs, 0.0, atol=1e-10)


def test_discrete_laplacian_eigenvalue_converges():
    """On the cos interpolant, -lap_h converges to the eigenvalue 4 pi^2."""
    errs = []
    for n in (32, 64):
        space = FemSpace(PeriodicMesh(1, 1.0, n))
        u = nodal_interpolant(space, lambda x: np.cos(2.0 * np.pi * x[..., 0]))
        w = discrete_laplacian(space, u)
        lam = -(w.coeffs @ (space.mass @ u.coeffs)) / (u.coeffs @ (space.mass @ u.coeffs))
        errs.append(abs(lam - 4.0 * np.pi**2))
    assert errs[1] < 0.35 * errs[0]  # second order in h


@pytest.mark.parametrize("d,nc,nf", [(1, 4, 8), (2, 2, 4), (3, 2, 4)])
def test_prolongation_preserves_norms(d, nc, nf):
    """Nested meshes: prolongation is exact as functions, so norms carry over."""
    coarse = FemSpace(PeriodicMesh(d, 1.0, nc))
    fine = FemSpace(PeriodicMesh(d, 1.0, nf))
    rng = np.random.default_rng(11)
    u = Field(coarse, rng.standard_normal(coarse.mesh.dof_count))
    uf = prolongate(u, fine)
    for a, b in zip(norms(coarse, u), norms(fine, uf)):
        assert b == pytest.approx(a, rel=1e-12, abs=1e-13)


def test_prolongation_values_1d():
    coarse = PeriodicMesh(1, 1.0, 4)
    fine = PeriodicMesh(1, 1.0, 8)
    P = prolongation_matrix(coarse, fine)
    u = np.array([0.0, 1.0, -2.0, 5.0])
    v = P @ u
    # coarse nodes injected, midpoints averaged (periodically at the wrap)
    np.testing.assert_allclose(v[0::2], u)
    np.testing.assert_allclose(v[1::2], [0.5, -0.5, 1.5, 2.5])


def test_prolongation_composition_matches_direct():
    m4, m8, m16 = (PeriodicMesh(1, 1.0, n) for n in (4, 8, 16))
    two_step = prolongation_matrix(m8, m16) @ prolongation_matrix(m4, m8)
    direct = prolongation_matrix(m4, m16)
    assert abs(two_step - direct).max() < 1e-14


def test_prolongation_rejects_non_dyadic():
    with pytest.raises(ValidationError):
        prolongation_matrix(PeriodicMesh(1, 1.0, 4), PeriodicMesh(1, 1.0, 12))
    with pytest.raises(ValidationError):
        prolongation_matrix(PeriodicMesh(1, 1.0, 4), PeriodicMesh(1, 2.0, 8))


def test_lumped_space_has_diagonal_mass():
    space = FemSpace(PeriodicMesh(1, 1.0, 8), lumped=True)
    M = space.mass.toarray()
    np.testing.assert_allclose(M, np.diag(np.diag(M)), atol=1e-15)
    assert M.sum() == pytest.approx(1.0)
    assert space.quad_degree == 1
    # the exact twin restores degree-4 integration on the same mesh
    twin = space.exact_twin()
    assert twin.quad_degree == 4 and not twin.lumped
    assert twin.mesh is space.mesh
    exact = FemSpace(PeriodicMesh(1, 1.0, 8))
    assert exact.exact_twin() is exact


def test_field_shape_checked():
    space = FemSpace(PeriodicMesh(1, 1.0, 8))
    with pytest.raises(ValidationError):
        Field(space, np.zeros(7))
