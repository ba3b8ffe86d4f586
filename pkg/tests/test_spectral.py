"""Fourier reference solver: exact linear decay, Parseval, batch independence."""

import numpy as np
import pytest

from sacpde.errors import ValidationError
from sacpde.mesh_fem import FemSpace, PeriodicMesh
from sacpde.model import initial_datum, make_sigma
from sacpde.spectral import (
    SpectralField,
    SpectralSpace,
    evaluate_on_mesh,
    run_spectral_trajectory,
    spectral_energy,
    spectral_energy_identity_residual,
    spectral_project,
    spectral_step,
    step_batch,
)
from sacpde.stepper import IDENTITY_ATOL, IDENTITY_RTOL, SchemeConfig
from sacpde.stochastic import sample_path

ZERO = make_sigma("zero")


def test_space_construction():
    sp = SpectralSpace(1.0, 16)
    assert sp.coeff_count == 17
    assert sp.grid_size >= 4 * 16 + 1
    assert sp.eigenvalues[0] == 0.0
    assert sp.eigenvalues[1] == pytest.approx((2 * np.pi) ** 2)
    with pytest.raises(ValidationError):
        SpectralSpace(1.0, 0)
    with pytest.raises(ValidationError):
        SpectralSpace(-1.0, 16)
    with pytest.raises(ValidationError):
        SpectralSpace(1.0, 16, pad=1.2)


def test_grid_roundtrip():
    sp = SpectralSpace(2.0, 12)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(13) + 1j * rng.standard_normal(13)
    c[0] = c[0].real  # mode 0 of a real function
    back = sp.to_modes(sp.to_grid(c))
    np.testing.assert_allclose(back, c, atol=1e-13)


def test_projection_of_cos_is_single_mode():
    R = 1.0
    sp = SpectralSpace(R, 8)
    f = spectral_project(sp, initial_datum("cos", R))
    expected = np.zeros(9, dtype=complex)
    expected[1] = 0.5
    np.testing.assert_allclose(f.coeffs, expected, atol=1e-14)


def test_norms_of_single_mode():
    """Mode-m amplitude a has l2^2 = 2 R a^2 and h1^2 = lambda_m * l2^2."""
    R = 2.0
    sp = SpectralSpace(R, 8)
    c = np.zeros(9, dtype=complex)
    c[2] = 0.3
    lam2 = (2 * np.pi * 2 / R) ** 2
    assert sp.l2_norm(c) ** 2 == pytest.approx(2 * R * 0.09, rel=1e-13)
    assert sp.h1_seminorm(c) ** 2 == pytest.approx(lam2 * 2 * R * 0.09, rel=1e-13)


def test_parseval_against_grid_integral():
    sp = SpectralSpace(1.0, 16)
    rng = np.random.default_rng(7)
    c = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    c[0] = c[0].real
    u = sp.to_grid(c)
    assert sp.grid_integral(u * u) == pytest.approx(sp.l2_norm(c) ** 2, rel=1e-12)


def test_evaluate_on_mesh_is_exact_for_cos():
    R = 1.0
    sp = SpectralSpace(R, 8)
    f = spectral_project(sp, initial_datum("cos", R))
    mesh_space = FemSpace(PeriodicMesh(1, R, 64))
    vals = evaluate_on_mesh(f, mesh_space)
    x = mesh_space.mesh.vertices[:, 0]
    np.testing.assert_allclose(vals.coeffs, np.cos(2 * np.pi * x), atol=1e-13)


def test_linear_only_decay_factors_are_exact():
    """The testing hook solves (1 + k lambda) c = c0 mode by mode."""
    sp = SpectralSpace(1.0, 8)
    cfg = SchemeConfig(k=0.02)
    rng = np.random.default_rng(1)
    c0 = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    c0[0] = c0[0].real
    new, iters, rnorm = step_batch(sp, ZERO, cfg, c0[None, :], np.zeros(1), linear_only=True)
    np.testing.assert_allclose(new[0], c0 / (1.0 + cfg.k * sp.eigenvalues), rtol=1e-15)
    np.testing.assert_allclose(rnorm, 0.0)


def test_constant_state_matches_scalar_reduction():
    """The spectral step on a constant agrees with the scalar implicit solve."""
    sp = SpectralSpace(1.0, 8)
    k, c0 = 0.1, 2.0
    cfg = SchemeConfig(k=k)
    g = lambda c: c + k * 0.5 * (c * c - 1.0) * (c + c0) - c0
    lo, hi = 1.0, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    f0 = SpectralField(sp, np.r_[c0, np.zeros(8)].astype(complex))
    f1, diag = spectral_step(sp, ZERO, cfg, f0, 0.0)
    assert f1.coeffs[0].real == pytest.approx(root, abs=1e-10)
    np.testing.assert_allclose(np.abs(f1.coeffs[1:]), 0.0, atol=1e-14)


def test_batch_partition_is_bitwise_invariant():
    """Stepping rows together or in sub-batches gives identical bits."""
    sp = SpectralSpace(1.0, 16)
    cfg = SchemeConfig(k=0.01)
    sig = make_sigma("sine", 0.5)
    rng = np.random.default_rng(9)
    C = 0.2 * (rng.standard_normal((5, 17)) + 1j * rng.standard_normal((5, 17)))
    C[:, 0] = C[:, 0].real
    dw = 0.05 * rng.standard_normal(5)
    full, _, _ = step_batch(sp, sig, cfg, C, dw)
    first, _, _ = step_batch(sp, sig, cfg, C[:3], dw[:3])
    second, _, _ = step_batch(sp, sig, cfg, C[3:], dw[3:])
    assert np.array_equal(full, np.vstack([first, second]))


def test_spectral_energy_identity_holds():
    sp = SpectralSpace(1.0, 32)
    cfg = SchemeConfig(k=0.005, newton_tol=1e-12)
    sig = make_sigma("sine", 0.5)
    c = spectral_project(sp, initial_datum("cos", 1.0)).coeffs
    inc = sample_path(3, 0, T=0.25, j_fine=50).increments
    for dw in inc:
        new, _, _ = step_batch(sp, sig, cfg, c[None, :], np.array([dw]))
        resid, lhs, rhs = spectral_energy_identity_residual(sp, sig, c, new[0], cfg.k, dw)
        assert resid <= max(IDENTITY_ATOL, IDENTITY_RTOL * abs(lhs))
        c = new[0]


def test_spectral_trajectory_dissipates_without_noise():
    sp = SpectralSpace(1.0, 16)
    cfg = SchemeConfig(k=0.005)
    y0 = spectral_project(sp, initial_datum("cos", 1.0))
    traj = run_spectral_trajectory(sp, ZERO, cfg, y0, np.zeros(40))
    assert np.all(np.diff(traj.energies) <= 1e-12 * (1 + abs(traj.energies[0])))
    assert traj.energies[-1] < traj.energies[0]


def test_large_step_falls_back_to_dense_solve():
    """k = 0.5 defeats the diagonal split; the dense path must still converge."""
    sp = SpectralSpace(1.0, 12)
    cfg = SchemeConfig(k=0.5, newton_tol=1e-12)
    y0 = spectral_project(sp, initial_datum("cos", 1.0))
    f1, diag = spectral_step(sp, ZERO, cfg, y0, 0.0)
    assert diag["residual_norm"] <= cfg.newton_tol * (1.0 + sp.l2_norm(y0.coeffs))
    resid, lhs, _ = spectral_energy_identity_residual(
        sp, ZERO, y0.coeffs, f1.coeffs, cfg.k, 0.0
    )
    assert resid <= max(IDENTITY_ATOL, IDENTITY_RTOL * abs(lhs))


def test_spectral_energy_matches_element_energy():
    """Both discretizations assign nearly the same energy to the cos datum."""
    from sacpde.model import energy as fem_energy
    from sacpde.mesh_fem import l2_project

    sp = SpectralSpace(1.0, 64)
    en_s = spectral_energy(sp, spectral_project(sp, initial_datum("cos", 1.0)).coeffs)
    space = FemSpace(PeriodicMesh(1, 1.0, 512))
    en_f = fem_energy(space, l2_project(space, initial_datum("cos", 1.0)))
    assert en_s.total == pytest.approx(en_f.total, rel=1e-4)
