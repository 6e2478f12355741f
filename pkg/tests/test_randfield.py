import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtri

from porosurf.errors import InvalidInput
from porosurf.randfield import (KIND_1D, KIND_2D, CovarianceSpec, KLBasis,
                                QuadGrid, covariance_matrix,
                                inverse_normal_cdf, kl_decompose, lhs_normal,
                                log_field, permeability_field,
                                spectral_energy, uniform_grid_1d,
                                uniform_grid_2d)

BASELINE = CovarianceSpec(KIND_2D, 1.5, 0.25, 0.125)


class TestInverseNormalCdf:
    def test_against_scipy(self):
        p = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 20001),
                            [1e-300, 1e-100, 1e-30, 1 - 1e-15]])
        assert np.max(np.abs(inverse_normal_cdf(p) - ndtri(p))) < 1e-9

    def test_symmetry(self):
        assert inverse_normal_cdf(0.5) == 0.0
        assert inverse_normal_cdf(0.975) == pytest.approx(1.959964, abs=1e-6)

    def test_rejects_boundary(self):
        with pytest.raises(InvalidInput):
            inverse_normal_cdf(0.0)
        with pytest.raises(InvalidInput):
            inverse_normal_cdf(1.0)


class TestCovarianceMatrix:
    def test_single_point_diagonal(self):
        C = covariance_matrix([(0.0, 0.0)], BASELINE)
        assert C == pytest.approx(np.array([[2.25]]))

    def test_two_point_kernel_value(self):
        C = covariance_matrix([(0.0, 0.0), (0.25, 0.0)], BASELINE)
        assert C[0, 1] == pytest.approx(2.25 * np.exp(-1.0), rel=1e-12)
        assert C[0, 1] == pytest.approx(0.82773, abs=5e-6)

    def test_1d_kind_ignores_vertical_offset(self):
        spec = CovarianceSpec(KIND_1D, 1.5, 0.3)
        C = covariance_matrix([(0.0, 0.0), (0.0, 0.5)], spec)
        assert C[0, 1] == pytest.approx(2.25, rel=1e-14)

    def test_symmetry_and_diagonal(self):
        rng = np.random.default_rng(0)
        pts = rng.random((15, 2))
        C = covariance_matrix(pts, BASELINE)
        assert np.allclose(C, C.T)
        assert np.allclose(np.diag(C), 2.25)

    def test_nonfinite_coordinates_rejected(self):
        with pytest.raises(InvalidInput):
            covariance_matrix([(np.nan, 0.0)], BASELINE)


class TestKlDecompose:
    def test_two_point_hand_eigenpairs(self):
        # W = diag(1/2, 1/2), C = s^2 [[1, c], [c, 1]]
        # => eigvals of sqrt(W) C sqrt(W) are s^2 (1 +/- c) / 2
        sigma = 1.5
        spec = CovarianceSpec(KIND_2D, sigma, 0.25, 0.125)
        grid = QuadGrid(np.array([[0.0, 0.0], [0.1, 0.05]]), np.array([0.5, 0.5]))
        c = covariance_matrix(grid.points, spec)[0, 1] / sigma**2
        basis = kl_decompose(grid, spec)
        expected = np.array([0.5 * sigma**2 * (1 + c), 0.5 * sigma**2 * (1 - c)])
        assert np.max(np.abs(basis.eigenvalues - expected)) < 1e-12
        # eigenfunction columns are (1,1) and (1,-1) under the sign convention
        assert np.allclose(basis.eigenfunctions[:, 0], [1.0, 1.0], atol=1e-12)
        assert np.allclose(basis.eigenfunctions[:, 1], [1.0, -1.0], atol=1e-12)

    def test_zero_sigma_gives_zero_spectrum(self):
        spec = CovarianceSpec(KIND_2D, 0.0, 0.25, 0.125)
        basis = kl_decompose(uniform_grid_2d(4, 4), spec)
        assert np.all(basis.eigenvalues == 0.0)
        assert basis.n_retained == 0
        assert spectral_energy(basis, 3) == 1.0  # zero-spectrum convention

    def test_weighted_orthonormality(self):
        basis = kl_decompose(uniform_grid_2d(20, 20), BASELINE)
        w = basis.grid.weights
        E = basis.eigenfunctions
        gram = (E * w[:, None]).T @ E
        assert np.max(np.abs(gram - np.eye(E.shape[1]))) < 1e-8

    def test_eigenvalues_sorted_and_nonnegative(self):
        basis = kl_decompose(uniform_grid_2d(8, 8), BASELINE)
        lam = basis.eigenvalues
        assert np.all(lam >= 0.0)
        assert np.all(np.diff(lam) <= 1e-15)

    def test_covariance_reconstruction(self):
        basis = kl_decompose(uniform_grid_2d(10, 10), BASELINE)
        C = covariance_matrix(basis.grid.points, BASELINE)
        recon = basis.eigenfunctions @ np.diag(basis.eigenvalues) @ basis.eigenfunctions.T
        assert (np.linalg.norm(recon - C) / np.linalg.norm(C)) < 1e-6

    def test_1d_grid(self):
        spec = CovarianceSpec(KIND_1D, 1.0, 0.125)
        basis = kl_decompose(uniform_grid_1d(41), spec)
        w = basis.grid.weights
        gram = (basis.eigenfunctions * w[:, None]).T @ basis.eigenfunctions
        assert np.max(np.abs(gram - np.eye(41))) < 1e-8


class TestLhsNormal:
    def test_stratification_example(self):
        sm = lhs_normal(4, 1, seed=3)
        from scipy.stats import norm
        u = np.sort(norm.cdf(sm.xi[:, 0]))
        for i, v in enumerate(u):
            assert i / 4 <= v < (i + 1) / 4

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 40), m=st.integers(1, 5),
           seed=st.integers(0, 2**31 - 1))
    def test_stratification_property(self, n, m, seed):
        from scipy.stats import norm
        sm = lhs_normal(n, m, seed)
        u = norm.cdf(sm.xi)
        strata = np.floor(u * n).astype(int)
        for j in range(m):
            assert sorted(strata[:, j]) == list(range(n))

    def test_deterministic(self):
        a = lhs_normal(17, 3, seed=99).xi
        b = lhs_normal(17, 3, seed=99).xi
        assert np.array_equal(a, b)
        c = lhs_normal(17, 3, seed=100).xi
        assert not np.array_equal(a, c)

    def test_standard_normal_moments(self):
        xi = lhs_normal(10000, 2, seed=1).xi
        assert np.all(np.abs(xi.mean(axis=0)) < 0.05)
        assert np.all(np.abs(xi.var(axis=0) - 1.0) < 0.05)

    def test_invalid_counts(self):
        with pytest.raises(InvalidInput):
            lhs_normal(0, 1, 0)
        with pytest.raises(InvalidInput):
            lhs_normal(1, 0, 0)


class TestFieldReconstruction:
    def setup_method(self):
        self.basis = kl_decompose(uniform_grid_2d(5, 5), BASELINE,
                                  mu_kappa=-2.0, kappa_star=-2.0)

    def test_zero_coefficients_give_mean(self):
        kappa = log_field(self.basis, np.zeros(10), 10)
        assert np.allclose(kappa, -2.0)

    def test_single_mode_linearity(self):
        xi = np.array([2.0])
        kappa = log_field(self.basis, xi, 1)
        expected = -2.0 + 2.0 * np.sqrt(self.basis.eigenvalues[0]) \
            * self.basis.eigenfunctions[:, 0]
        assert np.allclose(kappa, expected, atol=1e-14)

    def test_exp_map_relation_and_positivity(self):
        xi = lhs_normal(5, self.basis.n_modes, 7).xi
        for row in xi:
            k = permeability_field(self.basis, row, self.basis.n_modes)
            lf = log_field(self.basis, row, self.basis.n_modes)
            assert np.array_equal(k, np.exp(lf - self.basis.kappa_star))
            assert np.all(k > 0)

    def test_constant_shift_of_reference(self):
        basis = kl_decompose(uniform_grid_2d(3, 3),
                             CovarianceSpec(KIND_2D, 0.0, 0.25, 0.125),
                             mu_kappa=0.0, kappa_star=-np.log(2.0))
        k = permeability_field(basis, np.zeros(1), 1)
        assert np.allclose(k, 2.0)

    def test_ensemble_variance_matches_kernel_diagonal(self):
        basis = kl_decompose(uniform_grid_2d(5, 5), BASELINE)
        xi = lhs_normal(10000, basis.n_modes, 21).xi
        amps = np.sqrt(basis.eigenvalues)
        fields = xi @ (amps[:, None] * basis.eigenfunctions.T)
        var = fields.var(axis=0)
        assert np.all(np.abs(var - 2.25) / 2.25 < 0.05)

    def test_too_many_modes_rejected(self):
        with pytest.raises(InvalidInput):
            log_field(self.basis, np.zeros(999), 999)


class TestSpectralEnergy:
    def test_ratio_example(self):
        grid = QuadGrid(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
        basis = KLBasis(eigenvalues=np.array([3.0, 1.0]),
                        eigenfunctions=np.eye(2), mu_kappa=0.0,
                        kappa_star=0.0, grid=grid, n_retained=2)
        assert spectral_energy(basis, 1) == pytest.approx(0.75)
        assert spectral_energy(basis, 2) == 1.0

    def test_monotone_and_complete(self):
        basis = kl_decompose(uniform_grid_2d(20, 20), BASELINE)
        energies = [spectral_energy(basis, m) for m in range(basis.n_modes + 1)]
        assert np.all(np.diff(energies) >= -1e-15)
        assert energies[-1] == pytest.approx(1.0, abs=1e-12)
        assert spectral_energy(basis, 40) > spectral_energy(basis, 20)
