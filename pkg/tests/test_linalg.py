import numpy as np
import pytest
from oracle_helpers import random_psd, random_symmetric

from simcomplete.errors import NonConvergence
from simcomplete.linalg import (
    effective_rank,
    factor_from_psd,
    frobenius_norm,
    gram_effective_rank,
    nuclear_norm,
    psd_project,
    soft_threshold_eigenvalues,
    sym_eigendecompose,
    symmetrize,
)


class TestFrobeniusNorm:
    def test_identity(self):
        assert frobenius_norm(np.eye(2)) == pytest.approx(np.sqrt(2.0), abs=1e-15)

    def test_three_four_five(self):
        assert frobenius_norm([[3.0, 4.0], [0.0, 0.0]]) == 5.0

    def test_zero_iff_zero_matrix(self):
        assert frobenius_norm(np.zeros((3, 4))) == 0.0
        assert frobenius_norm([[0.0, 1e-300]]) > 0.0

    def test_matches_summation_loop(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(10, 10))
        total = 0.0
        for i in range(10):
            for j in range(10):
                total += m[i, j] * m[i, j]
        assert frobenius_norm(m) == pytest.approx(np.sqrt(total), rel=1e-12)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            frobenius_norm([[np.nan, 0.0], [0.0, 0.0]])


class TestEigendecompose:
    def test_already_diagonal(self):
        vals, vecs = sym_eigendecompose(np.diag([3.0, 1.0]))
        np.testing.assert_array_equal(vals, [3.0, 1.0])
        np.testing.assert_array_equal(vecs, np.eye(2))

    def test_exchange_matrix(self):
        vals, _ = sym_eigendecompose([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(vals, [1.0, -1.0], atol=1e-14)

    def test_reconstruction_random_20(self):
        rng = np.random.default_rng(5)
        s = random_symmetric(rng, 20)
        vals, vecs = sym_eigendecompose(s)
        err = np.linalg.norm((vecs * vals) @ vecs.T - s, "fro")
        assert err <= 1e-10 * np.linalg.norm(s, "fro")

    def test_invariants_over_sizes(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            n = int(rng.integers(1, 51))
            s = random_symmetric(rng, n)
            vals, vecs = sym_eigendecompose(s)
            assert np.all(np.diff(vals) <= 0.0)
            assert np.linalg.norm(vecs.T @ vecs - np.eye(n), "fro") <= 1e-10 * np.sqrt(n)
            rec = np.linalg.norm((vecs * vals) @ vecs.T - s, "fro")
            assert rec <= 1e-10 * max(1.0, np.linalg.norm(s, "fro"))

    def test_sign_convention(self):
        rng = np.random.default_rng(7)
        _, vecs = sym_eigendecompose(random_symmetric(rng, 9))
        for j in range(9):
            col = vecs[:, j]
            nz = np.nonzero(col)[0]
            assert col[nz[0]] >= 0.0

    def test_zero_and_single(self):
        vals, vecs = sym_eigendecompose(np.zeros((3, 3)))
        np.testing.assert_array_equal(vals, np.zeros(3))
        np.testing.assert_array_equal(vecs, np.eye(3))
        vals, vecs = sym_eigendecompose([[4.0]])
        assert vals[0] == 4.0 and vecs[0, 0] == 1.0

    def test_nonconvergence_with_tiny_sweep_cap(self):
        rng = np.random.default_rng(8)
        s = random_symmetric(rng, 12)
        with pytest.raises(NonConvergence):
            sym_eigendecompose(s, max_sweeps=0)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            sym_eigendecompose(np.eye(2), sweep_tol=0.0)


class TestNuclearNorm:
    def test_psd_diagonal(self):
        assert nuclear_norm(np.diag([1.0, 2.0])) == pytest.approx(3.0, abs=1e-12)

    def test_gram_of_ones_column(self):
        v = np.array([[1.0], [1.0]])
        assert nuclear_norm(v @ v.T) == pytest.approx(2.0, abs=1e-12)
        assert nuclear_norm(v @ v.T) == pytest.approx(np.linalg.norm(v, "fro") ** 2, abs=1e-12)

    def test_absolute_values(self):
        assert nuclear_norm(np.diag([1.0, -2.0])) == pytest.approx(3.0, abs=1e-12)

    def test_gram_tightness(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            n = int(rng.integers(2, 30))
            r = int(rng.integers(1, 6))
            v = rng.normal(size=(n, r))
            fro_sq = np.linalg.norm(v, "fro") ** 2
            assert abs(nuclear_norm(v @ v.T) - fro_sq) <= 1e-9 * max(1.0, fro_sq)


class TestPsdProject:
    def test_clamps_negative_diagonal(self):
        np.testing.assert_allclose(
            psd_project(np.diag([2.0, -1.0])), np.diag([2.0, 0.0]), atol=1e-12
        )

    def test_fixed_point_on_psd(self):
        rng = np.random.default_rng(10)
        p = random_psd(rng, 12)
        np.testing.assert_allclose(
            psd_project(p), p, atol=1e-10 * max(1.0, np.linalg.norm(p, "fro"))
        )

    def test_result_is_psd(self):
        rng = np.random.default_rng(12)
        s = random_symmetric(rng, 15)
        out = psd_project(s)
        vals, _ = sym_eigendecompose(out)
        assert vals.min() >= -1e-10 * max(1.0, np.trace(out))

    def test_nonexpansive_toward_psd_targets(self):
        rng = np.random.default_rng(13)
        for _ in range(40):
            n = int(rng.integers(2, 25))
            s = random_symmetric(rng, n)
            p = random_psd(rng, n)
            proj = psd_project(s)
            assert np.linalg.norm(p - proj, "fro") <= np.linalg.norm(p - s, "fro") + 1e-12


class TestSoftThreshold:
    def test_shifts_spectrum(self):
        rng = np.random.default_rng(14)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        s = symmetrize(q @ np.diag([1.0, 0.5, 0.1]) @ q.T)
        out = soft_threshold_eigenvalues(s, 0.2)
        vals, _ = sym_eigendecompose(out)
        np.testing.assert_allclose(vals, [0.8, 0.3, 0.0], atol=1e-10)

    def test_zero_amount_is_identity_on_psd(self):
        rng = np.random.default_rng(15)
        p = random_psd(rng, 8)
        np.testing.assert_allclose(soft_threshold_eigenvalues(p, 0.0), p, atol=1e-10)


class TestFactorFromPsd:
    def test_identity_full_rank(self):
        v = factor_from_psd(np.eye(2), 2)
        np.testing.assert_allclose(v @ v.T, np.eye(2), atol=1e-12)

    def test_sqrt_eigenvalue_scaling(self):
        v = factor_from_psd(np.diag([4.0, 0.0]), 1)
        np.testing.assert_allclose(v, [[2.0], [0.0]], atol=1e-12)

    def test_exact_rank_recovery(self):
        rng = np.random.default_rng(16)
        a = rng.normal(size=(20, 2))
        s = symmetrize(a @ a.T)
        v = factor_from_psd(s, 2)
        assert np.linalg.norm(v @ v.T - s, "fro") <= 1e-9 * np.linalg.norm(s, "fro")

    def test_residual_matches_discarded_spectrum(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(3, 20))
            r = int(rng.integers(1, n))
            s = random_symmetric(rng, n)
            vals, _ = sym_eigendecompose(s)
            v = factor_from_psd(s, r)
            resid_sq = np.linalg.norm(v @ v.T - s, "fro") ** 2
            kept = np.maximum(vals[:r], 0.0)
            expected = float(np.sum((vals[:r] - kept) ** 2) + np.sum(vals[r:] ** 2))
            assert abs(resid_sq - expected) <= 1e-10 * max(1.0, expected)

    def test_rank_bounds(self):
        with pytest.raises(ValueError):
            factor_from_psd(np.eye(3), 0)
        with pytest.raises(ValueError):
            factor_from_psd(np.eye(3), 4)


class TestEffectiveRank:
    def test_threshold_cuts_tiny_eigenvalue(self):
        assert effective_rank(np.diag([1.0, 1e-20]), threshold=1e-15) == 1

    def test_identity(self):
        assert effective_rank(np.eye(7)) == 7

    def test_zero_matrix(self):
        assert effective_rank(np.zeros((4, 4))) == 0

    def test_gram_bounded_by_width(self):
        rng = np.random.default_rng(18)
        v = rng.normal(size=(30, 5))
        assert effective_rank(symmetrize(v @ v.T)) <= 5

    def test_gram_shortcut_agrees(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            n = int(rng.integers(4, 25))
            r = int(rng.integers(1, 6))
            v = rng.normal(size=(n, r))
            assert gram_effective_rank(v) == effective_rank(symmetrize(v @ v.T))

    def test_projection_never_raises_rank(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            s = random_symmetric(rng, int(rng.integers(2, 20)))
            assert effective_rank(psd_project(s)) <= effective_rank(s)
