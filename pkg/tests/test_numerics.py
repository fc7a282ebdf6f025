"""Tests for the symmetric linear algebra and sampling helpers."""

import math

import numpy as np
import pytest

from mllab.base import DimensionMismatchError, NotPositiveDefiniteError
from mllab.models import CholFactor, Seed, SymMatrix
from mllab.numerics import (
    cholesky_with_jitter,
    jitter_schedule,
    logdet,
    mvn_sample,
    solve_spd,
    sym_eigenvalues,
    whiten,
)

HALF = [[1.0, 0.5], [0.5, 1.0]]


def _random_spd(seed, n):
    rng = Seed(value=seed).generator()
    a = rng.standard_normal((n, n))
    return SymMatrix(entries=a @ a.T + n * np.eye(n))


@pytest.mark.unit
class TestSymMatrix:
    """Tests for the symmetric matrix container."""

    def test_symmetrizes_input(self):
        """Test entries are averaged with their transpose."""
        m = SymMatrix(entries=[[1.0, 2.0], [0.0, 1.0]])
        assert np.array_equal(m.entries, m.entries.T)
        assert m.entries[0, 1] == 1.0

    def test_rejects_non_square(self):
        """Test non-square input is refused."""
        with pytest.raises(ValueError):
            SymMatrix(entries=np.ones((2, 3)))

    def test_rejects_nan(self):
        """Test non-finite entries are refused."""
        with pytest.raises(ValueError):
            SymMatrix(entries=[[1.0, math.nan], [math.nan, 1.0]])


@pytest.mark.unit
class TestCholeskyWithJitter:
    """Tests for jittered Cholesky factorization."""

    def test_identity_needs_no_jitter(self):
        """Test the identity factors to itself with zero jitter."""
        f = cholesky_with_jitter(SymMatrix(entries=np.eye(3)))
        assert np.array_equal(f.L, np.eye(3))
        assert f.jitter_used == 0.0

    def test_rank_one_needs_bounded_jitter(self):
        """Test the 2x2 all-ones matrix factors with jitter at most 1e-4 * trace / n."""
        a = SymMatrix(entries=np.ones((2, 2)))
        f = cholesky_with_jitter(a)
        assert 0.0 < f.jitter_used <= 1e-4 * a.trace / a.n
        assert np.all(np.diag(f.L) > 0.0)

    def test_negative_definite_fails(self):
        """Test diag(-1, -1) exhausts the schedule."""
        with pytest.raises(NotPositiveDefiniteError) as exc_info:
            cholesky_with_jitter(SymMatrix(entries=-np.eye(2)))
        assert exc_info.value.n == 2

    def test_schedule_starts_at_zero_and_increases(self):
        """Test the schedule tries no jitter first and then grows."""
        schedule = jitter_schedule(SymMatrix(entries=4.0 * np.eye(2)))
        assert schedule[0] == 0.0
        assert all(b > a for a, b in zip(schedule, schedule[1:]))
        assert schedule[-1] == pytest.approx(1e-4 * 4.0)

    def test_factor_reconstructs_matrix(self):
        """Test L L^T reproduces a random SPD matrix."""
        a = _random_spd(5, 6)
        f = cholesky_with_jitter(a)
        assert np.allclose(f.L @ f.L.T, a.entries, rtol=1e-12, atol=1e-12)
        assert np.array_equal(f.L, np.tril(f.L))

    def test_factor_rejects_upper_entries(self):
        """Test CholFactor refuses a non-triangular matrix."""
        with pytest.raises(ValueError):
            CholFactor(L=np.ones((2, 2)))


@pytest.mark.unit
class TestLogdet:
    """Tests for the Cholesky log-determinant."""

    def test_identity(self):
        """Test log|I| = 0."""
        assert logdet(cholesky_with_jitter(SymMatrix(entries=np.eye(4)))) == 0.0

    def test_diagonal(self):
        """Test log|diag(2, 2)| = 2 log 2."""
        f = cholesky_with_jitter(SymMatrix(entries=2.0 * np.eye(2)))
        assert logdet(f) == pytest.approx(2.0 * math.log(2.0), abs=1e-12)

    def test_half_correlation(self):
        """Test log|[[1, .5], [.5, 1]]| = log 0.75."""
        f = cholesky_with_jitter(SymMatrix(entries=HALF))
        assert logdet(f) == pytest.approx(math.log(0.75), abs=1e-12)

    def test_matches_sum_of_log_eigenvalues(self):
        """Test logdet equals the sum of log eigenvalues on random SPD matrices."""
        for seed in range(10):
            a = _random_spd(seed, 2 + seed)
            expected = float(np.sum(np.log(sym_eigenvalues(a))))
            assert logdet(cholesky_with_jitter(a)) == pytest.approx(expected, rel=1e-6)


@pytest.mark.unit
class TestSolveSpd:
    """Tests for SPD solves and whitening."""

    def test_identity(self):
        """Test solving with the identity returns b."""
        f = cholesky_with_jitter(SymMatrix(entries=np.eye(2)))
        assert np.allclose(solve_spd(f, np.array([3.0, 4.0])), [3.0, 4.0])

    def test_diagonal(self):
        """Test diag(2, 4) x = [2, 4] gives [1, 1]."""
        f = cholesky_with_jitter(SymMatrix(entries=np.diag([2.0, 4.0])))
        assert np.allclose(solve_spd(f, np.array([2.0, 4.0])), [1.0, 1.0])

    def test_half_correlation(self):
        """Test [[1, .5], [.5, 1]] x = [1, 1] gives [2/3, 2/3]."""
        f = cholesky_with_jitter(SymMatrix(entries=HALF))
        assert np.allclose(solve_spd(f, np.array([1.0, 1.0])), [2.0 / 3.0, 2.0 / 3.0], atol=1e-12)

    def test_multiply_back(self):
        """Test A x reproduces b within 1e-8 |b|."""
        a = _random_spd(3, 8)
        b = Seed(value=4).generator().standard_normal(8)
        x = solve_spd(cholesky_with_jitter(a), b)
        assert np.linalg.norm(a.entries @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_whiten_gives_quadratic_form(self):
        """Test ||L^-1 b||^2 = b^T A^-1 b."""
        a = _random_spd(6, 5)
        b = np.arange(1.0, 6.0)
        f = cholesky_with_jitter(a)
        v = whiten(f, b)
        assert float(v @ v) == pytest.approx(float(b @ solve_spd(f, b)), rel=1e-12)

    def test_dimension_mismatch(self):
        """Test a right-hand side of the wrong length is refused."""
        f = cholesky_with_jitter(SymMatrix(entries=np.eye(2)))
        with pytest.raises(DimensionMismatchError):
            solve_spd(f, np.ones(3))


@pytest.mark.unit
class TestSymEigenvalues:
    """Tests for the symmetric eigen-solver."""

    def test_identity(self):
        """Test the identity has unit eigenvalues."""
        assert np.allclose(sym_eigenvalues(SymMatrix(entries=np.eye(2))), [1.0, 1.0])

    def test_half_correlation_descending(self):
        """Test [[1, .5], [.5, 1]] has eigenvalues [1.5, 0.5] in that order."""
        assert np.allclose(sym_eigenvalues(SymMatrix(entries=HALF)), [1.5, 0.5], atol=1e-12)

    def test_rank_one(self):
        """Test the 2x2 all-ones matrix has eigenvalues [2, 0]."""
        assert np.allclose(sym_eigenvalues(SymMatrix(entries=np.ones((2, 2)))), [2.0, 0.0], atol=1e-12)

    def test_sum_equals_trace(self):
        """Test eigenvalues sum to the trace."""
        a = _random_spd(9, 7)
        assert float(np.sum(sym_eigenvalues(a))) == pytest.approx(a.trace, rel=1e-8)


@pytest.mark.unit
class TestMvnSample:
    """Tests for seeded Gaussian sampling."""

    def test_zero_factor_returns_mean(self):
        """Test L = 0 returns the mean exactly."""
        mean = np.array([1.5, -2.0])
        f = CholFactor(L=np.zeros((2, 2)))
        assert np.array_equal(mvn_sample(mean, f, Seed(value=1)), mean)

    def test_same_seed_same_draw(self):
        """Test equal seeds give bitwise-equal draws."""
        f = cholesky_with_jitter(SymMatrix(entries=HALF))
        a = mvn_sample(np.zeros(2), f, Seed(value=42))
        b = mvn_sample(np.zeros(2), f, Seed(value=42))
        assert np.array_equal(a, b)

    def test_empirical_covariance(self):
        """Test 1e5 draws reproduce the covariance within 0.05 per entry."""
        f = cholesky_with_jitter(SymMatrix(entries=HALF))
        draws = mvn_sample(np.zeros(2), f, Seed(value=7), size=100_000)
        assert draws.shape == (100_000, 2)
        assert np.allclose(np.cov(draws.T), HALF, atol=0.05)

    def test_mean_length_mismatch(self):
        """Test a mean of the wrong length is refused."""
        f = cholesky_with_jitter(SymMatrix(entries=np.eye(2)))
        with pytest.raises(DimensionMismatchError):
            mvn_sample(np.zeros(3), f, Seed(value=0))

    def test_spawned_seeds_differ(self):
        """Test spawned child seeds are deterministic and distinct."""
        root = Seed(value=5)
        assert root.spawn(0) == root.spawn(0)
        assert root.spawn(0) != root.spawn(1)
