"""Dense symmetric linear algebra and seeded sampling.

Factorizations go through LAPACK (via scipy.linalg) and randomness through numpy's
PCG64 bit generator, so equal seeds give bitwise-equal streams on every platform
numpy supports.
"""

import logging
from typing import List, Optional

import numpy as np
from scipy import linalg

from .base import DimensionMismatchError, NoConvergenceError, NotPositiveDefiniteError
from .models import CholFactor, FloatArray, Seed, SymMatrix

logger = logging.getLogger(__name__)

# Relative jitter levels, in units of trace / n; the first attempt uses no jitter.
JITTER_LEVELS = [10.0**k for k in range(-10, -3)]


def jitter_schedule(a: SymMatrix) -> List[float]:
    """Absolute jitter values tried by cholesky_with_jitter, in order."""
    scale = abs(a.trace) / a.n
    if scale == 0.0:
        scale = 1.0
    return [0.0] + [level * scale for level in JITTER_LEVELS]


def cholesky_with_jitter(a: SymMatrix) -> CholFactor:
    """Factor a + jI for the smallest j of the jitter schedule that succeeds.

    Args:
        a: Symmetric matrix to factor

    Returns:
        CholFactor: Lower factor and the jitter that was added

    Raises:
        NotPositiveDefiniteError: If every jitter level fails
    """
    schedule = jitter_schedule(a)
    identity = np.eye(a.n)
    for jitter in schedule:
        try:
            lower = linalg.cholesky(a.entries + jitter * identity, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        diagonal = np.diag(lower)
        if not np.all(diagonal > 0.0) or not np.all(np.isfinite(lower)):
            continue
        if jitter > 0.0:
            logger.debug("cholesky needed jitter %.3e on a %dx%d matrix", jitter, a.n, a.n)
        return CholFactor(L=np.tril(lower), jitter_used=jitter)

    raise NotPositiveDefiniteError(
        f"matrix of size {a.n} is not positive definite even with jitter {schedule[-1]:.3e}",
        n=a.n,
        max_jitter=schedule[-1],
    )


def logdet(f: CholFactor) -> float:
    """Log-determinant of the factored matrix, 2 * sum(log(diag(L)))."""
    return float(2.0 * np.sum(np.log(np.diag(f.L))))


def _check_rows(f: CholFactor, b: FloatArray) -> None:
    if b.ndim not in (1, 2) or b.shape[0] != f.n:
        raise DimensionMismatchError(
            f"right-hand side has {b.shape[0] if b.ndim else 0} rows, factor has {f.n}",
            expected=f.n,
            actual=b.shape[0] if b.ndim else 0,
        )


def solve_spd(f: CholFactor, b: FloatArray) -> FloatArray:
    """Solve (A + jI) x = b with the factor of A + jI.

    Args:
        f: Cholesky factor
        b: Right-hand side vector or matrix with f.n rows

    Returns:
        Solution with the shape of b

    Raises:
        DimensionMismatchError: If b does not have f.n rows
    """
    rhs = np.asarray(b, dtype=np.float64)
    _check_rows(f, rhs)
    return linalg.cho_solve((f.L, True), rhs, check_finite=False)


def whiten(f: CholFactor, b: FloatArray) -> FloatArray:
    """Return L^-1 b, so that b^T (A + jI)^-1 b = ||L^-1 b||^2."""
    rhs = np.asarray(b, dtype=np.float64)
    _check_rows(f, rhs)
    return linalg.solve_triangular(f.L, rhs, lower=True, check_finite=False)


def inverse(f: CholFactor) -> FloatArray:
    """Explicit inverse of the factored matrix."""
    return solve_spd(f, np.eye(f.n))


def sym_eigenvalues(a: SymMatrix) -> FloatArray:
    """Eigenvalues of a symmetric matrix in descending order.

    Raises:
        NoConvergenceError: If the LAPACK driver does not converge
    """
    try:
        values = np.linalg.eigvalsh(a.entries)
    except np.linalg.LinAlgError as e:
        logger.warning("symmetric eigen-solver failed on a %dx%d matrix", a.n, a.n)
        raise NoConvergenceError(f"eigenvalue iteration did not converge: {e}") from e
    return values[::-1].copy()


def mvn_sample(
    mean: FloatArray, cov_factor: CholFactor, seed: Seed, size: Optional[int] = None
) -> FloatArray:
    """Draw mean + L z with z standard normal from the seed's stream.

    Args:
        mean: Mean vector of length n
        cov_factor: Factor L of the covariance
        seed: Stream seed
        size: Number of draws; None returns a single vector

    Returns:
        A vector of length n, or a (size, n) array of draws
    """
    mu = np.asarray(mean, dtype=np.float64)
    if mu.shape != (cov_factor.n,):
        raise DimensionMismatchError(
            f"mean has shape {mu.shape}, factor has size {cov_factor.n}",
            expected=cov_factor.n,
            actual=mu.shape[0] if mu.ndim else 0,
        )
    rng = seed.generator()
    if size is None:
        return mu + cov_factor.L @ rng.standard_normal(cov_factor.n)
    z = rng.standard_normal((size, cov_factor.n))
    return mu + z @ cov_factor.L.T
