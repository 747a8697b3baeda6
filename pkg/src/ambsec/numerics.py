"""Complex linear algebra, seeded sampling and small information helpers.

Complex vectors and matrices are plain ``numpy`` arrays (``complex128``).
Every function here accepts a single matrix; the batched variants used by
the detectors live next to their callers.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

DEFAULT_COND_LIMIT = 1e12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix is singular or too ill-conditioned to invert.

    ``pivot`` is the smallest pivot magnitude seen during factorization.
    """

    def __init__(self, message: str, pivot: float = 0.0):
        super().__init__(message)
        self.pivot = pivot


class Prng:
    """Reproducible random stream addressed by ``(seed, stream_id)``.

    Streams with different ids are derived through ``numpy``'s
    ``SeedSequence`` spawn keys and are statistically independent.
    ``substream`` extends the key path, so per-trial streams can be
    nested below a per-grid-point stream without coordination.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0, *, _path: tuple = ()):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(_path) + (self.stream_id,)
        seq = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def substream(self, stream_id: int) -> "Prng":
        return Prng(self.seed, stream_id, _path=self._path)

    def __repr__(self) -> str:
        return f"Prng(seed={self.seed}, path={self._path})"

    # thin pass-throughs, kept so callers never touch the generator directly
    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def gamma(self, shape, scale=1.0, size=None):
        return self.generator.gamma(shape, scale, size)


def sample_cscg(rng: Prng, n) -> np.ndarray:
    """Draw zero-mean, unit-variance circularly symmetric complex Gaussians.

    ``n`` may be an int or a shape tuple. Real and imaginary parts are
    independent with variance 1/2 each.
    """
    shape = (n,) if np.isscalar(n) else tuple(n)
    if len(shape) == 0 or any(int(s) < 1 for s in shape):
        raise ValueError(f"sample_cscg needs a positive size, got {n!r}")
    raw = rng.standard_normal(shape + (2,))
    return (raw[..., 0] + 1j * raw[..., 1]) * np.sqrt(0.5)


def hermitian_transpose(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(np.asarray(a), -1, -2))


def _require_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def mat_inverse(a: np.ndarray, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Inverse via pivoted LU, refusing matrices with condition number above ``cond_limit``."""
    a = _require_square(a)
    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    smallest = float(pivots.min())
    if smallest == 0.0:
        raise SingularMatrixError("matrix is singular", pivot=smallest)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(
            f"condition number {cond:.3g} exceeds limit {cond_limit:.3g}", pivot=smallest
        )
    return scipy.linalg.lu_solve((lu, piv), np.eye(a.shape[0], dtype=complex))


def mat_determinant(a: np.ndarray) -> complex:
    """Determinant from the LU factors (product of pivots times permutation sign)."""
    a = _require_square(a)
    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    det = complex(np.prod(np.diag(lu)))
    return -det if swaps % 2 else det


def log_determinant(a: np.ndarray) -> tuple[complex, float]:
    """Return ``(phase, log|det|)`` so that ``det = phase * exp(logabs)``."""
    a = _require_square(a)
    sign, logabs = np.linalg.slogdet(a)
    return complex(sign), float(logabs)


def hpd_factor(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky fast path for Hermitian positive-definite matrices.

    Returns ``(inverse, logdet)``. Raises ``SingularMatrixError`` when the
    matrix is not numerically positive-definite.
    """
    a = _require_square(a)
    try:
        c, lower = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Cholesky failed: {exc}", pivot=0.0) from exc
    diag = np.abs(np.diag(c))
    logdet = 2.0 * float(np.sum(np.log(diag)))
    inv = scipy.linalg.cho_solve((c, lower), np.eye(a.shape[0], dtype=complex))
    # symmetrize to kill round-off drift in the Hermitian structure
    inv = 0.5 * (inv + hermitian_transpose(inv))
    return inv, logdet


def binary_entropy(theta) -> float | np.ndarray:
    """Binary entropy in bits, with 0*log(0) taken as 0.

    Accepts scalars or arrays; raises ``ValueError`` outside ``[0, 1]``.
    """
    t = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(t)) or np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("binary_entropy needs probabilities in [0, 1]")
    u = 1.0 - t
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(t > 0, t * np.log2(t), 0.0) + np.where(u > 0, u * np.log2(u), 0.0))
    h = np.clip(h, 0.0, 1.0)
    return float(h) if h.ndim == 0 else h


def db_to_linear(db: float) -> float:
    if db == -math.inf:
        return 0.0
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf
