"""Maximum-likelihood detection of the tag state with perfect CSI.

Under either hypothesis every received antenna vector is zero-mean complex
Gaussian; only the covariance differs::

    R0 = k1 k1^H + I          (tag absorbing)
    R1 = (k1+k2)(k1+k2)^H + I (tag reflecting)

All likelihood work is done in the log domain.  The functions accept a single
block ``(M, N)`` or a stack ``(..., M, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .channel import ChannelParams, ChannelRealization
from .numerics import hpd_factor

LN_PI = float(np.log(np.pi))


@dataclass(frozen=True)
class PerfectCsi:
    k1: np.ndarray
    k2: np.ndarray

    def __post_init__(self):
        if np.shape(self.k1) != np.shape(self.k2) or np.ndim(self.k1) != 1:
            raise ValueError("k1 and k2 must be vectors of equal length")

    @classmethod
    def from_channel(cls, chan: ChannelRealization, params: ChannelParams) -> "PerfectCsi":
        return cls(k1=chan.direct_gain(params), k2=chan.backscatter_gain(params))

    @property
    def M(self) -> int:
        return len(self.k1)


@dataclass(frozen=True)
class Covariance:
    """A Hermitian positive-definite covariance with its inverse and log-determinant."""

    matrix: np.ndarray
    inverse: np.ndarray
    logdet: float

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Covariance":
        inv, logdet = hpd_factor(matrix)
        return cls(matrix=np.asarray(matrix, dtype=complex), inverse=inv, logdet=logdet)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CovPair:
    r0: Covariance
    r1: Covariance

    R0 = property(lambda self: self.r0.matrix)
    R1 = property(lambda self: self.r1.matrix)
    R0_inv = property(lambda self: self.r0.inverse)
    R1_inv = property(lambda self: self.r1.inverse)
    logdet_R0 = property(lambda self: self.r0.logdet)
    logdet_R1 = property(lambda self: self.r1.logdet)

    def __getitem__(self, e: int) -> Covariance:
        return (self.r0, self.r1)[e]

    @property
    def M(self) -> int:
        return self.r0.M


def _rank_one_plus_identity(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=complex)
    return np.outer(k, k.conj()) + np.eye(k.size)


def build_covariances(csi: PerfectCsi) -> CovPair:
    return CovPair(
        r0=Covariance.from_matrix(_rank_one_plus_identity(csi.k1)),
        r1=Covariance.from_matrix(_rank_one_plus_identity(csi.k1 + csi.k2)),
    )


def _quadratic_form(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``y^H A y`` over the last axis of ``y``; real part only."""
    return np.einsum("...m,mk,...k->...", y.conj(), a, y).real


def log_conditional_pdf(y: np.ndarray, cov: Covariance) -> np.ndarray | float:
    """Log density of ``CN(0, R)`` at ``y``; ``y`` has shape ``(..., M)``."""
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] != cov.M:
        raise ValueError(f"vector length {y.shape[-1]} does not match M={cov.M}")
    out = -cov.M * LN_PI - cov.logdet - _quadratic_form(y, cov.inverse)
    return float(out) if np.ndim(out) == 0 else out


def _check_block(Y: np.ndarray, M: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim < 2 or Y.shape[-2] != M:
        raise ValueError(f"expected blocks shaped (..., {M}, N), got {Y.shape}")
    return Y


def mlk_statistic(Y: np.ndarray, cov: CovPair) -> np.ndarray | float:
    """``sum_n y_n^H (R0^-1 - R1^-1) y_n`` for each block."""
    Y = _check_block(Y, cov.M)
    diff = cov.R0_inv - cov.R1_inv
    t = np.einsum("...mn,mk,...kn->...", Y.conj(), diff, Y).real
    return float(t) if np.ndim(t) == 0 else t


def mlk_threshold(cov: CovPair, N: int) -> float:
    return N * (cov.logdet_R1 - cov.logdet_R0)


def mlk_decide(Y: np.ndarray, cov: CovPair) -> np.ndarray | int:
    """1 when the statistic exceeds ``N ln(|R1|/|R0|)``, else 0 (ties go to 0)."""
    Y = _check_block(Y, cov.M)
    decision = (np.asarray(mlk_statistic(Y, cov)) > mlk_threshold(cov, Y.shape[-1])).astype(np.uint8)
    return int(decision) if decision.ndim == 0 else decision


def block_log_likelihoods(Y: np.ndarray, cov: CovPair) -> np.ndarray:
    """Summed per-column log densities under each hypothesis, shape ``(..., 2)``."""
    Y = _check_block(Y, cov.M)
    cols = np.swapaxes(Y, -1, -2)
    return np.stack([np.sum(log_conditional_pdf(cols, cov[e]), axis=-1) for e in (0, 1)], axis=-1)


def energy_decide(Y: np.ndarray, cov: CovPair) -> np.ndarray | int:
    """Baseline: compare received energy with the midpoint of its two conditional means."""
    Y = _check_block(Y, cov.M)
    N = Y.shape[-1]
    energy = np.sum(np.abs(Y) ** 2, axis=(-2, -1))
    mean0 = N * np.trace(cov.R0).real
    mean1 = N * np.trace(cov.R1).real
    mid = 0.5 * (mean0 + mean1)
    decision = (energy > mid) if mean1 >= mean0 else (energy < mid)
    decision = decision.astype(np.uint8)
    return int(decision) if decision.ndim == 0 else decision


class MLKDetector(ClassifierMixin, BaseEstimator):
    """Perfect-CSI likelihood-ratio detector with a ``predict`` interface.

    ``fit`` takes the true channel knowledge instead of training data, since
    the detector has nothing to learn.
    """

    def __init__(self, csi: PerfectCsi | None = None):
        self.csi = csi

    def fit(self, X=None, y=None):
        if self.csi is None:
            raise ValueError("MLKDetector needs perfect CSI")
        self.cov_ = build_covariances(self.csi)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        return np.asarray(mlk_statistic(X, self.cov_)) - mlk_threshold(self.cov_, np.shape(X)[-1])

    def predict(self, X):
        return np.atleast_1d(mlk_decide(X, self.cov_))
