"""Covariance features for the neural detector.

For one received block ``Y`` (``M x N``) the sample covariance is
``S = Y Y^H / N``.  Given reference covariances for the two tag states the
feature vector is built as::

    D0 = S R0^-1,  D1 = S R1^-1
    d  = vec(D0) ++ vec(D1)             (row-major, length 2 M^2)
    x  = Re(d) ++ Im(d) ++ |d|          (length 6 M^2)

References come either from the true channel (perfect CSI) or from the
averaged sample covariances of the frame's pilot blocks (estimated CSI).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .mlk import PerfectCsi, build_covariances
from .numerics import SingularMatrixError, hpd_factor, hermitian_transpose

TIKHONOV_DELTA = 1e-6
MODES = ("estimated-csi", "perfect-csi")


def feature_length(M: int) -> int:
    return 6 * M * M


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """``(1/N) sum_n y_n y_n^H`` for a block ``(M, N)`` or a stack ``(..., M, N)``."""
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim < 2:
        raise ValueError(f"expected (..., M, N) blocks, got shape {Y.shape}")
    return Y @ hermitian_transpose(Y) / Y.shape[-1]


@dataclass(frozen=True)
class PilotEstimates:
    Rbar0: np.ndarray
    Rbar1: np.ndarray
    pilot_F: int
    N: int


def estimate_pilot_covariances(frame_blocks: np.ndarray, F: int) -> PilotEstimates:
    """Average the sample covariances of the ``F/2`` zero pilots and the ``F/2`` one pilots."""
    blocks = np.asarray(frame_blocks, dtype=complex)
    if F < 2 or F % 2:
        raise ValueError(f"pilot count must be even and >= 2, got {F}")
    if blocks.ndim != 3 or blocks.shape[0] < F:
        raise ValueError(f"frame must hold at least F={F} blocks shaped (M, N)")
    half = F // 2
    S = sample_covariance(blocks[:F])
    return PilotEstimates(
        Rbar0=S[:half].mean(axis=0),
        Rbar1=S[half:F].mean(axis=0),
        pilot_F=F,
        N=blocks.shape[-1],
    )


def regularized_inverse(R: np.ndarray, delta: float = TIKHONOV_DELTA) -> np.ndarray:
    """Inverse of a Hermitian PSD reference, adding ``delta*I`` if Cholesky fails."""
    R = 0.5 * (R + hermitian_transpose(R))
    try:
        return hpd_factor(R)[0]
    except SingularMatrixError:
        pass
    try:
        return hpd_factor(R + delta * np.eye(R.shape[0]))[0]
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"reference covariance singular even after {delta:g} regularization", exc.pivot
        ) from exc


def _layout(D0: np.ndarray, D1: np.ndarray) -> np.ndarray:
    lead = D0.shape[:-2]
    d = np.concatenate([D0.reshape(lead + (-1,)), D1.reshape(lead + (-1,))], axis=-1)
    return np.concatenate([d.real, d.imag, np.abs(d)], axis=-1)


def features_from_block(S: np.ndarray, R0_ref: np.ndarray, R1_ref: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=complex)
    return _features_with_inverses(S, regularized_inverse(np.asarray(R0_ref, complex)),
                                   regularized_inverse(np.asarray(R1_ref, complex)))


def _features_with_inverses(S, R0_inv, R1_inv) -> np.ndarray:
    return _layout(S @ R0_inv, S @ R1_inv)


def split_features(x: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Recover ``(D0, D1)`` from the real and imaginary slices of a feature vector."""
    x = np.asarray(x, dtype=float)
    n = 2 * M * M
    d = x[..., :n] + 1j * x[..., n:2 * n]
    lead = d.shape[:-1]
    return d[..., :M * M].reshape(lead + (M, M)), d[..., M * M:].reshape(lead + (M, M))


def reference_inverses(frame_blocks, mode: str, csi: PerfectCsi | None = None,
                       F: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if mode == "perfect-csi":
        if csi is None:
            raise ValueError("perfect-csi mode needs the true channel")
        cov = build_covariances(csi)
        return cov.R0_inv, cov.R1_inv
    if mode == "estimated-csi":
        est = estimate_pilot_covariances(frame_blocks, F)
        return regularized_inverse(est.Rbar0), regularized_inverse(est.Rbar1)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def featurize_frame(frame_blocks: np.ndarray, mode: str, csi: PerfectCsi | None = None,
                    F: int = 0) -> np.ndarray:
    """Feature vectors for the payload blocks of one frame, shape ``(I - F, 6 M^2)``.

    The first ``F`` blocks are pilots and never appear in the output.
    """
    blocks = np.asarray(frame_blocks, dtype=complex)
    if blocks.ndim != 3:
        raise ValueError("frame_blocks must be shaped (I, M, N)")
    if F < 0 or F % 2 or F > blocks.shape[0]:
        raise ValueError(f"invalid pilot count {F} for a frame of {blocks.shape[0]} blocks")
    r0_inv, r1_inv = reference_inverses(blocks, mode, csi, F)
    return _features_with_inverses(sample_covariance(blocks[F:]), r0_inv, r1_inv)


class CovarianceFeaturizer(TransformerMixin, BaseEstimator):
    """Block-to-feature transformer.

    ``fit`` fixes the reference covariances: from the pilot blocks of a frame
    (``mode="estimated-csi"``) or from the ``csi`` passed to ``fit``
    (``mode="perfect-csi"``).  ``transform`` maps blocks ``(n, M, N)`` to
    ``(n, 6 M^2)`` features.
    """

    def __init__(self, mode: str = "estimated-csi", pilot_F: int = 10):
        self.mode = mode
        self.pilot_F = pilot_F

    def fit(self, X=None, y=None, csi: PerfectCsi | None = None):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.R0_inv_, self.R1_inv_ = reference_inverses(X, self.mode, csi, self.pilot_F)
        self.n_antennas_ = self.R0_inv_.shape[0]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=complex)
        if X.ndim == 2:
            X = X[None]
        if X.shape[-2] != self.n_antennas_:
            raise ValueError(f"blocks have M={X.shape[-2]}, fitted with M={self.n_antennas_}")
        return _features_with_inverses(sample_covariance(X), self.R0_inv_, self.R1_inv_)


# dataset records: uint32 total record length, uint8 label, uint16 M, float64[6 M^2]
_RECORD_HEAD = struct.Struct("<IBH")


def record_length(M: int) -> int:
    return _RECORD_HEAD.size + 8 * feature_length(M)


def encode_records(X: np.ndarray, y: np.ndarray, M: int) -> bytes:
    X = np.asarray(X, dtype="<f8")
    y = np.asarray(y).reshape(-1)
    if X.ndim != 2 or X.shape[1] != feature_length(M) or X.shape[0] != y.size:
        raise ValueError(f"features must be ({y.size}, {feature_length(M)}), got {X.shape}")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    size = record_length(M)
    out = bytearray()
    for row, label in zip(X, y):
        out += _RECORD_HEAD.pack(size, int(label), M)
        out += row.tobytes()
    return bytes(out)


def decode_records(data: bytes) -> tuple[np.ndarray, np.ndarray, int]:
    """Parse a dataset byte string into ``(X, y, M)``."""
    rows, labels, M_seen = [], [], None
    offset = 0
    while offset < len(data):
        if len(data) - offset < _RECORD_HEAD.size:
            raise ValueError(f"truncated record header at byte {offset}")
        size, label, M = _RECORD_HEAD.unpack_from(data, offset)
        if size != record_length(M) or offset + size > len(data):
            raise ValueError(f"corrupt record at byte {offset}")
        if M_seen is not None and M != M_seen:
            raise ValueError(f"mixed antenna counts in dataset ({M_seen} and {M})")
        if label not in (0, 1):
            raise ValueError(f"bad label {label} at byte {offset}")
        M_seen = M
        feats = np.frombuffer(data, dtype="<f8", count=feature_length(M),
                              offset=offset + _RECORD_HEAD.size)
        rows.append(feats)
        labels.append(label)
        offset += size
    if M_seen is None:
        return np.zeros((0, 0)), np.zeros(0, np.uint8), 0
    return np.vstack(rows).astype(float), np.asarray(labels, np.uint8), M_seen


def write_dataset(path, X, y, M: int) -> None:
    Path(path).write_bytes(encode_records(X, y, M))


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, int]:
    return decode_records(Path(path).read_bytes())
