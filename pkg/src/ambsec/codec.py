"""Message splitting between the active and backscatter links, and AmB framing.

The backscatter link carries the original bits at positions ``0, K, 2K, ...``;
the active link carries the rest in order.  Backscatter bits are chunked
into frames of ``I`` bits, the first ``F`` of which are pilots
(``F/2`` zeros then ``F/2`` ones).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class FrameIntegrityError(ValueError):
    """Raised when frames or split messages are inconsistent with their config."""


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("bit values must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class SplitConfig:
    stride_K: int = 10
    pilot_F: int = 10
    frame_I: int = 100

    def __post_init__(self):
        if self.stride_K < 2:
            raise ValueError("stride_K must be >= 2")
        if self.pilot_F < 0 or self.pilot_F % 2:
            raise ValueError("pilot_F must be an even non-negative integer")
        if self.frame_I < 1 or self.pilot_F >= self.frame_I:
            raise ValueError("need 0 <= pilot_F < frame_I")

    @property
    def payload_per_frame(self) -> int:
        return self.frame_I - self.pilot_F

    @property
    def pilots(self) -> np.ndarray:
        half = self.pilot_F // 2
        return np.concatenate([np.zeros(half, np.uint8), np.ones(half, np.uint8)])


@dataclass(frozen=True)
class SplitMessage:
    active_bits: np.ndarray
    amb_bits: np.ndarray
    original_len: int

    @property
    def beta(self) -> float:
        """Fraction of the original message carried on the backscatter link."""
        return len(self.amb_bits) / self.original_len


def amb_positions(P: int, K: int) -> np.ndarray:
    return np.arange(0, P, K)


def split_message(original, cfg: SplitConfig) -> SplitMessage:
    bits = _as_bits(original)
    if bits.size == 0:
        raise ValueError("cannot split an empty message")
    mask = np.zeros(bits.size, dtype=bool)
    mask[amb_positions(bits.size, cfg.stride_K)] = True
    return SplitMessage(active_bits=bits[~mask], amb_bits=bits[mask], original_len=bits.size)


def merge_message(split: SplitMessage, cfg: SplitConfig) -> np.ndarray:
    P = split.original_len
    pos = amb_positions(P, cfg.stride_K)
    if len(split.amb_bits) != pos.size or len(split.active_bits) != P - pos.size:
        raise FrameIntegrityError(
            f"split lengths ({len(split.active_bits)} active, {len(split.amb_bits)} AmB) "
            f"do not match P={P}, K={cfg.stride_K}"
        )
    out = np.empty(P, dtype=np.uint8)
    mask = np.zeros(P, dtype=bool)
    mask[pos] = True
    out[mask] = _as_bits(split.amb_bits)
    out[~mask] = _as_bits(split.active_bits)
    return out


@dataclass(frozen=True)
class AmbFrame:
    pilots: np.ndarray
    payload: np.ndarray
    pad: int = 0

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.pilots, self.payload])


def build_frames(amb_bits, cfg: SplitConfig) -> list[AmbFrame]:
    """Chunk payload into frames; the last one is zero-padded and records its pad length."""
    bits = _as_bits(amb_bits)
    chunk = cfg.payload_per_frame
    frames = []
    for start in range(0, bits.size, chunk):
        payload = bits[start:start + chunk]
        pad = chunk - payload.size
        if pad:
            payload = np.concatenate([payload, np.zeros(pad, np.uint8)])
        frames.append(AmbFrame(pilots=cfg.pilots, payload=payload, pad=pad))
    return frames


def strip_frames(frames: list[AmbFrame], payload_len: int) -> np.ndarray:
    if not frames:
        if payload_len:
            raise FrameIntegrityError(f"no frames but payload_len={payload_len}")
        return np.zeros(0, np.uint8)
    parts = []
    for idx, frame in enumerate(frames):
        pilots = _as_bits(frame.pilots)
        half = pilots.size // 2
        if pilots.size % 2 or np.any(pilots[:half] != 0) or np.any(pilots[half:] != 1):
            raise FrameIntegrityError(f"frame {idx}: malformed pilot block {pilots.tolist()}")
        parts.append(_as_bits(frame.payload))
    joined = np.concatenate(parts)
    if payload_len > joined.size:
        raise FrameIntegrityError(f"frames hold {joined.size} bits, asked for {payload_len}")
    return joined[:payload_len]


# bitstream wire format: uint32 LE bit count, then MSB-first packed bytes
def pack_bits(bits) -> bytes:
    arr = _as_bits(bits)
    return struct.pack("<I", arr.size) + np.packbits(arr, bitorder="big").tobytes()


def unpack_bits(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise FrameIntegrityError("bitstream shorter than its length prefix")
    (n,) = struct.unpack_from("<I", data, 0)
    body = np.frombuffer(data, dtype=np.uint8, offset=4)
    if body.size != (n + 7) // 8:
        raise FrameIntegrityError(f"bitstream declares {n} bits but carries {body.size} bytes")
    return np.unpackbits(body, bitorder="big")[:n]
