"""Eavesdropper effort: guessing the positions of the backscattered bits.

An attacker holding both the active and the AmB bitstreams still has to find
which ``I`` of the ``P`` original positions went over the backscatter link,
i.e. one key out of ``C(P, I)``.  Key-space sizes are exact Python integers
and reported in log2, since ``C(100, 50)`` is already ~2^96.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

SUM_TOL = 1e-12


@dataclass(frozen=True)
class KeySpace:
    P: int
    I: int

    def __post_init__(self):
        if not 0 < self.I <= self.P:
            raise ValueError(f"need 0 < I <= P, got I={self.I}, P={self.P}")

    @property
    def size(self) -> int:
        return math.comb(self.P, self.I)

    @property
    def log2_size(self) -> float:
        return math.log2(self.size)


@dataclass(frozen=True)
class GuessProbability:
    exact: Fraction
    value: float
    underflow: bool


def guess_success_prob(P: int, I: int) -> GuessProbability:
    """Chance that one uniform guess finds all ``I`` positions: ``1 / C(P, I)``."""
    space = KeySpace(P, I)
    exact = Fraction(1, space.size)
    value = float(exact)
    return GuessProbability(exact=exact, value=value, underflow=value == 0.0)


def _validated(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probabilities must be finite, non-negative and nonempty")
    if abs(math.fsum(p) - 1.0) > SUM_TOL:
        raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
    return p


def guessing_entropy(probs) -> float:
    """Expected number of guesses when keys are tried in descending probability."""
    p = np.sort(_validated(probs))[::-1]
    return math.fsum(np.arange(1, p.size + 1) * p)


def guessing_entropy_upper_bound(probs) -> float:
    p = _validated(probs)
    return 0.5 * math.fsum(np.sqrt(p)) ** 2 + 0.5


def uniform_guessing_entropy(n_keys: int) -> Fraction:
    """Exact guessing entropy (and bound, which is tight) for ``n_keys`` equiprobable keys."""
    if n_keys < 1:
        raise ValueError("need at least one key")
    return Fraction(n_keys + 1, 2)


@dataclass(frozen=True)
class BoundRow:
    beta: float
    P: int
    I: int
    log2_keyspace: float
    log2_bound: float


def uniform_bound_sweep(P: int, beta_grid) -> list[BoundRow]:
    """Uniform-attacker bound ``(C(P, I) + 1) / 2`` in log2 for ``I = round(beta P)``."""
    rows = []
    for beta in beta_grid:
        if not 0.0 < beta <= 0.5:
            raise ValueError(f"splitting ratio must lie in (0, 0.5], got {beta}")
        I = int(round(beta * P))
        if I < 1:
            raise ValueError(f"beta={beta} gives no AmB bits at P={P}")
        size = KeySpace(P, I).size
        rows.append(BoundRow(float(beta), P, I, math.log2(size), math.log2(size + 1) - 1.0))
    return rows


def write_bound_csv(rows: list[BoundRow], path, header_comment: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["beta", "P", "I", "log2_keyspace", "log2_bound"])
        for r in rows:
            writer.writerow([repr(r.beta), r.P, r.I, repr(r.log2_keyspace), repr(r.log2_bound)])
