"""Monte-Carlo estimate of the maximum achievable backscatter rate at N = 1.

The rate is the mutual information between the tag state and one received
antenna vector, averaged over fading::

    R* = Z(theta0) - E[ Z(mu0(v)) ]

where ``mu0(v)`` is the posterior probability of state 0 given ``v``.  The
outer loop draws channel realizations, the inner loop draws tag states and
received vectors from the two-component mixture.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import ChannelParams, draw_channel
from .mlk import CovPair, PerfectCsi, build_covariances, log_conditional_pdf
from .numerics import Prng, binary_entropy, sample_cscg

AXES = ("theta0", "alpha_dt", "antennas")


@dataclass(frozen=True)
class RateConfig:
    theta0: float
    params: ChannelParams
    trials_signal: int = 1000
    trials_channel: int = 100
    couple_backscatter: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta0 <= 1.0:
            raise ValueError("theta0 must be in [0, 1]")
        if self.trials_signal < 1 or self.trials_channel < 1:
            raise ValueError("trial counts must be >= 1")
        if self.params.N != 1:
            object.__setattr__(self, "params", replace(self.params, N=1))

    @property
    def samples(self) -> int:
        return self.trials_signal * self.trials_channel


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    stderr: float
    samples: int


def posterior_mu0(v: np.ndarray, cov: CovPair, theta0: float) -> np.ndarray | float:
    """Posterior probability of tag state 0 given received vector(s) ``v``."""
    if not 0.0 <= theta0 <= 1.0:
        raise ValueError("theta0 must be in [0, 1]")
    if theta0 in (0.0, 1.0):
        out = np.full(np.shape(v)[:-1], theta0, dtype=float)
        return float(out) if out.ndim == 0 else out
    l0 = np.log(theta0) + np.asarray(log_conditional_pdf(v, cov.r0))
    l1 = np.log1p(-theta0) + np.asarray(log_conditional_pdf(v, cov.r1))
    mu0 = np.exp(l0 - np.logaddexp(l0, l1))
    return float(mu0) if mu0.ndim == 0 else mu0


def channel_rate_samples(cov: CovPair, k1: np.ndarray, k2: np.ndarray, theta0: float,
                         n: int, rng: Prng) -> np.ndarray:
    """Per-sample information ``Z(theta0) - Z(mu0(v))`` for one fixed channel."""
    M = len(k1)
    e = (rng.random(n) >= theta0).astype(float)
    s = sample_cscg(rng, n)
    noise = sample_cscg(rng, (n, M))
    v = (k1[None, :] + e[:, None] * k2[None, :]) * s[:, None] + noise
    mu0 = np.clip(posterior_mu0(v, cov, theta0), 0.0, 1.0)
    return binary_entropy(theta0) - binary_entropy(mu0)


def estimate_max_rate(cfg: RateConfig, rng: Prng, swap_states: bool = False) -> RateEstimate:
    """Mean information per AmB symbol with a channel-level standard error.

    ``swap_states`` exchanges which tag state reflects; it exists to check the
    prior symmetry ``R*(theta0) == R*(1 - theta0)`` on relabeled hypotheses.
    """
    if cfg.theta0 in (0.0, 1.0):
        return RateEstimate(0.0, 0.0, 0)
    per_channel = np.empty(cfg.trials_channel)
    for c in range(cfg.trials_channel):
        sub = rng.substream(c)
        chan = draw_channel(sub, cfg.params)
        csi = PerfectCsi.from_channel(chan, cfg.params)
        k_state0, k_state1 = csi.k1, csi.k1 + csi.k2
        if swap_states:
            k_state0, k_state1 = k_state1, k_state0
        cov = _pair_from_gains(k_state0, k_state1)
        info = channel_rate_samples(cov, k_state0, k_state1 - k_state0, cfg.theta0,
                                    cfg.trials_signal, sub)
        per_channel[c] = info.mean()
    stderr = per_channel.std(ddof=1) / np.sqrt(cfg.trials_channel) if cfg.trials_channel > 1 else 0.0
    return RateEstimate(float(per_channel.mean()), float(stderr), cfg.samples)


def _pair_from_gains(g0: np.ndarray, g1: np.ndarray) -> CovPair:
    # build_covariances takes (k1, k2) with R1 built from k1 + k2
    return build_covariances(PerfectCsi(k1=g0, k2=g1 - g0))


@dataclass(frozen=True)
class RateRow:
    axis_value: float
    rate_bits: float
    stderr: float
    samples: int
    seed: int


def point_config(cfg: RateConfig, axis: str, x) -> RateConfig:
    if axis == "theta0":
        return replace(cfg, theta0=float(x))
    if axis == "alpha_dt":
        return replace(cfg, params=cfg.params.with_alpha_dt(float(x), cfg.couple_backscatter))
    if axis == "antennas":
        return replace(cfg, params=replace(cfg.params, M=int(x)))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def rate_sweep(axis: str, grid, cfg: RateConfig, seed: int = 0,
               namespace: int = 0) -> list[RateRow]:
    """One estimate per grid value; point ``i`` draws from substream ``i``.

    ``alpha_dt`` grid values are linear SNRs.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    rows = []
    for i, x in enumerate(grid):
        est = estimate_max_rate(point_config(cfg, axis, x), Prng(seed, namespace).substream(i))
        rows.append(RateRow(float(x), est.rate, est.stderr, est.samples, seed))
    return rows


def write_rate_csv(rows: list[RateRow], path, header_comment: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis_value", "rate_bits", "stderr", "samples", "seed"])
        for r in rows:
            writer.writerow([repr(r.axis_value), repr(r.rate_bits), repr(r.stderr), r.samples, r.seed])
