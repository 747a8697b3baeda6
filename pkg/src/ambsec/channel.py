"""Link budgets, fading draws and received-signal synthesis for the two links.

Noise has unit variance, so the direct-link SNR ``alpha_dt`` and the
backscatter-link SNR ``alpha_bt`` are also the received powers.  Per
antenna ``m`` and symbol ``n`` the receiver sees::

    y = f_d[m] sqrt(alpha_dt) s[n] + e f_b[m] g_r sqrt(alpha_bt) s[n] + noise

with one transmitted symbol ``s[n]`` shared by all antennas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Prng, sample_cscg

FADING_FAMILIES = ("rayleigh", "rician", "nakagami")


@dataclass(frozen=True)
class LinkBudget:
    P_t: float
    G_t: float
    G_r: float
    G_b: float
    wavelength: float
    upsilon: float
    L_r: float
    L_b: float
    L_e: float
    gamma: complex = 1.0

    def __post_init__(self):
        positive = (self.P_t, self.G_t, self.G_r, self.G_b, self.wavelength,
                    self.L_r, self.L_b, self.L_e)
        if any(not (v > 0) for v in positive):
            raise ValueError("powers, gains, wavelength and distances must be positive")
        if self.upsilon < 1:
            raise ValueError("path-loss exponent must be >= 1")
        if abs(self.gamma) > 1:
            raise ValueError("|gamma| must not exceed 1")

    @property
    def kappa(self) -> float:
        return (self.wavelength / (4.0 * math.pi)) ** 2


def direct_snr(budget: LinkBudget) -> float:
    """Average received direct-link power ``kappa P_t G_t G_r / L_r^upsilon``."""
    b = budget
    return b.kappa * b.P_t * b.G_t * b.G_r / b.L_r ** b.upsilon


def backscatter_gain(budget: LinkBudget) -> float:
    """Ratio of backscatter-link to direct-link SNR for a given geometry."""
    b = budget
    return (b.kappa * abs(b.gamma) ** 2 * b.G_b ** 2 * b.L_r ** b.upsilon
            / (b.L_b ** b.upsilon * b.L_e ** b.upsilon))


def backscatter_snr(budget: LinkBudget) -> float:
    return backscatter_gain(budget) * direct_snr(budget)


@dataclass(frozen=True)
class FadingModel:
    """Fading law with unit second moment: Rayleigh, Rician(K) or Nakagami(m)."""

    family: str = "rayleigh"
    k_factor: float = 0.0
    m_shape: float = 1.0

    def __post_init__(self):
        if self.family not in FADING_FAMILIES:
            raise ValueError(f"unknown fading family {self.family!r}")
        if self.k_factor < 0:
            raise ValueError("Rician K factor must be >= 0")
        if self.m_shape < 0.5:
            raise ValueError("Nakagami m must be >= 0.5")

    @classmethod
    def rayleigh(cls) -> "FadingModel":
        return cls("rayleigh")

    @classmethod
    def rician(cls, k_factor: float) -> "FadingModel":
        return cls("rician", k_factor=k_factor)

    @classmethod
    def nakagami(cls, m_shape: float) -> "FadingModel":
        return cls("nakagami", m_shape=m_shape)

    @classmethod
    def from_dict(cls, d: dict) -> "FadingModel":
        return cls(**d)

    @property
    def label(self) -> str:
        if self.family == "rician":
            return f"rician(K={self.k_factor:g})"
        if self.family == "nakagami":
            return f"nakagami(m={self.m_shape:g})"
        return "rayleigh"

    def sample(self, rng: Prng, size) -> np.ndarray:
        """Complex coefficients with ``E|f|^2 = 1`` and uniform phase."""
        if self.family == "rayleigh":
            return sample_cscg(rng, size)
        shape = (size,) if np.isscalar(size) else tuple(size)
        if self.family == "rician":
            k = self.k_factor
            los_phase = rng.uniform(0.0, 2 * np.pi, shape)
            los = np.sqrt(k / (k + 1.0)) * np.exp(1j * los_phase)
            return los + np.sqrt(1.0 / (k + 1.0)) * sample_cscg(rng, shape)
        m = self.m_shape
        power = rng.gamma(m, 1.0 / m, shape)
        phase = rng.uniform(0.0, 2 * np.pi, shape)
        return np.sqrt(power) * np.exp(1j * phase)


@dataclass(frozen=True)
class ChannelParams:
    alpha_dt: float
    alpha_bt: float
    M: int
    N: int = 50
    fading: FadingModel = field(default_factory=FadingModel)

    def __post_init__(self):
        if not (self.alpha_dt >= 0) or not (self.alpha_bt >= 0):
            raise ValueError("SNRs must be non-negative")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")

    def with_alpha_dt(self, alpha_dt: float, coupled: bool = False) -> "ChannelParams":
        """Change the direct-link SNR.

        With ``coupled=True`` the backscatter SNR scales along with it, as it
        does physically when the transmit power changes at fixed geometry.
        """
        if coupled:
            ratio = self.alpha_bt / self.alpha_dt if self.alpha_dt > 0 else 0.0
            return replace(self, alpha_dt=alpha_dt, alpha_bt=ratio * alpha_dt)
        return replace(self, alpha_dt=alpha_dt)


@dataclass(frozen=True)
class ChannelRealization:
    """Fading coefficients held fixed over one backscatter frame."""

    f_d: np.ndarray
    f_b: np.ndarray
    g_r: complex

    def __post_init__(self):
        if self.f_d.shape != self.f_b.shape or self.f_d.ndim != 1:
            raise ValueError("f_d and f_b must be vectors of equal length")

    @property
    def M(self) -> int:
        return self.f_d.shape[0]

    def direct_gain(self, params: ChannelParams) -> np.ndarray:
        return self.f_d * np.sqrt(params.alpha_dt)

    def backscatter_gain(self, params: ChannelParams) -> np.ndarray:
        return self.g_r * self.f_b * np.sqrt(params.alpha_bt)


def draw_channel(rng: Prng, params: ChannelParams) -> ChannelRealization:
    fading = params.fading
    f_d = fading.sample(rng, params.M)
    f_b = fading.sample(rng, params.M)
    g_r = complex(fading.sample(rng, 1)[0])
    return ChannelRealization(f_d=f_d, f_b=f_b, g_r=g_r)


def synthesize_frame(rng: Prng, chan: ChannelRealization, params: ChannelParams,
                     bits) -> np.ndarray:
    """Received blocks for a sequence of tag states, shape ``(len(bits), M, N)``.

    The channel is shared by every block; transmitted symbols and noise are
    fresh per block.
    """
    e = np.asarray(bits, dtype=float).reshape(-1)
    if e.size == 0:
        raise ValueError("need at least one bit")
    if np.any((e != 0) & (e != 1)):
        raise ValueError("bits must be 0 or 1")
    if chan.M != params.M:
        raise ValueError(f"realization has M={chan.M}, params say M={params.M}")
    k1 = chan.direct_gain(params)
    k2 = chan.backscatter_gain(params)
    s = sample_cscg(rng, (e.size, params.N))
    noise = sample_cscg(rng, (e.size, params.M, params.N))
    gain = k1[None, :] + e[:, None] * k2[None, :]
    return gain[:, :, None] * s[:, None, :] + noise


def synthesize_block(rng: Prng, chan: ChannelRealization, params: ChannelParams,
                     e: int) -> np.ndarray:
    """One ``M x N`` block (column ``n`` is the antenna vector at symbol ``n``)."""
    if e not in (0, 1):
        raise ValueError(f"tag state must be 0 or 1, got {e!r}")
    return synthesize_frame(rng, chan, params, [e])[0]
