"""Rayleigh flat-fading MIMO channel, AWGN and the Eb/N0 convention.

``sigma2`` is always the noise variance per real dimension, so the complex
noise on each receive antenna has total variance ``2 * sigma2``. This is the
reading under which ``-|y - Hs|^2 / (2 sigma2)`` is the exact log-likelihood
used by every detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modem import Constellation, indices_to_bits
from .numerics import sample_complex_gaussian


@dataclass
class ChannelInstance:
    H: np.ndarray  # (N_r, N_t)
    s_bits: np.ndarray  # (N_t * M,) uint8
    s_idx: np.ndarray  # (N_t,) constellation indices
    s: np.ndarray  # (N_t,)
    y: np.ndarray  # (N_r,)
    sigma2: float


def sample_channel(rng: np.random.Generator, n_r: int, n_t: int) -> np.ndarray:
    """i.i.d. CN(0, 1) entries (variance 1/2 per real dimension)."""
    if n_r < 1 or n_t < 1:
        raise ValueError(f"antenna counts must be >= 1, got {n_r}x{n_t}")
    return sample_complex_gaussian(rng, 0.5, (n_r, n_t))


def noise_variance_from_ebn0(ebn0_db: float, M: int, n_t: int, n_r: int) -> float:
    """Per-real-dimension noise variance for a given Eb/N0 in dB.

    With unit-energy symbols and unit-power channel taps the received energy
    per channel use is ``N_r N_t`` over ``M N_t`` bits, so ``Eb = N_r / M``;
    with ``N0 = 2 sigma2`` this gives ``sigma2 = N_r / (2 M 10^(Eb/N0 / 10))``.
    """
    if M * n_t < 1:
        raise ValueError("M * N_t must be >= 1")
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return 0.0
    return n_r / (2.0 * M * 10.0 ** (ebn0_db / 10.0))


def ebn0_from_noise_variance(sigma2: float, M: int, n_t: int, n_r: int) -> float:
    if sigma2 <= 0:
        return math.inf
    return 10.0 * math.log10(n_r / (2.0 * M * sigma2))


def transmit(H, s, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    H = np.asarray(H, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128)
    if H.ndim != 2 or s.shape != (H.shape[1],):
        raise ValueError(f"H {H.shape} and s {s.shape} are incompatible")
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be >= 0, got {sigma2}")
    noise = sample_complex_gaussian(rng, sigma2, H.shape[0])
    return H @ s + noise


def draw_instance(
    rng: np.random.Generator, n_r: int, n_t: int, c: Constellation, sigma2: float
) -> ChannelInstance:
    """One channel use: bits, then H, then noise, all from ``rng`` in that order."""
    s_idx = rng.integers(0, c.size, size=n_t)
    H = sample_channel(rng, n_r, n_t)
    s = c.points[s_idx]
    y = transmit(H, s, sigma2, rng)
    return ChannelInstance(H, indices_to_bits(s_idx, c), s_idx, s, y, float(sigma2))
