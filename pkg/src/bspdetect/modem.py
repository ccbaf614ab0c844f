"""Square QAM with Gray labels, bit/symbol mapping and max-log bit demapping.

Point ``k`` of a constellation carries the label whose big-endian integer
value is ``k``; index 0 (all-zero label) is the reference symbol against
which every symbol LLR is measured.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

REFERENCE_INDEX = 0


@dataclass(frozen=True, eq=False)
class Constellation:
    bits_per_symbol: int
    points: np.ndarray  # (|A|,) complex, unit average energy
    labels: np.ndarray  # (|A|, M) uint8, labels[k] is the big-endian binary of k
    reference_index: int = REFERENCE_INDEX

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def order(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"Constellation({self.size}-QAM)"


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _gray_inverse(g: np.ndarray) -> np.ndarray:
    n = g.copy()
    shift = g >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


@lru_cache(maxsize=None)
def build_constellation(M: int) -> Constellation:
    """Unit-energy square ``2**M``-QAM with Gray labeling.

    The first ``M/2`` label bits Gray-code the in-phase amplitude, the last
    ``M/2`` the quadrature amplitude; amplitudes ascend with the decoded
    Gray index, so the all-zero label sits at the most negative corner.
    """
    if not isinstance(M, (int, np.integer)) or M % 2 or not 2 <= M <= 8:
        raise ValueError(f"bits per symbol must be even and in [2, 8], got {M!r}")
    M = int(M)
    half = M // 2
    side = 1 << half
    k = np.arange(1 << M)
    i_code = k >> half
    q_code = k & (side - 1)
    i_level = 2 * _gray_inverse(i_code) - (side - 1)
    q_level = 2 * _gray_inverse(q_code) - (side - 1)
    # mean of (2n - (L-1))^2 over one axis is (L^2 - 1)/3; two axes double it
    scale = np.sqrt(2.0 * (side * side - 1) / 3.0)
    points = (i_level + 1j * q_level) / scale
    labels = ((k[:, None] >> np.arange(M - 1, -1, -1)) & 1).astype(np.uint8)
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(M, points, labels)


def constellation_from_name(name: str) -> Constellation:
    """Parse ``qpsk``, ``16qam``, ``64qam``, ``256qam`` or a bare bits-per-symbol."""
    key = str(name).strip().lower()
    if key in ("qpsk", "4qam"):
        return build_constellation(2)
    if key.endswith("qam"):
        order = int(key[:-3])
        M = order.bit_length() - 1
        if 1 << M != order:
            raise ValueError(f"QAM order must be a power of two, got {order}")
        return build_constellation(M)
    return build_constellation(int(key))


def bits_to_indices(bits, c: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    M = c.bits_per_symbol
    if bits.ndim != 1 or bits.size % M:
        raise ValueError(f"bit vector length {bits.size} is not a multiple of {M}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    weights = 1 << np.arange(M - 1, -1, -1)
    return bits.reshape(-1, M) @ weights


def indices_to_bits(indices, c: Constellation) -> np.ndarray:
    return c.labels[np.asarray(indices, dtype=np.int64)].reshape(-1)


def modulate(bits, c: Constellation) -> np.ndarray:
    """Map ``M * N_t`` bits to ``N_t`` constellation points."""
    return c.points[bits_to_indices(bits, c)]


def nearest_indices(z, c: Constellation) -> np.ndarray:
    """Index of the closest point for each entry of ``z``; ties go to the lower index."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    dist = np.abs(z[:, None] - c.points[None, :]) ** 2
    return np.argmin(dist, axis=1)


def hard_bits_from_llrs(r) -> np.ndarray:
    """Sign decision on bit LLRs (positive favours 1, zero decides 0)."""
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValueError("bit LLRs must be finite")
    return (r > 0).astype(np.uint8).reshape(-1)


@dataclass
class BitLlrOutput:
    r: np.ndarray  # (N_t, M) bit LLRs, positive favours 1
    hard_bits: np.ndarray  # (N_t * M,) uint8

    @classmethod
    def from_llrs(cls, r: np.ndarray) -> "BitLlrOutput":
        return cls(r, hard_bits_from_llrs(r))


def symbol_to_bit_llrs(gamma, c: Constellation) -> np.ndarray:
    """Max-log bit LLRs from per-symbol LLR vectors ``gamma`` of shape ``(N_t, |A|)``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    ones = c.labels.astype(bool)  # (|A|, M)
    g = gamma[:, :, None]
    best1 = np.where(ones[None], g, -np.inf).max(axis=1)
    best0 = np.where(~ones[None], g, -np.inf).max(axis=1)
    return best1 - best0
