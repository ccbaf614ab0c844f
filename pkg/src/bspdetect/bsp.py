"""Belief-selective propagation (BsP).

Each beta update searches only a configuration set ``B(d_m, d_f)`` of
interferer assignments: ``d_f - 1`` chosen interferers range over the
``d_m`` most reliable symbols of their incoming message, and every other
interferer is pinned to its single most reliable symbol. With
``B(|A|, N_t)`` the search is exhaustive and BsP coincides with the
original BP.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from math import comb
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .bp import MessageGrid, _iterate, bit_llrs, initial_grid, symbol_llrs
from .linear import _check_sigma2, product_table
from .metrics import OpCounters, charge_beta_search, charge_table
from .modem import BitLlrOutput, Constellation

log = logging.getLogger(__name__)

INIT_MODES = ("uniform", "lmmse")


@dataclass(frozen=True)
class BspConfig:
    d_m: int
    d_f: int
    Q_L: int = 10
    init_mode: str = "lmmse"

    def __post_init__(self):
        if self.d_m < 1 or self.d_f < 1 or self.Q_L < 1:
            raise ValueError(f"d_m, d_f and Q_L must all be >= 1: {self}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")

    def clamped(self, size: int, n_t: int) -> "BspConfig":
        """Clamp ``d_m`` to ``|A|`` and ``d_f`` to ``N_t``, warning on each change."""
        d_m, d_f = self.d_m, self.d_f
        if d_m > size:
            log.warning("d_m=%d exceeds |A|=%d; clamping", d_m, size)
            d_m = size
        if d_f > n_t:
            log.warning("d_f=%d exceeds N_t=%d; clamping", d_f, n_t)
            d_f = n_t
        return replace(self, d_m=d_m, d_f=d_f)

    @property
    def label(self) -> str:
        return f"B({self.d_m},{self.d_f})"


@dataclass(frozen=True)
class TruncatedMessage:
    indices: tuple[int, ...]  # symbol indices, most reliable first
    llrs: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.indices)


def truncate_alpha(alpha_ji, d_m: int) -> TruncatedMessage:
    """Keep the ``d_m`` largest LLRs, descending; ties go to the lower index."""
    alpha_ji = np.asarray(alpha_ji, dtype=np.float64)
    if not np.all(np.isfinite(alpha_ji)):
        raise ValueError("alpha message must be finite")
    keep = min(int(d_m), alpha_ji.size)
    order = np.argsort(-alpha_ji, kind="stable")[:keep]
    return TruncatedMessage(tuple(int(k) for k in order), tuple(float(alpha_ji[k]) for k in order))


def config_set_size(n_t: int, d_m: int, d_f: int) -> int:
    return comb(n_t - 1, d_f - 1) * d_m ** (d_f - 1)


def rank_patterns(n_interferers: int, d_m: int, d_f: int) -> Iterator[tuple[int, ...]]:
    """Truncation ranks per interferer for every member of ``B(d_m, d_f)``.

    Chosen-edge subsets are visited in lexicographic order; duplicates
    arising from different subsets are kept.
    """
    if not 1 <= d_f <= n_interferers + 1:
        raise ValueError(f"d_f must lie in [1, {n_interferers + 1}], got {d_f}")
    for chosen in itertools.combinations(range(n_interferers), d_f - 1):
        for ranks in itertools.product(range(d_m), repeat=d_f - 1):
            pattern = [0] * n_interferers
            for t, r in zip(chosen, ranks):
                pattern[t] = r
            yield tuple(pattern)


def enumerate_config_set(
    truncated: Sequence[TruncatedMessage], d_m: int, d_f: int
) -> Iterator[tuple[int, ...]]:
    """Interferer assignments (constellation indices, interferer order) of ``B(d_m, d_f)``.

    ``truncated`` holds one message per interferer, i.e. the ``N_t - 1``
    symbols other than the target.
    """
    d_m = min(d_m, min((len(tm) for tm in truncated), default=d_m))
    for pattern in rank_patterns(len(truncated), d_m, d_f):
        yield tuple(tm.indices[r] for tm, r in zip(truncated, pattern))


@lru_cache(maxsize=256)
def _pattern_table(n_t: int, d_m: int, d_f: int) -> np.ndarray:
    """``(N_t, |B|, N_t)`` rank table consumed by the compiled sweep."""
    rows = list(rank_patterns(n_t - 1, d_m, d_f))
    base = np.array(rows, dtype=np.int64).reshape(len(rows), n_t - 1)
    table = np.zeros((n_t, base.shape[0], n_t), dtype=np.int64)
    for j in range(n_t):
        others = [t for t in range(n_t) if t != j]
        table[j][:, others] = base
    table.setflags(write=False)
    return table


def beta_update_bsp(
    i: int, j: int, y_i: complex, pt: np.ndarray, truncated: Sequence[TruncatedMessage],
    alpha_prev: np.ndarray, sigma2: float, cfg: BspConfig,
) -> np.ndarray:
    """Selective beta message from factor ``i`` to symbol ``j``.

    ``truncated`` lists the truncated incoming messages of the interferers
    (all symbols except ``j``, ascending). For each assignment the
    interference and belief sums are formed once and reused for all ``|A|``
    candidate values of ``s_j``.
    """
    sigma2 = _check_sigma2(sigma2)
    n_r, n_t, size = pt.shape
    inv2s = 0.5 / sigma2
    interferers = [t for t in range(n_t) if t != j]
    best = np.full(size, -np.inf)
    for assignment in enumerate_config_set(truncated, cfg.d_m, cfg.d_f):
        partial = y_i
        belief = 0.0
        for t, kt in zip(interferers, assignment):
            partial -= pt[i, t, kt]
            belief += alpha_prev[t, i, kt]
        d = partial - pt[i, j, :]
        np.maximum(best, belief - (d.real**2 + d.imag**2) * inv2s, out=best)
    beta = best - best[0]
    beta[0] = 0.0
    return beta


def run_bsp(
    y, H, sigma2: float, c: Constellation, cfg: BspConfig,
    counters: OpCounters | None = None, init: MessageGrid | None = None,
    return_grid: bool = False,
):
    """BsP detection: optional LMMSE pseudo-prior, ``Q_L`` selective sweeps, max-log bit LLRs.

    Truncation is redone from the current messages on every iteration.
    """
    sigma2 = _check_sigma2(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    n_r, n_t = H.shape
    cfg = cfg.clamped(c.size, n_t)
    grid = initial_grid(y, H, sigma2, c, init if init is not None else cfg.init_mode, counters)
    pt = product_table(H, c)
    patterns = _pattern_table(n_t, cfg.d_m, cfg.d_f)
    inv2s = 0.5 / sigma2
    grid = _iterate(
        grid, cfg.Q_L,
        lambda a, b: _kernels.bsp_beta(y, pt, a, inv2s, patterns, cfg.d_m, b),
    )
    charge_table(counters, n_r, n_t, c.size)
    charge_beta_search(counters, c.size * patterns.shape[1], n_r * n_t, n_t, cfg.Q_L)
    if counters is not None:
        # selection of the truncated messages
        counters.comparisons += cfg.d_m * c.size * n_r * n_t * cfg.Q_L
    out: BitLlrOutput = bit_llrs(symbol_llrs(grid), c)
    return (out, grid) if return_grid else out
