"""Max-log belief propagation on the fully connected MIMO factor graph.

Factor node ``i`` observes ``y_i``; symbol node ``j`` carries ``s_j``. All
messages are LLR vectors against the reference symbol (index 0), so their
reference component is exactly zero. The schedule is flooding: every beta
is computed from the previous iteration's alphas, then every alpha from the
fresh betas as ``alpha_ji = gamma_j - beta_ij``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .linear import (
    DEFAULT_ENUMERATION_CAP,
    UnsupportedScale,
    _check_sigma2,
    lmmse_estimate,
    lmmse_prior_llrs,
    product_table,
)
from .metrics import OpCounters, charge_beta_search, charge_table
from .modem import BitLlrOutput, Constellation, symbol_to_bit_llrs

__all__ = [
    "MessageGrid",
    "product_table",
    "beta_update_full",
    "alpha_update",
    "symbol_llrs",
    "bit_llrs",
    "initial_grid",
    "run_original_bp",
    "run_ebrdf_bp",
]


@dataclass
class MessageGrid:
    alpha: np.ndarray  # (N_t, N_r, |A|), symbol -> factor
    beta: np.ndarray  # (N_r, N_t, |A|), factor -> symbol

    @classmethod
    def zeros(cls, n_r: int, n_t: int, size: int) -> "MessageGrid":
        return cls(np.zeros((n_t, n_r, size)), np.zeros((n_r, n_t, size)))

    @classmethod
    def from_prior(cls, prior: np.ndarray, n_r: int) -> "MessageGrid":
        """Send the same per-symbol prior ``(N_t, |A|)`` to every factor node."""
        prior = np.asarray(prior, dtype=np.float64)
        n_t, size = prior.shape
        alpha = np.repeat(prior[:, None, :], n_r, axis=1)
        return cls(alpha, np.zeros((n_r, n_t, size)))

    @property
    def shape(self) -> tuple[int, int, int]:
        n_t, n_r, size = self.alpha.shape
        return n_r, n_t, size

    def copy(self) -> "MessageGrid":
        return MessageGrid(self.alpha.copy(), self.beta.copy())


def beta_update_full(i: int, j: int, y_i: complex, pt: np.ndarray, alpha_prev: np.ndarray, sigma2: float) -> np.ndarray:
    """Exhaustive beta message from factor ``i`` to symbol ``j``.

    Straightforward per-edge evaluation over all ``|A|^(N_t - 1)``
    interferer assignments; the detectors use the compiled all-edge sweep.
    """
    sigma2 = _check_sigma2(sigma2)
    n_r, n_t, size = pt.shape
    inv2s = 0.5 / sigma2
    best = np.full(size, -np.inf)
    interferers = [t for t in range(n_t) if t != j]
    for ks in itertools.product(range(size), repeat=len(interferers)):
        partial = y_i
        belief = 0.0
        for t, kt in zip(interferers, ks):
            partial -= pt[i, t, kt]
            belief += alpha_prev[t, i, kt]
        d = partial - pt[i, j, :]
        np.maximum(best, belief - (d.real**2 + d.imag**2) * inv2s, out=best)
    beta = best - best[0]
    beta[0] = 0.0
    return beta


def alpha_update(grid: MessageGrid) -> MessageGrid:
    """Extrinsic symbol messages ``alpha_ji = gamma_j - beta_ij``."""
    gamma = symbol_llrs(grid)
    alpha = gamma[:, None, :] - np.transpose(grid.beta, (1, 0, 2))
    return MessageGrid(alpha, grid.beta)


def symbol_llrs(grid: MessageGrid) -> np.ndarray:
    """``gamma_j(k) = sum_i beta_ij(k)``, shape ``(N_t, |A|)``."""
    return grid.beta.sum(axis=0)


def bit_llrs(gamma, c: Constellation) -> BitLlrOutput:
    return BitLlrOutput.from_llrs(symbol_to_bit_llrs(gamma, c))


def initial_grid(y, H, sigma2: float, c: Constellation, init, counters: OpCounters | None = None) -> MessageGrid:
    """Resolve an initialization spec: ``"uniform"``, ``"lmmse"`` or a grid."""
    H = np.asarray(H)
    n_r, n_t = H.shape
    if isinstance(init, MessageGrid):
        if init.shape != (n_r, n_t, c.size):
            raise ValueError(f"initial grid has shape {init.shape}")
        return init.copy()
    if init in (None, "uniform"):
        return MessageGrid.zeros(n_r, n_t, c.size)
    if init == "lmmse":
        scratch = OpCounters() if counters is not None else None
        est = lmmse_estimate(y, H, sigma2, counters=scratch)
        if counters is not None:
            counters.init_multiplications += scratch.real_multiplications
        return MessageGrid.from_prior(lmmse_prior_llrs(est, c), n_r)
    raise ValueError(f"unknown initialization {init!r}")


def _iterate(grid: MessageGrid, Q_L: int, sweep) -> MessageGrid:
    if Q_L < 1:
        raise ValueError(f"iteration count must be >= 1, got {Q_L}")
    for _ in range(Q_L):
        sweep(grid.alpha, grid.beta)
        grid = alpha_update(grid)
    return grid


def run_original_bp(
    y, H, sigma2: float, c: Constellation, Q_L: int, init="uniform",
    counters: OpCounters | None = None, cap: int = DEFAULT_ENUMERATION_CAP,
    return_grid: bool = False,
):
    """Original max-log BP with the exhaustive beta search."""
    sigma2 = _check_sigma2(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    n_r, n_t = H.shape
    if c.size**n_t > cap:
        raise UnsupportedScale(f"|A|^N_t = {c.size}^{n_t} exceeds the enumeration cap {cap}")
    grid = initial_grid(y, H, sigma2, c, init, counters)
    pt = product_table(H, c)
    # h_i s for every candidate is computed once and reused by all iterations
    m = _kernels.row_metrics(y, pt, 0.5 / sigma2)
    grid = _iterate(grid, Q_L, lambda a, b: _kernels.obp_beta(m, a, b))
    charge_table(counters, n_r, n_t, c.size)
    charge_beta_search(counters, c.size**n_t, n_r * n_t, n_t, Q_L)
    out = bit_llrs(symbol_llrs(grid), c)
    return (out, grid) if return_grid else out


def strongest_edges(H, d_f: int) -> np.ndarray:
    """Per factor node, the ``d_f`` symbol indices with the largest ``|h_ij|`` (ascending index)."""
    H = np.asarray(H)
    order = np.argsort(-np.abs(H), axis=1, kind="stable")[:, :d_f]
    return np.sort(order, axis=1)


def run_ebrdf_bp(
    y, H, sigma2: float, c: Constellation, Q_L: int, d_f: int, init="uniform",
    counters: OpCounters | None = None, return_grid: bool = False,
):
    """Edge-pruned BP: each factor node keeps its ``d_f`` strongest edges.

    Kept edges are searched exhaustively; symbols on pruned edges are pinned
    to the argmax of their current message and receive no beta. This is a
    best-effort rendering of the reduced-dimension detector, not a
    transcription of it.
    """
    sigma2 = _check_sigma2(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    n_r, n_t = H.shape
    if not 1 <= d_f <= n_t:
        raise ValueError(f"d_f must lie in [1, {n_t}], got {d_f}")
    grid = initial_grid(y, H, sigma2, c, init, counters)
    pt = product_table(H, c)
    kept = strongest_edges(H, d_f).astype(np.int64)
    inv2s = 0.5 / sigma2
    grid = _iterate(grid, Q_L, lambda a, b: _kernels.ebrdf_beta(y, pt, a, inv2s, kept, b))
    charge_table(counters, n_r, n_t, c.size)
    charge_beta_search(counters, c.size**d_f, n_r * d_f, d_f, Q_L)
    out = bit_llrs(symbol_llrs(grid), c)
    return (out, grid) if return_grid else out
