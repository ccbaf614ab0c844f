"""Reference detectors: exhaustive max-log MAP and LMMSE, plus the LMMSE
pseudo-prior that seeds belief-selective propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .metrics import OpCounters, charge_beta_search, charge_table
from .modem import BitLlrOutput, Constellation, nearest_indices, symbol_to_bit_llrs
from .numerics import NumericalFailure, gram_regularized, hermitian_solve

DEFAULT_ENUMERATION_CAP = 1 << 24


class UnsupportedScale(ValueError):
    """Exhaustive enumeration would exceed the configured cap."""


@dataclass
class LinearEstimate:
    s_hat: np.ndarray  # (N_t,) complex
    k_diag: np.ndarray  # (N_t,) real, diagonal of (H^H H + sigma2 I)^-1


def product_table(H, c: Constellation) -> np.ndarray:
    """``pt[i, j, k] = H[i, j] * mu_k``, shape ``(N_r, N_t, |A|)``."""
    H = np.asarray(H, dtype=np.complex128)
    return H[:, :, None] * c.points[None, None, :]


def _check_sigma2(sigma2: float) -> float:
    sigma2 = float(sigma2)
    if not sigma2 > 0 or not np.isfinite(sigma2):
        raise ValueError(f"sigma2 must be finite and > 0, got {sigma2}")
    return sigma2


def map_symbol_metrics(y, H, sigma2: float, c: Constellation, pt=None, cap=DEFAULT_ENUMERATION_CAP):
    """Per-symbol max-log metrics ``G[j, k] = max_{s: s_j = mu_k} -|y - Hs|^2 / (2 sigma2)``."""
    sigma2 = _check_sigma2(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    n_r, n_t = H.shape
    if c.size**n_t > cap:
        raise UnsupportedScale(
            f"|A|^N_t = {c.size}^{n_t} exceeds the enumeration cap {cap}"
        )
    if pt is None:
        pt = product_table(H, c)
    y = np.asarray(y, dtype=np.complex128)
    m = _kernels.row_metrics(y, pt, 0.5 / sigma2)
    total = m.sum(axis=0)
    return _kernels.marginal_max(total, c.size, n_t)


def map_detect(
    y, H, sigma2: float, c: Constellation, cap: int = DEFAULT_ENUMERATION_CAP,
    counters: OpCounters | None = None,
) -> BitLlrOutput:
    """Exhaustive max-log MAP bit LLRs over all ``|A|^N_t`` candidate vectors."""
    H = np.asarray(H, dtype=np.complex128)
    n_r, n_t = H.shape
    pt = product_table(H, c)
    G = map_symbol_metrics(y, H, sigma2, c, pt=pt, cap=cap)
    charge_table(counters, n_r, n_t, c.size)
    charge_beta_search(counters, c.size**n_t, n_r * n_t, n_t, 1)
    return BitLlrOutput.from_llrs(symbol_to_bit_llrs(G, c))


def lmmse_estimate(y, H, sigma2: float, counters: OpCounters | None = None) -> LinearEstimate:
    """``s_hat = (H^H H + sigma2 I)^-1 H^H y`` and the diagonal of that inverse."""
    sigma2 = _check_sigma2(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (H.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({H.shape[0]},)")
    n_r, n_t = H.shape
    A = gram_regularized(H, sigma2)
    K = hermitian_solve(A, np.eye(n_t, dtype=np.complex128))
    s_hat = K @ (H.conj().T @ y)
    k_diag = K.diagonal().real.copy()
    if counters is not None:
        # upper-triangle Gram, matched filter, inverse and its application
        counters.real_multiplications += 4 * (
            n_r * n_t * (n_t + 1) // 2 + n_r * n_t + n_t**3 + n_t * n_t
        )
    return LinearEstimate(s_hat, k_diag)


def lmmse_hard_detect(est: LinearEstimate, c: Constellation) -> np.ndarray:
    """Labels of the points nearest to each LMMSE estimate."""
    return c.labels[nearest_indices(est.s_hat, c)].reshape(-1)


def lmmse_prior_llrs(est: LinearEstimate, c: Constellation) -> np.ndarray:
    """Initial symbol LLRs ``(N_t, |A|)`` from the Gaussian pseudo-prior.

    ``alpha_j(k) = (|mu_ref - s_j|^2 - |mu_k - s_j|^2) / (2 K_jj)``, evaluated
    in the log domain so nothing underflows at high SNR.
    """
    k_diag = np.asarray(est.k_diag, dtype=np.float64)
    if np.any(~(k_diag > 0)):
        bad = int(np.flatnonzero(~(k_diag > 0))[0])
        raise NumericalFailure(f"non-positive LMMSE error variance at symbol {bad}", pivot=bad)
    dist = np.abs(c.points[None, :] - np.asarray(est.s_hat)[:, None]) ** 2
    ref = c.reference_index
    prior = (dist[:, ref : ref + 1] - dist) / (2.0 * k_diag[:, None])
    prior[:, ref] = 0.0
    return prior
