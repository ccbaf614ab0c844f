"""Operation tallies and the closed-form multiplication counts.

Counting convention: a beta update that searches ``n`` candidate symbol
vectors is charged ``4 n`` real multiplications (one complex product per
candidate, the remaining terms of ``h_i s`` being reused from the product
table). The charge is made once per channel use because the products are
reused across iterations. Additions and comparisons are charged on every
iteration. Building the ``h_ij * mu_k`` table itself is tallied separately
in ``table_multiplications`` and the LMMSE initialization of BP/BsP in
``init_multiplications``; neither is part of the comparison against the
closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from math import comb


class InvalidState(RuntimeError):
    pass


@dataclass
class OpCounters:
    real_multiplications: int = 0
    additions: int = 0
    comparisons: int = 0
    table_multiplications: int = 0
    init_multiplications: int = 0  # LMMSE pseudo-prior, excluded from the closed forms

    def __iadd__(self, other: "OpCounters") -> "OpCounters":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def copy(self) -> "OpCounters":
        return OpCounters(**{f.name: getattr(self, f.name) for f in fields(self)})


class RunHandle:
    """Owns the counters for one detection run (or one batch of runs)."""

    def __init__(self, counting: bool = True):
        self.counters = OpCounters() if counting else None


def counters_snapshot(handle: RunHandle) -> OpCounters:
    if handle.counters is None:
        raise InvalidState("operation counting is not enabled for this run")
    return handle.counters.copy()


def charge_beta_search(
    counters: OpCounters | None,
    candidates_per_update: int,
    updates: int,
    n_t: int,
    iterations: int,
) -> None:
    """Tally a beta schedule: ``updates`` beta vectors per iteration, each
    searching ``candidates_per_update`` symbol vectors."""
    if counters is None or iterations < 1:
        return
    total = candidates_per_update * updates
    counters.real_multiplications += 4 * total
    # per candidate: one complex subtraction and |.|^2 (4 real adds incl. the
    # belief term) plus one running-max comparison
    counters.additions += 4 * total * iterations + updates * iterations * (n_t - 1)
    counters.comparisons += total * iterations


def charge_table(counters: OpCounters | None, n_r: int, n_t: int, size: int) -> None:
    if counters is not None:
        counters.table_multiplications += 4 * n_r * n_t * size


def predicted_multiplications(
    algorithm: str, n_r: int, n_t: int, M: int, d_m: int = 1, d_f: int = 1
) -> int:
    """Closed-form real multiplications per channel use.

    ``original_bp`` and ``map``: ``4 |A|^N_t N_r N_t``.
    ``bsp``: ``4 |A| C(N_t-1, d_f-1) d_m^(d_f-1) N_t N_r`` (initialization excluded).
    ``ebrdf_bp``: ``4 |A|^d_f d_f N_r``.
    """
    size = 1 << M
    if algorithm in ("original_bp", "obp", "map"):
        return 4 * size**n_t * n_r * n_t
    if algorithm == "bsp":
        d_m = min(d_m, size)
        d_f = min(d_f, n_t)
        return 4 * size * comb(n_t - 1, d_f - 1) * d_m ** (d_f - 1) * n_t * n_r
    if algorithm in ("ebrdf_bp", "ebrdf"):
        d_f = min(d_f, n_t)
        return 4 * size**d_f * d_f * n_r
    raise ValueError(f"no closed form for algorithm {algorithm!r}")
