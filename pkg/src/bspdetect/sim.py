"""Deterministic Monte Carlo BER engine.

Every trial draws its own generator from ``(master_seed, point, trial)``,
and every detector in the roster sees that trial's channel instance, so
results depend only on the configuration, never on the worker count or on
scheduling. Trials run in fixed-size rounds; early stopping is checked only
at round boundaries.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .bp import run_ebrdf_bp, run_original_bp
from .bsp import BspConfig, run_bsp
from .channel import draw_instance, ebn0_from_noise_variance, noise_variance_from_ebn0
from .linear import DEFAULT_ENUMERATION_CAP, lmmse_estimate, lmmse_hard_detect, map_detect
from .metrics import OpCounters
from .modem import Constellation, build_constellation
from .numerics import NumericalFailure

log = logging.getLogger(__name__)

# Detectors divide by sigma2; the noiseless point runs them at this floor.
SIGMA2_FLOOR = 1e-9
ROUND_TRIALS = 2000
DETECTOR_KINDS = ("map", "mmse", "obp", "bsp", "ebrdf")


@dataclass(frozen=True)
class DetectorSpec:
    kind: str
    d_m: int = 1
    d_f: int = 1
    Q_L: int = 10
    init_mode: str | None = None  # None: the detector's default

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector {self.kind!r}; expected one of {DETECTOR_KINDS}")
        if self.init_mode not in (None, "uniform", "lmmse"):
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.d_m < 1 or self.d_f < 1 or self.Q_L < 1:
            raise ValueError(f"detector parameters must be >= 1: {self}")

    @property
    def init(self) -> str:
        if self.init_mode is not None:
            return self.init_mode
        return "lmmse" if self.kind == "bsp" else "uniform"

    @property
    def id(self) -> str:
        parts = [self.kind]
        if self.kind == "bsp":
            parts += [str(self.d_m), str(self.d_f)]
        elif self.kind == "ebrdf":
            parts.append(str(self.d_f))
        if self.kind in ("obp", "bsp", "ebrdf"):
            default_init = "lmmse" if self.kind == "bsp" else "uniform"
            if self.init != default_init:
                parts.append(self.init)
            if self.Q_L != 10:
                parts.append(f"q{self.Q_L}")
        return ":".join(parts)

    @classmethod
    def parse(cls, text: str, Q_L: int = 10) -> "DetectorSpec":
        """Parse ``map``, ``mmse``, ``obp[:lmmse]``, ``bsp:<d_m>:<d_f>[:uniform]``,
        ``ebrdf:<d_f>``; a ``q<N>`` token overrides the iteration count."""
        tokens = [t for t in text.strip().lower().split(":") if t]
        if not tokens:
            raise ValueError("empty detector spec")
        kind, rest = tokens[0], tokens[1:]
        ints, init = [], None
        for tok in rest:
            if tok in ("uniform", "lmmse"):
                init = tok
            elif tok.startswith("q") and tok[1:].isdigit():
                Q_L = int(tok[1:])
            elif tok.isdigit():
                ints.append(int(tok))
            else:
                raise ValueError(f"bad token {tok!r} in detector spec {text!r}")
        if kind == "bsp":
            if len(ints) != 2:
                raise ValueError(f"bsp needs d_m and d_f, e.g. bsp:2:2 (got {text!r})")
            return cls("bsp", ints[0], ints[1], Q_L, init)
        if kind == "ebrdf":
            if len(ints) != 1:
                raise ValueError(f"ebrdf needs d_f, e.g. ebrdf:3 (got {text!r})")
            return cls("ebrdf", 1, ints[0], Q_L, init)
        if ints:
            raise ValueError(f"{kind} takes no numeric parameters (got {text!r})")
        return cls(kind, Q_L=Q_L, init_mode=init)

    def detect(self, y, H, sigma2: float, c: Constellation, counters: OpCounters | None = None) -> np.ndarray:
        """Hard bit decisions for one channel use."""
        if self.kind == "map":
            return map_detect(y, H, sigma2, c, counters=counters).hard_bits
        if self.kind == "mmse":
            return lmmse_hard_detect(lmmse_estimate(y, H, sigma2, counters=counters), c)
        if self.kind == "obp":
            return run_original_bp(y, H, sigma2, c, self.Q_L, init=self.init, counters=counters).hard_bits
        if self.kind == "bsp":
            cfg = BspConfig(self.d_m, self.d_f, self.Q_L, self.init)
            return run_bsp(y, H, sigma2, c, cfg, counters=counters).hard_bits
        return run_ebrdf_bp(
            y, H, sigma2, c, self.Q_L, min(self.d_f, np.shape(H)[1]), init=self.init, counters=counters
        ).hard_bits


@dataclass(frozen=True)
class SimulationConfig:
    n_r: int
    n_t: int
    M: int
    detectors: tuple[DetectorSpec, ...]
    ebn0_points_db: tuple[float, ...] = ()
    sigma2_points: tuple[float, ...] = ()  # when given, overrides the Eb/N0 grid
    max_vectors: int = 10_000
    target_bit_errors: int = 400  # 0 disables early stopping
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid simulation config: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.n_r < 1 or self.n_t < 1:
            out.append(f"antenna counts must be >= 1 (got {self.n_r}x{self.n_t})")
        if self.M % 2 or not 2 <= self.M <= 8:
            out.append(f"bits per symbol must be even and in [2, 8] (got {self.M})")
        if not self.detectors:
            out.append("detector roster is empty")
        if len({d.id for d in self.detectors}) != len(self.detectors):
            out.append("detector roster has duplicates")
        if not self.ebn0_points_db and not self.sigma2_points:
            out.append("no Eb/N0 or sigma2 points")
        if any(s < 0 or not math.isfinite(s) for s in self.sigma2_points):
            out.append("sigma2 points must be finite and >= 0")
        if self.max_vectors < 1:
            out.append(f"max_vectors must be >= 1 (got {self.max_vectors})")
        if self.target_bit_errors < 0:
            out.append("target_bit_errors must be >= 0")
        if self.workers < 1:
            out.append("workers must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            out.append("master_seed must fit in 64 bits")
        exhaustive = [d.id for d in self.detectors if d.kind in ("map", "obp")]
        if exhaustive and (1 << self.M) ** self.n_t > DEFAULT_ENUMERATION_CAP:
            out.append(f"{', '.join(exhaustive)} would enumerate more than {DEFAULT_ENUMERATION_CAP} vectors")
        return out

    @property
    def constellation(self) -> Constellation:
        return build_constellation(self.M)

    def points(self) -> list[tuple[float, float]]:
        """``(ebn0_db, sigma2)`` for every point of the sweep."""
        if self.sigma2_points:
            return [
                (ebn0_from_noise_variance(s, self.M, self.n_t, self.n_r), float(s))
                for s in self.sigma2_points
            ]
        return [
            (float(e), noise_variance_from_ebn0(e, self.M, self.n_t, self.n_r))
            for e in self.ebn0_points_db
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detectors"] = [det.id for det in self.detectors]
        return d


@dataclass
class DetectorTally:
    bit_errors: int = 0
    symbol_errors: int = 0
    vectors: int = 0
    failures: int = 0
    counters: OpCounters = field(default_factory=OpCounters)

    def merge(self, other: "DetectorTally") -> None:
        self.bit_errors += other.bit_errors
        self.symbol_errors += other.symbol_errors
        self.vectors += other.vectors
        self.failures += other.failures
        self.counters += other.counters


@dataclass
class BerRecord:
    detector: str
    ebn0_db: float
    sigma2: float
    vectors: int
    bit_errors: int
    bits_total: int
    ber: float
    ci_low: float
    ci_high: float
    symbol_errors: int
    mults_per_use: float
    failures: int = 0


def trial_stream(master_seed: int, point_index: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial, derived without shared state."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(point_index, trial_index))
    return np.random.Generator(np.random.PCG64(seq))


def run_trial(config: SimulationConfig, point_index: int, trial_index: int) -> dict[str, DetectorTally]:
    """Draw one channel use and run every detector on it."""
    points = config.points()
    if not 0 <= point_index < len(points) or trial_index < 0:
        raise IndexError(f"trial ({point_index}, {trial_index}) out of range")
    _, sigma2 = points[point_index]
    c = config.constellation
    rng = trial_stream(config.master_seed, point_index, trial_index)
    inst = draw_instance(rng, config.n_r, config.n_t, c, sigma2)
    det_sigma2 = max(sigma2, SIGMA2_FLOOR)
    M = c.bits_per_symbol
    out = {}
    for det in config.detectors:
        tally = DetectorTally(vectors=1)
        try:
            bits = det.detect(inst.y, inst.H, det_sigma2, c, counters=tally.counters)
        except NumericalFailure as exc:
            log.warning("detector %s failed on trial (%d, %d): %s", det.id, point_index, trial_index, exc)
            tally.failures = 1
            # a failed detection counts as every bit wrong
            bits = 1 - inst.s_bits
        wrong = bits != inst.s_bits
        tally.bit_errors = int(wrong.sum())
        tally.symbol_errors = int(wrong.reshape(-1, M).any(axis=1).sum())
        out[det.id] = tally
    return out


def _run_batch(config: SimulationConfig, point_index: int, start: int, stop: int) -> dict[str, DetectorTally]:
    totals = {det.id: DetectorTally() for det in config.detectors}
    for trial in range(start, stop):
        for key, tally in run_trial(config, point_index, trial).items():
            totals[key].merge(tally)
    return totals


def wilson_interval(errors: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total < 1 or not 0 <= errors <= total:
        raise ValueError(f"need 0 <= errors <= total and total >= 1, got {errors}/{total}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = errors / total
    z2n = z * z / total
    center = (p + z2n / 2) / (1 + z2n)
    half = z / (1 + z2n) * math.sqrt(p * (1 - p) / total + z2n / (4 * total))
    low = 0.0 if errors == 0 else min(max(center - half, 0.0), p)
    high = 1.0 if errors == total else max(min(center + half, 1.0), p)
    return low, high


def _batches(start: int, stop: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, stop)) for a in range(start, stop, size)]


def run_sweep(config: SimulationConfig, progress=None) -> list[BerRecord]:
    """Simulate every point; stop a point at ``max_vectors`` or once every
    detector has reached ``target_bit_errors``."""
    c = config.constellation
    bits_per_vector = c.bits_per_symbol * config.n_t
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    records: list[BerRecord] = []
    try:
        for pidx, (ebn0_db, sigma2) in enumerate(config.points()):
            totals = {det.id: DetectorTally() for det in config.detectors}
            done = 0
            while done < config.max_vectors:
                stop = min(done + ROUND_TRIALS, config.max_vectors)
                if pool is None:
                    results = [_run_batch(config, pidx, done, stop)]
                else:
                    size = max(1, -(-(stop - done) // (4 * config.workers)))
                    spans = _batches(done, stop, size)
                    results = list(pool.map(_run_batch, *zip(*[(config, pidx, a, b) for a, b in spans])))
                for part in results:
                    for key, tally in part.items():
                        totals[key].merge(tally)
                done = stop
                if progress is not None:
                    progress(ebn0_db, done, totals)
                target = config.target_bit_errors
                if target and all(t.bit_errors >= target for t in totals.values()):
                    break
            for det in config.detectors:
                t = totals[det.id]
                bits_total = t.vectors * bits_per_vector
                low, high = wilson_interval(t.bit_errors, bits_total)
                records.append(
                    BerRecord(
                        detector=det.id,
                        ebn0_db=ebn0_db,
                        sigma2=sigma2,
                        vectors=t.vectors,
                        bit_errors=t.bit_errors,
                        bits_total=bits_total,
                        ber=t.bit_errors / bits_total,
                        ci_low=low,
                        ci_high=high,
                        symbol_errors=t.symbol_errors,
                        mults_per_use=t.counters.real_multiplications / t.vectors,
                        failures=t.failures,
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def default_workers() -> int:
    value = os.environ.get("BSPDETECT_WORKERS")
    if value:
        return max(1, int(value))
    return 1


def ber_table(records: Sequence[BerRecord]) -> dict[str, dict[float, BerRecord]]:
    """Index records as ``table[detector][ebn0_db]``."""
    table: dict[str, dict[float, BerRecord]] = {}
    for r in records:
        table.setdefault(r.detector, {})[r.ebn0_db] = r
    return table
