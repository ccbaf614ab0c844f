"""Command-line front end for BER sweeps.

Example (8x4 MIMO, 16-QAM)::

    bspdetect --nr 8 --nt 4 --mod 16qam --ebn0 5:1:20 --iters 10 \\
        --detectors map,mmse,obp,bsp:1:1,bsp:2:2 --seed 7 --out sweep.csv
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .modem import constellation_from_name
from .sim import BerRecord, DetectorSpec, SimulationConfig, default_workers, run_sweep

log = logging.getLogger("bspdetect")

CSV_COLUMNS = (
    "detector",
    "ebn0_db",
    "sigma2",
    "vectors",
    "bit_errors",
    "bits_total",
    "ber",
    "ci_low",
    "ci_high",
    "symbol_errors",
    "mults_per_use",
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DETECTOR_FAILURE = 3

DEFAULTS = {
    "iters": 10,
    "max_vectors": 10_000,
    "target_errors": 400,
    "seed": 0,
    "format": None,
}


class ConfigError(ValueError):
    """The merged flags and config file violate one or more constraints."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class RunManifest:
    config: dict
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    outputs: list[str] = field(default_factory=list)


def parse_range(text) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive), a comma list, or a single value."""
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    if ":" in text:
        start, step, stop = (float(v) for v in text.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {text!r}: need step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bspdetect",
        description="Monte Carlo BER sweep for MIMO detectors (MAP, LMMSE, BP, BsP).",
        argument_default=None,
    )
    p.add_argument("--config", type=Path, help="JSON config file (or a previous run's JSON output)")
    p.add_argument("--nr", type=int, help="receive antennas")
    p.add_argument("--nt", type=int, help="transmit antennas")
    p.add_argument("--mod", help="qpsk, 16qam, 64qam, 256qam or bits per symbol")
    p.add_argument("--ebn0", help="Eb/N0 points in dB: start:step:stop or a comma list")
    p.add_argument("--sigma2", help="noise variance per real dimension (bypasses --ebn0)")
    p.add_argument("--iters", type=int, help="default BP/BsP iteration count (10)")
    p.add_argument(
        "--detectors",
        help="comma list: map, mmse, obp[:lmmse], bsp:<d_m>:<d_f>[:uniform], ebrdf:<d_f>; "
        "append :q<N> to override iterations",
    )
    p.add_argument("--seed", type=int, help="master seed (0)")
    p.add_argument("--max-vectors", type=int, dest="max_vectors", help="channel uses per point (10000)")
    p.add_argument(
        "--target-errors", type=int, dest="target_errors",
        help="stop a point once every detector has this many bit errors; 0 disables (400)",
    )
    p.add_argument("--workers", type=int, help="worker processes (env BSPDETECT_WORKERS, default 1)")
    p.add_argument("--out", type=Path, help="output path; format from suffix unless --format")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_file(path: Path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if "manifest" in data:  # a previous JSON result
        data = data["manifest"]["config"]
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def _from_manifest_keys(data: dict) -> dict:
    """Map SimulationConfig field names onto flag names."""
    renames = {
        "n_r": "nr", "n_t": "nt", "ebn0_points_db": "ebn0", "sigma2_points": "sigma2",
        "target_bit_errors": "target_errors", "master_seed": "seed",
    }
    out = {renames.get(k, k): v for k, v in data.items()}
    if "M" in out:
        out["mod"] = str(out.pop("M"))
    for key in ("ebn0", "sigma2"):
        if isinstance(out.get(key), list) and not out[key]:
            out.pop(key)
    return out


def parse_config(argv: Sequence[str] | None = None) -> tuple[SimulationConfig, argparse.Namespace]:
    """Merge defaults, the optional config file and flags (flags win) into a config.

    Raises ConfigError listing every violated constraint.
    """
    args = build_parser().parse_args(argv)
    merged = dict(DEFAULTS)
    if args.config is not None:
        merged.update(_from_manifest_keys(_load_file(args.config)))
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    if args.sigma2 is not None:
        merged.pop("ebn0", None)
    elif args.ebn0 is not None:
        merged.pop("sigma2", None)

    problems = []
    for key in ("nr", "nt", "mod", "detectors"):
        if merged.get(key) in (None, ""):
            problems.append(f"--{key} is required")
    if merged.get("ebn0") is None and merged.get("sigma2") is None:
        problems.append("one of --ebn0 or --sigma2 is required")
    M = None
    if merged.get("mod") is not None:
        try:
            M = constellation_from_name(merged["mod"]).bits_per_symbol
        except ValueError as exc:
            problems.append(f"--mod: {exc}")
    detectors: list[DetectorSpec] = []
    if merged.get("detectors"):
        names = merged["detectors"]
        if isinstance(names, str):
            names = names.split(",")
        for name in names:
            try:
                detectors.append(DetectorSpec.parse(name, Q_L=int(merged["iters"])))
            except ValueError as exc:
                problems.append(f"--detectors: {exc}")
    points = {}
    for key in ("ebn0", "sigma2"):
        if merged.get(key) is not None:
            try:
                points[key] = parse_range(merged[key])
            except ValueError as exc:
                problems.append(f"--{key}: {exc}")
    kwargs = dict(
        n_r=int(merged.get("nr") or 0),
        n_t=int(merged.get("nt") or 0),
        M=M if M is not None else 2,
        detectors=tuple(detectors),
        ebn0_points_db=points.get("ebn0", ()),
        sigma2_points=points.get("sigma2", ()),
        max_vectors=int(merged["max_vectors"]),
        target_bit_errors=int(merged["target_errors"]),
        master_seed=int(merged["seed"]),
        workers=int(merged["workers"]) if merged.get("workers") is not None else default_workers(),
    )
    # validate without raising so every violation is reported at once
    probe = object.__new__(SimulationConfig)
    for k, v in kwargs.items():
        object.__setattr__(probe, k, v)
    for problem in probe.problems():
        # skip knock-on effects of problems already reported
        if "antenna" in problem and ("nr" not in merged or "nt" not in merged):
            continue
        if problem.startswith(("detector roster is empty", "no Eb/N0")) and problems:
            continue
        problems.append(problem)
    if problems:
        raise ConfigError(problems)
    kwargs["M"] = M
    return SimulationConfig(**kwargs), args


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def records_to_csv(records: Sequence[BerRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: (r.detector, r.ebn0_db)):
        writer.writerow([_fmt(getattr(r, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def _json_number(value):
    # JSON has no infinity; the noiseless point is written as a string
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def records_to_json(records: Sequence[BerRecord], manifest: RunManifest) -> str:
    rows = [
        {col: _json_number(getattr(r, col)) for col in CSV_COLUMNS}
        for r in sorted(records, key=lambda r: (r.detector, r.ebn0_db))
    ]
    manifest_dict = asdict(manifest)
    failures: dict[str, int] = {}
    for r in records:
        if r.failures:
            failures[r.detector] = failures.get(r.detector, 0) + r.failures
    manifest_dict["failures"] = failures
    manifest_dict["config"] = {k: [_json_number(x) for x in v] if isinstance(v, (list, tuple)) else v
                               for k, v in manifest_dict["config"].items()}
    # repr() of a float is its shortest round-trip decimal form
    return json.dumps({"manifest": manifest_dict, "records": rows}, indent=2, allow_nan=False) + "\n"


def emit_results(records: Sequence[BerRecord], manifest: RunManifest, fmt: str, path) -> None:
    """Write a complete results file (CSV or JSON); never appends."""
    if not records:
        raise ValueError("no records to write")
    if path is not None and str(path) != "-":
        manifest.outputs.append(str(path))
    if fmt == "csv":
        text = records_to_csv(records)
    elif fmt == "json":
        text = records_to_json(records, manifest)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _progress(ebn0_db, done, totals):
    summary = " ".join(f"{k}={t.bit_errors}" for k, t in totals.items())
    log.info("Eb/N0 %.2f dB: %d vectors, bit errors %s", ebn0_db, done, summary)


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        config, args = parse_config(argv)
    except SystemExit as exc:  # argparse: unknown flag or malformed value
        return int(exc.code) if exc.code else EXIT_USAGE
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        for problem in exc.problems:
            print(f"bspdetect: error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"bspdetect: error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    fmt = args.format
    if fmt is None:
        fmt = "json" if args.out is not None and args.out.suffix == ".json" else "csv"
    if args.out is not None and not args.out.parent.exists():
        print(f"bspdetect: error: output directory {args.out.parent} does not exist", file=sys.stderr)
        return EXIT_IO

    records = run_sweep(config, progress=_progress if args.verbose else None)
    manifest = RunManifest(config=config.to_dict())
    try:
        emit_results(records, manifest, fmt, args.out)
    except OSError as exc:
        print(f"bspdetect: error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    failures = sum(r.failures for r in records)
    if failures:
        print(f"bspdetect: {failures} detector-level failures", file=sys.stderr)
        return EXIT_DETECTOR_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
