"""Batch front end: config parsing, pipeline runs, and report emission.

Two subcommands share one writer:

* ``decompose model.stl --printers N ...`` runs a single model at a single
  printer count.
* ``batch manifest.json`` sweeps the models and printer counts named in a
  small JSON manifest (see :func:`load_manifest`).

Every run appends to ``results.csv``, dumps per-model series into
``plotdata.json``, streams one JSON line per search iteration into
``runlog.jsonl``, and exports the winning parts as binary STL files under
``out/<model>/<printers>/<algorithm>/part_###.stl``.  The process exits 0
when at least one run produced a valid decomposition and 2 otherwise.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, ParalleloboxError
from .grid import GRANULARITY_CELLS
from .mesh import TriangleMesh, clean_mesh, load_mesh, save_stl
from .meta import (Decomposition, PrinterProfile, RunPlan, RunRecord,
                   recursive_symmetry_baseline, run_metaheuristic)
from .preprocess import SYMMETRY_THRESHOLD

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("model", "algorithm", "printers", "parts", "parallel_time_s",
               "aggregate_time_s", "parallel_score", "compute_time_s", "valid")

_PROFILE_KEYS = ("volume_x", "volume_y", "volume_z", "speed_shell",
                 "speed_infill", "line_width", "layer_height")


def parse_config(path) -> PrinterProfile:
    """Read a ``[printer]`` ini section; absent keys keep their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"printer config not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(encoding="utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    if parser.has_section("printer"):
        section = parser["printer"]
        for key in _PROFILE_KEYS:
            if key not in section:
                continue
            try:
                values[key] = float(section[key])
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: [printer] {key} = {section[key]!r} "
                    "is not a number") from exc
    else:
        logger.warning("%s has no [printer] section; using defaults", path)
    profile = PrinterProfile(**values)
    for key in _PROFILE_KEYS:
        if getattr(profile, key) <= 0.0:
            raise ConfigError(f"{path}: [printer] {key} must be positive, "
                              f"got {getattr(profile, key)}")
    return profile


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RunRow:
    """One results.csv row."""

    model: str
    algorithm: str
    printers: int
    parts: int
    parallel_time_s: float | None
    aggregate_time_s: float | None
    parallel_score: float | None
    compute_time_s: float
    valid: bool

    def csv_values(self) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x))

        return [self.model, self.algorithm, str(self.printers),
                str(self.parts), num(self.parallel_time_s),
                num(self.aggregate_time_s), num(self.parallel_score),
                num(self.compute_time_s), "true" if self.valid else "false"]


@dataclass
class BatchReport:
    rows: list[RunRow] = field(default_factory=list)
    log_lines: list[dict] = field(default_factory=list)

    @property
    def any_valid(self) -> bool:
        return any(row.valid for row in self.rows)


def _export_parts(result: Decomposition, part_dir: Path) -> int:
    part_dir.mkdir(parents=True, exist_ok=True)
    for stale in sorted(part_dir.glob("part_*.stl")):
        stale.unlink()
    for i, part in enumerate(result.parts):
        save_stl(part.mesh, part_dir / f"part_{i:03d}.stl")
    return len(result.parts)


def _log_record(report: BatchReport, model: str, printers: int,
                algorithm: str, record: RunRecord) -> None:
    line = {"model": model, "printers": printers, "algorithm": algorithm}
    line.update(record.to_dict())
    report.log_lines.append(line)


def run_model(mesh: TriangleMesh, model_name: str, printers: int,
              plan: RunPlan, profile: PrinterProfile, algorithms: list[str],
              out_dir: Path, report: BatchReport) -> None:
    """Run the requested algorithms for one (model, printer count) pair."""
    plan = replace(plan, printers_available=printers)
    for algorithm in algorithms:
        tick = time.perf_counter()
        result: Decomposition | None = None
        records: list[RunRecord] = []
        try:
            if algorithm == "parallelobox":
                result = run_metaheuristic(mesh, plan, profile, records)
            else:
                result = recursive_symmetry_baseline(mesh, plan, profile)
        except ParalleloboxError as exc:
            logger.error("%s x%d (%s): %s", model_name, printers,
                         algorithm, exc)
        elapsed = time.perf_counter() - tick

        for record in records:
            _log_record(report, model_name, printers, algorithm, record)
        if result is not None and algorithm == "symmetry":
            _log_record(report, model_name, printers, algorithm, RunRecord(
                seed_blocks=0, try_index=0, seed=plan.seed_base,
                valid=result.valid, parts=result.printers_used,
                parallel_score=result.parallel_score,
                parallel_time_s=result.parallel_time_s,
                aggregate_time_s=result.aggregate_time_s,
                reason=result.reason, wall_clock_s=elapsed))

        if result is None:
            report.rows.append(RunRow(
                model=model_name, algorithm=algorithm, printers=printers,
                parts=0, parallel_time_s=None, aggregate_time_s=None,
                parallel_score=None, compute_time_s=elapsed, valid=False))
            continue
        exported = 0
        if result.valid:
            exported = _export_parts(
                result, out_dir / model_name / str(printers) / algorithm)
        report.rows.append(RunRow(
            model=model_name, algorithm=algorithm, printers=printers,
            parts=exported if result.valid else result.printers_used,
            parallel_time_s=result.parallel_time_s,
            aggregate_time_s=result.aggregate_time_s,
            parallel_score=result.parallel_score,
            compute_time_s=elapsed, valid=result.valid))
        logger.info("%s x%d %s: %d parts, parallel %.1f s, valid=%s",
                    model_name, printers, algorithm, result.printers_used,
                    result.parallel_time_s, result.valid)


# ---------------------------------------------------------------------------
# report files


def write_results_csv(report: BatchReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(row.csv_values())


def write_plotdata(report: BatchReport, path: Path) -> None:
    """Per-model series keyed for bar-chart reproduction."""
    data: dict = {}
    for row in report.rows:
        series = data.setdefault(row.model, {}).setdefault(
            row.algorithm, {"printers": [], "parts": [], "parallel_time_s": [],
                            "aggregate_time_s": [], "parallel_score": [],
                            "valid": []})
        series["printers"].append(row.printers)
        series["parts"].append(row.parts)
        series["parallel_time_s"].append(row.parallel_time_s)
        series["aggregate_time_s"].append(row.aggregate_time_s)
        series["parallel_score"].append(row.parallel_score)
        series["valid"].append(row.valid)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_runlog(report: BatchReport, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in report.log_lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def run_batch(models: list[Path], printer_counts: list[int], plan: RunPlan,
              profile: PrinterProfile, algorithms: list[str],
              out_dir: Path) -> BatchReport:
    """Run every (model, printer count) pair and write the report files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report = BatchReport()
    for model_path in models:
        name = Path(model_path).stem
        try:
            mesh = clean_mesh(load_mesh(model_path))
        except (ParalleloboxError, OSError) as exc:
            logger.error("skipping %s: %s", model_path, exc)
            for printers in printer_counts:
                for algorithm in algorithms:
                    report.rows.append(RunRow(
                        model=name, algorithm=algorithm, printers=printers,
                        parts=0, parallel_time_s=None, aggregate_time_s=None,
                        parallel_score=None, compute_time_s=0.0, valid=False))
            continue
        for printers in printer_counts:
            run_model(mesh, name, printers, plan, profile, algorithms,
                      out_dir, report)
    write_results_csv(report, out_dir / "results.csv")
    write_plotdata(report, out_dir / "plotdata.json")
    write_runlog(report, out_dir / "runlog.jsonl")
    return report


# ---------------------------------------------------------------------------
# argument plumbing


def load_manifest(path) -> dict:
    """A sweep manifest: {"models": [...], "printers": [...], ...options}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict) or "models" not in raw:
        raise ConfigError(f"{path}: expected an object with a 'models' list")
    models = raw["models"]
    if not isinstance(models, list) or not models:
        raise ConfigError(f"{path}: 'models' must be a non-empty list")
    counts = raw.get("printers", [4])
    if not isinstance(counts, list) or not all(
            isinstance(c, int) and c >= 1 for c in counts):
        raise ConfigError(f"{path}: 'printers' must be a list of counts >= 1")
    # model paths are relative to the manifest's own directory
    raw["models"] = [path.parent / m for m in models]
    raw["printers"] = counts
    return raw


def _add_shared_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--granularity", choices=sorted(GRANULARITY_CELLS),
                     default="very_fine", help="grid resolution preset")
    sub.add_argument("--sample-tries", type=int, default=3, metavar="K",
                     help="random restarts per seed-block count")
    sub.add_argument("--skip-symmetry", action="store_true",
                     help="never apply the pre-cut, even on mirror models")
    sub.add_argument("--symmetry-threshold", type=float,
                     default=SYMMETRY_THRESHOLD, metavar="T",
                     help="max normalized mirror error that still cuts")
    sub.add_argument("--overhang-tolerance", type=float, default=1.0,
                     metavar="DEG", help="face slope treated as printable")
    sub.add_argument("--infill", type=float, default=0.05, metavar="F",
                     help="infill fraction used by the time model")
    sub.add_argument("--config", type=Path, default=None, metavar="INI",
                     help="printer profile .ini (defaults: 250 mm cube)")
    sub.add_argument("--seed", type=int, default=0, metavar="S",
                     help="base RNG seed")
    sub.add_argument("--out", type=Path, default=Path("out"), metavar="DIR",
                     help="report/output directory")
    sub.add_argument("--baseline", default="parallelobox",
                     choices=("parallelobox", "symmetry", "both"),
                     help="which algorithm(s) to run")
    sub.add_argument("--min-printers", type=int, default=1, metavar="N",
                     help="stop the outer search below this seed count")
    sub.add_argument("-v", "--verbose", action="store_true",
                     help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parallelobox",
        description="Split a watertight mesh into printer-sized boxes that "
                    "print in parallel.")
    subs = parser.add_subparsers(dest="command", required=True)

    one = subs.add_parser("decompose", help="decompose a single model")
    one.add_argument("model", type=Path, help="STL or OBJ file")
    one.add_argument("--printers", type=int, default=4, metavar="N",
                     help="printers available")
    _add_shared_options(one)

    many = subs.add_parser("batch", help="sweep models x printer counts")
    many.add_argument("manifest", type=Path,
                      help="JSON manifest with 'models' and 'printers' lists")
    _add_shared_options(many)
    return parser


def _plan_from_args(args, overrides: dict | None = None) -> RunPlan:
    opt = {
        "granularity": args.granularity,
        "sample_tries": args.sample_tries,
        "seed_base": args.seed,
        "min_printers": args.min_printers,
        "infill_fraction": args.infill,
        "overhang_tolerance_deg": args.overhang_tolerance,
        "symmetry_threshold": args.symmetry_threshold,
        "skip_symmetry_cut": args.skip_symmetry,
    }
    if overrides:
        mapping = {"granularity": "granularity",
                   "sample_tries": "sample_tries",
                   "seed": "seed_base",
                   "min_printers": "min_printers",
                   "infill": "infill_fraction",
                   "overhang_tolerance": "overhang_tolerance_deg",
                   "symmetry_threshold": "symmetry_threshold",
                   "skip_symmetry": "skip_symmetry_cut"}
        for key, attr in mapping.items():
            if key in overrides:
                opt[attr] = overrides[key]
    return RunPlan(**opt)


def _algorithms(choice: str) -> list[str]:
    return ["parallelobox", "symmetry"] if choice == "both" else [choice]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "decompose":
            profile = (parse_config(args.config) if args.config
                       else PrinterProfile())
            report = run_batch([args.model], [args.printers],
                               _plan_from_args(args), profile,
                               _algorithms(args.baseline), args.out)
        else:
            manifest = load_manifest(args.manifest)
            config = manifest.get("config", args.config)
            profile = parse_config(config) if config else PrinterProfile()
            out_dir = Path(manifest.get("out", args.out))
            report = run_batch(manifest["models"], manifest["printers"],
                               _plan_from_args(args, manifest), profile,
                               _algorithms(manifest.get("baseline",
                                                        args.baseline)),
                               out_dir)
    except ConfigError as exc:
        logger.error("%s", exc)
        return 2
    valid = sum(row.valid for row in report.rows)
    logger.info("%d/%d runs valid", valid, len(report.rows))
    return 0 if report.any_valid else 2


if __name__ == "__main__":
    sys.exit(main())
