"""CSV and text artifacts. Floats are written with repr, i.e. full precision."""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from schemas.config import RunConfig
from schemas.results import AblationReport, AlignmentCurve, CompoundingCurve, SizeSweepRow, SuiteReport

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "config.resolved"
SUMMARY_METHODS = ("oracle", "random", "cyclegan", "dcc", "ecc", "ecc_nosym")


def write_rows(path, fieldnames: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    logger.debug(f"Wrote {path}")
    return path


def read_rows(path) -> List[Dict[str, str]]:
    with Path(path).open(newline="") as handle:
        return list(csv.DictReader(handle))


def write_resolved_config(directory, config: RunConfig) -> Path:
    path = Path(directory) / RESOLVED_CONFIG
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(config.resolved_lines()) + "\n")
    return path


def write_dynamics_curve(path, curve) -> Path:
    return write_rows(path, ("epoch", "train_l1", "heldout_l1"), (row._asdict() for row in curve))


def write_performance(path, report: SuiteReport) -> Path:
    fields = ("pair", "method", "cell", "mean", "std", "median", "normalized", "missing_seeds")
    return write_rows(
        path,
        fields,
        (
            {
                "pair": report.pair,
                "method": c.method,
                "cell": c.cell,
                "mean": c.mean,
                "std": c.std,
                "median": c.median,
                "normalized": c.normalized,
                "missing_seeds": ",".join(str(s) for s in c.missing_seeds),
            }
            for c in report.cells
        ),
    )


def write_alignment_curves(path, curves: Sequence[AlignmentCurve]) -> Path:
    def rows():
        for curve in curves:
            label = "fingertip_proxy_extension" if curve.extension else "shared_coords"
            for t, error in enumerate(curve.smoothed):
                yield {
                    "t": t,
                    "method": curve.method,
                    "seed": curve.seed,
                    "error": error,
                    "running_mean": curve.running_mean[t],
                    "metric": label,
                }

    return write_rows(path, ("t", "method", "seed", "error", "running_mean", "metric"), rows())


def write_compounding_curves(path, curves: Sequence[CompoundingCurve]) -> Path:
    return write_rows(
        path,
        ("t", "method", "seed", "error"),
        (
            {"t": t, "method": c.method, "seed": c.seed, "error": e}
            for c in curves
            for t, e in enumerate(c.errors)
        ),
    )


def write_size_sweep(path, rows: Sequence[SizeSweepRow]) -> Path:
    return write_rows(path, ("n_traj", "cell", "mean", "std", "median"), (r.model_dump() for r in rows))


def write_ablation(path, report: AblationReport) -> Path:
    rows = [
        {"seed": r.seed, "ecc": r.ecc, "ecc_nosym": r.ecc_nosym, "difference": r.difference}
        for r in report.rows
    ]
    rows.append({"seed": "median", "ecc": None, "ecc_nosym": None, "difference": report.median_difference})
    rows.append({"seed": "std", "ecc": report.std_ecc, "ecc_nosym": report.std_ecc_nosym, "difference": None})
    return write_rows(path, ("seed", "ecc", "ecc_nosym", "difference"), rows)


def write_summary(path, rows: Sequence[dict]) -> Path:
    fields = ("pair", *SUMMARY_METHODS, "ecc_minus_ecc_nosym", "size_sweep")
    return write_rows(path, fields, ({f: row.get(f) for f in fields} for row in rows))
