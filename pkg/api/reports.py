import logging
from pathlib import Path
from typing import Dict, List

import click
from sqlmodel import Session, select

from api.dependencies import resolve_config, run_paths
from bd.dependencies import session_scope
from core.errors import MissingInputError
from core.pipeline import RunPaths
from core.reports import SUMMARY_METHODS, read_rows, write_resolved_config, write_summary
from core.transfer import format_cell
from models.runs import EvaluationResults
from schemas.results import GAP_MARKER

logger = logging.getLogger(__name__)


def registry_cells(db: Session, pair: str) -> Dict[str, str]:
    """Method -> "mean±std" over every stored episode return of the pair."""
    rows = db.exec(
        select(EvaluationResults)
        .where(EvaluationResults.Pair == pair)
        .order_by(EvaluationResults.Method, EvaluationResults.Seed, EvaluationResults.Episode)
    ).all()
    returns: Dict[str, List[float]] = {}
    for row in rows:
        returns.setdefault(row.Method, []).append(row.Return)
    return {method: format_cell(values) for method, values in returns.items()}


def summary_row(db: Session, paths: RunPaths, pair: str) -> dict:
    reports = paths.reports_dir(pair)
    cells = registry_cells(db, pair)
    if not cells and (reports / "performance.csv").exists():
        cells = {row["method"]: row["cell"] for row in read_rows(reports / "performance.csv")}
    row = {"pair": pair}
    for method in SUMMARY_METHODS:
        row[method] = cells.get(method, GAP_MARKER)
    if (reports / "ablation.csv").exists():
        medians = [r["difference"] for r in read_rows(reports / "ablation.csv") if r["seed"] == "median"]
        row["ecc_minus_ecc_nosym"] = medians[0] if medians else None
    if (reports / "size_sweep.csv").exists():
        row["size_sweep"] = ";".join(f"{r['n_traj']}:{r['cell']}" for r in read_rows(reports / "size_sweep.csv"))
    return row


def known_pairs(db: Session, paths: RunPaths) -> List[str]:
    pairs = set(db.exec(select(EvaluationResults.Pair).distinct()).all())
    reports_root = paths.root / "reports"
    if reports_root.exists():
        pairs.update(p.name for p in reports_root.iterdir() if p.is_dir())
    return sorted(pairs)


# ----------------------------
# 📌 REPORT
# ----------------------------
@click.command("report")
@click.pass_context
def report(ctx):
    """Merge every pair's results into reports/summary.csv."""
    config = resolve_config(ctx)
    paths = run_paths(config)
    with session_scope(config.output_root) as db:
        pairs = known_pairs(db, paths)
        if not pairs:
            raise MissingInputError(f"nothing to report under {paths.root}; run `eval` first")
        rows = [summary_row(db, paths, pair) for pair in pairs]
    path: Path = write_summary(paths.root / "reports" / "summary.csv", rows)
    write_resolved_config(paths.root / "reports", config)
    for row in rows:
        click.echo("  ".join(f"{k}={row.get(k)}" for k in ("pair", *SUMMARY_METHODS)))
    click.echo(f"summary: {path}")
