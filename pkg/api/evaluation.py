import logging
from typing import Dict, List

import click
from sqlmodel import Session, select

from api.dependencies import (
    episodes_option,
    method_option,
    methods_option,
    mode_option,
    pair_option,
    resolve_config,
    run_paths,
    seeds_option,
    snapshot_loader,
)
from bd.dependencies import session_scope
from core.envs import make_domain_pair
from core.errors import MissingInputError
from core.pipeline import optional_forward, sweep_train_fn
from core.reports import (
    write_ablation,
    write_alignment_curves,
    write_compounding_curves,
    write_performance,
    write_resolved_config,
    write_size_sweep,
)
from core.transfer import (
    ablate_symmetry,
    alignment_error_curve,
    compounding_error_curve,
    dataset_size_sweep,
    evaluate_suite,
)
from models.runs import EvaluationResults
from schemas.results import TransferResult

logger = logging.getLogger(__name__)


def record_results(db: Session, results: Dict[str, TransferResult]) -> None:
    """Replace the stored returns of every (pair, method, seed) evaluated."""
    for method, result in results.items():
        for seed in sorted({r.seed for r in result.returns}):
            stale = db.exec(
                select(EvaluationResults).where(
                    EvaluationResults.Pair == result.pair,
                    EvaluationResults.Method == method,
                    EvaluationResults.Seed == seed,
                )
            ).all()
            for row in stale:
                db.delete(row)
        for r in result.returns:
            db.add(EvaluationResults(Pair=result.pair, Method=method, Seed=r.seed, Episode=r.episode, Return=r.value))


def _cached(loader):
    cache = {}

    def cached(method, seed):
        if (method, seed) not in cache:
            cache[(method, seed)] = loader(method, seed)
        return cache[(method, seed)]

    return cached


# ----------------------------
# 📌 EVAL
# ----------------------------
@click.command("eval")
@pair_option
@method_option
@methods_option
@seeds_option
@episodes_option
@mode_option
@click.pass_context
def evaluate(ctx, pair, method, methods, seeds, episodes, mode):
    """Transfer every (method, seed) snapshot and write the report CSVs."""
    config = resolve_config(ctx, pair=pair, methods=method or methods, seeds=seeds, episodes=episodes, eval_mode=mode)
    paths = run_paths(config)
    domain_pair = make_domain_pair(config.pair)
    method_names = [m.value for m in config.methods]
    reports = paths.reports_dir(config.pair)
    horizon = config.horizon

    with session_scope(config.output_root) as db:
        loader = _cached(snapshot_loader(db, paths, domain_pair, config.hidden))
        outcome = evaluate_suite(
            domain_pair, method_names, config.seeds, config.episodes, loader, horizon, config.eval_mode, config.hidden
        )
        record_results(db, outcome.results)
    write_performance(reports / "performance.csv", outcome.report)

    alignment, compounding = [], []
    forward = optional_forward(config, paths)
    for name in method_names:
        for seed in config.seeds:
            maps = loader(name, seed)
            if maps is None:
                continue
            if domain_pair.has_shared_coords:
                alignment.append(
                    alignment_error_curve(domain_pair, maps.G, maps.H, None, horizon, config.episodes, seed,
                                          config.smoothing_window, name)
                )
            if forward is not None:
                compounding.append(compounding_error_curve(domain_pair, maps, forward, horizon, config.episodes, seed, name))
    if alignment:
        write_alignment_curves(reports / "alignment_curve.csv", alignment)
    if compounding:
        write_compounding_curves(reports / "compounding_error.csv", compounding)
    write_resolved_config(reports, config)

    for cell in outcome.report.cells:
        click.echo(f"{cell.method:>10}  {cell.cell}")
    if not outcome.report.complete:
        gaps = ", ".join(f"{c.method} seeds {c.missing_seeds}" for c in outcome.report.cells if c.missing_seeds)
        raise MissingInputError(f"missing snapshots ({gaps}); run `train --pair {config.pair}` for them")


# ----------------------------
# 📌 SWEEP
# ----------------------------
@click.command("sweep")
@pair_option
@click.option("--sizes", default=None, help="Comma-separated trajectory counts, ascending.")
@seeds_option
@episodes_option
@click.pass_context
def sweep(ctx, pair, sizes, seeds, episodes):
    """Full pipeline per dataset size; writes size_sweep.csv."""
    config = resolve_config(ctx, pair=pair, sizes=sizes, seeds=seeds, episodes=episodes, method="ecc")
    paths = run_paths(config)
    domain_pair = make_domain_pair(config.pair)
    rows = dataset_size_sweep(
        domain_pair, config.sizes, config.seeds, sweep_train_fn(config, paths),
        config.episodes, config.horizon, config.eval_mode,
    )
    reports = paths.reports_dir(config.pair)
    write_size_sweep(reports / "size_sweep.csv", rows)
    write_resolved_config(reports, config)
    for row in rows:
        click.echo(f"{row.n_traj:>6}  {row.cell}")


# ----------------------------
# 📌 ABLATE
# ----------------------------
@click.command("ablate")
@pair_option
@seeds_option
@episodes_option
@click.pass_context
def ablate(ctx, pair, seeds, episodes):
    """Paired ecc vs ecc_nosym comparison; writes ablation.csv."""
    config = resolve_config(ctx, pair=pair, seeds=seeds, episodes=episodes)
    paths = run_paths(config)
    domain_pair = make_domain_pair(config.pair)
    with session_scope(config.output_root) as db:
        loader = snapshot_loader(db, paths, domain_pair, config.hidden)
        report = ablate_symmetry(domain_pair, config.seeds, loader, config.episodes, config.horizon, config.eval_mode)
    reports = paths.reports_dir(config.pair)
    write_ablation(reports / "ablation.csv", report)
    write_resolved_config(reports, config)
    click.echo(f"median(ecc - ecc_nosym) = {report.median_difference}")
    missing: List[int] = [r.seed for r in report.rows if r.difference is None]
    if missing:
        raise MissingInputError(
            f"ecc/ecc_nosym snapshots missing for seeds {missing}; train both methods first"
        )
