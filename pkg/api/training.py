import logging
from typing import List

import click
from sqlmodel import Session, select

from api.dependencies import method_option, pair_option, resolve_config, run_paths, seed_option, seeds_option
from bd.dependencies import session_scope
from core.background_tasks import run_scheduler
from core.pipeline import (
    TrainedRun,
    config_digest,
    load_datasets,
    load_dynamics,
    run_training_pipeline,
    train_dynamics,
    train_method,
)
from models.runs import TrainingRuns
from schemas.config import Method, RunConfig

logger = logging.getLogger(__name__)


def _seed_list(seed, seeds):
    """`--seeds` wins; a lone `--seed` trains that single seed."""
    if seeds is None and seed is not None:
        return str(seed)
    return seeds


def record_runs(db: Session, config: RunConfig, runs: List[TrainedRun]) -> None:
    """Insert or update the registry row of every (pair, method, seed) trained."""
    digest = config_digest(config)
    for run in runs:
        db_run = db.exec(
            select(TrainingRuns).filter(
                TrainingRuns.Pair == config.pair,
                TrainingRuns.Method == run.method.value,
                TrainingRuns.Seed == run.seed,
            )
        ).first()
        if not db_run:
            db_run = TrainingRuns(Pair=config.pair, Method=run.method.value, Seed=run.seed,
                                  TrajectoryCount=config.n_traj, SnapshotPath="", ConfigDigest=digest)
            db.add(db_run)
        db_run.TrajectoryCount = config.n_traj
        db_run.SnapshotPath = str(run.snapshot)
        db_run.PhaseLogPath = str(run.phase_log)
        db_run.ConfigDigest = digest
        db_run.Status = "completed"
        db_run.FinalLoss = run.final_loss
        logger.debug(f"Registered {config.pair}/{run.method.value}/seed{run.seed}")


def _report(runs: List[TrainedRun]) -> None:
    for run in runs:
        click.echo(f"{run.method.value} seed {run.seed}: {run.snapshot}")


# ----------------------------
# 📌 TRAIN INVERSE DYNAMICS
# ----------------------------
@click.command("train-invdyn")
@pair_option
@method_option
@click.pass_context
def train_invdyn(ctx, pair, method):
    """Train both inverse dynamics models (and the target forward model for dcc)."""
    config = resolve_config(ctx, pair=pair, method=method)
    paths = run_paths(config)
    datasets = load_datasets(config, paths)
    dynamics = train_dynamics(config, paths, datasets, config.method.needs_forward_model)
    for domain in ("source", "target"):
        click.echo(f"inverse dynamics ({domain}): {paths.invdyn(config.pair, domain)}")
    if dynamics.forward_target is not None:
        click.echo(f"forward dynamics (target): {paths.forward(config.pair)}")


# ----------------------------
# 📌 TRAIN MAPPINGS
# ----------------------------
@click.command("train-maps")
@pair_option
@method_option
@seed_option
@seeds_option
@click.pass_context
def train_maps(ctx, pair, method, seed, seeds):
    """Train mapping functions on top of existing dynamics models."""
    config = resolve_config(ctx, pair=pair, method=method, seeds=_seed_list(seed, seeds))
    paths = run_paths(config)
    datasets = load_datasets(config, paths)
    dynamics = load_dynamics(config, paths, config.method.needs_forward_model)
    method = Method(config.method)
    run_seeds = config.seeds
    runs = run_scheduler.run_sync(
        [lambda s=s: train_method(config, paths, datasets, dynamics, method, s) for s in run_seeds],
        [f"{method.value} seed {s}" for s in run_seeds],
    )
    with session_scope(config.output_root) as db:
        record_runs(db, config, runs)
    _report(runs)


# ----------------------------
# 📌 TRAIN (dynamics + mappings)
# ----------------------------
@click.command("train")
@pair_option
@method_option
@seed_option
@seeds_option
@click.pass_context
def train(ctx, pair, method, seed, seeds):
    """Train dynamics models if needed, then the mappings of one method."""
    config = resolve_config(ctx, pair=pair, method=method, seeds=_seed_list(seed, seeds))
    paths = run_paths(config)
    runs = run_training_pipeline(config, paths, [config.method], config.seeds)
    with session_scope(config.output_root) as db:
        record_runs(db, config, runs)
    _report(runs)
