import logging

import click

from api.dependencies import pair_option, resolve_config, run_paths, seed_option
from core.errors import UsageError
from core.pipeline import collect_datasets

logger = logging.getLogger(__name__)


# ----------------------------
# 📌 COLLECT
# ----------------------------
@click.command("collect")
@pair_option
@click.option("--n", "n_traj", type=int, default=None, help="Trajectories per domain.")
@seed_option
@click.option("--horizon", type=int, default=None, help="Steps per trajectory.")
@click.pass_context
def collect(ctx, pair, n_traj, seed, horizon):
    """Collect unpaired random-policy datasets for both domains of a pair."""
    config = resolve_config(ctx, pair=pair, n_traj=n_traj, seed=seed, horizon=horizon)
    paths = run_paths(config)
    try:
        source, target = collect_datasets(config, paths)
    except OSError as e:
        raise UsageError(f"cannot write datasets under {paths.data_dir(config.pair)}: {e}")
    for dataset in (source, target):
        click.echo(f"{paths.dataset(config.pair, dataset.domain)}: {len(dataset)} transitions")
