"""Dependencies shared by the command modules: option declarations, run
configuration resolution, registry-backed snapshot lookup and the click
classes that keep every failure on the 0/1/2/3 exit-code contract."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import click
from dotenv import dotenv_values
from pydantic import ValidationError
from sqlmodel import Session, select

from core.config import settings
from core.envs import PAIR_NAMES, DomainPair, make_domain_pair
from core.errors import EXIT_USAGE, ConfigurationError, MissingInputError
from core.mappings import MappingSet
from core.pipeline import RunPaths, load_trained
from models.runs import TrainingRuns
from schemas.config import Method, RunConfig

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
METHOD_CHOICES = [m.value for m in Method]


class PipelineGroup(click.Group):
    """Command group whose argument errors exit with the usage code."""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise


@dataclass
class CliContext:
    config_path: Optional[Path] = None
    output_root: Optional[Path] = None


def configure_logging(level: str) -> None:
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level.upper())


# ----------------------------
# 📌 OPTIONS
# ----------------------------
pair_option = click.option("--pair", type=click.Choice(PAIR_NAMES), default=None, help="Domain pair.")
method_option = click.option("--method", type=click.Choice(METHOD_CHOICES), default=None, help="Mapping method.")
methods_option = click.option("--methods", default=None, help="Comma-separated methods.")
seed_option = click.option("--seed", type=int, default=None, help="Seed of every random stream.")
seeds_option = click.option("--seeds", default=None, help="Comma-separated seeds.")
episodes_option = click.option("--episodes", type=int, default=None, help="Evaluation episodes per seed.")
mode_option = click.option("--mode", type=click.Choice(["mean", "sample"]), default=None, help="Use H's mean or a sample.")


def resolve_config(ctx: click.Context, **overrides) -> RunConfig:
    """Config file values, overridden by flags; the output root comes from the global option or the environment."""
    cli_ctx: CliContext = ctx.find_object(CliContext) or CliContext()
    values = {}
    if cli_ctx.config_path is not None:
        path = Path(cli_ctx.config_path)
        if not path.exists():
            raise MissingInputError(f"config file {path} does not exist")
        values.update({k.strip(): v for k, v in dotenv_values(path).items() if v is not None})
    values.update({k: v for k, v in overrides.items() if v is not None})
    if cli_ctx.output_root is not None:
        values["output_root"] = cli_ctx.output_root
    elif "OUTPUT_ROOT" in settings.model_fields_set or "output_root" not in values:
        values["output_root"] = settings.OUTPUT_ROOT
    try:
        config = RunConfig.model_validate(values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigurationError(f"invalid configuration: {problems}")
    return validate_against_pair(config)


def validate_against_pair(config: RunConfig) -> RunConfig:
    pair = make_domain_pair(config.pair, config.seed)
    horizon = min(pair.source.spec.horizon, pair.target.spec.horizon)
    if config.horizon > horizon:
        raise ConfigurationError(f"horizon {config.horizon} exceeds the {config.pair} episode length {horizon}")
    return config


def run_paths(config: RunConfig) -> RunPaths:
    return RunPaths(Path(config.output_root))


# ----------------------------
# 📌 REGISTRY LOOKUP
# ----------------------------
def snapshot_loader(db: Session, paths: RunPaths, pair: DomainPair, hidden: int) -> Callable[[str, int], Optional[MappingSet]]:
    """loader(method, seed): registry entry first, path convention second."""

    def loader(method: str, seed: int) -> Optional[MappingSet]:
        run = db.exec(
            select(TrainingRuns).filter(
                TrainingRuns.Pair == pair.name,
                TrainingRuns.Method == method,
                TrainingRuns.Seed == seed,
            )
        ).first()
        snapshot = Path(run.SnapshotPath) if run and Path(run.SnapshotPath).exists() else None
        return load_trained(paths, pair, method, seed, hidden, snapshot)

    return loader
