from pathlib import Path

import click

from api.collect import collect
from api.dependencies import LOG_LEVELS, CliContext, PipelineGroup, configure_logging
from api.evaluation import ablate, evaluate, sweep
from api.reports import report
from api.training import train, train_invdyn, train_maps
from core.config import settings


@click.group(cls=PipelineGroup)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="key = value run configuration file.")
@click.option("--output-root", type=click.Path(path_type=Path), default=None,
              help="Root of data/, models/ and reports/ (default: ECC_OUTPUT_ROOT).")
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None)
@click.pass_context
def cli(ctx, config_path, output_root, log_level):
    """Effect cycle-consistency mapping learning between two control domains."""
    configure_logging(log_level or settings.LOG_LEVEL)
    ctx.obj = CliContext(config_path=config_path, output_root=output_root)


cli.add_command(collect)
cli.add_command(train_invdyn)
cli.add_command(train_maps)
cli.add_command(train)
cli.add_command(evaluate)
cli.add_command(sweep)
cli.add_command(ablate)
cli.add_command(report)


if __name__ == "__main__":
    cli()
