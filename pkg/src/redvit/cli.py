import logging
import sys
from typing import Optional, Sequence

import click
import typer
from rich.console import Console
from rich.logging import RichHandler

from redvit.commands.attack import attack
from redvit.commands.evaluate import evaluate
from redvit.commands.gendata import gen_data
from redvit.commands.gradcheck import gradcheck
from redvit.commands.probe import probe
from redvit.commands.robustify import robustify
from redvit.commands.sweep import sweep
from redvit.commands.trainzoo import train_zoo
from redvit.config.settings import Settings
from redvit.errors import RedVitError
from redvit.utils import output_error

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

app = typer.Typer(no_args_is_help=True, help="Desk-scale lab for redundancy-exploiting transfer attacks on ViTs.")
app.command("gen-data")(gen_data)
app.command("train-zoo")(train_zoo)
app.command("attack")(attack)
app.command("evaluate")(evaluate)
app.command("probe")(probe)
app.command("robustify")(robustify)
app.command("gradcheck")(gradcheck)
app.command("sweep")(sweep)


def configure_logging(level: Optional[str] = None):
    """Route the redvit loggers to stderr through rich; stdout carries results only."""
    logger = logging.getLogger("redvit")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel((level or Settings().log_level).upper())


@app.callback()
def root(
    log_level: Optional[str] = typer.Option(
        None, "--log-level", help="Log level for progress messages on stderr (default: REDVIT_LOG_LEVEL or WARNING)"
    ),
):
    configure_logging(log_level)


def cli_dispatch(argv: Sequence[str]) -> int:
    """
    Run one CLI invocation and map the outcome to an exit code:
    0 on success, 1 on usage errors, 2 on runtime errors.
    """
    try:
        result = app(args=list(argv), prog_name="redvit", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        typer.echo("Aborted!", err=True)
        return EXIT_USAGE
    except RedVitError as e:
        typer.echo(f"Error: {e}", err=True)
        return EXIT_RUNTIME
    except Exception as e:
        output_error(Settings().output, e, "redvit", "run")
        return EXIT_RUNTIME
    return result if isinstance(result, int) else EXIT_OK


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
