import json
import sys
from functools import wraps
from pathlib import Path
from typing import NoReturn

import click

from dedem import Operation
from dedem.errors import DedemError
from dedem.fracture.sweeps import SweepKind
from dedem.log import configure_logging
from dedem.runner import Command, run


def parse_grid(ctx, param, value):
    if value is None:
        return None
    try:
        nx, ny = (int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter("expected NX,NY, e.g. 80,100") from None
    return nx, ny


def parse_values(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter("expected comma-separated numbers, e.g. 0.1,0.3,0.5") from None


def report_error(exception: Exception, status: int) -> NoReturn:
    module = getattr(exception, "module", "dedem")
    line = {
        "error": f"{module}: {exception}",
        "module": module,
        "type": type(exception).__name__,
    }
    click.echo(json.dumps(line), err=True)
    sys.exit(status)


def common_options(func):
    options = [
        click.option("--scenario", type=click.Path(exists=True, path_type=Path)),
        click.option("--out", type=click.Path(path_type=Path), default=Path("out")),
        click.option("--seed", type=int),
        click.option("--epochs", type=click.IntRange(min=0)),
        click.option("--grid", callback=parse_grid, metavar="NX,NY"),
        click.option("--deterministic", is_flag=True),
        click.option("--warm-start", type=click.Path(exists=True, path_type=Path)),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def execute(verb: Operation, **kwargs):
    kwargs["deterministic"] = kwargs.get("deterministic") or None
    try:
        result = run(Command(verb=verb, **kwargs))
    except DedemError as exception:
        report_error(exception, 1)
    except Exception as exception:
        report_error(exception, 2)
    click.echo(json.dumps(result.summary, default=str))


def verb_command(verb: Operation, *options):
    def decorator(func):
        @cli.command(name=verb.value)
        @common_options
        @wraps(func)
        def command(**kwargs):
            execute(verb, **kwargs)

        for option in reversed(options):
            command = option(command)
        return command

    return decorator


@click.group()
def cli():
    configure_logging()


@verb_command(
    Operation.SOLVE,
    click.option("--reference", type=click.Path(exists=True, path_type=Path)),
)
def solve():
    """Train on a scenario; write loss history, snapshot and field CSV."""


@verb_command(
    Operation.PROPAGATE,
    click.option("--steps", type=click.IntRange(min=0), default=3, show_default=True),
    click.option("--delta-a", type=float, default=0.15, show_default=True),
    click.option("--cold-start", is_flag=True),
)
def propagate():
    """Grow the active crack tip step by step."""


@verb_command(
    Operation.SIF,
    click.option("--sweep", type=click.Choice([kind.value for kind in SweepKind])),
    click.option("--values", callback=parse_values, metavar="V1,V2,..."),
)
def sif():
    """Train, then extract K1 and K2 at every crack tip.

    With --sweep, train once per value of a/b (crack-size) or E1/E2
    (modulus-ratio) and report the SIFs of the single crack.
    """


@verb_command(
    Operation.CHECK_GRAD,
    click.option("--samples", type=click.IntRange(min=1), default=20, show_default=True),
)
def check_grad():
    """Compare the recorded energy gradient with finite differences."""


@verb_command(Operation.VALIDATE)
def validate():
    """Lint one scenario, or every shipped preset."""


@verb_command(Operation.EXPORT_GRID)
def export_grid():
    """Dump the quadrature nodes, weights and side labels."""


if __name__ == "__main__":
    cli()
