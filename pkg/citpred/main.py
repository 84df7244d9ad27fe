import logging
import logging.config
import sys
from typing import List, Optional, Sequence

# --- Basic Logging Configuration --- #
# Configured on import so every module logger inherits the console handler.
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        },
    },
    "handlers": {
        "console": {
            "level": "DEBUG",  # loggers decide; see LOG_LEVEL
            "formatter": "standard",
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stdout",
        },
    },
    "loggers": {
        "": {  # Root logger
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
        "sqlalchemy.engine": {
            "level": "WARNING",  # INFO echoes every SQL statement
            "handlers": ["console"],
            "propagate": False,
        },
        "citpred": {  # Catch-all for the package modules
            "level": "INFO",
            "handlers": ["console"],
            "propagate": False,
        },
    },
}

logging.config.dictConfig(LOGGING_CONFIG)
# ----------------------------------- #

import click
import typer

from citpred.api.commands import ablate, ingest, predict, synth, train, whatif
from citpred.api.commands import eval as eval_cmd
from citpred.core.errors import CitPredError

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="citpred",
    help="Conditional multi-agent trajectory forecasting: data, training, evaluation and what-if queries.",
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)

# --- Commands --- #

app.command("ingest")(ingest.run_ingest)
app.command("synth")(synth.run_synth)
app.command("train")(train.run_train)
app.command("eval")(eval_cmd.run_eval)
app.command("predict")(predict.run_predict)
app.command("whatif")(whatif.run_whatif)
app.command("ablate")(ablate.run_ablate)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one subcommand and returns its exit status; never raises."""
    args: List[str] = list(sys.argv[1:] if argv is None else argv)
    command = typer.main.get_command(app)
    try:
        result = command.main(args=args, prog_name="citpred", standalone_mode=False)
    except click.exceptions.Abort:
        logger.error("Aborted.")
        return 1
    except click.ClickException as e:
        # Usage errors: unknown flags, bad option values
        e.show()
        return e.exit_code
    except CitPredError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run_command())
