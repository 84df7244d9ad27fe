"""`citpred eval`: per-horizon RMSE / NLL on the test split."""
from pathlib import Path
from typing import Optional

import typer

from citpred.api.commands.common import (
    ConfigOption,
    LogLevelOption,
    PlanRate,
    Split,
    default_checkpoint,
    select_split,
    setup,
    write_text,
)
from citpred.checkpoint import load_checkpoint
from citpred.evaluation import compare_plan_rates, evaluate, format_table, report_frame


def run_eval(
    data: Path = typer.Option(..., "--data", "-d"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint"),
    plan_rate: PlanRate = typer.Option(PlanRate.one, "--plan-rate", help="Ego plan rate fed to the model."),
    split: Split = typer.Option(Split.test, "--split"),
    report: Optional[Path] = typer.Option(None, "--report", help="Report JSON path."),
    config: Optional[Path] = ConfigOption,
    log_level: Optional[str] = LogLevelOption,
):
    cfg = setup(config, log_level)
    model, _ = load_checkpoint(default_checkpoint(data, checkpoint), cfg)
    instances = select_split(data, cfg, split)
    if plan_rate is PlanRate.both:
        result = compare_plan_rates(model, instances, cfg)
        table = format_table(report_frame({"5hz": result.full_rate, "1hz": result.coarse}))
    else:
        result = evaluate(model, instances, cfg, plan_rate=plan_rate.hz)
        table = format_table(report_frame({plan_rate.value: result}))
    if report is not None:
        write_text(report, result.model_dump_json(indent=2))
    typer.echo(table)
