"""`citpred predict`: JSON-lines predictions, one record per target per maneuver."""
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
from citpred.evaluation import predict_all


def run_predict(
    data: Path = typer.Option(..., "--data", "-d"),
    out: Path = typer.Option(..., "--out", "-o", help="Output .jsonl file."),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint"),
    plan_rate: PlanRate = typer.Option(PlanRate.one, "--plan-rate"),
    split: Split = typer.Option(Split.test, "--split"),
    config: Optional[Path] = ConfigOption,
    log_level: Optional[str] = LogLevelOption,
):
    cfg = setup(config, log_level)
    if plan_rate is PlanRate.both:
        raise typer.BadParameter("predict needs a single plan rate", param_hint="--plan-rate")
    model, _ = load_checkpoint(default_checkpoint(data, checkpoint), cfg)
    instances = select_split(data, cfg, split)
    preds, _ = predict_all(model, instances, plan_rate=plan_rate.hz, batch_size=cfg.batch_size, workers=cfg.workers)
    records = preds.to_records()
    write_text(out, "".join(record.model_dump_json() + "\n" for record in records))
    typer.echo(f"{len(records)} records ({len(preds)} targets) -> {out}")
