"""`citpred ablate`: trains and evaluates the ablation variants on one dataset."""
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import TypeAdapter

from citpred.api.commands.common import ConfigOption, LogLevelOption, SeedOption, load_split, setup, write_text
from citpred.evaluation import VARIANTS, ablation_frame, ablation_suite, format_table
from citpred.schemas import AblationRow


def run_ablate(
    data: Path = typer.Option(..., "--data", "-d"),
    out: Path = typer.Option(..., "--out", "-o", help="Output stem; writes OUT.json and OUT.txt."),
    variant: Optional[List[str]] = typer.Option(None, "--variant", help="Repeatable; default: all variants."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    log_level: Optional[str] = LogLevelOption,
):
    cfg = setup(config, log_level, seed=seed)
    train_set, val_set, test_set = load_split(data, cfg)
    rows = ablation_suite(cfg, variant or list(VARIANTS), train_set, val_set, test_set)
    table = format_table(ablation_frame(rows))
    out = Path(out)
    write_text(out.with_suffix(".json"), TypeAdapter(List[AblationRow]).dump_json(rows, indent=2).decode("utf-8"))
    write_text(out.with_suffix(".txt"), table + "\n")
    typer.echo(table)
