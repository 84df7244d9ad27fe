"""`citpred whatif`: conditional predictions for several candidate ego plans."""
import json
from pathlib import Path
from typing import Optional

import typer

from citpred.api.commands.common import (
    CACHE_FILE,
    ConfigOption,
    LogLevelOption,
    default_checkpoint,
    read_model_file,
    setup,
    write_text,
)
from citpred.checkpoint import load_checkpoint
from citpred.core.errors import MissingFileError
from citpred.crud import get_instance
from citpred.database import open_cache
from citpred.inference import whatif
from citpred.schemas import CandidatePlans


def run_whatif(
    data: Path = typer.Option(..., "--data", "-d"),
    instance: str = typer.Option(..., "--instance", help="Instance id, e.g. 12:340."),
    candidates: Path = typer.Option(..., "--candidates", help='JSON file {"rate": 1|5, "plans": [...]}.'),
    out: Path = typer.Option(..., "--out", "-o"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint"),
    config: Optional[Path] = ConfigOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Writes a JSON array with one list of prediction records per candidate, in file order."""
    cfg = setup(config, log_level)
    plans = read_model_file(candidates, CandidatePlans).to_ego_plans()
    with open_cache(Path(data) / CACHE_FILE) as db:
        scene = get_instance(db, instance)
    if scene is None:
        raise MissingFileError(f"Instance {instance} is not in {Path(data) / CACHE_FILE}")
    model, _ = load_checkpoint(default_checkpoint(data, checkpoint), cfg)
    results = whatif(model, scene, plans, workers=cfg.workers)
    payload = [[record.model_dump(mode="json") for record in pred.to_records()] for pred in results]
    write_text(out, json.dumps(payload, indent=2))
    typer.echo(f"{len(results)} candidate(s) -> {out}")
