"""`citpred ingest`: NGSIM / HighD / synthetic-native tracks into an instance cache."""
import logging
from pathlib import Path
from typing import Optional

import typer

from citpred.api.commands.common import CACHE_FILE, ConfigOption, LogLevelOption, setup
from citpred.crud import write_instances
from citpred.data.instances import ExtractionSummary, extract_instances
from citpred.data.tracks import LAYOUTS, load_tracks, resample_tracks
from citpred.database import open_cache

logger = logging.getLogger(__name__)


def run_ingest(
    input: Path = typer.Option(..., "--input", "-i", help="Track CSV file."),
    format: str = typer.Option(..., "--format", "-f", help=f"One of {', '.join(sorted(LAYOUTS))}."),
    out: Path = typer.Option(..., "--out", "-o", help="Output data directory."),
    config: Optional[Path] = ConfigOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Extracts ego-centric instances from a track file and caches them."""
    cfg = setup(config, log_level)
    tracks = resample_tracks(load_tracks(input, format), cfg.rate_hz)
    summary = ExtractionSummary()
    instances = extract_instances(tracks, cfg.grid, cfg.t_stride, cfg.t_obs, cfg.t_pred, summary=summary)
    with open_cache(Path(out) / CACHE_FILE, create=True) as db:
        write_instances(db, instances, cfg.grid, cfg.t_obs, cfg.t_pred, source=f"{format}:{input}")
    logger.info(f"Ingested {input}: {summary}")
    typer.echo(f"{len(instances)} instances -> {Path(out) / CACHE_FILE}")
