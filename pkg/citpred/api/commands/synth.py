"""`citpred synth`: seeded synthetic highway scenes."""
import logging
from pathlib import Path
from typing import Optional

import typer

from citpred.api.commands.common import CACHE_FILE, TRACKS_FILE, ConfigOption, LogLevelOption, SeedOption, setup
from citpred.crud import write_instances
from citpred.data.instances import ExtractionSummary, extract_instances
from citpred.data.synthetic import generate_synthetic
from citpred.data.tracks import write_tracks
from citpred.database import open_cache

logger = logging.getLogger(__name__)


def run_synth(
    out: Path = typer.Option(..., "--out", "-o", help="Output data directory."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Writes tracks.csv and the matching instance cache."""
    cfg = setup(config, log_level, seed=seed)
    tracks = generate_synthetic(cfg.synthetic, seed=cfg.seed)
    write_tracks(tracks, Path(out) / TRACKS_FILE)
    summary = ExtractionSummary()
    instances = extract_instances(tracks, cfg.grid, cfg.t_stride, cfg.t_obs, cfg.t_pred, summary=summary)
    with open_cache(Path(out) / CACHE_FILE, create=True) as db:
        write_instances(db, instances, cfg.grid, cfg.t_obs, cfg.t_pred, source=f"synthetic:seed={cfg.seed}")
    logger.info(f"Synthetic extraction: {summary}")
    typer.echo(f"{len(tracks)} tracks, {len(instances)} instances -> {out}")
