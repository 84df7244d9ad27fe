"""Helpers shared by the subcommands: config loading, data directories and output files."""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Tuple

import typer
from pydantic import BaseModel, ValidationError

from citpred.core.config import RunConfig, load_config
from citpred.core.errors import DataFormatError, DimensionMismatchError, MissingFileError
from citpred.crud import cache_grid, read_cache_meta, read_instances
from citpred.data.instances import split_dataset
from citpred.database import open_cache
from citpred.schemas import Instance

logger = logging.getLogger(__name__)

CACHE_FILE = "instances.db"
TRACKS_FILE = "tracks.csv"
CHECKPOINT_FILE = "model.ckpt"

# --- Shared options --- #

ConfigOption = typer.Option(None, "--config", "-c", help="KEY=value config file (default: $CITPRED_CONFIG).")
LogLevelOption = typer.Option(None, "--log-level", help="Overrides LOG_LEVEL.")
SeedOption = typer.Option(None, "--seed", help="Overrides SEED.")


class PlanRate(str, Enum):
    one = "1hz"
    five = "5hz"
    both = "both"

    @property
    def hz(self) -> Optional[int]:
        return {"1hz": 1, "5hz": 5}.get(self.value)


class Split(str, Enum):
    train = "train"
    val = "val"
    test = "test"
    all = "all"


def setup(config: Optional[Path], log_level: Optional[str] = None, **overrides: Any) -> RunConfig:
    """Loads the run configuration and applies its log level to the package logger."""
    cfg = load_config(config, log_level=log_level, **overrides)
    logging.getLogger("citpred").setLevel(cfg.log_level.upper())
    logger.debug(f"Configuration: {cfg.model_dump(mode='json')}")
    return cfg

# --- Data directories --- #

def load_cached(data: Path, cfg: RunConfig) -> List[Instance]:
    """Reads every cached instance after checking the cache matches the configured windows and grid."""
    path = Path(data) / CACHE_FILE
    with open_cache(path) as db:
        meta = read_cache_meta(db)
        if (meta.t_obs, meta.t_pred) != (cfg.t_obs, cfg.t_pred):
            raise DimensionMismatchError(
                f"Cache {path} holds T_OBS={meta.t_obs}, T_PRED={meta.t_pred}; "
                f"config expects T_OBS={cfg.t_obs}, T_PRED={cfg.t_pred}"
            )
        grid = cache_grid(db)
        if grid != cfg.grid:
            raise DimensionMismatchError(
                f"Cache {path} was built on grid {grid.model_dump()}; config expects {cfg.grid.model_dump()}"
            )
        instances = read_instances(db)
    logger.info(f"Loaded {len(instances)} instances from {path}")
    return instances


def load_split(data: Path, cfg: RunConfig) -> Tuple[List[Instance], List[Instance], List[Instance]]:
    return split_dataset(load_cached(data, cfg), cfg.split)


def select_split(data: Path, cfg: RunConfig, split: Split) -> List[Instance]:
    if split is Split.all:
        return load_cached(data, cfg)
    train, val, test = load_split(data, cfg)
    return {"train": train, "val": val, "test": test}[split.value]


def default_checkpoint(data: Path, checkpoint: Optional[Path]) -> Path:
    return checkpoint if checkpoint is not None else Path(data) / CHECKPOINT_FILE

# --- Files --- #

def read_model_file(path: Path, model: type) -> BaseModel:
    """Validates a JSON file against a pydantic model."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"File not found: {path}")
    try:
        return model.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataFormatError(f"Invalid {model.__name__} file {path}: {e}") from e


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path
