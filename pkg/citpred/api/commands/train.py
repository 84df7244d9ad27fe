"""`citpred train`"""
from pathlib import Path
from typing import Optional

import typer

from citpred.api.commands.common import ConfigOption, LogLevelOption, SeedOption, default_checkpoint, load_split, setup
from citpred.training import train


def run_train(
    data: Path = typer.Option(..., "--data", "-d", help="Data directory holding instances.db."),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Output checkpoint (default: DATA/model.ckpt)."),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Overrides EPOCHS."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Trains on the train split, selecting parameters on the validation split."""
    cfg = setup(config, log_level, seed=seed, epochs=epochs)
    train_set, val_set, _ = load_split(data, cfg)
    result = train(train_set, val_set, cfg, checkpoint_path=default_checkpoint(data, checkpoint))
    typer.echo(f"best epoch {result.meta.epoch} (val loss {result.meta.val_loss}) -> {result.checkpoint}")
