"""Training on the true-maneuver objective, plus finite-difference gradient checks."""
import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from citpred.checkpoint import CheckpointMeta, save_checkpoint
from citpred.core.config import RunConfig
from citpred.core.errors import TrainingDivergedError
from citpred.nn.batching import SceneBatch, iter_batches
from citpred.nn.decoder import PredictionSet, trajectory_nll
from citpred.nn.predictor import IntentionPredictor, build_model
from citpred.schemas import Instance

logger = logging.getLogger(__name__)

TRAIN_PLAN_RATE = 5  # training conditions on the ego's full-rate future

# --- Objective --- #

def target_losses(pred: PredictionSet, futures: torch.Tensor, maneuvers: torch.Tensor) -> torch.Tensor:
    """Per target: summed-over-frames NLL under the true maneuver minus log P(true maneuver)."""
    if maneuvers.shape != (len(pred),):
        raise ValueError(f"need one true maneuver per target ({len(pred)}), got shape {tuple(maneuvers.shape)}")
    nll = trajectory_nll(pred, futures).sum(dim=-1)  # [N, 6]
    rows = torch.arange(len(pred))
    return nll[rows, maneuvers] - pred.log_p_joint[rows, maneuvers]


def loss(pred: PredictionSet, futures: torch.Tensor, maneuvers: torch.Tensor) -> torch.Tensor:
    """Sum over targets of the true-maneuver negative log-likelihood."""
    return target_losses(pred, futures, maneuvers).sum()


def batch_loss(model: IntentionPredictor, batch: SceneBatch) -> torch.Tensor:
    """Per-target mean, the quantity each update step minimises."""
    return target_losses(model(batch), batch.target_future, batch.maneuver).mean()

# --- Training loop --- #

@dataclass
class TrainResult:
    model: IntentionPredictor
    meta: CheckpointMeta
    checkpoint: Optional[Path] = None


def _mean_loss(model: IntentionPredictor, batches: Sequence[SceneBatch]) -> Optional[float]:
    if not batches:
        return None
    with torch.no_grad():
        total = sum(float(batch_loss(model, b)) * len(b) for b in batches)
    return total / sum(len(b) for b in batches)


def train(
    train_set: Sequence[Instance],
    val_set: Sequence[Instance],
    cfg: RunConfig,
    checkpoint_path: Optional[Union[str, Path]] = None,
    model: Optional[IntentionPredictor] = None,
) -> TrainResult:
    """Adam over the per-target mean loss; keeps the parameters with the best validation loss.

    Batch order in epoch e comes from a generator seeded with (seed, e). Without
    a validation set the final parameters are kept.
    """
    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    batch_kwargs = dict(plan_rate=TRAIN_PLAN_RATE, t_pred=cfg.t_pred, dtype=dtype)
    if not any(inst.targets for inst in train_set):
        raise ValueError("training set has no instance with targets")

    model = model if model is not None else build_model(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    val_batches = iter_batches(val_set, cfg.batch_size, **batch_kwargs)

    meta = CheckpointMeta(
        epoch=0,
        val_loss=_mean_loss(model, val_batches),
        initial_train_loss=_mean_loss(model, iter_batches(train_set, cfg.batch_size, **batch_kwargs)),
    )
    best_state = copy.deepcopy(model.state_dict())
    best_val = meta.val_loss if meta.val_loss is not None else math.inf

    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        batches = iter_batches(train_set, cfg.batch_size, rng=rng, **batch_kwargs)
        model.train()
        total, count = 0.0, 0
        for i, batch in enumerate(tqdm(batches, desc=f"epoch {epoch}", disable=not cfg.progress, leave=False)):
            optimizer.zero_grad()
            value = batch_loss(model, batch)
            if not torch.isfinite(value):
                raise TrainingDivergedError(
                    f"Non-finite loss ({float(value)}) at epoch {epoch}, batch {i} "
                    f"(instances {batch.instance_ids[:1]}..., lr={cfg.learning_rate})"
                )
            value.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            total += float(value) * len(batch)
            count += len(batch)
        model.eval()

        train_loss = total / count
        val_loss = _mean_loss(model, val_batches)
        meta.train_losses.append(train_loss)
        improved = val_loss is None or val_loss < best_val
        if val_loss is not None:
            meta.val_losses.append(val_loss)
        if improved:
            best_val = val_loss if val_loss is not None else best_val
            best_state = copy.deepcopy(model.state_dict())
            meta.epoch, meta.val_loss = epoch, val_loss
        logger.info(
            f"Epoch {epoch}/{cfg.epochs}: train loss {train_loss:.4f}"
            + (f", val loss {val_loss:.4f}" if val_loss is not None else "")
            + (" (best)" if improved else "")
        )

    model.load_state_dict(best_state)
    model.eval()
    saved = save_checkpoint(checkpoint_path, model, meta) if checkpoint_path is not None else None
    return TrainResult(model=model, meta=meta, checkpoint=saved)

# --- Gradient verification --- #

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_parameter: Dict[str, float] = field(default_factory=dict)

    def worst(self) -> str:
        return max(self.per_parameter, key=self.per_parameter.get) if self.per_parameter else ""


def grad_check(
    model: nn.Module,
    batch: Optional[SceneBatch] = None,
    eps: float = 1e-5,
    closure: Optional[Callable[[nn.Module], torch.Tensor]] = None,
    grad_transform: Optional[Callable[[torch.Tensor], torch.Tensor]] = None,
    seed: int = 0,
    atol: float = 1e-7,
) -> GradCheckReport:
    """Directional-derivative check of every named parameter in double precision.

    For each parameter a seeded random unit direction u is drawn; the analytic
    value <grad, u> is compared with (f(p + eps u) - f(p - eps u)) / (2 eps).
    `closure` maps the (double) model to a scalar; by default it is the summed
    training loss on `batch`. `grad_transform` alters analytic gradients before
    comparison.
    """
    model = copy.deepcopy(model).double()
    if closure is None:
        if batch is None:
            raise ValueError("grad_check needs a batch or a closure")
        batch = copy.copy(batch)
        for name in ("target_hist", "target_future", "ego_plan", "nbr_hist"):
            setattr(batch, name, getattr(batch, name).double())

        def closure(m: nn.Module) -> torch.Tensor:
            return loss(m(batch), batch.target_future, batch.maneuver)

    model.zero_grad()
    closure(model).backward()
    gen = torch.Generator().manual_seed(seed)
    report = GradCheckReport(max_rel_error=0.0)
    for name, param in model.named_parameters():
        if param.grad is None:
            grad = torch.zeros_like(param)
        else:
            grad = param.grad.detach().clone()
        if grad_transform is not None:
            grad = grad_transform(grad)
        direction = torch.randn(param.shape, generator=gen, dtype=torch.float64)
        direction /= direction.norm()
        analytic = float((grad * direction).sum())
        with torch.no_grad():
            original = param.detach().clone()
            param.copy_(original + eps * direction)
            f_plus = float(closure(model))
            param.copy_(original - eps * direction)
            f_minus = float(closure(model))
            param.copy_(original)
        numeric = (f_plus - f_minus) / (2.0 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), atol)
        report.per_parameter[name] = rel
        report.max_rel_error = max(report.max_rel_error, rel)
    logger.info(f"Gradient check: max relative error {report.max_rel_error:.3e} ({report.worst()})")
    return report
