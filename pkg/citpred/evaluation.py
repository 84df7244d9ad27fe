"""Per-horizon RMSE and NLL, the coarse-plan protocol and the ablation harness."""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from citpred.checkpoint import load_checkpoint
from citpred.core.config import RunConfig
from citpred.data.instances import WORKING_RATE
from citpred.nn.batching import SceneBatch, iter_batches
from citpred.nn.decoder import PredictionSet, trajectory_nll
from citpred.nn.predictor import IntentionPredictor
from citpred.schemas import AblationRow, HorizonReport, Instance, PlanRateComparison
from citpred.training import train

logger = logging.getLogger(__name__)

HORIZONS_S = (1, 2, 3, 4, 5)
NLL_MODES = ("mixture", "best-maneuver")

# Toggle sets of the ablation rows, in table order.
VARIANTS: Dict[str, Dict[str, object]] = {
    "Variant1": dict(info_c=False, info_f=False, icd="off", iie=False, fusion=False),
    "Variant2": dict(info_c=True, info_f=False, icd="off", iie=False, fusion=True),
    "Variant3": dict(info_c=False, info_f=True, icd="off", iie=False, fusion=True),
    "Variant4": dict(info_c=True, info_f=True, icd="self", iie=False, fusion=True),
    "Variant5": dict(info_c=True, info_f=True, icd="cross", iie=False, fusion=True),
    "full": dict(info_c=True, info_f=True, icd="cross", iie=True, fusion=True),
}

Predictions = Union[PredictionSet, Sequence[PredictionSet]]

# --- Metrics --- #

def horizon_frames(t_pred: int, rate: int = WORKING_RATE) -> np.ndarray:
    """0-based frame index of each 1 s horizon, clipped to the prediction length."""
    return np.minimum(np.asarray(HORIZONS_S) * rate, t_pred) - 1


def _collect(preds: Predictions, futures: Union[torch.Tensor, Sequence[torch.Tensor]]) -> Tuple[PredictionSet, torch.Tensor]:
    if not isinstance(preds, PredictionSet):
        preds = PredictionSet.concat(list(preds)) if preds else None
        futures = torch.cat(list(futures)) if len(futures) else None
    if preds is None or len(preds) == 0:
        raise ValueError("cannot compute metrics on an empty evaluation set")
    return preds, torch.as_tensor(futures, dtype=preds.trajectories.mu.dtype)


def _with_average(values: Sequence[float]) -> List[float]:
    values = [float(v) for v in values]
    return values + [float(np.mean(values))]


def rmse_horizons(preds: Predictions, futures) -> List[float]:
    """RMSE of the most probable maneuver's mean at 1..5 s, followed by their average."""
    preds, futures = _collect(preds, futures)
    frames = torch.as_tensor(horizon_frames(futures.shape[1]))
    best = preds.best_maneuver()
    mu = preds.trajectories.mu.detach()[torch.arange(len(preds)), best]  # [N, T, 2]
    sq = ((mu[:, frames] - futures[:, frames]) ** 2).sum(dim=-1)  # [N, H]
    return _with_average(sq.mean(dim=0).sqrt().tolist())


def nll_horizons(preds: Predictions, futures, mode: str = "mixture") -> List[float]:
    """Mean NLL of the ground truth at 1..5 s, followed by their average.

    `mixture` scores each evaluated frame under the six-maneuver mixture;
    `best-maneuver` under the most probable maneuver's Gaussian alone.
    """
    if mode not in NLL_MODES:
        raise ValueError(f"unknown NLL mode {mode!r}; expected one of {NLL_MODES}")
    preds, futures = _collect(preds, futures)
    frames = torch.as_tensor(horizon_frames(futures.shape[1]))
    with torch.no_grad():
        nll = trajectory_nll(preds.detach(), futures)[:, :, frames]  # [N, 6, H]
        if mode == "mixture":
            per_target = -torch.logsumexp(preds.log_p_joint.detach().unsqueeze(-1) - nll, dim=1)
        else:
            best = preds.best_maneuver()
            per_target = nll[torch.arange(len(preds)), best]
    return _with_average(per_target.mean(dim=0).tolist())

# --- Running a checkpoint --- #

def predict_all(
    model: IntentionPredictor,
    instances: Sequence[Instance],
    plan_rate: int = WORKING_RATE,
    batch_size: int = 16,
    workers: int = 1,
) -> Tuple[PredictionSet, torch.Tensor]:
    """Predictions and target-relative ground truth for every target, in instance order."""
    batches = iter_batches(instances, batch_size, plan_rate=plan_rate, t_pred=model.cfg.t_pred, dtype=model.dtype)
    if not batches:
        raise ValueError("cannot evaluate an empty instance set")
    model.eval()

    def run(batch: SceneBatch) -> PredictionSet:
        # no_grad is thread-local
        with torch.no_grad():
            return model(batch).detach()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, batches))
    return PredictionSet.concat(parts), torch.cat([b.target_future for b in batches])


def _resolve(checkpoint: Union[str, Path, IntentionPredictor], cfg: Optional[RunConfig]) -> Tuple[IntentionPredictor, RunConfig]:
    if isinstance(checkpoint, IntentionPredictor):
        return checkpoint, cfg or checkpoint.cfg
    model, _ = load_checkpoint(checkpoint, cfg)
    return model, cfg or model.cfg


def evaluate(
    checkpoint: Union[str, Path, IntentionPredictor],
    test_set: Sequence[Instance],
    cfg: Optional[RunConfig] = None,
    plan_rate: Optional[int] = None,
) -> HorizonReport:
    """Both metrics for a checkpoint (or an in-memory model) with ego plans at `plan_rate` Hz."""
    model, cfg = _resolve(checkpoint, cfg)
    rate = plan_rate or cfg.plan_rate_hz
    preds, futures = predict_all(model, test_set, plan_rate=rate, batch_size=cfg.batch_size, workers=cfg.workers)
    frames = horizon_frames(futures.shape[1])
    rmse = rmse_horizons(preds, futures)
    nll = nll_horizons(preds, futures, mode=cfg.nll_mode)
    report = HorizonReport(
        rmse=rmse[:-1],
        rmse_avg=rmse[-1],
        nll=nll[:-1],
        nll_avg=nll[-1],
        horizons_s=[float(f + 1) / WORKING_RATE for f in frames],
        instance_count=len(set(preds.instance_ids)),
        target_count=len(preds),
        conventions={
            "units": "m",
            "log": "natural",
            "nll": "per-frame mean over targets",
            "nll_mode": cfg.nll_mode,
            "plan_rate_hz": rate,
        },
    )
    logger.info(f"Evaluated {report.target_count} targets at {rate} Hz plans: RMSE avg {report.rmse_avg:.3f} m, NLL avg {report.nll_avg:.3f}")
    return report


def compare_plan_rates(
    checkpoint: Union[str, Path, IntentionPredictor], test_set: Sequence[Instance], cfg: Optional[RunConfig] = None
) -> PlanRateComparison:
    """Full-rate versus 1 Hz ego plans; differences are coarse minus full-rate."""
    model, cfg = _resolve(checkpoint, cfg)
    full = evaluate(model, test_set, cfg, plan_rate=WORKING_RATE)
    coarse = evaluate(model, test_set, cfg, plan_rate=1)
    return PlanRateComparison(
        full_rate=full,
        coarse=coarse,
        rmse_diff=[c - f for c, f in zip(coarse.rmse + [coarse.rmse_avg], full.rmse + [full.rmse_avg])],
        nll_diff=[c - f for c, f in zip(coarse.nll + [coarse.nll_avg], full.nll + [full.nll_avg])],
    )

# --- Ablations --- #

def ablation_suite(
    cfg: RunConfig,
    variants: Union[Sequence[str], Dict[str, Dict[str, object]]],
    train_set: Sequence[Instance],
    val_set: Sequence[Instance],
    test_set: Sequence[Instance],
) -> List[AblationRow]:
    """Trains and evaluates each variant on the same data with the same seed."""
    if not isinstance(variants, dict):
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown variants {unknown}; expected names from {list(VARIANTS)}")
        variants = {name: VARIANTS[name] for name in variants}

    rows = []
    for name, toggles in variants.items():
        variant_cfg = cfg.with_overrides(**toggles)
        logger.info(f"Ablation {name}: {variant_cfg.toggles}")
        result = train(train_set, val_set, variant_cfg)
        report = evaluate(result.model, test_set, variant_cfg)
        rows.append(AblationRow(method=name, report=report, **variant_cfg.toggles))
    return rows


def report_frame(reports: Dict[str, HorizonReport]) -> pd.DataFrame:
    """One row per report with "RMSE/NLL" cells per horizon and on average."""
    records = []
    for name, report in reports.items():
        row = {"method": name}
        for h, r, n in zip(report.horizons_s, report.rmse, report.nll):
            row[f"{h:g}s"] = f"{r:.2f}/{n:.2f}"
        row["avg"] = f"{report.rmse_avg:.2f}/{report.nll_avg:.2f}"
        records.append(row)
    return pd.DataFrame.from_records(records).set_index("method")


def ablation_frame(rows: Sequence[AblationRow]) -> pd.DataFrame:
    marks = pd.DataFrame.from_records(
        [
            {
                "method": row.method,
                "info (c)": "x" if row.info_c else "",
                "info (f)": "x" if row.info_f else "",
                "ICD": {"cross": "x", "self": "self"}.get(row.icd, ""),
                "IIE": "x" if row.iie else "",
                "Fusion": "x" if row.fusion else "",
            }
            for row in rows
        ]
    ).set_index("method")
    return marks.join(report_frame({row.method: row.report for row in rows}))


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string()
