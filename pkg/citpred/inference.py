"""Prediction and what-if scoring over a frozen predictor."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import torch

from citpred.core.errors import HorizonMismatchError
from citpred.nn.batching import SceneBatch
from citpred.nn.decoder import PredictionSet
from citpred.nn.predictor import IntentionPredictor
from citpred.schemas import EgoPlan, Instance

logger = logging.getLogger(__name__)


def predict(model: IntentionPredictor, instances: Sequence[Instance], plan_rate: Optional[int] = None) -> PredictionSet:
    """Conditional predictions for every target of `instances` under their own ego plans."""
    rate = plan_rate or model.cfg.plan_rate_hz
    batch = SceneBatch.from_instances(instances, plan_rate=rate, t_pred=model.cfg.t_pred, dtype=model.dtype)
    if len(batch) == 0:
        raise ValueError("no targets to predict")
    model.eval()
    with torch.no_grad():
        return model(batch).detach()


def check_candidates(candidates: Sequence[EgoPlan], t_pred: int, rate_hz: int = 5) -> int:
    """Returns the common candidate rate; every plan must span the prediction horizon at it."""
    if not candidates:
        raise ValueError("at least one candidate plan is required")
    rates = {plan.rate for plan in candidates}
    if len(rates) > 1:
        raise HorizonMismatchError(f"candidate plans mix sampling rates {sorted(rates)}")
    rate = rates.pop()
    expected = t_pred * rate // rate_hz
    for i, plan in enumerate(candidates):
        if len(plan) != expected:
            raise HorizonMismatchError(
                f"candidate {i} has {len(plan)} points; {expected} needed to cover {t_pred} frames at {rate} Hz"
            )
    return rate


def whatif(
    model: IntentionPredictor, instance: Instance, candidates: Sequence[EgoPlan], workers: int = 1
) -> List[PredictionSet]:
    """One prediction set per candidate ego plan, in candidate order.

    Only the ego plan differs between the candidate runs.
    """
    rate = check_candidates(candidates, model.cfg.t_pred, model.cfg.rate_hz)
    if not instance.targets:
        raise ValueError(f"instance {instance.instance_id} has no target agents")
    model.eval()
    batches = [
        SceneBatch.from_instances([instance.with_plan(plan)], plan_rate=rate, t_pred=model.cfg.t_pred, dtype=model.dtype)
        for plan in candidates
    ]

    def run(batch: SceneBatch) -> PredictionSet:
        with torch.no_grad():
            return model(batch).detach()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, batches))
    logger.info(f"Scored {len(candidates)} candidate plan(s) for {instance.instance_id} ({len(instance.targets)} targets)")
    return results
