"""Collates Instances into the flat tensors the predictor consumes."""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from citpred.core.errors import HorizonMismatchError
from citpred.data.instances import downsample_plan
from citpred.schemas import Instance


@dataclass
class SceneBatch:
    """Targets of several instances, flattened.

    Histories are relative to each agent's own position at t; futures are
    relative to the target's position at t; positions are in the ego frame.
    """

    instance_ids: List[str]
    target_ids: List[int]
    owners: np.ndarray  # [N] instance index of each target
    target_pos: np.ndarray  # [N, 2]
    target_hist: torch.Tensor  # [N, T_obs, 2]
    target_future: torch.Tensor  # [N, T_pred, 2]
    maneuver: torch.Tensor  # [N] joint index k
    ego_plan: torch.Tensor  # [B, L, 2]
    nbr_owner: np.ndarray  # [M] target index of each neighbor
    nbr_offset: np.ndarray  # [M, 2] neighbor position relative to its target
    nbr_hist: torch.Tensor  # [M, T_obs, 2]
    plan_rate: int = 5

    def __len__(self) -> int:
        return len(self.target_ids)

    @property
    def instance_count(self) -> int:
        return self.ego_plan.shape[0]

    @classmethod
    def from_instances(
        cls,
        instances: Sequence[Instance],
        plan_rate: int = 5,
        t_pred: int = 25,
        dtype: torch.dtype = torch.float32,
    ) -> "SceneBatch":
        """Instances without targets are skipped; plans are downsampled to plan_rate."""
        instances = [inst for inst in instances if inst.targets]
        plans = []
        for inst in instances:
            plan = inst.ego_plan
            if plan.rate != plan_rate:
                if plan.rate < plan_rate:
                    raise HorizonMismatchError(
                        f"instance {inst.instance_id}: cannot raise a {plan.rate} Hz plan to {plan_rate} Hz"
                    )
                plan = downsample_plan(plan, plan_rate, t_pred=t_pred)
            plans.append(plan.points)
        lengths = {len(p) for p in plans}
        if len(lengths) > 1:
            raise HorizonMismatchError(f"ego plans of different lengths in one batch: {sorted(lengths)}")

        instance_ids, target_ids, owners, positions = [], [], [], []
        hists, futures, maneuvers = [], [], []
        nbr_owner, nbr_offset, nbr_hist = [], [], []
        for b, inst in enumerate(instances):
            for target in inst.targets:
                if len(target.future) != t_pred:
                    raise HorizonMismatchError(
                        f"instance {inst.instance_id}: target {target.agent_id} has {len(target.future)} future frames, expected {t_pred}"
                    )
                n = len(target_ids)
                instance_ids.append(inst.instance_id)
                target_ids.append(target.agent_id)
                owners.append(b)
                pos = target.position
                positions.append(pos)
                hists.append(target.history - pos)
                futures.append(target.future - pos)
                maneuvers.append(target.maneuver.index)
                for nbr in target.neighbors:
                    nbr_owner.append(n)
                    nbr_offset.append(nbr.position - pos)
                    nbr_hist.append(nbr.history - nbr.history[-1])

        def stack(arrays: list, shape_tail: tuple) -> torch.Tensor:
            if not arrays:
                return torch.zeros((0, *shape_tail), dtype=dtype)
            return torch.as_tensor(np.stack(arrays), dtype=dtype)

        t_obs = hists[0].shape[0] if hists else 0
        plan_len = plans[0].shape[0] if plans else 0
        return cls(
            instance_ids=instance_ids,
            target_ids=target_ids,
            owners=np.asarray(owners, dtype=np.int64),
            target_pos=np.asarray(positions, dtype=np.float64).reshape(-1, 2),
            target_hist=stack(hists, (t_obs, 2)),
            target_future=stack(futures, (t_pred, 2)),
            maneuver=torch.as_tensor(np.asarray(maneuvers, dtype=np.int64)),
            ego_plan=stack(plans, (plan_len, 2)),
            nbr_owner=np.asarray(nbr_owner, dtype=np.int64),
            nbr_offset=np.asarray(nbr_offset, dtype=np.float64).reshape(-1, 2),
            nbr_hist=stack(nbr_hist, (t_obs, 2)),
            plan_rate=plan_rate,
        )


def iter_batches(
    instances: Sequence[Instance],
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
    **kwargs,
) -> List[SceneBatch]:
    """Chunks instances into SceneBatches, dropping target-free ones; shuffled when rng is given."""
    with_targets = [inst for inst in instances if inst.targets]
    if rng is not None:
        with_targets = [with_targets[i] for i in rng.permutation(len(with_targets))]
    return [
        SceneBatch.from_instances(with_targets[start : start + batch_size], **kwargs)
        for start in range(0, len(with_targets), batch_size)
    ]
