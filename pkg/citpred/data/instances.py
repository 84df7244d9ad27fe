"""Ego-centric instance extraction, maneuver labels, plan downsampling and splits."""
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from citpred.core.errors import DataFormatError, WindowError
from citpred.core.geometry import assign_cells, cells_of
from citpred.schemas import (
    AgentTrack,
    EgoPlan,
    GridSpec,
    Instance,
    ManeuverLabel,
    NeighborSample,
    SplitSpec,
    TargetSample,
)

logger = logging.getLogger(__name__)

T_OBS = 15
T_PRED = 25
WORKING_RATE = 5
BRAKE_RATIO = 0.8


@dataclass
class ExtractionSummary:
    instances: int = 0
    skipped_instants: int = 0
    incomplete_targets: int = 0
    cell_collisions: int = 0
    targets: int = 0

    def __str__(self) -> str:
        return (
            f"{self.instances} instances, {self.targets} targets "
            f"(skipped {self.skipped_instants} instants, excluded {self.incomplete_targets} incomplete targets, "
            f"dropped {self.cell_collisions} cell collisions)"
        )


def _window(track: AgentTrack, start: int, end: int) -> Optional[slice]:
    """Index slice covering frames start..end inclusive, or None unless every frame is present."""
    i0 = int(np.searchsorted(track.frames, start))
    i1 = int(np.searchsorted(track.frames, end))
    if i0 >= len(track) or i1 >= len(track):
        return None
    if track.frames[i0] != start or track.frames[i1] != end or i1 - i0 != end - start:
        return None
    return slice(i0, i1 + 1)


# --- Maneuver labels ---

def label_maneuver(
    track: AgentTrack,
    t: int,
    t_obs: int = T_OBS,
    t_pred: int = T_PRED,
    brake_ratio: float = BRAKE_RATIO,
) -> ManeuverLabel:
    """Lane-id comparison over the horizon window plus a speed-ratio brake test.

    Lane ids grow to the right, so a decreasing id is a left change.
    """
    window = _window(track, t - t_obs, t + t_pred)
    if window is None:
        raise WindowError(
            f"agent {track.agent_id}: no complete window from frame {t - t_obs} to frame {t + t_pred}"
        )
    idx = window.start + t_obs
    lanes = track.lane_ids
    lane_past = lanes[window.start]
    lane_now = lanes[idx]
    lane_future = lanes[idx + t_pred]

    if lane_future < lane_now:
        lateral = "left"
    elif lane_future > lane_now:
        lateral = "right"
    elif lane_now < lane_past:
        lateral = "left"
    elif lane_now > lane_past:
        lateral = "right"
    else:
        lateral = "keep"

    rate = track.source_rate
    steps = np.linalg.norm(np.diff(track.positions[idx - 1 : idx + t_pred + 1], axis=0), axis=1) * rate
    speed_now, future_speed = steps[0], steps[1:].mean()
    longitudinal = "brake" if future_speed < brake_ratio * speed_now else "normal"
    return ManeuverLabel(lateral=lateral, longitudinal=longitudinal)


# --- Ego plans ---

def downsample_plan(plan: EgoPlan, out_rate: int = 1, t_pred: int = T_PRED) -> EgoPlan:
    """Keeps every (rate/out_rate)-th future point, e.g. offsets 1 s..5 s of a 5 Hz plan."""
    if plan.rate == out_rate:
        return plan
    if len(plan) != t_pred:
        raise WindowError(f"expected a {t_pred}-point plan at {plan.rate} Hz, got {len(plan)} points")
    ratio, remainder = divmod(plan.rate, out_rate)
    if remainder or ratio < 1:
        raise WindowError(f"cannot downsample a {plan.rate} Hz plan to {out_rate} Hz")
    points = plan.points[ratio - 1 :: ratio]
    if len(points) < 2:
        raise WindowError(f"downsampling a {t_pred}-point plan to {out_rate} Hz leaves {len(points)} point(s)")
    return EgoPlan(points=points, rate=out_rate)


# --- Instance extraction ---

def extract_instances(
    tracks: Sequence[AgentTrack],
    grid: GridSpec,
    t_stride: int = WORKING_RATE,
    t_obs: int = T_OBS,
    t_pred: int = T_PRED,
    summary: Optional[ExtractionSummary] = None,
) -> List[Instance]:
    """Builds one Instance per (ego, prediction instant) with complete ego windows.

    Targets are agents inside the ego-centric grid at t with complete history
    and future; each target's neighbors are agents inside the target-centric
    grid with a complete history (the ego included).
    """
    summary = summary if summary is not None else ExtractionSummary()
    tracks = sorted(tracks, key=lambda tr: tr.agent_id)
    for track in tracks:
        if track.source_rate != WORKING_RATE:
            raise DataFormatError(
                f"agent {track.agent_id} is at {track.source_rate} Hz; resample to {WORKING_RATE} Hz first"
            )

    presence: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    for ti, track in enumerate(tracks):
        for ri, frame in enumerate(track.frames):
            presence[int(frame)].append((ti, ri))

    history_cache: Dict[Tuple[int, int], Optional[slice]] = {}

    def history(ti: int, t: int) -> Optional[slice]:
        key = (ti, t)
        if key not in history_cache:
            history_cache[key] = _window(tracks[ti], t - t_obs + 1, t)
        return history_cache[key]

    instances = []
    for ego_ti, ego in enumerate(tracks):
        for t in ego.frames[ego.frames % t_stride == 0]:
            t = int(t)
            ego_hist = history(ego_ti, t)
            ego_fut = _window(ego, t + 1, t + t_pred)
            if ego_hist is None or ego_fut is None:
                summary.skipped_instants += 1
                continue

            ego_points = ego.positions[ego_hist]
            origin = ego_points[-1]
            direction = 1 if ego_points[-1, 0] - ego_points[0, 0] >= 0 else -1

            def to_ego_frame(p: np.ndarray) -> np.ndarray:
                return (p - origin) * direction

            others = [(ti, ri) for ti, ri in presence[t] if ti != ego_ti]
            rel = np.array([to_ego_frame(tracks[ti].positions[ri]) for ti, ri in others]).reshape(-1, 2)
            inside, _, _ = cells_of(rel, grid)

            complete = []
            for k in np.flatnonzero(inside):
                ti = others[k][0]
                # the label also reads the lane one frame before the history starts
                if _window(tracks[ti], t - t_obs, t + t_pred) is None:
                    summary.incomplete_targets += 1
                    continue
                complete.append(k)
            kept, _, _ = assign_cells(rel[complete], grid)
            summary.cell_collisions += len(complete) - len(kept)
            target_keys = [complete[i] for i in kept]

            # Everyone with a full history at t can be somebody's neighbor, the ego included.
            candidates = [(ego_ti, np.zeros(2))]
            candidates += [(others[k][0], rel[k]) for k in range(len(others)) if history(others[k][0], t) is not None]

            targets = []
            for k in target_keys:
                ti = others[k][0]
                track = tracks[ti]
                pool = [(ni, pos) for ni, pos in candidates if ni != ti]
                offsets = np.array([pos - rel[k] for _, pos in pool]).reshape(-1, 2)
                nbr_kept, _, _ = assign_cells(offsets, grid)
                neighbors = [
                    NeighborSample(
                        agent_id=tracks[pool[j][0]].agent_id,
                        history=to_ego_frame(tracks[pool[j][0]].positions[history(pool[j][0], t)]),
                        position=pool[j][1],
                    )
                    for j in nbr_kept
                ]
                fut = _window(track, t + 1, t + t_pred)
                targets.append(
                    TargetSample(
                        agent_id=track.agent_id,
                        history=to_ego_frame(track.positions[history(ti, t)]),
                        future=to_ego_frame(track.positions[fut]),
                        maneuver=label_maneuver(track, t, t_obs=t_obs, t_pred=t_pred),
                        neighbors=neighbors,
                    )
                )

            instances.append(
                Instance(
                    instance_id=f"{ego.agent_id}:{t}",
                    ego_id=ego.agent_id,
                    t=t,
                    direction=direction,
                    ego_history=to_ego_frame(ego_points),
                    ego_plan=EgoPlan(points=to_ego_frame(ego.positions[ego_fut]), rate=WORKING_RATE),
                    targets=targets,
                )
            )
            summary.targets += len(targets)

    instances.sort(key=lambda inst: (inst.ego_id, inst.t))
    summary.instances = len(instances)
    logger.info(f"Extracted {summary}")
    return instances


# --- Dataset split ---

def split_dataset(
    instances: Sequence[Instance], spec: SplitSpec
) -> Tuple[List[Instance], List[Instance], List[Instance]]:
    """Partitions by ego id so no agent's instances straddle splits."""
    ego_ids = np.array(sorted({inst.ego_id for inst in instances}), dtype=np.int64)
    order = np.random.default_rng(spec.seed).permutation(ego_ids)
    n_train = int(round(len(order) * spec.train_frac))
    n_val = int(round(len(order) * spec.val_frac))
    groups = {
        "train": set(order[:n_train].tolist()),
        "val": set(order[n_train : n_train + n_val].tolist()),
        "test": set(order[n_train + n_val :].tolist()),
    }
    train = [inst for inst in instances if inst.ego_id in groups["train"]]
    val = [inst for inst in instances if inst.ego_id in groups["val"]]
    test = [inst for inst in instances if inst.ego_id in groups["test"]]
    logger.info(
        f"Split {len(ego_ids)} ego ids into {len(groups['train'])}/{len(groups['val'])}/{len(groups['test'])} "
        f"({len(train)}/{len(val)}/{len(test)} instances)"
    )
    return train, val, test
