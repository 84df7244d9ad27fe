"""Kinematic highway scenes at 5 Hz with lane ids, including an ego-reactive family.

Every scene occupies its own frame range, so agents of different scenes never
co-occur. Longitudinal motion integrates a per-step speed profile; lateral
motion follows a quintic blend between lane centers. Same-lane agents behind a
braking car replay its speed after a reaction lag.
"""
import logging
from typing import Dict, List, Tuple

import numpy as np

from citpred.core.errors import ConfigError
from citpred.schemas import SCENARIOS, AgentTrack, SyntheticConfig

logger = logging.getLogger(__name__)

RATE_HZ = 5
DT = 1.0 / RATE_HZ
BRAKE_FLOOR = 0.5  # fraction of initial speed a braking agent slows to


def _quintic(tau: np.ndarray) -> np.ndarray:
    tau = np.clip(tau, 0.0, 1.0)
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def _brake_profile(v0: float, start: int, steps: int, decel: float) -> np.ndarray:
    """Per-step speeds: constant v0, then linear deceleration from `start` down to the floor."""
    k = np.arange(steps)
    slowed = v0 - decel * DT * (k - start + 1)
    return np.where(k >= start, np.maximum(slowed, BRAKE_FLOOR * v0), v0)


def _follow_chain(speeds: np.ndarray, lanes: np.ndarray, x0: np.ndarray, leader: int, lag: int) -> None:
    """Same-lane agents behind `leader` replay the speed of the car ahead of them `lag` steps late."""
    steps = speeds.shape[1]
    lag = min(lag, steps)
    behind = [int(i) for i in np.argsort(-x0) if lanes[i] == lanes[leader] and x0[i] < x0[leader]]
    ahead = leader
    for i in behind:
        speeds[i, :lag] = speeds[ahead, 0]
        speeds[i, lag:] = speeds[ahead, : steps - lag]
        ahead = i


def _lane_ids(y: np.ndarray, lane_width: float, lanes: int) -> np.ndarray:
    return np.clip(np.floor(y / lane_width), 0, lanes - 1).astype(np.int64)


def _validate(cfg: SyntheticConfig) -> None:
    if cfg.lanes < 1 or cfg.agents < 1 or cfg.scenes < 1:
        raise ConfigError(f"synthetic scenes need at least one lane, agent and scene (got {cfg.lanes}/{cfg.agents}/{cfg.scenes})")
    if cfg.frames < 2:
        raise ConfigError(f"synthetic scenes need at least 2 frames, got {cfg.frames}")
    if not 0 < cfg.speed_min <= cfg.speed_max:
        raise ConfigError(f"invalid speed range [{cfg.speed_min}, {cfg.speed_max}]")
    if cfg.lane_width_m <= 0 or cfg.brake_decel <= 0 or cfg.lane_change_s <= 0 or cfg.reaction_lag_s < 0:
        raise ConfigError("lane width, braking deceleration and lane-change duration must be positive")
    if not 0.0 <= cfg.reactive_brake_prob <= 1.0:
        raise ConfigError(f"reactive braking probability must lie in [0, 1], got {cfg.reactive_brake_prob}")


def _place(rng: np.random.Generator, cfg: SyntheticConfig, reactive: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct (lane, slot) pairs per agent; slots are follow_gap apart along the road.

    In the reactive family agent 1 sits one slot behind agent 0 in the same lane.
    """
    slots = max(cfg.agents, 3)
    cells = [(lane, slot) for lane in range(cfg.lanes) for slot in range(slots)]
    taken: List[Tuple[int, int]] = []
    if reactive and cfg.agents >= 2:
        lane = int(rng.integers(cfg.lanes))
        slot = int(rng.integers(1, slots))
        taken = [(lane, slot), (lane, slot - 1)]
    free = [c for c in cells if c not in taken]
    order = rng.permutation(len(free))
    taken += [free[i] for i in order[: cfg.agents - len(taken)]]
    lanes = np.array([c[0] for c in taken], dtype=np.int64)
    xs = np.array([c[1] for c in taken], dtype=np.float64) * cfg.follow_gap_m
    return lanes, xs


def _scene(rng: np.random.Generator, cfg: SyntheticConfig, family: str) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (positions [agents, frames, 2], lane ids [agents, frames])."""
    steps = cfg.frames - 1
    lanes, x0 = _place(rng, cfg, reactive=family == "car-following-reactive")
    x0 = x0 + rng.uniform(0.0, 100.0)
    v0 = np.full(cfg.agents, rng.uniform(cfg.speed_min, cfg.speed_max))
    speeds = np.repeat(v0[:, None], steps, axis=1)
    y = np.repeat(((lanes + 0.5) * cfg.lane_width_m)[:, None], cfg.frames, axis=1)

    event_lo, event_hi = cfg.frames // 4, max(cfg.frames // 4 + 1, (2 * cfg.frames) // 3)
    actor = int(rng.integers(cfg.agents))
    lag = int(round(cfg.reaction_lag_s * RATE_HZ))

    if family == "brake":
        start = int(rng.integers(event_lo, event_hi))
        speeds[actor] = _brake_profile(v0[actor], start, steps, cfg.brake_decel)
        _follow_chain(speeds, lanes, x0, actor, lag)
    elif family == "lane-change" and cfg.lanes > 1:
        lane = lanes[actor]
        if lane == 0:
            step = 1
        elif lane == cfg.lanes - 1:
            step = -1
        else:
            step = int(rng.choice([-1, 1]))
        start = int(rng.integers(event_lo, event_hi))
        duration = cfg.lane_change_s * RATE_HZ
        tau = (np.arange(cfg.frames) - start) / duration
        y[actor] = y[actor] + step * cfg.lane_width_m * _quintic(tau)
    elif family == "car-following-reactive":
        if rng.random() < cfg.reactive_brake_prob:
            start = int(rng.integers(event_lo, event_hi))
            speeds[0] = _brake_profile(v0[0], start, steps, cfg.brake_decel)
        # agent 1 is placed directly behind agent 0, so it heads the chain
        _follow_chain(speeds, lanes, x0, 0, lag)

    x = np.concatenate([x0[:, None], x0[:, None] + np.cumsum(speeds * DT, axis=1)], axis=1)
    positions = np.stack([x, y], axis=2)
    return positions, _lane_ids(y, cfg.lane_width_m, cfg.lanes)


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0) -> List[AgentTrack]:
    """Deterministic synthetic corpus: `cfg.scenes` scenes of `cfg.agents` agents each."""
    _validate(cfg)
    rng = np.random.default_rng(seed)
    families = [s for s in SCENARIOS if cfg.scenario_mix.get(s, 0.0) > 0]
    weights = np.array([cfg.scenario_mix[s] for s in families], dtype=np.float64)
    weights /= weights.sum()

    span = RATE_HZ * (int(np.ceil(cfg.frames / RATE_HZ)) + 1)
    tracks = []
    counts: Dict[str, int] = {s: 0 for s in families}
    for scene in range(cfg.scenes):
        family = families[int(rng.choice(len(families), p=weights))]
        counts[family] += 1
        positions, lane_ids = _scene(rng, cfg, family)
        frames = scene * span + np.arange(cfg.frames, dtype=np.int64)
        for i in range(cfg.agents):
            tracks.append(
                AgentTrack(
                    agent_id=scene * cfg.agents + i,
                    frames=frames,
                    positions=positions[i],
                    lane_ids=lane_ids[i],
                    source_rate=RATE_HZ,
                )
            )
    logger.info(f"Generated {len(tracks)} synthetic tracks in {cfg.scenes} scenes: {counts}")
    return tracks
