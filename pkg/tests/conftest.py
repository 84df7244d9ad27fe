from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest
import torch

from citpred.core.config import RunConfig
from citpred.data.instances import extract_instances
from citpred.data.synthetic import generate_synthetic
from citpred.nn.decoder import GaussianTrajectory, PredictionSet
from citpred.schemas import EgoPlan, GridSpec, Instance, ManeuverLabel, NeighborSample, TargetSample

DT = 0.2


def straight(start: Sequence[float], velocity: Sequence[float], n: int) -> np.ndarray:
    """n points at 5 Hz from `start` moving with constant `velocity` (m/s)."""
    return np.asarray(start, dtype=np.float64) + np.outer(np.arange(n) * DT, np.asarray(velocity, dtype=np.float64))


def make_instance(
    instance_id: str = "0:0",
    target_positions: Sequence[Tuple[float, float]] = ((10.0, 0.0),),
    t_obs: int = 4,
    t_pred: int = 5,
    speed: float = 20.0,
    target_speed: Optional[float] = None,
    maneuver: int = 0,
    with_neighbors: bool = True,
) -> Instance:
    """Ego at the origin driving along +x; each target drives parallel to it."""
    target_speed = speed if target_speed is None else target_speed
    ego_hist = straight((-(t_obs - 1) * speed * DT, 0.0), (speed, 0.0), t_obs)
    plan = straight((speed * DT, 0.0), (speed, 0.0), t_pred)
    targets = []
    for i, (x, y) in enumerate(target_positions):
        hist = straight((x - (t_obs - 1) * target_speed * DT, y), (target_speed, 0.0), t_obs)
        future = straight((x + target_speed * DT, y), (target_speed, 0.0), t_pred)
        neighbors = [NeighborSample(agent_id=0, history=ego_hist, position=[0.0, 0.0])] if with_neighbors else []
        targets.append(
            TargetSample(
                agent_id=i + 1,
                history=hist,
                future=future,
                maneuver=ManeuverLabel.from_index(maneuver),
                neighbors=neighbors,
            )
        )
    ego_id, t = (int(v) for v in instance_id.split(":"))
    return Instance(
        instance_id=instance_id,
        ego_id=ego_id,
        t=t,
        ego_history=ego_hist,
        ego_plan=EgoPlan(points=plan, rate=5),
        targets=targets,
    )


def synthetic_corpus(cfg: RunConfig) -> List[Instance]:
    """Instances extracted from the seeded synthetic scenes `cfg` describes."""
    tracks = generate_synthetic(cfg.synthetic, seed=cfg.seed)
    return extract_instances(tracks, cfg.grid, cfg.t_stride, cfg.t_obs, cfg.t_pred)


def prediction_set(mu, sigma=None, rho=None, p_lat=(1.0, 0.0, 0.0), p_lon=(1.0, 0.0)) -> PredictionSet:
    """Hand-built predictions; mu is [N, 6, T, 2] and the maneuver probabilities are shared by all targets."""
    mu = torch.as_tensor(mu, dtype=torch.float64)
    n = mu.shape[0]
    sigma = torch.ones_like(mu) if sigma is None else torch.as_tensor(sigma, dtype=torch.float64).expand_as(mu)
    rho = torch.zeros_like(mu[..., 0]) if rho is None else torch.as_tensor(rho, dtype=torch.float64).expand_as(mu[..., 0])
    return PredictionSet(
        instance_ids=[f"0:{i}" for i in range(n)],
        target_ids=list(range(n)),
        origins=np.zeros((n, 2)),
        log_p_lat=torch.log(torch.as_tensor(p_lat, dtype=torch.float64)).expand(n, 3),
        log_p_lon=torch.log(torch.as_tensor(p_lon, dtype=torch.float64)).expand(n, 2),
        trajectories=GaussianTrajectory(mu=mu, sigma=sigma, rho=rho),
    )


@pytest.fixture
def grid() -> GridSpec:
    return GridSpec()


@pytest.fixture
def small_grid() -> GridSpec:
    return GridSpec(rows=5, cols=3)


@pytest.fixture
def tiny_cfg() -> RunConfig:
    """Reduced model for gradient checks and fast forward passes (double precision)."""
    return RunConfig(
        grid_rows=5,
        grid_cols=3,
        t_obs=4,
        t_pred=5,
        plan_rate_hz=5,
        input_embed_dim=4,
        enc_dim=8,
        attn_dim=8,
        ctx_dim=8,
        iie_pool_rows=5,
        fcn_channels=(8, 8),
        maneuver_hidden=8,
        dec_dim=8,
        dtype="float64",
        batch_size=4,
        epochs=2,
        learning_rate=1e-2,
    )


@pytest.fixture
def tiny_instances():
    return [
        make_instance("1:0", target_positions=[(10.0, 0.0), (-10.0, 3.0)], maneuver=0),
        make_instance("2:5", target_positions=[(15.0, -3.0)], target_speed=18.0, maneuver=1),
        make_instance("3:10", target_positions=[(-20.0, 0.0), (0.0, 3.5)], target_speed=22.0, maneuver=2),
        make_instance("4:15", target_positions=[(20.0, 0.0)], maneuver=0, with_neighbors=False),
    ]


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield
