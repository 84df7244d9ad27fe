"""Social intention tensor, maneuver head and maneuver-conditioned Gaussian decoder."""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from citpred.core.errors import ShapeError
from citpred.core.geometry import assign_cells
from citpred.schemas import LATERAL, LONGITUDINAL, FrameRecord, GridSpec, ManeuverLabel, PredictionRecord

N_MANEUVERS = len(LATERAL) * len(LONGITUDINAL)
LOG_2PI = math.log(2.0 * math.pi)
RHO_LIMIT = 1.0 - 1e-6  # keeps |rho| < 1 where tanh saturates in float32

# --- Social intention tensor --- #

@dataclass
class SocialIntentionTensor:
    tensor: torch.Tensor  # [B, H, W, z]
    owners: np.ndarray  # per target: instance index in the batch
    rows: np.ndarray
    cols: np.ndarray


def assemble(
    z: torch.Tensor,
    positions: np.ndarray,
    grid: GridSpec,
    owners: Optional[np.ndarray] = None,
    count: int = 1,
) -> SocialIntentionTensor:
    """Places every target's Z at its cell of its ego's grid (positions relative to the ego)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if z.dim() != 2 or z.shape[0] != len(positions):
        raise ShapeError(f"{tuple(z.shape)} intention vectors for {len(positions)} positions")
    if owners is None:
        owners = np.zeros(len(positions), dtype=np.int64)
    owners = np.asarray(owners, dtype=np.int64)
    kept, rows, cols = assign_cells(positions, grid, owners)
    if len(kept) != len(positions):
        raise ShapeError(f"{len(positions) - len(kept)} target(s) fall outside the ego grid or share a cell")
    tensor = z.new_zeros(count, grid.rows, grid.cols, z.shape[1])
    if len(kept):
        index = (torch.as_tensor(owners), torch.as_tensor(rows), torch.as_tensor(cols))
        tensor = tensor.index_put(index, z)
    return SocialIntentionTensor(tensor=tensor, owners=owners, rows=rows, cols=cols)


class FusionFCN(nn.Module):
    """Three 3x3 same-padding convolutions z -> c1 -> c2 -> z over the ego grid."""

    def __init__(self, z_dim: int = 256, channels: Sequence[int] = (128, 128), leaky_slope: float = 0.1):
        super().__init__()
        self.leaky_slope = leaky_slope
        c1, c2 = channels
        self.conv1 = nn.Conv2d(z_dim, c1, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, padding=1)
        self.conv3 = nn.Conv2d(c2, z_dim, kernel_size=3, padding=1)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        x = s.permute(0, 3, 1, 2)
        for conv in (self.conv1, self.conv2, self.conv3):
            x = F.leaky_relu(conv(x), self.leaky_slope)
        return x.permute(0, 2, 3, 1)


def refine(s: SocialIntentionTensor, params: FusionFCN) -> torch.Tensor:
    """Z+ per target, read at the target's own cell after the convolution stack."""
    out = params(s.tensor)
    return out[torch.as_tensor(s.owners), torch.as_tensor(s.rows), torch.as_tensor(s.cols)]

# --- Maneuver probabilities --- #

class ManeuverHead(nn.Module):
    def __init__(self, z_dim: int = 256, hidden: int = 64, leaky_slope: float = 0.1):
        super().__init__()
        self.leaky_slope = leaky_slope
        self.hidden = nn.Linear(z_dim, hidden)
        self.lateral = nn.Linear(hidden, len(LATERAL))
        self.longitudinal = nn.Linear(hidden, len(LONGITUDINAL))

    def forward(self, z_plus: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (log p_lat [N, 3], log p_lon [N, 2])."""
        h = F.leaky_relu(self.hidden(z_plus), self.leaky_slope)
        return F.log_softmax(self.lateral(h), dim=-1), F.log_softmax(self.longitudinal(h), dim=-1)


def joint_log_probs(log_p_lat: torch.Tensor, log_p_lon: torch.Tensor) -> torch.Tensor:
    """[..., 6] with k = lat * 2 + lon."""
    joint = log_p_lat.unsqueeze(-1) + log_p_lon.unsqueeze(-2)
    return joint.reshape(*joint.shape[:-2], N_MANEUVERS)


@dataclass
class ManeuverDistribution:
    p_lat: torch.Tensor
    p_lon: torch.Tensor

    @property
    def p_joint(self) -> torch.Tensor:
        return joint_log_probs(self.p_lat.log(), self.p_lon.log()).exp()


def maneuver_distribution(z_plus: torch.Tensor, params: ManeuverHead) -> ManeuverDistribution:
    log_p_lat, log_p_lon = params(z_plus)
    return ManeuverDistribution(p_lat=log_p_lat.exp(), p_lon=log_p_lon.exp())

# --- Trajectory decoder --- #

@dataclass
class GaussianTrajectory:
    mu: torch.Tensor  # [..., T, 2]
    sigma: torch.Tensor  # [..., T, 2]
    rho: torch.Tensor  # [..., T]

    def __len__(self) -> int:
        return self.mu.shape[-2]


def maneuver_onehots(index: torch.Tensor) -> torch.Tensor:
    """[..., 5] one-hot lateral followed by one-hot longitudinal for joint indices k."""
    lat = F.one_hot(index // len(LONGITUDINAL), len(LATERAL))
    lon = F.one_hot(index % len(LONGITUDINAL), len(LONGITUDINAL))
    return torch.cat([lat, lon], dim=-1)


class TrajectoryDecoder(nn.Module):
    """LSTM over [Z+, maneuver one-hots] repeated per step, emitting (dmu_x, dmu_y, s_x, s_y, r)."""

    def __init__(
        self,
        z_dim: int = 256,
        dec_dim: int = 128,
        t_pred: int = 25,
        leaky_slope: float = 0.1,
        sigma_floor: float = 1e-3,
    ):
        super().__init__()
        self.t_pred = t_pred
        self.leaky_slope = leaky_slope
        self.sigma_floor = sigma_floor
        self.lstm = nn.LSTM(z_dim + len(LATERAL) + len(LONGITUDINAL), dec_dim, batch_first=True)
        self.output = nn.Linear(dec_dim, 5)

    def raw(self, z_plus: torch.Tensor, onehots: torch.Tensor) -> torch.Tensor:
        x = torch.cat([z_plus, onehots.to(z_plus.dtype)], dim=-1)
        x = x.unsqueeze(1).expand(-1, self.t_pred, -1)
        h, _ = self.lstm(x)
        return self.output(F.leaky_relu(h, self.leaky_slope))

    def link(self, raw: torch.Tensor, last_pos: Optional[torch.Tensor] = None) -> GaussianTrajectory:
        mu = torch.cumsum(raw[..., :2], dim=-2)
        if last_pos is not None:
            mu = mu + last_pos.unsqueeze(-2)
        sigma = torch.exp(raw[..., 2:4]).clamp(min=self.sigma_floor)
        rho = RHO_LIMIT * torch.tanh(raw[..., 4])
        return GaussianTrajectory(mu=mu, sigma=sigma, rho=rho)

    def forward(self, z_plus: torch.Tensor) -> GaussianTrajectory:
        """All six maneuvers per target, target-relative: shapes [N, 6, T, ...]."""
        n = z_plus.shape[0]
        k = torch.arange(N_MANEUVERS).repeat(n)
        raw = self.raw(z_plus.repeat_interleave(N_MANEUVERS, dim=0), maneuver_onehots(k))
        traj = self.link(raw)
        return GaussianTrajectory(
            mu=traj.mu.reshape(n, N_MANEUVERS, self.t_pred, 2),
            sigma=traj.sigma.reshape(n, N_MANEUVERS, self.t_pred, 2),
            rho=traj.rho.reshape(n, N_MANEUVERS, self.t_pred),
        )


def _onehot_pair(maneuver: Union[ManeuverLabel, Tuple[Sequence[float], Sequence[float]]]) -> torch.Tensor:
    if isinstance(maneuver, ManeuverLabel):
        return maneuver_onehots(torch.tensor(maneuver.index))
    lat, lon = (np.asarray(v, dtype=np.float64).reshape(-1) for v in maneuver)
    for vec, size, axis in ((lat, len(LATERAL), "lateral"), (lon, len(LONGITUDINAL), "longitudinal")):
        if vec.shape != (size,) or not np.all((vec == 0) | (vec == 1)) or vec.sum() != 1:
            raise ValueError(f"invalid {axis} maneuver encoding {vec.tolist()}: expected a one-hot of length {size}")
    return torch.as_tensor(np.concatenate([lat, lon]))


def decode(
    z_plus: torch.Tensor,
    maneuver: Union[ManeuverLabel, Tuple[Sequence[float], Sequence[float]]],
    last_pos: Union[np.ndarray, torch.Tensor],
    params: TrajectoryDecoder,
) -> GaussianTrajectory:
    """One target's Gaussian trajectory under one maneuver, anchored at last_pos."""
    onehots = _onehot_pair(maneuver).unsqueeze(0)
    raw = params.raw(z_plus.reshape(1, -1), onehots)
    traj = params.link(raw, torch.as_tensor(last_pos, dtype=z_plus.dtype).reshape(1, 2))
    return GaussianTrajectory(mu=traj.mu[0], sigma=traj.sigma[0], rho=traj.rho[0])

# --- Likelihoods --- #

def gaussian_nll(
    mu: torch.Tensor, sigma: torch.Tensor, rho: torch.Tensor, y: torch.Tensor, validate: bool = True
) -> torch.Tensor:
    """Bivariate normal negative log-density, broadcast over leading dims ([..., 2], [..., 2], [...], [..., 2])."""
    if validate:
        if torch.any(sigma <= 0):
            raise ValueError("sigma must be strictly positive")
        if torch.any(rho.abs() >= 1):
            raise ValueError("|rho| must be < 1")
    d = y - mu
    zx, zy = d[..., 0] / sigma[..., 0], d[..., 1] / sigma[..., 1]
    one_minus = 1.0 - rho**2
    z = zx**2 - 2.0 * rho * zx * zy + zy**2
    return LOG_2PI + torch.log(sigma[..., 0] * sigma[..., 1] * torch.sqrt(one_minus)) + z / (2.0 * one_minus)

# --- Predictions --- #

@dataclass
class PredictionSet:
    """Predictions for N targets; mu is relative to each target's position at t."""

    instance_ids: List[str]
    target_ids: List[int]
    origins: np.ndarray  # [N, 2] target positions at t, ego frame
    log_p_lat: torch.Tensor  # [N, 3]
    log_p_lon: torch.Tensor  # [N, 2]
    trajectories: GaussianTrajectory  # [N, 6, T, ...]
    beta: Optional[torch.Tensor] = None  # [N, 2]
    rate: int = 5

    def __len__(self) -> int:
        return len(self.target_ids)

    @property
    def log_p_joint(self) -> torch.Tensor:
        return joint_log_probs(self.log_p_lat, self.log_p_lon)

    @property
    def p_joint(self) -> torch.Tensor:
        return self.log_p_joint.exp()

    def best_maneuver(self) -> torch.Tensor:
        return self.log_p_joint.argmax(dim=-1)

    def detach(self) -> "PredictionSet":
        t = self.trajectories
        return PredictionSet(
            instance_ids=list(self.instance_ids),
            target_ids=list(self.target_ids),
            origins=self.origins,
            log_p_lat=self.log_p_lat.detach(),
            log_p_lon=self.log_p_lon.detach(),
            trajectories=GaussianTrajectory(t.mu.detach(), t.sigma.detach(), t.rho.detach()),
            beta=self.beta.detach() if self.beta is not None else None,
            rate=self.rate,
        )

    @classmethod
    def concat(cls, parts: Sequence["PredictionSet"]) -> "PredictionSet":
        if not parts:
            raise ValueError("nothing to concatenate")
        betas = [p.beta for p in parts]
        return cls(
            instance_ids=[i for p in parts for i in p.instance_ids],
            target_ids=[i for p in parts for i in p.target_ids],
            origins=np.concatenate([p.origins for p in parts], axis=0),
            log_p_lat=torch.cat([p.log_p_lat for p in parts]),
            log_p_lon=torch.cat([p.log_p_lon for p in parts]),
            trajectories=GaussianTrajectory(
                mu=torch.cat([p.trajectories.mu for p in parts]),
                sigma=torch.cat([p.trajectories.sigma for p in parts]),
                rho=torch.cat([p.trajectories.rho for p in parts]),
            ),
            beta=torch.cat(betas) if all(b is not None for b in betas) else None,
            rate=parts[0].rate,
        )

    def to_records(self) -> List[PredictionRecord]:
        """One record per target per maneuver; mu reported in the ego frame at t."""
        p_lat = self.log_p_lat.exp().tolist()
        p_lon = self.log_p_lon.exp().tolist()
        p_joint = self.p_joint.tolist()
        mu = (self.trajectories.mu.detach() + torch.as_tensor(self.origins, dtype=self.trajectories.mu.dtype)[:, None, None, :]).tolist()
        sigma = self.trajectories.sigma.detach().tolist()
        rho = self.trajectories.rho.detach().tolist()
        beta = self.beta.tolist() if self.beta is not None else None
        records = []
        for n in range(len(self)):
            for k, label in enumerate(ManeuverLabel.all()):
                frames = [
                    FrameRecord(t=step + 1, mu=mu[n][k][step], sigma=sigma[n][k][step], rho=rho[n][k][step])
                    for step in range(len(self.trajectories))
                ]
                records.append(
                    PredictionRecord(
                        instance_id=self.instance_ids[n],
                        target_id=self.target_ids[n],
                        maneuver=str(label),
                        p_lat=p_lat[n],
                        p_lon=p_lon[n],
                        p_joint=p_joint[n][k],
                        beta=beta[n] if beta is not None else None,
                        frames=frames,
                    )
                )
        return records


def trajectory_nll(pred: PredictionSet, futures: torch.Tensor) -> torch.Tensor:
    """Per-target, per-maneuver, per-frame NLL [N, 6, T] of target-relative futures [N, T, 2]."""
    t = pred.trajectories
    if futures.shape != (len(pred), t.mu.shape[-2], 2):
        raise ShapeError(f"futures {tuple(futures.shape)} do not match {len(pred)} targets x {t.mu.shape[-2]} frames")
    return gaussian_nll(t.mu, t.sigma, t.rho, futures.unsqueeze(1))


def posterior(pred: PredictionSet, futures: torch.Tensor) -> torch.Tensor:
    """Joint log-likelihood over targets of the six-component maneuver mixture."""
    log_lik = -trajectory_nll(pred, futures).sum(dim=-1)  # [N, 6]
    return torch.logsumexp(pred.log_p_joint + log_lik, dim=-1).sum()
