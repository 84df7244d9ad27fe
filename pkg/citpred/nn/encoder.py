"""Per-role temporal encoders: 1D convolution over time followed by an LSTM."""
from typing import Literal, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from citpred.core.errors import ShapeError
from citpred.nn.init import init_uniform_

Role = Literal["target", "ego", "neighbor"]
ROLES = ("target", "ego", "neighbor")


class TemporalEncoder(nn.Module):
    """Maps [N, T, 2] relative positions to the final LSTM state [N, enc_dim]."""

    def __init__(
        self,
        role: Role,
        embed_dim: int = 32,
        enc_dim: int = 64,
        kernel: int = 3,
        leaky_slope: float = 0.1,
    ):
        super().__init__()
        if role not in ROLES:
            raise ValueError(f"Unknown encoder role '{role}'. Expected one of {ROLES}")
        self.role = role
        self.enc_dim = enc_dim
        self.leaky_slope = leaky_slope
        # Same-padding keeps one conv output per input step.
        self.conv = nn.Conv1d(2, embed_dim, kernel_size=kernel, padding=kernel // 2)
        self.lstm = nn.LSTM(embed_dim, enc_dim, batch_first=True)

    def forward(self, traj: torch.Tensor) -> torch.Tensor:
        if traj.dim() != 3 or traj.shape[-1] != 2:
            raise ShapeError(f"{self.role} encoder expects [N, T, 2] input, got {tuple(traj.shape)}")
        if traj.shape[0] == 0:
            return traj.new_zeros(0, self.enc_dim)
        x = F.leaky_relu(self.conv(traj.transpose(1, 2)), self.leaky_slope)
        _, (h, _) = self.lstm(x.transpose(1, 2))
        return h[-1]


def init_params(
    role: Role,
    seed: int,
    embed_dim: int = 32,
    enc_dim: int = 64,
    kernel: int = 3,
    leaky_slope: float = 0.1,
) -> TemporalEncoder:
    """A freshly initialised encoder for one role; the role selects the random stream."""
    encoder = TemporalEncoder(role, embed_dim=embed_dim, enc_dim=enc_dim, kernel=kernel, leaky_slope=leaky_slope)
    return init_uniform_(encoder, seed, role)


def encode(
    traj: Union[np.ndarray, torch.Tensor],
    encoder: TemporalEncoder,
    reference: Optional[Union[np.ndarray, torch.Tensor]] = None,
) -> torch.Tensor:
    """Encodes a single [T, 2] trajectory, optionally re-expressed relative to `reference`."""
    param = next(encoder.parameters())
    points = torch.as_tensor(traj, dtype=param.dtype)
    if points.dim() != 2 or points.shape[-1] != 2:
        raise ShapeError(f"expected a [T, 2] trajectory, got {tuple(points.shape)}")
    if points.shape[0] < 2:
        raise ShapeError(f"a trajectory needs at least 2 points to encode, got {points.shape[0]}")
    if not torch.isfinite(points).all():
        raise ValueError("trajectory contains non-finite values")
    if reference is not None:
        points = points - torch.as_tensor(reference, dtype=param.dtype).reshape(1, 2)
    return encoder(points.unsqueeze(0))[0]
