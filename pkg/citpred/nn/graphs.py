"""Social tensors and the per-domain intention graphs built from them.

Tensors are channel-last ([N, H, W, C]) at module boundaries and channel-first
only inside the convolution stacks.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from citpred.core.errors import ShapeError
from citpred.core.geometry import assign_cells
from citpred.schemas import GridSpec


@dataclass
class SocialTensor:
    grid: torch.Tensor  # [N, H, W, D]
    occupancy: torch.Tensor  # [N, H, W], 0/1

    def __len__(self) -> int:
        return self.grid.shape[0]


def scatter(
    encodings: torch.Tensor,
    positions: np.ndarray,
    grid: GridSpec,
    owners: Optional[np.ndarray] = None,
    count: int = 1,
) -> SocialTensor:
    """Writes each encoding into its cell of its owner's grid.

    Positions are relative to the owner (the grid-center agent). Agents outside
    the grid are dropped; one agent per cell, nearest to the center wins.
    """
    if encodings.dim() != 2:
        raise ShapeError(f"expected [M, D] encodings, got {tuple(encodings.shape)}")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if len(positions) != encodings.shape[0]:
        raise ShapeError(f"{encodings.shape[0]} encodings but {len(positions)} positions")
    if owners is None:
        owners = np.zeros(len(positions), dtype=np.int64)
    kept, rows, cols = assign_cells(positions, grid, owners)

    tensor = encodings.new_zeros(count, grid.rows, grid.cols, encodings.shape[1])
    occupancy = encodings.new_zeros(count, grid.rows, grid.cols)
    if len(kept):
        index = (
            torch.as_tensor(np.asarray(owners, dtype=np.int64)[kept]),
            torch.as_tensor(rows),
            torch.as_tensor(cols),
        )
        tensor = tensor.index_put(index, encodings[torch.as_tensor(kept)])
        occupancy = occupancy.index_put(index, occupancy.new_ones(len(kept)))
    return SocialTensor(grid=tensor, occupancy=occupancy)


class SocialPooling(nn.Module):
    """Convolutional social pooling fused with the target encoding.

    Two 3x3 same-padding convolutions, a stride-1 (2, 1) max-pool that keeps the
    H x W resolution, then a 1x1 convolution over [pooled context, target encoding].
    """

    def __init__(self, enc_dim: int = 64, leaky_slope: float = 0.1):
        super().__init__()
        self.enc_dim = enc_dim
        self.leaky_slope = leaky_slope
        self.conv1 = nn.Conv2d(enc_dim, enc_dim, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(enc_dim, enc_dim, kernel_size=3, padding=1)
        self.fuse = nn.Conv2d(2 * enc_dim, enc_dim, kernel_size=1)

    def forward(self, target_enc: torch.Tensor, social: SocialTensor) -> torch.Tensor:
        n, h, w, d = social.grid.shape
        if d != self.enc_dim or target_enc.shape != (n, self.enc_dim) or social.occupancy.shape != (n, h, w):
            raise ShapeError(
                f"pooling expects grid [N, H, W, {self.enc_dim}] and target [N, {self.enc_dim}], "
                f"got {tuple(social.grid.shape)} and {tuple(target_enc.shape)}"
            )
        mask = social.occupancy.unsqueeze(1)
        x = social.grid.permute(0, 3, 1, 2) * mask
        x = F.leaky_relu(self.conv1(x), self.leaky_slope)
        x = F.leaky_relu(self.conv2(x), self.leaky_slope)
        # Replicating the last row lets a (2, 1) window slide with stride 1 without shrinking H.
        x = F.max_pool2d(F.pad(x, (0, 0, 0, 1), mode="replicate"), kernel_size=(2, 1), stride=1)
        target = target_enc[:, :, None, None].expand(-1, -1, h, w)
        fused = F.leaky_relu(self.fuse(torch.cat([x, target], dim=1)), self.leaky_slope)
        return torch.cat([fused, mask], dim=1).permute(0, 2, 3, 1)


def build_graph(target_enc: torch.Tensor, social: SocialTensor, params: SocialPooling) -> torch.Tensor:
    """Single- or multi-target intention graph of shape [(N,) H, W, D+1]."""
    if target_enc.dim() == 1:
        if len(social) != 1:
            raise ShapeError(f"one target encoding but {len(social)} social tensors")
        return params(target_enc.unsqueeze(0), social)[0]
    return params(target_enc, social)


def build_current_graph(
    target_enc: torch.Tensor,
    neighbor_encs: torch.Tensor,
    neighbor_positions: np.ndarray,
    params: SocialPooling,
    grid: GridSpec,
) -> torch.Tensor:
    """Current-domain graph from neighbor encodings placed relative to the target."""
    social = scatter(neighbor_encs.reshape(-1, target_enc.shape[-1]), neighbor_positions, grid)
    return build_graph(target_enc, social, params)


def build_future_graph(
    target_enc: torch.Tensor,
    ego_plan_enc: torch.Tensor,
    ego_position: np.ndarray,
    params: SocialPooling,
    grid: GridSpec,
) -> torch.Tensor:
    """Future-domain graph: the ego-plan encoding at the ego's position relative to the target."""
    social = scatter(ego_plan_enc.reshape(1, -1), np.asarray(ego_position).reshape(1, 2), grid)
    return build_graph(target_enc, social, params)
