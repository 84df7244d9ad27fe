"""Cross-domain attention between intention graphs and the per-domain influence weights."""
import math
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from citpred.core.errors import ShapeError


def flatten_graph(graph: torch.Tensor) -> torch.Tensor:
    """[..., H, W, C] -> [..., H*W, C]; row r is cell (r // W, r % W)."""
    if graph.dim() < 3:
        raise ShapeError(f"expected an [..., H, W, C] graph, got {tuple(graph.shape)}")
    *lead, h, w, c = graph.shape
    return graph.reshape(*lead, h * w, c)


def unflatten_graph(mat: torch.Tensor, rows: int, cols: int) -> torch.Tensor:
    if mat.dim() < 2 or mat.shape[-2] != rows * cols:
        raise ShapeError(f"cannot reshape {tuple(mat.shape)} into a {rows}x{cols} grid")
    return mat.reshape(*mat.shape[:-2], rows, cols, mat.shape[-1])


class CrossAttention(nn.Module):
    """Scaled dot-product attention from query rows to key/value rows, then a row-wise FC."""

    def __init__(self, in_dim: int = 65, attn_dim: int = 64, heads: int = 1, leaky_slope: float = 0.1):
        super().__init__()
        if attn_dim % heads:
            raise ValueError(f"attention heads ({heads}) must divide attention dim ({attn_dim})")
        self.in_dim = in_dim
        self.attn_dim = attn_dim
        self.heads = heads
        self.leaky_slope = leaky_slope
        self.query = nn.Linear(in_dim, attn_dim)
        self.key = nn.Linear(in_dim, attn_dim)
        self.value = nn.Linear(in_dim, attn_dim)
        self.fc = nn.Linear(attn_dim, attn_dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        n, r, _ = x.shape
        return x.reshape(n, r, self.heads, self.attn_dim // self.heads).transpose(1, 2)

    def forward(self, mq: torch.Tensor, mkv: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (attended [N, R, attn_dim], attention weights [N, heads, R, R])."""
        if mq.dim() != 3 or mq.shape != mkv.shape or mq.shape[-1] != self.in_dim:
            raise ShapeError(
                f"attention expects matching [N, R, {self.in_dim}] inputs, got {tuple(mq.shape)} and {tuple(mkv.shape)}"
            )
        q, k, v = self._split(self.query(mq)), self._split(self.key(mkv)), self._split(self.value(mkv))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.attn_dim // self.heads)
        weights = torch.softmax(scores, dim=-1)
        attended = (weights @ v).transpose(1, 2).reshape(mq.shape[0], mq.shape[1], self.attn_dim)
        return F.leaky_relu(self.fc(attended), self.leaky_slope), weights


def cross_attend(mq: torch.Tensor, mkv: torch.Tensor, params: CrossAttention) -> torch.Tensor:
    """Attended matrix for one ([R, C]) or many ([N, R, C]) query/key pairs."""
    if mq.dim() == 2:
        return params(mq.unsqueeze(0), mkv.unsqueeze(0))[0][0]
    return params(mq, mkv)[0]


def readout(mat: torch.Tensor, mode: str = "mean", row: Optional[int] = None) -> torch.Tensor:
    """Reduces [..., R, C] to [..., C]: mean over rows, or the row of the target's own cell."""
    if mode == "mean":
        return mat.mean(dim=-2)
    if mode == "target_cell":
        if row is None:
            raise ValueError("target_cell readout needs the target's row index")
        return mat[..., row, :]
    raise ValueError(f"Unknown intention readout '{mode}'")


def fuse_cross(mc: torch.Tensor, mf: torch.Tensor) -> torch.Tensor:
    """I = mean-pooled current half followed by mean-pooled future half."""
    if mc.shape != mf.shape:
        raise ShapeError(f"attended matrices differ in shape: {tuple(mc.shape)} vs {tuple(mf.shape)}")
    return torch.cat([readout(mc), readout(mf)], dim=-1)


class InfluenceEvaluation(nn.Module):
    """Softmax weights over the two time domains from their low-level graphs.

    Each graph is max-pooled to (pool_rows, 1), flattened, joined with the target
    encoding and mapped to a context vector; one scorer shared by both domains
    turns each context into a logit.
    """

    def __init__(
        self,
        graph_channels: int = 65,
        enc_dim: int = 64,
        ctx_dim: int = 64,
        pool_rows: int = 5,
        leaky_slope: float = 0.1,
    ):
        super().__init__()
        self.graph_channels = graph_channels
        self.pool_rows = pool_rows
        self.leaky_slope = leaky_slope
        self.pool = nn.AdaptiveMaxPool2d((pool_rows, 1))
        self.context = nn.Linear(pool_rows * graph_channels + enc_dim, ctx_dim)
        self.scorer = nn.Linear(ctx_dim, 1)

    def domain_context(self, graph: torch.Tensor, target_enc: torch.Tensor) -> torch.Tensor:
        if graph.dim() != 4 or graph.shape[-1] != self.graph_channels:
            raise ShapeError(f"expected [N, H, W, {self.graph_channels}] graphs, got {tuple(graph.shape)}")
        pooled = self.pool(graph.permute(0, 3, 1, 2)).flatten(start_dim=1)
        return F.leaky_relu(self.context(torch.cat([pooled, target_enc], dim=-1)), self.leaky_slope)

    def forward(
        self, graph_c: torch.Tensor, graph_f: torch.Tensor, target_enc: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (beta [N, 2], G [N, 2 * ctx_dim])."""
        if graph_c.shape != graph_f.shape:
            raise ShapeError(f"domain graphs differ in shape: {tuple(graph_c.shape)} vs {tuple(graph_f.shape)}")
        ctx_c = self.domain_context(graph_c, target_enc)
        ctx_f = self.domain_context(graph_f, target_enc)
        logits = torch.cat([self.scorer(ctx_c), self.scorer(ctx_f)], dim=-1)
        beta = torch.softmax(logits, dim=-1)
        return beta, torch.cat([beta[:, :1] * ctx_c, beta[:, 1:] * ctx_f], dim=-1)


def influence_weights(
    graph_c: torch.Tensor, graph_f: torch.Tensor, target_enc: torch.Tensor, params: InfluenceEvaluation
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(beta1, beta2, G) for a single target ([H, W, C] graphs, [D] encoding) or a batch."""
    single = graph_c.dim() == 3
    if single:
        graph_c, graph_f, target_enc = graph_c.unsqueeze(0), graph_f.unsqueeze(0), target_enc.unsqueeze(0)
    beta, g = params(graph_c, graph_f, target_enc)
    if single:
        return beta[0, 0], beta[0, 1], g[0]
    return beta[:, 0], beta[:, 1], g


def intention_vector(i: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Z = I followed by G."""
    return torch.cat([i, g], dim=-1)
