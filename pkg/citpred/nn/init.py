"""Seeded fan-in uniform initialisation, one random stream per parameter group."""
import math
from typing import Dict

import torch
from torch import nn

# Stream offsets added to the run seed; every parameter group draws from its own.
STREAM_OFFSETS: Dict[str, int] = {
    "target": 1,
    "ego": 2,
    "neighbor": 3,
    "pool_c": 11,
    "pool_f": 12,
    "attn_c": 21,
    "attn_f": 22,
    "influence": 31,
    "fcn": 41,
    "maneuver": 51,
    "decoder": 61,
}
_STREAM_STRIDE = 1000


def stream_generator(seed: int, group: str) -> torch.Generator:
    if group not in STREAM_OFFSETS:
        raise KeyError(f"Unknown parameter group '{group}'")
    return torch.Generator().manual_seed(int(seed) * _STREAM_STRIDE + STREAM_OFFSETS[group])


def init_uniform_(module: nn.Module, seed: int, group: str) -> nn.Module:
    """Fills every parameter with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Weights use their own fan-in (input features times kernel size); biases reuse
    the fan-in of the weight registered just before them. Draws are made in
    double precision so float32 and float64 models start from the same values.
    """
    gen = stream_generator(seed, group)
    fan_in = 1
    with torch.no_grad():
        for _, param in module.named_parameters():
            if param.dim() >= 2:
                fan_in = param.shape[1] * math.prod(param.shape[2:])
            bound = 1.0 / math.sqrt(max(fan_in, 1))
            values = torch.rand(param.shape, generator=gen, dtype=torch.float64) * (2.0 * bound) - bound
            param.copy_(values.to(param.dtype))
    return module
