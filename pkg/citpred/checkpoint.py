"""Binary checkpoint file.

Layout (integers little-endian):
    bytes 0-7    magic b"CITCKPT\\x01"
    bytes 8-11   uint32 header length N
    next N bytes UTF-8 JSON header (CheckpointHeader)
    remainder    tensor blob; each tensor C-contiguous little-endian at its offset
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, Field, ValidationError

from citpred.core.config import RunConfig
from citpred.core.errors import DataFormatError, DimensionMismatchError, MissingFileError
from citpred.nn.predictor import IntentionPredictor

logger = logging.getLogger(__name__)

MAGIC = b"CITCKPT\x01"
FORMAT_ID = "citpred-checkpoint"
LAYOUT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}
_NATIVE = {"<f4": np.float32, "<f8": np.float64}


class TensorEntry(BaseModel):
    name: str
    dtype: Literal["<f4", "<f8"]
    shape: List[int]
    offset: int = Field(ge=0)
    nbytes: int = Field(ge=0)


class CheckpointMeta(BaseModel):
    epoch: int = 0
    val_loss: Optional[float] = None
    initial_train_loss: Optional[float] = None  # untrained parameters, before epoch 1
    train_losses: List[float] = Field(default_factory=list)
    val_losses: List[float] = Field(default_factory=list)


class CheckpointHeader(BaseModel):
    format: Literal["citpred-checkpoint"] = FORMAT_ID
    layout_version: int = LAYOUT_VERSION
    config: Dict[str, Any]
    meta: CheckpointMeta = Field(default_factory=CheckpointMeta)
    tensors: List[TensorEntry]


def save_checkpoint(
    path: Union[str, Path], model: IntentionPredictor, meta: Optional[CheckpointMeta] = None
) -> Path:
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        code = _DTYPES.get(tensor.dtype)
        if code is None:
            raise DataFormatError(f"cannot store parameter {name} of dtype {tensor.dtype}")
        data = np.ascontiguousarray(tensor.detach().cpu().numpy().astype(code, copy=False)).tobytes()
        entries.append(TensorEntry(name=name, dtype=code, shape=list(tensor.shape), offset=offset, nbytes=len(data)))
        chunks.append(data)
        offset += len(data)

    header = CheckpointHeader(config=model.cfg.model_dump(mode="json"), meta=meta or CheckpointMeta(), tensors=entries)
    header_bytes = header.model_dump_json().encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)
    logger.info(f"Saved checkpoint ({len(entries)} tensors, {offset} bytes) to {path}")
    return path


def read_header(path: Union[str, Path]) -> Tuple[CheckpointHeader, bytes]:
    """Returns the validated header and the raw tensor blob."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path} is not a citpred checkpoint (bad magic)")
    (length,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = CheckpointHeader.model_validate(json.loads(raw[start : start + length].decode("utf-8")))
    except (ValidationError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataFormatError(f"Corrupt checkpoint header in {path}: {e}") from e
    if header.layout_version != LAYOUT_VERSION:
        raise DataFormatError(f"Checkpoint layout v{header.layout_version} is not supported (expected v{LAYOUT_VERSION})")
    return header, raw[start + length :]


def load_checkpoint(
    path: Union[str, Path], cfg: Optional[RunConfig] = None
) -> Tuple[IntentionPredictor, CheckpointMeta]:
    """Rebuilds the predictor; `cfg` (when given) must agree on every model-defining field.

    Runtime fields of `cfg` (dtype, workers, evaluation options) take precedence
    over the stored ones.
    """
    header, blob = read_header(path)
    stored = RunConfig(**header.config)
    if cfg is None:
        cfg = stored
    else:
        mine, theirs = cfg.model_signature(), stored.model_signature()
        diff = {k: (theirs[k], mine[k]) for k in mine if mine[k] != theirs[k]}
        if diff:
            details = ", ".join(f"{k}: checkpoint={a!r} config={b!r}" for k, (a, b) in diff.items())
            raise DimensionMismatchError(f"Checkpoint {path} does not match the configuration ({details})")

    model = IntentionPredictor(cfg)
    expected = model.state_dict()
    stored_names = {e.name for e in header.tensors}
    if stored_names != set(expected):
        missing = sorted(set(expected) - stored_names)
        extra = sorted(stored_names - set(expected))
        raise DimensionMismatchError(f"Checkpoint parameter groups differ (missing {missing}, unexpected {extra})")

    state = {}
    for entry in header.tensors:
        if tuple(entry.shape) != tuple(expected[entry.name].shape):
            raise DimensionMismatchError(
                f"Parameter {entry.name}: checkpoint shape {entry.shape} vs model {list(expected[entry.name].shape)}"
            )
        if entry.offset + entry.nbytes > len(blob):
            raise DataFormatError(f"Checkpoint {path} is truncated at tensor {entry.name}")
        count = int(np.prod(entry.shape, dtype=np.int64))
        array = np.frombuffer(blob, dtype=entry.dtype, count=count, offset=entry.offset).reshape(entry.shape)
        state[entry.name] = torch.from_numpy(array.astype(_NATIVE[entry.dtype]))
    model.load_state_dict(state)
    model.to(torch.float64 if cfg.dtype == "float64" else torch.float32)
    logger.info(f"Loaded checkpoint {path} (epoch {header.meta.epoch}, val loss {header.meta.val_loss})")
    return model, header.meta
