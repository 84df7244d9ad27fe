"""Reading, resampling and writing per-agent track tables."""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Union

import numpy as np
import pandas as pd

from citpred.core.errors import DataFormatError, MissingFileError, TrackFormatError, UnknownFormatError
from citpred.core.units import convert_units
from citpred.schemas import AgentTrack

logger = logging.getLogger(__name__)

TrackFormat = Literal["ngsim", "highd", "synthetic-native"]


@dataclass(frozen=True)
class TrackLayout:
    id: str
    frame: str
    x: str  # longitudinal
    y: str  # lateral
    lane: str
    unit: Literal["feet", "meters"]
    rate: int


# NGSIM's Local_Y runs along the road and Local_X across it.
LAYOUTS: Dict[str, TrackLayout] = {
    "ngsim": TrackLayout("Vehicle_ID", "Frame_ID", "Local_Y", "Local_X", "Lane_ID", "feet", 10),
    "highd": TrackLayout("id", "frame", "x", "y", "laneId", "meters", 25),
    "synthetic-native": TrackLayout("id", "frame", "x_m", "y_m", "lane", "meters", 5),
}


def _numeric_column(df: pd.DataFrame, column: str, integer: bool) -> np.ndarray:
    series = df[column]
    if not pd.api.types.is_numeric_dtype(series):
        coerced = pd.to_numeric(series, errors="coerce")
        first = int(np.flatnonzero(coerced.isna().to_numpy())[0])
        # +2: one header line and 1-based numbering
        raise TrackFormatError(f"cannot parse value {series.iloc[first]!r}", line=first + 2, column=column)
    values = series.to_numpy()
    missing = np.flatnonzero(pd.isna(values))
    if missing.size:
        raise TrackFormatError("missing value", line=int(missing[0]) + 2, column=column)
    if integer:
        if not np.all(np.equal(np.mod(values, 1), 0)):
            first = int(np.flatnonzero(np.mod(values, 1) != 0)[0])
            raise TrackFormatError(f"expected an integer, got {values[first]!r}", line=first + 2, column=column)
        return values.astype(np.int64)
    return values.astype(np.float64)


def load_tracks(path: Union[str, Path], format: str) -> List[AgentTrack]:
    """Loads one AgentTrack per vehicle id, positions converted to meters."""
    if format not in LAYOUTS:
        raise UnknownFormatError(f"Unknown track format '{format}'. Expected one of {sorted(LAYOUTS)}")
    layout = LAYOUTS[format]
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Track file not found: {path}")

    logger.info(f"Loading {format} tracks from {path}...")
    try:
        df = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        logger.warning(f"Track file {path} is empty.")
        return []
    except pd.errors.ParserError as e:
        # pandas reports the 1-based file line of the first ragged row
        found = re.search(r"line (\d+)", str(e))
        raise TrackFormatError(f"malformed row: {e}", line=int(found.group(1)) if found else None) from e

    for column in (layout.id, layout.frame, layout.x, layout.y, layout.lane):
        if column not in df.columns:
            raise TrackFormatError(f"missing expected column (have {list(df.columns)})", line=1, column=column)
    if df.empty:
        return []

    ids = _numeric_column(df, layout.id, integer=True)
    frames = _numeric_column(df, layout.frame, integer=True)
    xs = convert_units(_numeric_column(df, layout.x, integer=False), layout.unit)
    ys = convert_units(_numeric_column(df, layout.y, integer=False), layout.unit)
    lanes = _numeric_column(df, layout.lane, integer=True)

    tracks = []
    for vehicle_id in np.unique(ids):
        rows = np.flatnonzero(ids == vehicle_id)  # file order
        vehicle_frames = frames[rows]
        steps = np.diff(vehicle_frames)
        if np.any(steps <= 0):
            offending = int(rows[np.flatnonzero(steps <= 0)[0] + 1])
            raise TrackFormatError(
                f"non-monotonic frame ids for vehicle {int(vehicle_id)}", line=offending + 2, column=layout.frame
            )
        tracks.append(
            AgentTrack(
                agent_id=int(vehicle_id),
                frames=vehicle_frames,
                positions=np.stack([xs[rows], ys[rows]], axis=1),
                lane_ids=lanes[rows],
                source_rate=layout.rate,
            )
        )
    logger.info(f"Loaded {len(tracks)} tracks ({len(df)} rows) from {path}")
    return tracks


def resample_tracks(tracks: Sequence[AgentTrack], target_rate: int = 5) -> List[AgentTrack]:
    """Decimates tracks to target_rate, keeping frames on the common target-rate clock."""
    resampled = []
    for track in tracks:
        ratio, remainder = divmod(track.source_rate, target_rate)
        if remainder or ratio < 1:
            raise DataFormatError(
                f"agent {track.agent_id}: source rate {track.source_rate} Hz is not an integer multiple of {target_rate} Hz"
            )
        if ratio == 1:
            resampled.append(track)
            continue
        keep = track.frames % ratio == 0
        if not np.any(keep):
            logger.debug(f"Agent {track.agent_id} has no frame on the {target_rate} Hz clock; dropped.")
            continue
        resampled.append(
            AgentTrack(
                agent_id=track.agent_id,
                frames=track.frames[keep] // ratio,
                positions=track.positions[keep],
                lane_ids=track.lane_ids[keep],
                source_rate=target_rate,
            )
        )
    return resampled


def write_tracks(tracks: Sequence[AgentTrack], path: Union[str, Path]) -> Path:
    """Writes tracks in the synthetic-native layout (meters, 5 Hz)."""
    layout = LAYOUTS["synthetic-native"]
    frames = [
        pd.DataFrame(
            {
                layout.id: np.full(len(t), t.agent_id, dtype=np.int64),
                layout.frame: t.frames,
                layout.x: t.positions[:, 0],
                layout.y: t.positions[:, 1],
                layout.lane: t.lane_ids,
            }
        )
        for t in tracks
    ]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=[layout.id, layout.frame, layout.x, layout.y, layout.lane]
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(tracks)} tracks ({len(df)} rows) to {path}")
    return path
