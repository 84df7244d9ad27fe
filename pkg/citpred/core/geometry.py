"""Grid geometry: which cell of an agent-centric grid a relative position falls in.

Rows run along the direction of travel (row 0 is the rearmost), columns across
lanes (column 0 is leftmost). Cells are half-open, so a position exactly on an
interior edge belongs to the higher-index cell.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from citpred.schemas import GridSpec


def grid_cell_of(pos: Sequence[float], spec: GridSpec) -> Optional[Tuple[int, int]]:
    """Returns (row, col) for a position relative to the grid-center agent, or None outside the grid."""
    x, y = float(pos[0]), float(pos[1])
    rows, cols = spec.row_edges(), spec.col_edges()
    if not (rows[0] <= x < rows[-1] and cols[0] <= y < cols[-1]):
        return None
    row = int(np.searchsorted(rows, x, side="right")) - 1
    col = int(np.searchsorted(cols, y, side="right")) - 1
    return row, col


def cells_of(positions: np.ndarray, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised grid_cell_of: returns (inside mask, rows, cols); rows/cols are -1 outside."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    row_edges, col_edges = spec.row_edges(), spec.col_edges()
    x, y = positions[:, 0], positions[:, 1]
    inside = (x >= row_edges[0]) & (x < row_edges[-1]) & (y >= col_edges[0]) & (y < col_edges[-1])
    rows = np.where(inside, np.searchsorted(row_edges, x, side="right") - 1, -1)
    cols = np.where(inside, np.searchsorted(col_edges, y, side="right") - 1, -1)
    return inside, rows.astype(np.int64), cols.astype(np.int64)


def assign_cells(
    positions: np.ndarray,
    spec: GridSpec,
    owners: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Places many agents on (possibly many) grids with one agent per cell.

    `owners[i]` names the grid agent i is placed on (default: a single grid).
    Agents outside their grid are dropped; when several share a cell the one
    nearest the grid center is kept (ties go to the lower input index).
    Returns (kept indices, rows, cols) sorted by input index.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if owners is None:
        owners = np.zeros(len(positions), dtype=np.int64)
    owners = np.asarray(owners, dtype=np.int64)
    inside, rows, cols = cells_of(positions, spec)
    dist = np.hypot(positions[:, 0], positions[:, 1])

    winner = {}
    for i in np.flatnonzero(inside):
        key = (int(owners[i]), int(rows[i]), int(cols[i]))
        best = winner.get(key)
        if best is None or dist[i] < dist[best]:
            winner[key] = i
    kept = np.array(sorted(winner.values()), dtype=np.int64)
    return kept, rows[kept], cols[kept]


def cell_center(row: int, col: int, spec: GridSpec) -> np.ndarray:
    rows, cols = spec.row_edges(), spec.col_edges()
    return np.array([(rows[row] + rows[row + 1]) / 2.0, (cols[col] + cols[col + 1]) / 2.0])


def own_cell_index(spec: GridSpec) -> int:
    """Row-major index of the cell holding the grid-center agent in a flattened [rows * cols] matrix."""
    centers = np.array([cell_center(r, c, spec) for r in range(spec.rows) for c in range(spec.cols)])
    return int(np.argmin(np.hypot(centers[:, 0], centers[:, 1])))
