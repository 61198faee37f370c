"""Compact subsets of [0,1] as dyadic-cell bitmasks.

A grid set at resolution depth D is a bitmask over the 2**D closed cells
[i/2**D, (i+1)/2**D]. Cells are closed and overlap at shared endpoints: a
point sitting exactly on a cell boundary flags both adjacent cells, so the
mask is always a superset of the compact set it stands for and emptiness
conclusions drawn from it are conservative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MAX_DEPTH = 26  # 2**26-bit masks (8 MiB) keep per-cell operator scans tractable


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSet:
    """Bitmask over the dyadic cells of [0,1] at resolution 2**-depth."""

    depth: int
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (1 <= self.depth <= MAX_DEPTH):
            raise GridError(f"depth must be in [1, {MAX_DEPTH}], got {self.depth}")
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.shape != (1 << self.depth,):
            raise GridError("cell mask length must be exactly 2**depth")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def n_cells(self) -> int:
        return 1 << self.depth

    @property
    def cell_width(self) -> float:
        return 2.0 ** -self.depth

    def runs(self):
        """Maximal flagged runs as (starts, ends), ends inclusive."""
        return _kernels.runs_from_mask(self.cells)

    def __eq__(self, other):
        return (isinstance(other, GridSet) and self.depth == other.depth
                and np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash((self.depth, self.cells.tobytes()))

    def to_json(self) -> str:
        starts, ends = self.runs()
        runs = [[int(s), int(e)] for s, e in zip(starts, ends)]
        return json.dumps({"depth": self.depth, "runs": runs})

    @classmethod
    def from_json(cls, text: str) -> "GridSet":
        doc = json.loads(text)
        depth = int(doc["depth"])
        mask = np.zeros(1 << depth, dtype=np.uint8)
        runs = doc.get("runs", [])
        if runs:
            arr = np.asarray(runs, dtype=np.int64)
            _kernels.mark_intervals(arr[:, 0], arr[:, 1], 1 << depth, out=mask)
        return cls(depth, mask)


def _cell_span(x1: float, x2: float, depth: int):
    """Cells intersecting the closed interval [x1, x2]; boundaries flag both sides.

    Multiplying by 2**depth only shifts the float exponent, so the scaled
    coordinates and the ceil/floor below are exact.
    """
    scale = float(1 << depth)
    lo = math.ceil(x1 * scale) - 1
    hi = math.floor(x2 * scale)
    return max(lo, 0), min(hi, (1 << depth) - 1)


def make_grid_set(intervals, points, depth: int) -> GridSet:
    """Mask flagging every cell that meets an interval or contains a point.

    intervals: iterable of (x1, x2) with 0 <= x1 <= x2 <= 1.
    points: iterable of reals in [0,1].
    """
    if not (1 <= depth <= MAX_DEPTH):
        raise GridError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")
    spans = []
    for x1, x2 in intervals:
        if not (0.0 <= x1 <= x2 <= 1.0):
            raise GridError(f"interval [{x1}, {x2}] not inside [0,1]")
        spans.append(_cell_span(x1, x2, depth))
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.size:
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise GridError("points must lie in [0,1]")
        scale = float(1 << depth)
        v = pts * scale
        lo = np.maximum(np.ceil(v).astype(np.int64) - 1, 0)
        hi = np.minimum(np.floor(v).astype(np.int64), (1 << depth) - 1)
    else:
        lo = np.empty(0, dtype=np.int64)
        hi = np.empty(0, dtype=np.int64)
    if spans:
        s = np.asarray(spans, dtype=np.int64)
        lo = np.concatenate([lo, s[:, 0]])
        hi = np.concatenate([hi, s[:, 1]])
    mask = np.zeros(1 << depth, dtype=np.uint8)
    _kernels.mark_intervals(lo, hi, 1 << depth, out=mask)
    return GridSet(depth, mask)


def empty_set(depth: int) -> GridSet:
    return GridSet(depth, np.zeros(1 << depth, dtype=np.uint8))


def full_set(depth: int) -> GridSet:
    return GridSet(depth, np.ones(1 << depth, dtype=np.uint8))


def neighborhood(s: GridSet, r: float) -> GridSet:
    """Dilation by ceil(r * 2**depth) cells per side, clipped to [0,1].

    Rounding up keeps the result a superset of the true r-neighborhood.
    """
    if r <= 0.0:
        raise GridError("neighborhood radius must be positive")
    w = math.ceil(r * float(1 << s.depth))
    return dilate_cells(s, w)


def dilate_cells(s: GridSet, w: int) -> GridSet:
    """Dilation by an integer number of cells per side."""
    if w < 0:
        raise GridError("dilation width must be nonnegative")
    if w == 0:
        return s
    starts, ends = s.runs()
    if starts.size == 0:
        return s
    n = s.n_cells
    lo = np.maximum(starts - w, 0)
    hi = np.minimum(ends + w, n - 1)
    mask = np.zeros(n, dtype=np.uint8)
    _kernels.mark_intervals(lo, hi, n, out=mask)
    return GridSet(s.depth, mask)


def _check_same_depth(s1: GridSet, s2: GridSet):
    if s1.depth != s2.depth:
        raise GridError(f"resolution mismatch: {s1.depth} vs {s2.depth}")


def intersect(s1: GridSet, s2: GridSet) -> GridSet:
    _check_same_depth(s1, s2)
    return GridSet(s1.depth, s1.cells & s2.cells)


def union(s1: GridSet, s2: GridSet) -> GridSet:
    _check_same_depth(s1, s2)
    return GridSet(s1.depth, s1.cells | s2.cells)


def is_empty(s: GridSet) -> bool:
    return not bool(s.cells.any())


def cell_count(s: GridSet) -> int:
    return int(s.cells.sum(dtype=np.int64))


@dataclass(frozen=True)
class DimensionEstimate:
    """Box-counting dimension from a log-log regression.

    value is the least-squares slope of log N_delta against log(1/delta);
    stderr is the standard error of that slope. scale_pairs records the
    (delta, count) data the fit used, delta strictly decreasing.
    """

    value: float
    stderr: float
    scale_pairs: tuple

    def __post_init__(self):
        if self.stderr < 0.0:
            raise GridError("stderr must be nonnegative")
        deltas = [d for d, _ in self.scale_pairs]
        counts = [c for _, c in self.scale_pairs]
        if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
            raise GridError("scale_pairs must be strictly decreasing in delta")
        if any(c < 1 for c in counts):
            raise GridError("all counts must be >= 1")
        if not (-1e-12 <= self.value <= 1.0 + 3.0 * self.stderr + 1e-12):
            raise GridError(
                f"dimension estimate {self.value} outside [0, 1 + 3*stderr]")


def box_dimension(scale_pairs) -> DimensionEstimate:
    """Least-squares fit of log N against log(1/delta).

    Requires at least 3 scales, deltas strictly decreasing, counts >= 1.
    """
    pairs = [(float(d), int(c)) for d, c in scale_pairs]
    if len(pairs) < 3:
        raise GridError("need at least 3 scale pairs")
    if any(c < 1 for _, c in pairs):
        raise GridError("zero count in scale pairs")
    x = np.log(1.0 / np.array([d for d, _ in pairs]))
    y = np.log(np.array([c for _, c in pairs], dtype=np.float64))
    slope, stderr = _ls_slope(x, y)
    if -1e-12 <= slope < 0.0:
        slope = 0.0
    return DimensionEstimate(slope, stderr, tuple(pairs))


def _ls_slope(x: np.ndarray, y: np.ndarray):
    n = x.size
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ y) / sxx
    resid = y - y.mean() - slope * xm
    ss_res = float(resid @ resid)
    stderr = math.sqrt(max(ss_res, 0.0) / (n - 2) / sxx) if n > 2 else 0.0
    return slope, stderr


def count_boxes(s: GridSet, coarse_depth: int) -> int:
    """Number of cells at a coarser dyadic scale meeting the set."""
    if coarse_depth > s.depth:
        raise GridError("coarse depth must not exceed the mask depth")
    factor = 1 << (s.depth - coarse_depth)
    blocks = s.cells.reshape(1 << coarse_depth, factor)
    return int(blocks.any(axis=1).sum(dtype=np.int64))
