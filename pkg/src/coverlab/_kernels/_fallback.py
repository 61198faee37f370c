"""NumPy implementations of the hot array kernels.

Same contracts as the Cython module `_native`; outputs are bit-identical.
"""

import numpy as np

BACKEND = "fallback"


def mark_intervals(lo, hi, n_cells, out=None):
    """Flag cells lo[i]..hi[i] (inclusive) in a uint8 mask of length n_cells.

    Indices must already be clipped to [0, n_cells - 1]; pairs with
    lo[i] > hi[i] are ignored.
    """
    if out is None:
        out = np.zeros(n_cells, dtype=np.uint8)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    keep = lo <= hi
    if not keep.all():
        lo, hi = lo[keep], hi[keep]
    if lo.size:
        delta = np.zeros(n_cells + 1, dtype=np.int64)
        np.add.at(delta, lo, 1)
        np.add.at(delta, hi + 1, -1)
        covered = np.cumsum(delta[:-1]) > 0
        np.logical_or(out, covered, out=out.view(bool))
    return out


def runs_from_mask(mask):
    """Maximal runs of 1-cells: returns (starts, ends), ends inclusive."""
    m = np.asarray(mask, dtype=np.int8)
    d = np.diff(m, prepend=np.int8(0), append=np.int8(0))
    starts = np.flatnonzero(d == 1).astype(np.int64)
    ends = (np.flatnonzero(d == -1) - 1).astype(np.int64)
    return starts, ends


def window_counts(prefix, lo, hi):
    """Flagged-cell counts over windows lo[i]..hi[i] (inclusive).

    `prefix` is the 0-prepended cumulative sum of the mask, so
    count = prefix[hi + 1] - prefix[lo].
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    return prefix[hi + 1] - prefix[lo]
