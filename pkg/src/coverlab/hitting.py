"""Discretized hitting operator, divergence classifier, and fixed-point iteration.

The operator keeps the cells of a compact set whose center x makes the series
sum_k mu(B(x, r_probe) & K(r_k)) * (2 r_k)^t look divergent. Compact targets
are carried as CompactFamily values: finite unions of closed intervals
(points are degenerate intervals) at full float precision. A bare GridSet is
accepted too and realizes as the union of its closed cells; that fattened
reading is conservative, so thin targets (towers, Cantor sets, singletons)
should be passed as families.

For Lebesgue background measure the series terms are exact: the covered
length F(r) = |ball & union(member +- r)| is piecewise linear in r, and the
uncovered remainder decomposes gap by gap into a constant plus four hinge
functions of r. Partial sums over k then reduce to prefix sums of the radius
sequence; there is no per-k loop. For other measures, dilations are rounded
up to whole cells and masses are grouped by dilation width.

Divergence is undecidable from finitely many terms; the classifier fits the
slope of log2(partial sum) against j at dyadic checkpoints K = 2^j and
thresholds it with a borderline band. The operator counts Borderline as
Divergent, which can only keep extra cells, never delete live ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import GridSet, cell_count, dilate_cells, intersect, make_grid_set
from .measures import MeasureModel, mass_of_gridset


class HittingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Radius schedules


@dataclass(frozen=True)
class RadiusSchedule:
    """Ball radii r_1 >= r_2 >= ... > 0, power law k^-alpha or explicit."""

    alpha: float | None
    values: np.ndarray | None
    k_max: int

    def __post_init__(self):
        if self.k_max < 1:
            raise HittingError("k_max must be >= 1")
        if (self.alpha is None) == (self.values is None):
            raise HittingError("exactly one of alpha / values must be given")
        if self.alpha is not None and self.alpha <= 0.0:
            raise HittingError("power-law exponent must be positive")
        if self.values is not None:
            v = np.ascontiguousarray(self.values, dtype=np.float64)
            if v.size == 0:
                raise HittingError("explicit radius list must be nonempty")
            if v.min() <= 0.0:
                raise HittingError("radii must be positive")
            if np.any(np.diff(v) > 0.0):
                raise HittingError("radii must be nonincreasing")
            v.flags.writeable = False
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "k_max", int(v.size))

    @classmethod
    def power_law(cls, alpha: float, k_max: int) -> "RadiusSchedule":
        return cls(float(alpha), None, int(k_max))

    @classmethod
    def explicit(cls, values) -> "RadiusSchedule":
        v = np.asarray(values, dtype=np.float64)
        return cls(None, v, v.size)

    def radii(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        k = np.arange(1, self.k_max + 1, dtype=np.float64)
        return k ** -self.alpha

    @property
    def s2_is_exact(self) -> bool:
        return self.alpha is not None


def s2_exponent(sched: RadiusSchedule) -> float:
    """Convergence exponent of sum r_k^t: 1/alpha for power laws, fitted otherwise.

    For explicit schedules the value is a log-log slope estimate; check
    sched.s2_is_exact to tell the two apart.
    """
    if sched.alpha is not None:
        return 1.0 / sched.alpha
    r = sched.radii()
    k = np.arange(1, r.size + 1, dtype=np.float64)
    x = np.log(k)
    y = np.log(r)
    xm = x - x.mean()
    slope = float(xm @ (y - y.mean())) / float(xm @ xm)
    if slope >= 0.0:
        raise HittingError("explicit radii do not decay; s2 undefined")
    return -1.0 / slope


# ---------------------------------------------------------------------------
# Compact families


@dataclass(frozen=True)
class CompactFamily:
    """Finite union of closed intervals in [0,1], sorted and disjoint.

    The sub-cell-accurate carrier of compact sets for the operator and the
    hit tests; a GridSet is its conservative cell shadow.
    """

    starts: np.ndarray = field(repr=False)
    ends: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.ascontiguousarray(self.starts, dtype=np.float64)
        e = np.ascontiguousarray(self.ends, dtype=np.float64)
        if s.shape != e.shape or s.ndim != 1:
            raise HittingError("starts/ends must be equal-length 1-D arrays")
        if s.size:
            if np.any(e < s):
                raise HittingError("interval ends must be >= starts")
            if s.min() < 0.0 or e.max() > 1.0:
                raise HittingError("family must lie inside [0,1]")
            if np.any(s[1:] <= e[:-1]):
                raise HittingError("intervals must be sorted and disjoint")
        s.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)

    @classmethod
    def from_members(cls, starts, ends) -> "CompactFamily":
        """Sort and merge arbitrary closed intervals."""
        s = np.asarray(starts, dtype=np.float64)
        e = np.asarray(ends, dtype=np.float64)
        if s.size == 0:
            return cls(np.empty(0), np.empty(0))
        order = np.argsort(s, kind="stable")
        s, e = s[order], e[order]
        e = np.maximum.accumulate(e)
        keep = np.empty(s.size, dtype=bool)
        keep[0] = True
        np.greater(s[1:], e[:-1], out=keep[1:])
        last = np.flatnonzero(np.append(keep[1:], True))
        return cls(s[keep], e[last])

    @classmethod
    def from_points(cls, points) -> "CompactFamily":
        p = np.asarray(points, dtype=np.float64)
        return cls.from_members(p, p)

    @classmethod
    def from_gridset(cls, s: GridSet) -> "CompactFamily":
        starts, ends = s.runs()
        w = s.cell_width
        return cls(starts * w, (ends + 1) * w)

    @property
    def n_members(self) -> int:
        return int(self.starts.size)

    def is_empty(self) -> bool:
        return self.starts.size == 0

    def to_gridset(self, depth: int) -> GridSet:
        return make_grid_set(zip(self.starts, self.ends), [], depth)

    def distance(self, x) -> np.ndarray:
        """Distance from points x to the family (vectorized)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        n = self.starts.size
        if n == 0:
            return np.full(x.shape, np.inf)
        idx = np.searchsorted(self.starts, x, side="right")
        left_end = np.where(idx > 0, self.ends[np.maximum(idx - 1, 0)], -np.inf)
        right_start = np.where(idx < n, self.starts[np.minimum(idx, n - 1)],
                               np.inf)
        d = np.minimum(np.maximum(x - left_end, 0.0), right_start - x)
        return np.maximum(d, 0.0)

    def restrict_to(self, mask: GridSet) -> "CompactFamily":
        """Members clipped to the flagged-cell region of the mask."""
        run_s, run_e = mask.runs()
        if run_s.size == 0 or self.starts.size == 0:
            return CompactFamily(np.empty(0), np.empty(0))
        w = mask.cell_width
        rs, re = run_s * w, (run_e + 1) * w
        a, b = self.starts, self.ends
        i0 = np.searchsorted(re, a, side="left")
        i1 = np.searchsorted(rs, b, side="right")
        counts = np.maximum(i1 - i0, 0)
        total = int(counts.sum())
        if total == 0:
            return CompactFamily(np.empty(0), np.empty(0))
        member_idx = np.repeat(np.arange(a.size), counts)
        cum = np.cumsum(counts) - counts
        run_idx = np.arange(total) - np.repeat(cum, counts) + np.repeat(i0, counts)
        lo = np.maximum(a[member_idx], rs[run_idx])
        hi = np.minimum(b[member_idx], re[run_idx])
        ok = lo <= hi
        return CompactFamily.from_members(lo[ok], hi[ok])


# ---------------------------------------------------------------------------
# Divergence policy and classifier


class SeriesVerdict(Enum):
    DIVERGENT = "divergent"
    CONVERGENT = "convergent"
    BORDERLINE = "borderline"


@dataclass(frozen=True)
class DivergencePolicy:
    """Dyadic-checkpoint slope classifier settings.

    Checkpoints are the partial sums at K = 2^j for j in [j0, j_max]
    (j_max defaults to floor(log2(k_max))); the fit uses the last
    fit_window checkpoints with positive sums.
    """

    j0: int = 4
    j_max: int | None = None
    fit_window: int = 4
    slope_threshold: float = 0.05
    borderline_band: float = 0.02

    def __post_init__(self):
        if self.j0 < 4:
            raise HittingError("j0 must be >= 4")
        if self.fit_window < 4:
            raise HittingError("fit_window must be >= 4")
        if self.slope_threshold <= 0.0:
            raise HittingError("slope threshold must be positive")

    def resolve_j_max(self, k_max: int) -> int:
        j = self.j_max if self.j_max is not None else int(math.floor(math.log2(k_max)))
        if j <= self.j0:
            raise HittingError("checkpoint range is empty")
        return j


def classify(checkpoints, policy: DivergencePolicy) -> SeriesVerdict:
    """Slope of log2(partial sum) against j over the fit window.

    All-zero sums classify Convergent immediately. Slope >= threshold + band
    is Divergent, <= threshold - band Convergent, anything between Borderline.
    """
    js = np.array([j for j, _ in checkpoints], dtype=np.float64)
    sums = np.array([s for _, s in checkpoints], dtype=np.float64)
    keep = js >= policy.j0
    if policy.j_max is not None:
        keep &= js <= policy.j_max
    js, sums = js[keep], sums[keep]
    pos = sums > 0.0
    if not pos.any():
        return SeriesVerdict.CONVERGENT
    js, sums = js[pos], sums[pos]
    if js.size < policy.fit_window:
        raise HittingError(
            f"need >= {policy.fit_window} positive checkpoints, got {js.size}")
    slope = _window_slope(js, np.log2(sums), policy.fit_window)
    if slope >= policy.slope_threshold + policy.borderline_band:
        return SeriesVerdict.DIVERGENT
    if slope <= policy.slope_threshold - policy.borderline_band:
        return SeriesVerdict.CONVERGENT
    return SeriesVerdict.BORDERLINE


def _window_slope(js, logs, window):
    x = js[-window:]
    y = logs[-window:]
    xm = x - x.mean()
    return float(xm @ (y - y.mean())) / float(xm @ xm)


# ---------------------------------------------------------------------------
# Exact Lebesgue partial sums (batched over probe centers)


class _RadiusTables:
    """Prefix sums over the descending radii for hinge-sum formulas."""

    def __init__(self, sched: RadiusSchedule, t: float):
        r = sched.radii()
        w = (2.0 * r) ** t if t != 0.0 else np.ones_like(r)
        self.r = r
        self.k_max = int(r.size)
        self.w_prefix = np.concatenate(([0.0], np.cumsum(w)))
        self.rw_prefix = np.concatenate(([0.0], np.cumsum(r * w)))
        self._neg_r = -r  # ascending view for searchsorted

    def count_above(self, thresholds) -> np.ndarray:
        """Number of k with r_k > threshold."""
        th = np.asarray(thresholds, dtype=np.float64)
        return np.searchsorted(self._neg_r, -th, side="left").astype(np.int64)

    def hinge(self, thresholds, counts, K: int) -> np.ndarray:
        """sum_{k<=K} (r_k - tau)^+ w_k given counts = count_above(tau)."""
        n = np.minimum(counts, K)
        with np.errstate(invalid="ignore"):
            out = self.rw_prefix[n] - np.asarray(thresholds) * self.w_prefix[n]
        return np.where(n > 0, out, 0.0)

    def w_sum(self, K: int) -> float:
        return float(self.w_prefix[min(K, self.k_max)])


class _LebesgueSeries:
    """Batch evaluator for the exact covered-length partial sums.

    For each probe ball the uncovered length at radius r splits into interior
    gaps (full tents (gamma - 2r)^+) and at most two boundary gaps clipped by
    the ball; both reduce to hinge sums over the radius sequence. Interior
    contributions are served from per-checkpoint prefix tables over the
    global gap list, so a whole batch of centers costs O(members) per
    checkpoint.
    """

    def __init__(self, fam: CompactFamily, tables: _RadiusTables, js):
        self.fam = fam
        self.tables = tables
        self.js = list(js)
        self.Ks = [min(1 << j, tables.k_max) for j in self.js]
        s, e = fam.starts, fam.ends
        n = s.size
        # interior gap g (1 <= g <= n-1) spans (e[g-1], s[g])
        if n >= 2:
            gamma = s[1:] - e[:-1]
        else:
            gamma = np.empty(0)
        half = 0.5 * gamma
        cnt = tables.count_above(half) if gamma.size else np.empty(0, np.int64)
        self._gamma_prefix = np.concatenate(([0.0], np.cumsum(gamma)))
        # per-checkpoint prefix tables of the tent hinge sums H(gamma/2; K)
        self._hinge_prefix = []
        for K in self.Ks:
            h = tables.hinge(half, cnt, K) if gamma.size else np.empty(0)
            self._hinge_prefix.append(np.concatenate(([0.0], np.cumsum(h))))

    def partial_sums(self, centers, r_probe: float) -> np.ndarray:
        """Matrix (n_centers, n_checkpoints) of partial sums."""
        x = np.asarray(centers, dtype=np.float64)
        lo = np.maximum(x - r_probe, 0.0)
        hi = np.minimum(x + r_probe, 1.0)
        width = hi - lo
        s, e = self.fam.starts, self.fam.ends
        n = s.size
        # gap index range [gA, gB] meeting each ball (gap g spans
        # (e[g-1], s[g]) with virtual members at -inf and +inf)
        gA = np.searchsorted(s, lo, side="right")
        gB = np.searchsorted(e, hi, side="left")
        out = np.empty((x.size, len(self.Ks)))

        # interior gaps: indices [gA+1, gB-1], served from prefix tables
        i_lo = gA + 1
        i_hi = gB  # slice end (exclusive) in gap-index space
        has_int = i_hi > i_lo
        g_lo = np.clip(i_lo, 1, max(n - 1, 1)) - 1  # interior table offset
        g_hi = np.clip(i_hi, 1, max(n - 1, 1)) - 1
        gam_sum = np.where(
            has_int, self._gamma_prefix[g_hi] - self._gamma_prefix[g_lo], 0.0)
        gap_cnt = np.where(has_int, g_hi - g_lo, 0)

        # boundary gaps: gA always, gB when distinct
        bnd = [gA, gB]
        bnd_masks = [np.ones(x.size, dtype=bool), gB != gA]
        bnd_terms = []
        for g, mask in zip(bnd, bnd_masks):
            A = np.where(g > 0, e[np.clip(g - 1, 0, max(n - 1, 0))]
                         if n else -np.inf, -np.inf)
            B = np.where(g < n, s[np.clip(g, 0, max(n - 1, 0))]
                         if n else np.inf, np.inf)
            bnd_terms.append(self._boundary_tables(A, B, lo, hi, mask))

        for idx, K in enumerate(self.Ks):
            wsum = self.tables.w_sum(K)
            hp = self._hinge_prefix[idx]
            interior = gam_sum * wsum
            interior -= 2.0 * gap_cnt * self.tables.rw_prefix[K]
            interior += 2.0 * np.where(has_int, hp[g_hi] - hp[g_lo], 0.0)
            uncovered = np.maximum(interior, 0.0)
            for C0, taus, cnts, mask in bnd_terms:
                t1, t2, p1, p2 = taus
                c1, c2, c3, c4 = cnts
                term = C0 * wsum
                term -= self.tables.hinge(t1, c1, K)
                term -= self.tables.hinge(t2, c2, K)
                term += self.tables.hinge(p1, c3, K)
                term += self.tables.hinge(p2, c4, K)
                uncovered += np.where(mask, np.maximum(term, 0.0), 0.0)
            out[:, idx] = np.maximum(width * wsum - uncovered, 0.0)
        return out

    def _boundary_tables(self, A, B, lo, hi, mask):
        """Hinge decomposition of one clipped gap per center.

        Uncovered length at radius r is C0 - (r-t1)^+ - (r-t2)^+ + (r-p1)^+
        + (r-p2)^+ for r >= 0 (then clamped at 0).
        """
        Ac = np.maximum(A, lo)
        Bc = np.minimum(B, hi)
        C0 = np.maximum(Bc - Ac, 0.0)
        alive = mask & (C0 > 0.0)
        with np.errstate(invalid="ignore"):
            C1 = np.where(np.isinf(B), np.inf, B - Ac)
            C2 = np.where(np.isinf(A), np.inf, Bc - A)
            C3 = np.where(np.isinf(B) | np.isinf(A), np.inf, B - A)
            mm = np.minimum(C1, C2)
            t1 = np.where(np.isinf(mm), np.inf, mm - C0)
            t2 = np.where(np.isinf(C3), np.inf, C3 - mm)
            rc = t1 + C0
            slope2 = rc > t2
            p1 = np.where(slope2, 0.5 * (t1 + t2 + C0), rc)
            p2 = np.where(slope2, p1, t2)
        taus = (t1, t2, p1, p2)
        cnts = tuple(self.tables.count_above(np.where(np.isfinite(t), t, np.inf))
                     for t in taus)
        return np.where(alive, C0, 0.0), taus, cnts, alive


# ---------------------------------------------------------------------------
# Grid-quantized partial sums (general measures)


def _quantized_partial_sums(m: MeasureModel, sched: RadiusSchedule, t: float,
                            grid: GridSet, cell_lo: int, cell_hi: int,
                            js, cache: dict) -> np.ndarray:
    """Partial sums with dilations rounded up to whole cells.

    Terms depend on k only through the width w_k = ceil(r_k * 2^D), so ks
    group into contiguous ranges per distinct width; per-range weights come
    from one prefix sum and dilated masks are cached per width.
    """
    r = sched.radii()
    scale = float(1 << grid.depth)
    widths = np.ceil(r * scale).astype(np.int64)
    weights = (2.0 * r) ** t if t != 0.0 else np.ones_like(r)
    w_prefix = np.concatenate(([0.0], np.cumsum(weights)))
    distinct, first_idx = np.unique(widths[::-1], return_index=True)
    first_idx = r.size - first_idx  # exclusive upper bound of each width run
    order = np.argsort(first_idx)
    distinct = distinct[order]
    bounds = np.concatenate(([0], first_idx[order]))

    ball = np.zeros(grid.n_cells, dtype=np.uint8)
    ball[cell_lo:cell_hi + 1] = 1
    ball_set = GridSet(grid.depth, ball)
    masses = np.array([
        _cached_dilation_mass(m, grid, int(w), ball_set, cache)
        for w in distinct
    ])

    out = np.empty(len(js))
    for idx, j in enumerate(js):
        K = min(1 << j, r.size)
        hi_k = np.minimum(bounds[1:], K)
        lo_k = np.minimum(bounds[:-1], K)
        out[idx] = float(masses @ (w_prefix[hi_k] - w_prefix[lo_k]))
    return out


def _cached_dilation_mass(m, grid, w, ball_set, cache):
    if w not in cache:
        cache[w] = dilate_cells(grid, w)
    return mass_of_gridset(m, intersect(ball_set, cache[w]))[0]


# ---------------------------------------------------------------------------
# Public series / operator API


def _coerce_target(S, depth: int | None):
    """Accept a GridSet or CompactFamily; return (grid, family, depth)."""
    if isinstance(S, GridSet):
        return S, CompactFamily.from_gridset(S), S.depth
    if isinstance(S, CompactFamily):
        if depth is None:
            raise HittingError("depth is required for CompactFamily targets")
        return S.to_gridset(depth), S, depth
    raise HittingError(f"unsupported target type {type(S).__name__}")


def _ball_cells(x: float, r: float, depth: int):
    scale = float(1 << depth)
    lo = max(math.ceil((x - r) * scale) - 1, 0)
    hi = min(math.floor((x + r) * scale), (1 << depth) - 1)
    return lo, hi


def series_checkpoints(m: MeasureModel, sched: RadiusSchedule, t: float, S,
                       x: float, r_probe: float,
                       depth: int | None = None) -> list:
    """Partial sums of the hitting series at dyadic K = 2^j, j = 0..log2(k_max).

    Terms are mu(B(x, r_probe) & S(r_k)) * (2 r_k)^t. For Lebesgue measure
    the r_k-neighborhoods of the family are measured exactly in the
    continuum; for other measures dilations round up to whole cells.
    """
    grid, fam, depth = _coerce_target(S, depth)
    if r_probe < 2.0 * grid.cell_width:
        raise HittingError("probe radius must be at least two cell widths")
    cell = int(min(x * (1 << depth), grid.n_cells - 1))
    if not grid.cells[cell]:
        raise HittingError("x must lie in a flagged cell of S")
    js = list(range(0, int(math.floor(math.log2(sched.k_max))) + 1))
    if m.kind == "lebesgue":
        series = _LebesgueSeries(fam, _RadiusTables(sched, t), js)
        sums = series.partial_sums(np.array([x]), r_probe)[0]
    else:
        lo, hi = _ball_cells(x, r_probe, depth)
        sums = _quantized_partial_sums(m, sched, t, grid, lo, hi, js, {})
    return list(zip(js, sums.tolist()))


@dataclass(frozen=True)
class IterationTrace:
    """Stage sizes of the fixed-point iteration plus the final mask."""

    stages: tuple                 # ((stage index, cell count), ...)
    fixed_point: GridSet
    reached_fixed: bool

    def cell_counts(self):
        return [c for _, c in self.stages]


def _keep_matrix(sums: np.ndarray, js, policy: DivergencePolicy) -> np.ndarray:
    """Row-wise conservative verdicts from a (centers, checkpoints) matrix."""
    keep = np.empty(sums.shape[0], dtype=bool)
    for i in range(sums.shape[0]):
        cps = list(zip(js, sums[i].tolist()))
        keep[i] = _verdict_keeps(cps, policy)
    return keep


def _verdict_keeps(checkpoints, policy: DivergencePolicy) -> bool:
    """Divergent or Borderline keeps the cell (conservative)."""
    in_range = [(j, s) for j, s in checkpoints
                if j >= policy.j0 and (policy.j_max is None or j <= policy.j_max)]
    pos = sum(1 for _, s in in_range if s > 0)
    if pos == 0:
        return False
    if pos < policy.fit_window:
        return True  # too little signal to rule out divergence: keep
    return classify(checkpoints, policy) is not SeriesVerdict.CONVERGENT


def _operator_step(m: MeasureModel, sched: RadiusSchedule, t: float,
                   grid: GridSet, fam: CompactFamily,
                   policy: DivergencePolicy, r_probe: float):
    """One application of the operator; returns (kept grid, kept family)."""
    depth = grid.depth
    flagged = np.flatnonzero(grid.cells)
    keep_mask = np.zeros(grid.n_cells, dtype=np.uint8)
    if flagged.size == 0:
        return grid, fam
    j_hi = policy.resolve_j_max(sched.k_max)
    js = list(range(policy.j0, j_hi + 1))
    width = grid.cell_width
    centers = (flagged + 0.5) * width
    if m.kind == "lebesgue":
        series = _LebesgueSeries(fam, _RadiusTables(sched, t), js)
        sums = series.partial_sums(centers, r_probe)
        keep = _keep_matrix(sums, js, policy)
    else:
        cache: dict = {}
        keep = np.empty(flagged.size, dtype=bool)
        for i, x in enumerate(centers):
            lo, hi = _ball_cells(x, r_probe, depth)
            sums = _quantized_partial_sums(m, sched, t, grid, lo, hi, js, cache)
            keep[i] = _verdict_keeps(list(zip(js, sums.tolist())), policy)
    keep_mask[flagged[keep]] = 1
    kept_grid = GridSet(depth, keep_mask & grid.cells)  # containment structural
    kept_fam = fam.restrict_to(kept_grid)
    return kept_grid, kept_fam


def hitting_operator(m: MeasureModel, sched: RadiusSchedule, t: float, S,
                     policy: DivergencePolicy | None = None,
                     r_probe: float | None = None,
                     depth: int | None = None) -> GridSet:
    """Cells of S whose center classifies Divergent (or Borderline) at r_probe.

    The result is a subset of S's mask by construction. The default probe is
    the smallest admissible radius, two cell widths.
    """
    grid, fam, depth = _coerce_target(S, depth)
    policy = policy or DivergencePolicy()
    r_probe = 2.0 * grid.cell_width if r_probe is None else r_probe
    if r_probe < 2.0 * grid.cell_width:
        raise HittingError("probe radius must be at least two cell widths")
    kept, _ = _operator_step(m, sched, t, grid, fam, policy, r_probe)
    return kept


def iterate_operator(m: MeasureModel, sched: RadiusSchedule, t: float, S0,
                     policy: DivergencePolicy | None = None,
                     r_probe: float | None = None, max_stages: int = 32,
                     depth: int | None = None) -> IterationTrace:
    """Iterate the operator until two consecutive masks agree.

    Between stages the compact family is restricted to the surviving cells,
    so stage sets only shrink and cell counts are nonincreasing.
    """
    if max_stages < 1:
        raise HittingError("max_stages must be >= 1")
    grid, fam, depth = _coerce_target(S0, depth)
    policy = policy or DivergencePolicy()
    r_probe = 2.0 * grid.cell_width if r_probe is None else r_probe
    stages = [(0, cell_count(grid))]
    reached = False
    for stage in range(1, max_stages + 1):
        new_grid, new_fam = _operator_step(m, sched, t, grid, fam, policy,
                                           r_probe)
        stages.append((stage, cell_count(new_grid)))
        same = bool(np.array_equal(new_grid.cells, grid.cells))
        grid, fam = new_grid, new_fam
        if same or cell_count(grid) == 0:
            reached = True
            break
    return IterationTrace(tuple(stages), grid, reached)


# ---------------------------------------------------------------------------
# Ordinal tower (accumulating scaled copies)


def ordinal_tower_family(n: int, min_gap: float = 2.0 ** -40,
                         detail_limit: int = 512,
                         tip_count: int = 1 << 20) -> CompactFamily:
    """The rank-n tower as a point family.

    Rank 1 is {0} union {1/j: j >= 1}; rank n+1 places a copy of rank n
    scaled by 1/(2j(j-1)) at each 1/j (j >= 2), so the copies accumulate at
    0. Points are enumerated down to spacing ~min_gap; copies narrower than
    the resolution collapse to their tip, and at most detail_limit copies
    carry internal structure.
    """
    if n not in (1, 2, 3):
        raise HittingError("tower rank must be 1, 2, or 3")
    pts = _tower_points(n, min_gap, detail_limit, tip_count)
    pts = pts[(pts >= 0.0) & (pts <= 1.0)]
    return CompactFamily.from_points(np.concatenate(([0.0], pts)))


def _tower_points(n: int, min_gap: float, detail_limit: int,
                  tip_count: int) -> np.ndarray:
    # tip sequence 1/j, enumerated while consecutive spacing >= ~min_gap
    j_cap = min(int(1.0 / math.sqrt(max(min_gap, 1e-14))) + 1, tip_count)
    tips = 1.0 / np.arange(1, j_cap + 1, dtype=np.float64)
    if n == 1:
        return tips
    parts = [tips]
    for j in range(2, min(detail_limit, j_cap) + 1):
        scale = 1.0 / (2.0 * j * (j - 1.0))
        if scale < 4.0 * min_gap:
            break
        sub = _tower_points(n - 1, min_gap / scale, detail_limit, tip_count)
        parts.append(1.0 / j + scale * sub)
    return np.concatenate(parts)


def build_ordinal_tower(n: int, depth: int) -> GridSet:
    """Grid mask of the rank-n tower, structure below grid resolution truncated."""
    if not (1 <= depth <= 26):
        raise HittingError("depth must be in [1, 26]")
    fam = ordinal_tower_family(n, min_gap=max(2.0 ** (-2 * depth), 2.0 ** -40))
    return fam.to_gridset(depth)


def cantor_family(ratio: float, level: int) -> CompactFamily:
    """Level-`level` construction intervals of the constant-ratio Cantor set.

    Each parent interval keeps two children of relative length `ratio` at its
    ends; the family has 2**level closed intervals of length ratio**level and
    box dimension log 2 / -log(ratio).
    """
    if not (0.0 < ratio < 0.5):
        raise HittingError("ratio must be in (0, 1/2)")
    if not (0 <= level <= 24):
        raise HittingError("level must be in [0, 24]")
    lengths = ratio ** np.arange(level + 1, dtype=np.float64)
    steps = lengths[:-1] - lengths[1:]
    codes = np.arange(1 << level, dtype=np.int64)
    lefts = np.zeros(codes.size, dtype=np.float64)
    for i in range(level):
        bit = (codes >> (level - 1 - i)) & 1
        lefts += bit * steps[i]
    return CompactFamily(lefts, lefts + lengths[level])
