"""Monte Carlo experiments on random covering sets.

A trial draws i.i.d. centers from a measure and forms balls B(w_k, r_k).
Coverage fields record, per dyadic index window [2^j, 2^(j+1)), which grid
cells some ball touches. Dimension estimates box-count the cells hit by the
balls whose radius is comparable to the counting scale; hit tests ask
whether every index window contains a ball meeting a fixed compact target,
a finite surrogate for "infinitely many k".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import (DimensionEstimate, GridSet, box_dimension, cell_count,
                       GridError)
from .hitting import (CompactFamily, DivergencePolicy, IterationTrace,
                      RadiusSchedule, iterate_operator)
from .measures import MeasureModel, sample


class CoveringError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageField:
    """Per-window masks of cells touched by balls with index in [2^j, 2^(j+1))."""

    depth: int
    j0: int
    j_hi: int
    windows: tuple          # tuple of GridSet, one per j in [j0, j_hi]
    seed: int
    measure_kind: str
    alpha: float | None

    def window(self, j: int) -> GridSet:
        if not (self.j0 <= j <= self.j_hi):
            raise CoveringError(f"window index {j} outside [{self.j0}, {self.j_hi}]")
        return self.windows[j - self.j0]


def _ball_spans(centers: np.ndarray, radii: np.ndarray, depth: int):
    """Cell index ranges covered by the balls, rounded outward."""
    scale = float(1 << depth)
    lo = np.ceil((centers - radii) * scale).astype(np.int64) - 1
    hi = np.floor((centers + radii) * scale).astype(np.int64)
    np.clip(lo, 0, (1 << depth) - 1, out=lo)
    np.clip(hi, 0, (1 << depth) - 1, out=hi)
    return lo, hi


def simulate(m: MeasureModel, sched: RadiusSchedule, depth: int, j0: int,
             j_hi: int, seed: int) -> CoverageField:
    """Coverage field for ball indices up to 2^(j_hi + 1) - 1."""
    if depth > 26:
        raise CoveringError("depth must be <= 26")
    if j0 < 0 or j_hi < j0:
        raise CoveringError("need 0 <= j0 <= j_hi")
    n_balls = (1 << (j_hi + 1)) - 1
    if n_balls > sched.k_max:
        raise CoveringError("window range exceeds the schedule's k_max")
    centers = sample(m, seed, n_balls)
    radii = sched.radii()[:n_balls]
    masks = []
    for j in range(j0, j_hi + 1):
        a, b = (1 << j) - 1, (1 << (j + 1)) - 1  # 0-based slice of k in [2^j, 2^(j+1))
        lo, hi = _ball_spans(centers[a:b], radii[a:b], depth)
        cells = np.zeros(1 << depth, dtype=np.uint8)
        _kernels.mark_intervals(lo, hi, 1 << depth, out=cells)
        masks.append(GridSet(depth, cells))
    return CoverageField(depth, j0, j_hi, tuple(masks), seed, m.kind,
                         sched.alpha)


def dimension_estimate(m: MeasureModel, sched: RadiusSchedule, depth_lo: int,
                       depth_hi: int, seed: int, reps: int = 5,
                       scale_step: int = 1) -> DimensionEstimate:
    """Box-count dimension of the covering set via scale-matched ball bands.

    At scale delta_j = 2^-j the count includes exactly the cells touched by
    balls whose radius falls in (delta_{j+step}, delta_j], i.e. ball indices
    k in [ceil(delta_j^(-1/alpha)), ceil(delta_{j+step}^(-1/alpha))). Earlier
    balls are too coarse for the scale and only inflate counts; later balls
    belong to finer scales. The fitted slope is averaged over reps
    independent seeds.
    """
    if sched.alpha is None:
        raise CoveringError("dimension estimates need a power-law schedule")
    alpha = sched.alpha
    if depth_hi - depth_lo < 2 * scale_step:
        raise CoveringError("need at least 3 scales")
    js = list(range(depth_lo, depth_hi + 1, scale_step))
    k_bands = []
    for j in js:
        k_lo = max(int(math.ceil(2.0 ** (j / alpha))), 1)
        k_hi = int(math.ceil(2.0 ** ((j + scale_step) / alpha)))
        if k_lo > sched.k_max:
            raise CoveringError(
                f"scale 2^-{j} needs ball index {k_lo} > k_max {sched.k_max}")
        k_bands.append((k_lo, min(k_hi, sched.k_max + 1)))
    n_balls = max(hi - 1 for _, hi in k_bands)
    radii = sched.radii()[:n_balls]

    slopes, fit_errs = [], []
    count_sums = np.zeros(len(js), dtype=np.float64)
    for rep in range(reps):
        centers = sample(m, (seed, rep), n_balls)
        pairs = []
        for (j, (k_lo, k_hi)) in zip(js, k_bands):
            lo, hi = _ball_spans(centers[k_lo - 1:k_hi - 1],
                                 radii[k_lo - 1:k_hi - 1], j)
            cells = np.zeros(1 << j, dtype=np.uint8)
            _kernels.mark_intervals(lo, hi, 1 << j, out=cells)
            pairs.append((2.0 ** -j, int(cells.sum(dtype=np.int64))))
        if any(c == 0 for _, c in pairs):
            raise CoveringError("a scale band produced zero hit cells")
        est = box_dimension(pairs)
        slopes.append(est.value)
        fit_errs.append(est.stderr)
        count_sums += np.array([c for _, c in pairs], dtype=np.float64)

    value = float(np.mean(slopes))
    se_fit = math.sqrt(float(np.mean(np.square(fit_errs))) / reps)
    se_rep = (float(np.std(slopes, ddof=1)) / math.sqrt(reps)
              if reps > 1 else 0.0)
    stderr = max(se_fit, se_rep)
    mean_counts = np.maximum(np.round(count_sums / reps).astype(int), 1)
    pairs = tuple((2.0 ** -j, int(c)) for j, c in zip(js, mean_counts))
    value = max(value, 0.0)
    try:
        return DimensionEstimate(value, stderr, pairs)
    except GridError:
        # noisy fits can exceed the [0, 1]-envelope; clamp into validity
        return DimensionEstimate(min(value, 1.0 + 3.0 * stderr), stderr, pairs)


@dataclass(frozen=True)
class HitReport:
    """Trial verdicts for "some ball meets the target in every window"."""

    trials: int
    verdicts: tuple          # booleans per trial
    hit_rate: float
    window_detail: tuple     # hit counts per window across trials

    def __post_init__(self):
        if abs(self.hit_rate - sum(self.verdicts) / self.trials) > 0.0:
            raise CoveringError("hit_rate must equal hits/trials exactly")


def _coerce_family(C) -> CompactFamily:
    if isinstance(C, CompactFamily):
        return C
    if isinstance(C, GridSet):
        return CompactFamily.from_gridset(C)
    raise CoveringError(f"unsupported target type {type(C).__name__}")


def hit_test(C, m: MeasureModel, sched: RadiusSchedule, trials: int, j0: int,
             j_hi: int, seed: int, octaves_per_window: int = 1) -> HitReport:
    """Monte Carlo hit test of the compact target C.

    A trial is a hit iff every window of octaves_per_window consecutive
    dyadic index octaves within [2^j0, 2^(j_hi + 1)) contains at least one
    ball meeting C. Trials use independent seed streams.
    """
    fam = _coerce_family(C)
    if fam.is_empty():
        raise CoveringError("hit test needs a nonempty target")
    if trials < 1:
        raise CoveringError("need at least one trial")
    n_balls = (1 << (j_hi + 1)) - 1
    if n_balls > sched.k_max:
        raise CoveringError("window range exceeds the schedule's k_max")
    radii = sched.radii()[:n_balls]
    octs = list(range(j0, j_hi + 1))
    groups = [octs[i:i + octaves_per_window]
              for i in range(0, len(octs), octaves_per_window)]
    verdicts = []
    window_hits = np.zeros(len(groups), dtype=np.int64)
    for trial in range(trials):
        centers = sample(m, (seed, trial), n_balls)
        meets = fam.distance(centers) < radii
        ok = True
        for g_idx, group in enumerate(groups):
            a = (1 << group[0]) - 1
            b = (1 << (group[-1] + 1)) - 1
            hit = bool(meets[a:b].any())
            window_hits[g_idx] += hit
            ok = ok and hit
        verdicts.append(ok)
    rate = sum(verdicts) / trials
    return HitReport(trials, tuple(verdicts), rate, tuple(window_hits.tolist()))


@dataclass(frozen=True)
class DichotomyResult:
    """Operator fixed point and Monte Carlo hit verdict for the same target."""

    fixed_point_empty: bool
    hit_rate: float
    trace: IterationTrace
    report: HitReport

    @property
    def consistent(self) -> bool:
        """Empty fixed points should miss (rate <= 5%), nonempty hit (>= 95%)."""
        if self.fixed_point_empty:
            return self.hit_rate <= 0.05
        return self.hit_rate >= 0.95


def dichotomy_experiment(C, m: MeasureModel, sched: RadiusSchedule,
                         policy: DivergencePolicy | None, depth: int,
                         trials: int, seed: int, j0: int = 5, j_hi: int = 19,
                         octaves_per_window: int = 3,
                         max_stages: int = 16) -> DichotomyResult:
    """Cross-validate the operator's emptiness verdict against hit rates."""
    fam = _coerce_family(C)
    trace = iterate_operator(m, sched, 0.0, fam, policy=policy,
                             max_stages=max_stages, depth=depth)
    report = hit_test(fam, m, sched, trials, j0, j_hi, seed,
                      octaves_per_window=octaves_per_window)
    empty = cell_count(trace.fixed_point) == 0
    return DichotomyResult(empty, report.hit_rate, trace, report)
