"""Measures on [0,1]: Lebesgue, Cantor-cascade, and gap-midpoint atomic families.

The Cantor construction alternates two contraction ratios a < b < 1/2 in
blocks of levels. Each level-n construction interval keeps two children of
common length l_{n+1} at its ends; the removed middle has a midpoint, and
the atomic measures place equal point masses on all level-k gap midpoints.
Atom families are stored implicitly (per-level weight plus the construction
tree), so queries stay exact up to a recorded truncation tail even at level
60 where 2**60 atoms could never be materialized.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridSet


class MeasureError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Block schedules and construction trees


@dataclass(frozen=True)
class BlockSchedule:
    """Contraction-ratio schedule: levels in [N_2k, N_2k+1) use a, the rest b.

    breakpoints are the strictly increasing N_1 < N_2 < ...; N_0 = 0 is
    implicit. max_level caps the materialized construction depth.
    """

    a: float
    b: float
    breakpoints: tuple
    max_level: int

    def __post_init__(self):
        if not (0.0 < self.a < self.b < 0.5):
            raise MeasureError(f"need 0 < a < b < 1/2, got a={self.a}, b={self.b}")
        bps = tuple(int(n) for n in self.breakpoints)
        if any(n2 <= n1 for n1, n2 in zip(bps, bps[1:])) or (bps and bps[0] <= 0):
            raise MeasureError("breakpoints must be strictly increasing positive")
        if self.max_level < 1:
            raise MeasureError("max_level must be >= 1")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def geometric(cls, a, b, max_level, first=10, factor=10):
        """Rapidly growing blocks N_k = first * factor**(k-1) (the default)."""
        bps, n = [], first
        while n < max_level:
            bps.append(n)
            n *= factor
        bps.append(n)
        return cls(a, b, tuple(bps), max_level)

    @classmethod
    def linear(cls, a, b, max_level, growth=10):
        """Equal blocks N_k = k * growth."""
        bps = tuple(range(growth, max_level + growth + 1, growth))
        return cls(a, b, bps, max_level)

    @classmethod
    def from_dimensions(cls, s, u, max_level, first=10, factor=10):
        """Schedule with ratios chosen so dim params are s and u: 2 = a^-s = b^-u."""
        if not (0.0 < s < u < 1.0):
            raise MeasureError(f"need 0 < s < u < 1, got s={s}, u={u}")
        return cls.geometric(2.0 ** (-1.0 / s), 2.0 ** (-1.0 / u),
                             max_level, first=first, factor=factor)

    @property
    def s(self) -> float:
        return math.log(2.0) / -math.log(self.a)

    @property
    def u(self) -> float:
        return math.log(2.0) / -math.log(self.b)

    def ratio(self, level: int) -> float:
        """Contraction ratio applied between level and level + 1."""
        k = bisect.bisect_right(self.breakpoints, level)
        return self.a if k % 2 == 0 else self.b


class ConstructionTree:
    """Lazy binary construction tree for a BlockSchedule.

    Level-n intervals share the common length lengths[n]; the interval with
    codeword bits w_0..w_{n-1} has left endpoint sum(w_i * step[i]) where
    step[i] = lengths[i] - lengths[i+1]. Codewords order left endpoints
    monotonically, which makes rank queries a single root-to-leaf descent.
    """

    def __init__(self, schedule: BlockSchedule):
        self.schedule = schedule
        L = schedule.max_level
        lengths = np.empty(L + 2, dtype=np.float64)
        lengths[0] = 1.0
        for n in range(L + 1):
            lengths[n + 1] = lengths[n] * schedule.ratio(n)
        self.lengths = lengths              # l_0 .. l_{L+1}
        self.steps = lengths[:-1] - lengths[1:]  # step[i] = l_i - l_{i+1}
        self.max_level = L

    def interval(self, level: int, index: int):
        """Closed construction interval (left, right) for a codeword index."""
        if not (0 <= level <= self.max_level):
            raise MeasureError(f"level {level} outside [0, {self.max_level}]")
        if not (0 <= index < (1 << level)):
            raise MeasureError("interval index out of range")
        left = 0.0
        for i in range(level):
            if (index >> (level - 1 - i)) & 1:
                left += self.steps[i]
        return left, left + self.lengths[level]

    def gap_midpoint(self, level: int, index: int) -> float:
        """Midpoint of the gap removed from the level-`level` interval `index`."""
        left, _ = self.interval(level, index)
        return left + self.lengths[level] / 2.0

    def lefts(self, level: int, indices: np.ndarray) -> np.ndarray:
        """Vectorized left endpoints for an array of codeword indices."""
        left = np.zeros(indices.shape, dtype=np.float64)
        for i in range(level):
            bit = (indices >> (level - 1 - i)) & 1
            left += bit * self.steps[i]
        return left

    def count_lefts_below(self, level: int, x: float, inclusive: bool) -> int:
        """Number of level-`level` interval left endpoints <= x (or < x)."""
        if level == 0:
            c = 0.0
            return int(c <= x if inclusive else c < x)
        span = self.lengths  # alias
        cnt = 0
        c = 0.0
        for i in range(level):
            right_child = c + self.steps[i]
            # left subtree lefts lie in [c, c + l_{i+1} - l_level] < right_child
            if (x >= right_child) if inclusive else (x > right_child):
                cnt += 1 << (level - 1 - i)
                c = right_child
            else:
                # descend left; but the whole left subtree may still be below x
                top = c + span[i + 1] - span[level]
                if (x >= top) if inclusive else (x > top):
                    return cnt + (1 << (level - 1 - i))
        return cnt + (1 if ((c <= x) if inclusive else (c < x)) else 0)

    def count_midpoints_in(self, level: int, x1: float, x2: float) -> int:
        """Number of level-`level` gap midpoints inside the closed [x1, x2]."""
        h = self.lengths[level] / 2.0
        hi = self.count_lefts_below(level, x2 - h, inclusive=True)
        lo = self.count_lefts_below(level, x1 - h, inclusive=False)
        return hi - lo

    def count_intervals_meeting(self, level: int, x1: float, x2: float) -> int:
        """Number of level-`level` construction intervals meeting [x1, x2]."""
        hi = self.count_lefts_below(level, x2, inclusive=True)
        lo = self.count_lefts_below(level, x1 - self.lengths[level],
                                    inclusive=False)
        return hi - lo

    def cascade_mass(self, x1: float, x2: float):
        """Equal-split cascade mass of the closed interval [x1, x2].

        Exact whenever the endpoints align with construction endpoints at or
        above max_level; otherwise the two boundary leaves are pro-rated
        linearly and their full masses are reported as slack.
        """
        L = self.max_level
        lengths = self.lengths
        steps = self.steps
        total = 0.0
        slack = 0.0
        stack = [(0, 0.0)]
        while stack:
            n, left = stack.pop()
            right = left + lengths[n]
            if x2 < left or x1 > right:
                continue
            node_mass = 2.0 ** -n
            if x1 <= left and x2 >= right:
                total += node_mass
                continue
            if n == L:
                overlap = min(x2, right) - max(x1, left)
                if overlap > 0.0:
                    frac = overlap / lengths[L]
                    total += node_mass * min(frac, 1.0)
                    slack += node_mass
                continue
            stack.append((n + 1, left))
            stack.append((n + 1, left + steps[n]))
        return total, slack


# ---------------------------------------------------------------------------
# Measure models


@dataclass(frozen=True)
class MeasureModel:
    """A probability measure on [0,1] split into cascade + implicit atoms + tail.

    atom_level_weights[k] is the weight of a single level-k atom (there are
    2**k of them); tail_bound is the total mass of truncated deeper atoms.
    cascade_mass + sum(atom_level_weights * 2**k) + tail_bound == 1 within
    1e-9 for every constructor here.
    """

    kind: str
    tree: ConstructionTree | None
    cascade_mass: float
    atom_level_weights: np.ndarray | None
    tail_bound: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.atom_level_weights is not None:
            w = np.ascontiguousarray(self.atom_level_weights, dtype=np.float64)
            w.flags.writeable = False
            object.__setattr__(self, "atom_level_weights", w)
        total = self.cascade_mass + self._atom_total() + self.tail_bound
        if self.kind != "lebesgue" and abs(total - 1.0) > 1e-9:
            raise MeasureError(f"measure mass {total} not normalized")

    def _atom_total(self) -> float:
        if self.atom_level_weights is None:
            return 0.0
        k = np.arange(self.atom_level_weights.size, dtype=np.float64)
        return float(np.sum(self.atom_level_weights * np.exp2(k)))

    @property
    def support_tree(self) -> ConstructionTree | None:
        return self.tree


def lebesgue_measure() -> MeasureModel:
    """Lebesgue measure restricted to [0,1]."""
    return MeasureModel("lebesgue", None, 1.0, None, 0.0)


def cantor_theta(schedule: BlockSchedule) -> MeasureModel:
    """Natural cascade measure: every level-n construction interval has mass 2**-n."""
    tree = ConstructionTree(schedule)
    return MeasureModel("theta", tree, 1.0, None, 0.0,
                        params={"s": schedule.s, "u": schedule.u})


def mu_one(schedule: BlockSchedule, beta: float) -> MeasureModel:
    """Geometric-weight atomic measure on the gap midpoints.

    Level-k atoms each carry (1 - 2**(1-beta)) * 2**(-beta*k); the truncated
    tail beyond max_level sums to 2**((1-beta)*(max_level+1)) exactly.
    """
    if beta <= 1.0:
        raise MeasureError("mu_one needs beta > 1 (normalizer diverges otherwise)")
    tree = ConstructionTree(schedule)
    L = schedule.max_level
    norm = 1.0 - 2.0 ** (1.0 - beta)
    k = np.arange(L + 1, dtype=np.float64)
    weights = norm * np.exp2(-beta * k)
    tail = 2.0 ** ((1.0 - beta) * (L + 1))
    return MeasureModel("mu1", tree, 0.0, weights, tail,
                        params={"s": schedule.s, "u": schedule.u, "beta": beta})


def mu_two(schedule: BlockSchedule, beta: float) -> MeasureModel:
    """Length-power-weight atomic measure on the gap midpoints.

    Level-k atoms carry gamma0 * l_k**(beta*s). Summability requires
    beta > u/s; the truncation tail is bounded by the geometric domination
    term_L * q / (1 - q) with q = 2**(1 - beta*s/u), and gamma0 is computed
    from the truncated series plus that bound so total mass is exactly 1.
    """
    s, u = schedule.s, schedule.u
    if beta <= u / s:
        raise MeasureError(
            f"mu_two needs beta > u/s = {u / s:.6g} for a summable normalizer")
    tree = ConstructionTree(schedule)
    L = schedule.max_level
    k = np.arange(L + 1)
    terms = tree.lengths[:L + 1] ** (beta * s) * np.exp2(k.astype(np.float64))
    q = 2.0 ** (1.0 - beta * s / u)
    tail_est = terms[L] * q / (1.0 - q)
    gamma0 = 1.0 / (float(terms.sum()) + tail_est)
    weights = gamma0 * tree.lengths[:L + 1] ** (beta * s)
    return MeasureModel("mu2", tree, 0.0, weights, gamma0 * tail_est,
                        params={"s": s, "u": u, "beta": beta, "gamma0": gamma0})


# ---------------------------------------------------------------------------
# Queries


def mass_interval(m: MeasureModel, x1: float, x2: float):
    """Measure of the closed interval [x1, x2] as (mass, err).

    err bounds the truncation tail plus the cascade pro-rating slack at the
    deepest materialized level. The tail bound is localized: truncated atoms
    of level k > L all sit inside level-L construction intervals, so the
    query can only miss tail mass proportional to the number of level-L
    intervals it meets.
    """
    if not (0.0 <= x1 <= x2 <= 1.0):
        raise MeasureError(f"inverted or out-of-range interval [{x1}, {x2}]")
    if m.kind == "lebesgue":
        return x2 - x1, 0.0
    mass = 0.0
    err = _local_tail(m, x1, x2)
    if m.cascade_mass > 0.0:
        part, slack = m.tree.cascade_mass(x1, x2)
        mass += m.cascade_mass * part
        err += m.cascade_mass * slack
    if m.atom_level_weights is not None:
        w = m.atom_level_weights
        for k in range(w.size):
            if w[k] == 0.0:
                continue
            mass += w[k] * m.tree.count_midpoints_in(k, x1, x2)
    return mass, err


def _local_tail(m: MeasureModel, x1: float, x2: float) -> float:
    if m.tail_bound == 0.0 or m.tree is None:
        return m.tail_bound
    L = m.tree.max_level
    n_meet = m.tree.count_intervals_meeting(L, x1, x2)
    return m.tail_bound * min(1.0, n_meet * 2.0 ** -L)


def mass_of_gridset(m: MeasureModel, s: GridSet):
    """Measure of a grid set: sum of mass_interval over its maximal runs."""
    starts, ends = s.runs()
    if starts.size == 0:
        return 0.0, 0.0
    width = s.cell_width
    mass = 0.0
    err = 0.0
    for a, b in zip(starts, ends):
        part, sub_err = mass_interval(m, a * width, (b + 1) * width)
        mass += part
        err += sub_err
    return mass, min(err, 1.0)


def cdf(m: MeasureModel, x: float) -> float:
    """Distribution function: mass of [0, x]."""
    return mass_interval(m, 0.0, x)[0]


def sample(m: MeasureModel, seed: int, n: int) -> np.ndarray:
    """n i.i.d. draws, deterministic given seed.

    Cascade draws descend the tree with fair child choices and end uniform in
    the deepest materialized interval; atom draws pick a level proportionally
    to its total weight (truncated tail redistributed proportionally, a bias
    of at most tail_bound in total variation) and then a uniform codeword.
    """
    if n <= 0:
        raise MeasureError("sample size must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if m.kind == "lebesgue":
        return rng.random(n)

    atom_total = m._atom_total()
    denom = m.cascade_mass + atom_total
    out = np.empty(n, dtype=np.float64)
    take_cascade = rng.random(n) < (m.cascade_mass / denom if denom else 0.0)
    n_casc = int(take_cascade.sum())
    tree = m.tree
    L = tree.max_level

    if n_casc:
        bits = rng.integers(0, 2, size=(n_casc, L), dtype=np.int64)
        lefts = bits.astype(np.float64) @ tree.steps[:L]
        out[take_cascade] = lefts + rng.random(n_casc) * tree.lengths[L]

    n_atom = n - n_casc
    if n_atom:
        w = m.atom_level_weights
        k = np.arange(w.size, dtype=np.float64)
        level_mass = w * np.exp2(k)
        probs = level_mass / level_mass.sum()
        levels = rng.choice(w.size, size=n_atom, p=probs)
        codes = rng.integers(0, np.exp2(levels.astype(np.float64)).astype(np.int64),
                             dtype=np.int64, endpoint=False)
        lefts = np.zeros(n_atom, dtype=np.float64)
        for i in range(int(levels.max())):
            active = levels > i
            shift = np.where(active, levels - 1 - i, 0)
            bit = (codes >> shift) & 1
            lefts += np.where(active, bit * tree.steps[i], 0.0)
        mids = lefts + tree.lengths[levels] / 2.0
        out[~take_cascade] = mids
    return out


@dataclass(frozen=True)
class LocalDimCurve:
    """Samples q_j = log mu(B(x, 2^-j)) / log(2^-j) plus tail min/max estimates."""

    anchor: float
    samples: tuple                 # ((j, q_j), ...) with finite q_j only
    window: int
    liminf_estimate: float
    limsup_estimate: float

    def qs(self) -> np.ndarray:
        return np.array([q for _, q in self.samples])


def local_dim_curve(m: MeasureModel, x: float, j_min: int, j_max: int,
                    window: int) -> LocalDimCurve:
    """Local-dimension curve of m at anchor x over dyadic radii 2^-j.

    Radii where the ball mass does not exceed the query error are skipped.
    liminf/limsup estimates are the min/max of the last `window` samples.
    """
    if not (0 <= j_min < j_max):
        raise MeasureError("need 0 <= j_min < j_max")
    samples = []
    for j in range(j_min, j_max + 1):
        r = 2.0 ** -j
        mass, err = mass_interval(m, max(0.0, x - r), min(1.0, x + r))
        if mass <= err or mass <= 0.0:
            continue
        samples.append((j, math.log2(mass) / -j))
    if not samples:
        raise MeasureError("anchor has no resolvable ball mass in the j range")
    tail = [q for _, q in samples[-window:]]
    return LocalDimCurve(x, tuple(samples), window, min(tail), max(tail))
