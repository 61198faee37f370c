"""Spectrum curves, the increasing 1-Lipschitz hull, and dimension predictions.

The hull of g is the pointwise smallest function above g that is both
nondecreasing and 1-Lipschitz. On a uniform grid it is computed exactly in
two linear passes: a running prefix max (forces monotonicity from the left)
and a backward recurrence T_i = max(g_i, T_{i+1} - dt) (forces the Lipschitz
cone from the right; T equals t_i + sup_{y >= t_i}(g(y) - y) on the grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumCurve:
    """A sampled function t -> g(t) on a uniform grid.

    NaN values mean "undefined" and are treated as -inf by the hull.
    """

    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise SpectrumError("grid and values must be equal-length 1-D arrays")
        if t.size > 1:
            steps = np.diff(t)
            if steps.min() <= 0:
                raise SpectrumError("grid must be strictly increasing")
            if steps.max() - steps.min() > 1e-12:
                raise SpectrumError("grid must be uniform within 1e-12")
        finite = v[~np.isnan(v)]
        if finite.size and not np.isfinite(finite.max()):
            raise SpectrumError("values must be bounded above")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0


def _masked_values(curve: SpectrumCurve) -> np.ndarray:
    v = curve.values.copy()
    v[np.isnan(v)] = -np.inf
    return v


def tilde_transform(curve: SpectrumCurve) -> SpectrumCurve:
    """One backward pass: value_i = t_i + max over y >= t_i of (g(y) - y)."""
    g = _masked_values(curve)
    n = g.size
    out = np.empty(n)
    acc = -np.inf
    dt = curve.dt
    for i in range(n - 1, -1, -1):
        acc = max(g[i], acc - dt)
        out[i] = acc
    return SpectrumCurve(curve.t, out)


def lipschitz_hull(curve: SpectrumCurve) -> SpectrumCurve:
    """Smallest nondecreasing 1-Lipschitz majorant, exact at grid points."""
    g = _masked_values(curve)
    prefix = np.maximum.accumulate(g)
    tilde = tilde_transform(SpectrumCurve(curve.t, g)).values
    return SpectrumCurve(curve.t, np.maximum(prefix, tilde))


def hull_by_relaxation(curve: SpectrumCurve, max_sweeps: int | None = None):
    """Independent oracle: fixed point of h <- max(g, h_prev, h_next - dt).

    Iterates full sweeps until nothing changes. Used by tests to check the
    two-pass hull; deliberately naive.
    """
    g = _masked_values(curve)
    h = g.copy()
    dt = curve.dt
    sweeps = 0
    limit = max_sweeps if max_sweeps is not None else 4 * g.size + 8
    while sweeps < limit:
        prev = np.concatenate(([-np.inf], h[:-1]))
        nxt = np.concatenate((h[1:] - dt, [-np.inf]))
        new = np.maximum(g, np.maximum(prev, nxt))
        sweeps += 1
        if np.array_equal(new, h):
            break
        h = new
    return SpectrumCurve(curve.t, h)


# ---------------------------------------------------------------------------
# Closed-form spectra of the two gap-midpoint measures


def _check_params(s: float, u: float) -> None:
    if not (0.0 < s < u < 1.0):
        raise SpectrumError(f"need 0 < s < u < 1, got s={s}, u={u}")


def _ramp(t, lo_knee, plateau, height):
    """Hull of a step: 0, then t - (plateau - height) ramp, then flat height."""
    t = np.asarray(t, dtype=np.float64)
    out = np.where(t < lo_knee, 0.0, t - (plateau - height))
    return np.where(t >= plateau, height, out)


def analytic_spectra(kind: str, s: float, u: float, beta: float,
                     which: str, t_grid) -> SpectrumCurve:
    """Closed-form increasing 1-Lipschitz hulls of the raw spectra.

    kind "mu1" needs beta > 1; kind "mu2" needs beta > u/s. which is "Fbar"
    (hull of the Hausdorff spectrum, step of height s at beta*s) or "Hbar"
    (hull of the packing spectrum, step of height u at beta*s).
    """
    _check_params(s, u)
    t = np.asarray(t_grid, dtype=np.float64)
    bs = beta * s
    if kind == "mu1":
        if beta <= 1.0:
            raise SpectrumError("mu1 spectra need beta > 1")
    elif kind == "mu2":
        if beta <= u / s:
            raise SpectrumError("mu2 spectra need beta > u/s")
    else:
        raise SpectrumError(f"unknown kind {kind!r}")

    if which == "Fbar":
        vals = _ramp(t, bs - s, bs, s)
    elif which == "Hbar":
        if bs <= u:
            # the ramp starts above zero at t = 0; no flat-zero piece
            vals = np.where(t >= bs, u, t - (bs - u))
        else:
            vals = _ramp(t, bs - u, bs, u)
    else:
        raise SpectrumError(f"which must be 'Fbar' or 'Hbar', got {which!r}")
    return SpectrumCurve(t, vals)


@dataclass(frozen=True)
class PredictedDimension:
    """Dimension prediction for the covering set of a given measure.

    lower/upper always bracket the almost-sure dimension; exact is filled
    only in regimes where a closed form is known.
    """

    lower: float
    upper: float
    exact: float | None
    regime_tag: str

    def __post_init__(self):
        if self.lower < -1e-12 or self.upper > 1.0 + 1e-12:
            raise SpectrumError("bounds must lie in [0, 1]")
        if self.exact is not None and not (
                self.lower - 1e-12 <= self.exact <= self.upper + 1e-12):
            raise SpectrumError("exact value must lie within the bounds")


def _hull_value_mu(which: str, kind: str, s, u, beta, t: float) -> float:
    return float(analytic_spectra(kind, s, u, beta, which,
                                  np.array([t])).values[0])


def predicted_f(kind: str, alpha: float, s: float | None = None,
                u: float | None = None,
                beta: float | None = None) -> PredictedDimension:
    """Predicted almost-sure dimension of the covering set at ball exponent alpha.

    lower is the hull of the Hausdorff spectrum at 1/alpha, upper is
    min(1/alpha, hull of the packing spectrum); exact is filled where a
    closed form holds for the given measure kind.
    """
    if alpha <= 0.0:
        raise SpectrumError("alpha must be positive")
    ia = 1.0 / alpha
    if kind == "lebesgue":
        v = min(1.0, ia)
        return PredictedDimension(v, v, v, "uniform: full-dimensional spectrum")
    if kind == "theta":
        _check_params(s, u)
        lower = min(ia, s)
        upper = min(ia, min(ia + u - s, u))
        exact = min(s, ia)
        return PredictedDimension(lower, upper, exact,
                                  "cascade: min(s, convergence exponent)")
    if kind == "mu1":
        if beta is None or beta <= 1.0:
            raise SpectrumError("mu1 needs beta > 1")
        _check_params(s, u)
        lower = _hull_value_mu("Fbar", "mu1", s, u, beta, ia)
        upper = min(ia, _hull_value_mu("Hbar", "mu1", s, u, beta, ia))
        exact = lower if ia < beta * s else None
        tag = ("atomic/hull-of-Hausdorff-spectrum regime" if exact is not None
               else "bounds only")
        return PredictedDimension(lower, upper, exact, tag)
    if kind == "mu2":
        _check_params(s, u)
        if beta is None or beta <= u / s:
            raise SpectrumError("mu2 needs beta > u/s")
        lower = _hull_value_mu("Fbar", "mu2", s, u, beta, ia)
        upper = min(ia, _hull_value_mu("Hbar", "mu2", s, u, beta, ia))
        if ia > beta * s - u:
            exact = min(s, _hull_value_mu("Hbar", "mu2", s, u, beta, ia))
            tag = "atomic/packing-hull regime (conjectured lower bound is strict)"
        else:
            exact, tag = None, "bounds only"
        return PredictedDimension(lower, upper, exact, tag)
    raise SpectrumError(f"unknown measure kind {kind!r}")
