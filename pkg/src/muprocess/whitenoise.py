"""Pathwise white-noise integrals and martingale-measure curves.

The white noise acting on a function g of (local-time height, level) is
realised on a simulated path as the non-anticipating Ito sum

    sum_i  g( Lhat(t_i, X_{t_i}), X_{t_i} ) * ( -dBtilde_i ),

where -dBtilde are the exact grid increments of  int sgn(B) dB  and
Lhat is read from the occupation field at its already-accumulated value
(left limit).  The Ray-Knight integrands of the two main identities are
indicator slabs in the level variable, accumulated per level bin so a
whole h-grid comes out of one pass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .localtime import LocalTimeField, inverse_local_time
from .paths import (DriverPath, MuProcessPath, ParameterError, TimeIndex,
                    hitting_time, sgn_b_increments)


class NotReachedError(RuntimeError):
    """A required stopping time did not occur before the horizon."""


@dataclass(frozen=True)
class Rect:
    """One rectangle [l0, l1) x [x0, x1) with a weight."""

    l0: float
    l1: float
    x0: float
    x1: float
    weight: float = 1.0

    def __post_init__(self):
        if not (self.l1 > self.l0 >= 0.0 and self.x1 > self.x0):
            raise ParameterError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.l1 - self.l0) * (self.x1 - self.x0)

    def overlaps(self, other: "Rect") -> bool:
        return (self.l0 < other.l1 and other.l0 < self.l1
                and self.x0 < other.x1 and other.x0 < self.x1)


@dataclass(frozen=True)
class StepFunction2D:
    """Finite linear combination of disjoint indicator rectangles."""

    rects: tuple

    def __post_init__(self):
        rects = tuple(self.rects)
        object.__setattr__(self, "rects", rects)
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                if rects[i].overlaps(rects[j]):
                    raise ParameterError(f"rectangles {i} and {j} overlap")

    @property
    def norm2(self) -> float:
        return sum(r.weight ** 2 * r.area for r in self.rects)

    def __call__(self, ell, x):
        ell = np.asarray(ell, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(ell, x).shape)
        for r in self.rects:
            out += r.weight * ((ell >= r.l0) & (ell < r.l1)
                               & (x >= r.x0) & (x < r.x1))
        return float(out) if out.ndim == 0 else out

    def x_support(self) -> tuple[float, float]:
        return (min(r.x0 for r in self.rects), max(r.x1 for r in self.rects))

    def scaled(self, c: float) -> "StepFunction2D":
        return StepFunction2D(tuple(
            Rect(r.l0, r.l1, r.x0, r.x1, c * r.weight) for r in self.rects))


@dataclass(frozen=True)
class MartingaleMeasurePath:
    """Cumulative white-noise integrals over a nested family of level slabs."""

    levels: np.ndarray      # slab boundaries, h-grid ordering of the caller
    cumulative: np.ndarray  # cumulative[0] = 0
    qv: np.ndarray          # discrete quadratic variation per slab
    metadata: dict


def _running_ell(field: LocalTimeField) -> np.ndarray:
    """Lhat(t_i, X_{t_i}) left limits: per-step count of earlier visits to
    the step's own bin, times dt/dx."""
    bins = field.bin_idx
    order = np.argsort(bins, kind="stable")
    ranks = np.empty(bins.size, dtype=np.int64)
    boundaries = np.nonzero(np.diff(bins[order]))[0] + 1
    starts = np.concatenate([[0], boundaries])
    pos = np.arange(bins.size)
    group_start = np.repeat(starts, np.diff(np.concatenate([starts, [bins.size]])))
    ranks[order] = pos - group_start
    return ranks * (field.dt / field.dx)


def _horizon_weights(n: int, horizon: TimeIndex | None) -> tuple[int, float]:
    if horizon is None:
        return n, 0.0
    if not horizon.reached:
        raise NotReachedError("horizon not reached")
    return min(horizon.step, n), horizon.frac


def integrate(g: StepFunction2D, path: MuProcessPath, field: LocalTimeField,
              driver: DriverPath, horizon: TimeIndex | None = None) -> float:
    """Ito sum of g(Lhat, X) against the exact sgn(B) dB increments."""
    lo, hi = g.x_support()
    if lo < field.x0 or hi > field.x0 + field.m * field.dx:
        raise ParameterError("x-support of g not covered by the field window")
    inc = sgn_b_increments(driver)
    ell = _running_ell(field)
    vals = g(ell, path.x[:-1])
    k, frac = _horizon_weights(path.n, horizon)
    total = float(np.dot(vals[:k], inc[:k]))
    if frac > 0.0 and k < path.n:
        total += frac * vals[k] * inc[k]
    return total


def coverage_fraction(g: StepFunction2D, field: LocalTimeField,
                      horizon: TimeIndex | None = None) -> float:
    """Fraction of norm2(g) swept by the path's local-time field."""
    k, frac = _horizon_weights(field.n, horizon)
    stop = TimeIndex(step=k, frac=frac) if horizon is not None else TimeIndex(step=field.n, frac=0.0)
    lt = field.counts_at(stop) * (field.dt / field.dx)
    edges = field.x0 + field.dx * np.arange(field.m + 1)
    swept = 0.0
    for r in g.rects:
        width = np.clip(np.minimum(edges[1:], r.x1) - np.maximum(edges[:-1], r.x0),
                        0.0, None)
        ell_cover = np.clip(np.minimum(lt, r.l1) - r.l0, 0.0, None)
        swept += r.weight ** 2 * float(np.dot(width, ell_cover))
    n2 = g.norm2
    return swept / n2 if n2 > 0 else 0.0


def martingale_measure(A: tuple[float, float], path: MuProcessPath,
                       field: LocalTimeField, driver: DriverPath,
                       levels: np.ndarray,
                       horizon: TimeIndex | None = None) -> MartingaleMeasurePath:
    """M_r(A) = W(1_{A x [-r, 0]}) along a grid of slab bottoms.

    `levels` descends from 0; cumulative[k] integrates over [levels[k], 0].
    Additivity over disjoint slabs is exact because a single pass
    accumulates per-bin sums which are then re-bracketed.
    """
    levels = np.asarray(levels, dtype=float)
    if levels[0] != 0.0 or np.any(np.diff(levels) >= 0):
        raise ParameterError("levels must descend from 0")
    inc = sgn_b_increments(driver)
    ell = _running_ell(field)
    x = path.x[:-1]
    k, frac = _horizon_weights(path.n, horizon)
    w = np.zeros(path.n)
    w[:k] = 1.0
    if frac > 0.0 and k < path.n:
        w[k] = frac
    sel = w * ((ell >= A[0]) & (ell < A[1]))
    cumulative = np.zeros(levels.size)
    qv = np.zeros(levels.size)
    for i in range(1, levels.size):
        slab = (x > levels[i]) & (x <= levels[i - 1])
        cumulative[i] = cumulative[i - 1] + float(np.dot(sel * slab, inc))
        qv[i] = qv[i - 1] + float(np.dot(sel * slab, inc ** 2))
    return MartingaleMeasurePath(levels=levels, cumulative=cumulative, qv=qv,
                                 metadata={"A": A})


def _slab_curve(path: MuProcessPath, driver: DriverPath,
                stop: TimeIndex) -> tuple[np.ndarray, np.ndarray]:
    """Increments and step weights (1 before the stop, frac on its step)."""
    inc = sgn_b_increments(driver)
    k, frac = _horizon_weights(path.n, stop)
    w = np.zeros(path.n)
    w[:k] = 1.0
    if frac > 0.0 and k < path.n:
        w[k] = frac
    return inc, w


def rk_integral_first(path: MuProcessPath, field: LocalTimeField,
                      driver: DriverPath, a: float,
                      h_grid: np.ndarray) -> MartingaleMeasurePath:
    """h |-> Ito sum of 1{t <= tau_a^0, -h < X_t <= 0} (-dBtilde).

    By the Tanaka reduction this is the white-noise integral appearing
    in the first Ray-Knight identity.
    """
    stop = inverse_local_time(path, field, a, 0.0)
    if not stop.reached:
        raise NotReachedError(f"tau_{a}^0 not reached before the horizon")
    h_grid = np.asarray(h_grid, dtype=float)
    inc, w = _slab_curve(path, driver, stop)
    x = path.x[:-1]
    inf_at_stop = float(np.min(path.x[:stop.step + 1]))
    cumulative = np.zeros(h_grid.size)
    qv = np.zeros(h_grid.size)
    truncated = []
    for i, h in enumerate(h_grid):
        if h > abs(inf_at_stop):
            truncated.append(float(h))
        slab = (x > -h) & (x <= 0.0)
        sw = slab * w
        cumulative[i] = float(np.dot(sw, inc))
        qv[i] = float(np.dot(sw, inc ** 2))
    meta = {"stop": stop, "inf_at_stop": inf_at_stop}
    if truncated:
        meta["h_beyond_infimum"] = truncated
    return MartingaleMeasurePath(levels=-h_grid, cumulative=cumulative, qv=qv,
                                 metadata=meta)


def rk_integral_second(path: MuProcessPath, field: LocalTimeField,
                       driver: DriverPath, b: float,
                       h_grid: np.ndarray) -> MartingaleMeasurePath:
    """h |-> Ito sum of 1{t <= T_b, X_t <= b + h} (-dBtilde)."""
    if b >= 0:
        raise ParameterError(f"b must be < 0, got {b}")
    stop = hitting_time(path, b)
    if not stop.reached:
        raise NotReachedError(f"T_{b} not reached before the horizon")
    h_grid = np.asarray(h_grid, dtype=float)
    inc, w = _slab_curve(path, driver, stop)
    x = path.x[:-1]
    cumulative = np.zeros(h_grid.size)
    qv = np.zeros(h_grid.size)
    for i, h in enumerate(h_grid):
        slab = x <= b + h
        sw = slab * w
        cumulative[i] = float(np.dot(sw, inc))
        qv[i] = float(np.dot(sw, inc ** 2))
    return MartingaleMeasurePath(levels=b + h_grid, cumulative=cumulative,
                                 qv=qv, metadata={"stop": stop})
