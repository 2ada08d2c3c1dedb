"""Excursion gluing at a level, semimartingale decompositions, independence.

Gluing filters the grid samples by their own value: sample i goes below
iff X_{t_i} <= x, above otherwise.  Each kept sample i < n carries its
step [t_i, t_{i+1}) on the glued clock, so the two glued clocks add up
to the horizon exactly and the sample sequence is partitioned, making
reconstruction an exact interleaving.  Ito sums over a glued path use
the increment of each kept sample's own step (left-endpoint,
non-anticipating convention).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .localtime import default_dx
from .paths import (DriverPath, MuProcessPath, ParameterError,
                    build_mu_process, sgn_b_increments)
from .reports import TestReport

SIDE_BELOW = "below"
SIDE_ABOVE = "above"


@dataclass(frozen=True)
class GluedPath:
    """Excursions of a path on one side of a level, glued in time order."""

    side: str
    level: float
    dt: float
    values: np.ndarray    # X at the kept samples
    back_map: np.ndarray  # original sample indices (strictly increasing)
    source: MuProcessPath

    @property
    def clock(self) -> float:
        """Total glued time A at the horizon (kept steps only)."""
        return self.dt * np.count_nonzero(self.back_map < self.source.n)

    def local_time_at_level(self, dx: float) -> np.ndarray:
        """L^{side,x}(u, x) along the glued clock, from the original field's
        one-sided bin [x, x + dx) via the time change back_map."""
        src_bins = np.floor((self.source.x[:-1] - self.level) / dx).astype(np.int64)
        hits = np.concatenate([[0], np.cumsum(src_bins == 0)])
        return hits[np.minimum(self.back_map, self.source.n)] * (self.dt / dx)


def glue(path: MuProcessPath, x: float, side: str) -> GluedPath:
    if side not in (SIDE_BELOW, SIDE_ABOVE):
        raise ParameterError(f"side must be '{SIDE_BELOW}' or '{SIDE_ABOVE}'")
    mask = path.x <= x if side == SIDE_BELOW else path.x > x
    back_map = np.nonzero(mask)[0]
    return GluedPath(side=side, level=float(x), dt=path.dt,
                     values=path.x[back_map], back_map=back_map, source=path)


def reconstruct(below: GluedPath, above: GluedPath) -> np.ndarray:
    """Interleave the two glued paths back into the original samples."""
    if below.source is not above.source:
        raise ParameterError("glued paths come from different source paths")
    if below.level != above.level:
        raise ParameterError("glued paths were built at different levels")
    n1 = below.source.n + 1
    if below.back_map.size + above.back_map.size != n1:
        raise ParameterError("glued paths do not partition the samples")
    out = np.empty(n1)
    out[below.back_map] = below.values
    out[above.back_map] = above.values
    return out


def decomposition_residual(glued: GluedPath, driver: DriverPath, mu: float,
                           dx: float | None = None) -> np.ndarray:
    """Pathwise defect of the glued semimartingale decomposition.

    Above a level x <= 0 the glued process should satisfy
        X+ = beta+ - (1-mu)/mu * I+ + L+( . , x) / 2,
    and below,
        X- = x + beta- - (1-mu)/mu * (I- - x) - L-( . , x) / 2,
    with beta accumulated from the exact sgn(B) dB increments over the
    kept steps.  Returns the residual curve over the glued clock.
    """
    if dx is None:
        dx = default_dx(glued.dt)
    inc = sgn_b_increments(driver)
    kept = glued.back_map[glued.back_map < glued.source.n]
    m = kept.size
    if m == 0:
        return np.zeros(0)
    vals = glued.values[:m]
    # beta before each kept step (value at glued clock of that sample)
    beta = np.concatenate([[0.0], np.cumsum(inc[kept])])[:m]
    inf_run = np.minimum.accumulate(vals)
    lt = glued.local_time_at_level(dx)[:m]
    coeff = (1.0 - mu) / mu
    if glued.side == SIDE_ABOVE:
        model = beta - coeff * inf_run + 0.5 * lt
    else:
        x = glued.level
        model = x + beta - coeff * (inf_run - x) - 0.5 * lt
    return vals - model


def independence_test(paths, x: float, f_below, f_above,
                      name: str = "excursion-independence") -> TestReport:
    """Sample correlation of functionals of the two glued sides.

    Passes iff |rho| <= 3/sqrt(N); also reports a 2x2 median-split
    chi-square statistic.  A zero-variance functional is inconclusive.
    """
    fb, fa = [], []
    for p in paths:
        fb.append(f_below(glue(p, x, SIDE_BELOW)))
        fa.append(f_above(glue(p, x, SIDE_ABOVE)))
    fb = np.asarray(fb, dtype=float)
    fa = np.asarray(fa, dtype=float)
    n = fb.size
    threshold = 3.0 / np.sqrt(n)
    meta: dict = {"n": n}
    if fb.std() == 0.0 or fa.std() == 0.0:
        return TestReport(name=name, parameters={"x": x, "n": n}, statistic=0.0,
                          threshold=threshold, passed=False,
                          metadata={**meta, "inconclusive": "zero-variance functional"})
    rho = float(np.corrcoef(fb, fa)[0, 1])
    # 2x2 contingency table on median splits
    bb = fb > np.median(fb)
    aa = fa > np.median(fa)
    table = np.array([[np.sum(bb & aa), np.sum(bb & ~aa)],
                      [np.sum(~bb & aa), np.sum(~bb & ~aa)]], dtype=float)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / n
    with np.errstate(invalid="ignore", divide="ignore"):
        chi2 = float(np.nansum((table - expected) ** 2 / expected))
    meta["chi2_median_split"] = chi2
    return TestReport(name=name, parameters={"x": x, "n": n}, statistic=abs(rho),
                      threshold=threshold, passed=abs(rho) <= threshold, metadata=meta)


def simulate_until_clocks(seed: int, mu: float, x: float, dt: float,
                          u0: float, chunk_steps: int = 20000,
                          max_steps: int = 4 * 10 ** 6) -> MuProcessPath | None:
    """Simulate until both glued clocks at level x exceed u0.

    Functionals of either glued path restricted to its first u0 clock
    units are then never truncated by the simulation horizon, so the
    horizon cannot couple the two sides.  Both clocks grow without bound,
    so the extension terminates for almost every path; None is returned
    if max_steps is hit first (callers count these as discards).
    """
    from .rng import stream_from_seed
    rng = stream_from_seed(seed)
    sqdt = np.sqrt(dt)
    need = int(np.ceil(u0 / dt))
    chunks = [np.zeros(1)]
    below = above = 0
    last = 0.0
    run_max = 0.0
    n = 0
    while below < need or above < need:
        if n >= max_steps:
            return None
        k = min(chunk_steps, max_steps - n)
        seg = last + np.cumsum(rng.standard_normal(k) * sqdt)
        smax_seg = np.maximum.accumulate(np.maximum(seg, run_max))
        xv = (1.0 - mu) * smax_seg - seg
        # left endpoints of the k new steps: previous sample + first k-1
        left = np.concatenate([[(1.0 - mu) * run_max - last], xv[:-1]])
        nb = int(np.count_nonzero(left <= x))
        below += nb
        above += k - nb
        chunks.append(seg)
        last = seg[-1]
        run_max = smax_seg[-1]
        n += k
    btilde = np.concatenate(chunks)
    driver = DriverPath(seed=int(seed), dt=float(dt), n=n, btilde=btilde,
                        smax=np.maximum.accumulate(btilde))
    return build_mu_process(driver, mu)


def occupation_below_functional(threshold_offset: float, horizon: float):
    """Occupation time of a below-glued path under level x - offset, on its
    own clock truncated at `horizon` time units (bounded functional)."""
    def f(g: GluedPath) -> float:
        k = int(round(horizon / g.dt))
        vals = g.values[:k]
        return g.dt * np.count_nonzero(vals <= g.level - threshold_offset)
    return f


def occupation_above_functional(threshold_offset: float, horizon: float):
    def f(g: GluedPath) -> float:
        k = int(round(horizon / g.dt))
        vals = g.values[:k]
        return g.dt * np.count_nonzero(vals > g.level + threshold_offset)
    return f
