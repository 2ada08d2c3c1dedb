"""Two-sided process: a descending branch on t <= 0 spliced to the
one-sided process on t >= 0, and the level-shifted local-time identities.

For t <= 0 the process is |B'| + mu * L' of an independent Brownian
motion B', realised through the Levy representation as (1 + mu) S' - B'
on the branch's own (descending) clock.  The branch is simulated until
mu * S' exceeds the top of the tracked level window; every earlier value
is then at least mu * S', so the local-time mass left untracked is zero
at all tracked levels and the "from -infinity" local times are complete.

In forward time the branch descends from high values to 0 at the splice.
The forward-time increments of  int sgn(B) dB  over the branch are the
+dBtilde' increments in reversed order: with |B'| = S' - Btilde' and
L' = S', forward deltas satisfy d|B| - dL = -d_s(S' - Btilde') + d_s S'
= d_s Btilde'.

Hitting times T_r with r > 0 are realised inside the branch, and the
white-noise integrals of the shifted identities become plain Ito sums
over the whole simulated history because their slab integrands vanish
while the process is still above the slab.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import partial

import numpy as np

from .ensemble import map_replicas
from .kernels import (STATUS_STOPPED, STOP_LT, StreamSim, collect_descent)
from .localtime import default_dx
from .paths import (DriverPath, MuProcessPath, ParameterError,
                    build_mu_process, sgn_b_increments, simulate_driver)
from .reports import TestReport
from .rng import (LANE_BACKWARD, LANE_PATH, replica_seed, replica_stream,
                  stream_from_seed)


@dataclass(frozen=True)
class TwoSidedPath:
    """Sampled two-sided process with its exact Ito increments."""

    mu: float
    dt: float
    r_max: float               # levels <= r_max have complete local time
    descent_values: np.ndarray  # branch samples in forward-time order
    descent_incs: np.ndarray   # forward increments of int sgn(B) dB
    forward: MuProcessPath
    forward_driver: DriverPath

    @property
    def splice_index(self) -> int:
        """Global sample index of t = 0."""
        return self.descent_values.size

    def times(self) -> np.ndarray:
        k = self.descent_values.size
        return self.dt * np.arange(-k, self.forward.n + 1)

    def values(self) -> np.ndarray:
        return np.concatenate([self.descent_values, self.forward.x])

    def increments(self) -> np.ndarray:
        """Forward-time increments of int sgn(B) dB over every step."""
        return np.concatenate([self.descent_incs,
                               sgn_b_increments(self.forward_driver)])

    def hitting_index(self, r: float) -> int:
        """Global index of the first step crossing level r; -1 if none."""
        v = self.values()
        d = v - r
        cross = np.nonzero(d[:-1] * d[1:] <= 0.0)[0]
        return int(cross[0]) if cross.size else -1


def simulate_two_sided(master_seed: int, dt: float, mu: float, r_max: float,
                       forward_steps: int, cap_time: float = 1e4,
                       replica: int = 0) -> TwoSidedPath:
    """Both branches from disjoint streams; the descending branch runs
    (without any excursion skipping) until mu * S' > r_max."""
    if r_max <= 0:
        raise ParameterError(f"r_max must be > 0, got {r_max}")
    rng_b = replica_stream(master_seed, replica, LANE_BACKWARD)
    cap_steps = int(cap_time / dt)
    bt = np.zeros(1)
    chunks = []
    steps = 0
    last = 0.0
    smax = 0.0
    while True:
        if steps >= cap_steps:
            raise ParameterError(
                f"descending branch cap ({cap_time} time units) reached "
                f"before mu*S' exceeded r_max={r_max}")
        n = min(1 << 16, cap_steps - steps)
        inc = rng_b.standard_normal(n) * np.sqrt(dt)
        seg = last + np.cumsum(inc)
        chunks.append(seg)
        steps += n
        last = seg[-1]
        run = np.maximum.accumulate(np.concatenate([[smax], seg]))[1:]
        smax = run[-1]
        if mu * smax > r_max:
            break
    btilde_b = np.concatenate([bt] + chunks)
    smax_b = np.maximum.accumulate(btilde_b)
    stop = int(np.argmax(mu * smax_b > r_max))
    btilde_b = btilde_b[:stop + 1]
    smax_b = smax_b[:stop + 1]
    v = (1.0 + mu) * smax_b - btilde_b
    fwd_driver = simulate_driver(replica_seed(master_seed, replica, LANE_PATH),
                                 dt, forward_steps)
    forward = build_mu_process(fwd_driver, mu)
    return TwoSidedPath(mu=float(mu), dt=float(dt), r_max=float(r_max),
                        descent_values=v[:0:-1],
                        descent_incs=np.diff(btilde_b)[::-1],
                        forward=forward, forward_driver=fwd_driver)


def _running_ell_counts(bins: np.ndarray) -> np.ndarray:
    """Per-step count of earlier steps in the same bin."""
    order = np.argsort(bins, kind="stable")
    ranks = np.empty(bins.size, dtype=np.int64)
    boundaries = np.nonzero(np.diff(bins[order]))[0] + 1
    starts = np.concatenate([[0], boundaries])
    group_start = np.repeat(starts, np.diff(np.concatenate([starts, [bins.size]])))
    ranks[order] = np.arange(bins.size) - group_start
    return ranks


def wr_integral_pair(path: TwoSidedPath, g, r: float, dx: float) -> tuple[float, float]:
    """The shift-consistency integrals: W-integral of g computed on the
    shifted process from T_r, and on the global path restricted to
    t >= T_r with levels shifted by r.

    For rectangles with x-support below r - dx the two are the same sum
    over the same steps, so they agree exactly; asserted in tests.
    """
    lo, hi = g.x_support()
    if hi > -dx:
        raise ParameterError("g must be supported below -dx in shifted levels")
    v = path.values()
    inc = path.increments()
    i_r = path.hitting_index(r)
    if i_r < 0:
        raise ParameterError(f"level {r} never reached")
    left = v[:-1]
    # global: bins anchored so edges coincide with the shifted grid
    bins_global = np.floor((left - (r + lo)) / dx).astype(np.int64)
    ell_global = _running_ell_counts(bins_global) * (path.dt / dx)
    vals_global = g(ell_global[i_r:], left[i_r:] - r)
    from_global = float(np.dot(vals_global, inc[i_r:]))
    # shifted: same construction on the sub-path only
    left_s = left[i_r:] - r
    bins_s = np.floor((left_s - lo) / dx).astype(np.int64)
    ell_s = _running_ell_counts(bins_s) * (path.dt / dx)
    vals_s = g(ell_s, left_s)
    from_shifted = float(np.dot(vals_s, inc[i_r:]))
    return from_shifted, from_global


def _descent_window_sums(vals, incs, r, k_levels, dx, dt, a):
    """Occupation and slab sums of the descending branch over the tracked
    window, truncated at tau_a^r if the local time at r fills up already
    inside the branch.  Grids match the streaming kernel: occupation in
    floor bins from r - k dx (band k = [r, r + dx) gauges the local time
    at r), slab sums in ceil bins with the fractional-position weight
    alongside.  Returns (occ, wn, qv, wt, done, n_used)."""
    m_occ = 2 * k_levels + 1
    m_wn = 2 * k_levels
    occ_x0 = r - k_levels * dx
    wn_x0 = r - k_levels * dx
    jb = np.floor((vals - occ_x0) / dx).astype(np.int64)
    target = a * dx / dt
    done = False
    n_used = vals.size
    w = None
    at_r = np.nonzero(jb == k_levels)[0]
    if at_r.size > target:
        k = int(np.floor(target))
        stop_pos = int(at_r[k])
        w = np.zeros(vals.size)
        w[:stop_pos] = 1.0
        w[stop_pos] = target - k
        done = True
        n_used = stop_pos
    occ = np.zeros(m_occ)
    wn = np.zeros(m_wn)
    qv = np.zeros(m_wn)
    wt = np.zeros(m_wn)
    inside = (jb >= 0) & (jb < m_occ)
    weights = w if w is not None else np.ones(vals.size)
    np.add.at(occ, jb[inside], weights[inside])
    pos = (vals - wn_x0) / dx
    jw = np.ceil(pos).astype(np.int64) - 1
    inw = (jw >= 0) & (jw < m_wn)
    np.add.at(wn, jw[inw], (weights * incs)[inw])
    np.add.at(qv, jw[inw], (weights * incs ** 2)[inw])
    np.add.at(wt, jw[inw], ((pos - jw) * weights * incs)[inw])
    return occ, wn, qv, wt, done, n_used


def _main_bis_replica(i, mu, r, a, k_levels, dt, dx, master_seed, cap_steps,
                      skip_margin):
    """One replica of the shifted identities, bin-averaged on both sides
    exactly as in the one-sided residual checks (so the r = 0 reduction is
    the same estimator): band i above r averages levels [r + i dx,
    r + (i+1) dx), band i below averages (r - (i+1) dx, r - i dx]; the
    slab integrals averaged over a band put the fractional-position
    weight on the boundary bin.  The stopping-rule quantisation is a
    constant common to all bands of a side and is calibrated out by the
    band mean."""
    rng_b = replica_stream(master_seed, i, LANE_BACKWARD)
    h_max = k_levels * dx
    top = r + (k_levels + 1) * dx
    vals_b, dbs_b, status_b, _, _ = collect_descent(
        rng_b, dt, mu, smax_target=top / mu, skip_level=top + skip_margin,
        cap_steps=cap_steps)
    if status_b != STATUS_STOPPED:
        return None
    vals_f = vals_b[::-1]
    incs_f = dbs_b[::-1]
    occ_s, wn_s, qv_s, wt_s, done, _ = _descent_window_sums(
        vals_f, incs_f, r, k_levels, dx=dx, dt=dt, a=a)
    m_occ = 2 * k_levels + 1
    inf_branch = float(np.min(vals_f)) if vals_f.size else np.inf
    if done:
        # local time at r filled up inside the branch already
        occ, wn, wt = occ_s, wn_s, wt_s
        inf_global = inf_branch
    else:
        rng_f = replica_stream(master_seed, i, LANE_PATH)
        sim = StreamSim(rng_f, dt, mu,
                        occ_x0=r - k_levels * dx, occ_dx=dx,
                        m_occ=m_occ, wn_x0=r - k_levels * dx, wn_dx=dx,
                        m_wn=2 * k_levels, stop_mode=STOP_LT,
                        stop_bin=k_levels, stop_local_time=a,
                        skip_margin=skip_margin,
                        deep_level=r - (k_levels + 2) * dx,
                        cap_steps=cap_steps,
                        occ_seed=np.round(occ_s).astype(np.int64),
                        wn_seed=wn_s, qv_seed=qv_s, wt_seed=wt_s)
        res = sim.run()
        if res.status != STATUS_STOPPED:
            return None
        occ, wn, wt = res.occ, res.wn, res.wt
        inf_global = min(inf_branch, res.inf)
    lt = occ * dt / dx
    h_mid = dx * (np.arange(k_levels) + 0.5)
    # bands above r: occ[k_levels + i], slabs (r, ...] from wn[k_levels:]
    lhs_up = lt[k_levels:2 * k_levels]
    wn_up = wn[k_levels:]
    wt_up = wt[k_levels:]
    cum_up = np.concatenate([[0.0], np.cumsum(wn_up)[:-1]])
    rhs_up = a + 2.0 * (cum_up + wn_up - wt_up) + (2.0 / mu) * h_mid
    # the level r + h_max itself, for the moment check: centered average
    # of the two adjacent bands
    l_top = 0.5 * (lt[2 * k_levels - 1] + lt[2 * k_levels])
    # bands below r: occ[k_levels - 1 - i], slabs (..., r] from wn[:k_levels]
    lhs_dn = lt[k_levels - 1::-1]
    wn_dn = wn[k_levels - 1::-1]
    wt_dn = wt[k_levels - 1::-1]
    cum_dn = np.concatenate([[0.0], np.cumsum(wn_dn)[:-1]])
    rhs_dn = a - 2.0 * (cum_dn + wt_dn) + (2.0 - 2.0 / mu) * h_mid
    i_inf = min(k_levels - 1,
                int(np.floor(abs(min(inf_global - r, 0.0)) / dx)) - 1)
    gap_up = lhs_up - rhs_up
    res_up = float(np.max(np.abs(gap_up - np.mean(gap_up))))
    if i_inf < 1:
        res_dn = np.nan
    else:
        gap_dn = (lhs_dn - rhs_dn)[:i_inf + 1]
        res_dn = float(np.max(np.abs(gap_dn - np.mean(gap_dn))))
    return l_top, res_up, res_dn


def verify_main_bis(mu, r, a, h_grid, N, dt, dx=None, master_seed=0,
                    workers=None, cap_time=1e5, skip_margin=0.5) -> TestReport:
    """Shifted local-time identities at level r, local time from the
    branch origin: mean of L(tau_a^r, r + h_max) against a + 2 h_max / mu,
    plus the pathwise residuals of both shifted identities."""
    if a <= 0:
        raise ParameterError(f"a must be > 0, got {a}")
    if dx is None:
        dx = default_dx(dt)
    h_max = float(np.max(np.asarray(h_grid, dtype=float)))
    k_levels = max(1, int(round(h_max / dx)))
    h_max = k_levels * dx
    t0 = time.monotonic()
    cap_steps = int(cap_time / dt)
    out = map_replicas(
        partial(_main_bis_replica, mu=mu, r=r, a=a, k_levels=k_levels, dt=dt,
                dx=dx, master_seed=master_seed, cap_steps=cap_steps,
                skip_margin=skip_margin),
        N, workers)
    kept = [o for o in out if o is not None]
    discards = N - len(kept)
    lvals = np.array([o[0] for o in kept])
    res_up = np.array([o[1] for o in kept])
    res_dn = np.array([o[2] for o in kept])
    n = lvals.size
    mean = float(np.mean(lvals))
    se = float(np.std(lvals, ddof=1) / np.sqrt(n))
    mean_target = a + 2.0 * h_max / mu
    mean_ok = abs(mean - mean_target) <= 3.0 * se
    discard_frac = discards / N
    passed = mean_ok and discard_frac <= 0.01
    return TestReport(
        name="two-sided-identities",
        parameters={"mu": mu, "r": r, "a": a, "h_max": h_max, "N": N,
                    "dt": dt, "dx": dx, "master_seed": master_seed},
        statistic=abs(mean - mean_target), threshold=3.0 * se, passed=passed,
        metadata={"mean": mean, "se": se, "mean_target": mean_target,
                  "median_residual_up": float(np.median(res_up)),
                  "median_residual_down": float(np.nanmedian(res_dn)),
                  "discard_fraction": discard_frac,
                  "runtime_s": time.monotonic() - t0})
