"""Streaming simulation kernels for large Monte Carlo ensembles.

One compiled loop advances the Levy-representation state
(Btilde, S, X) step by step while accumulating, per level bin,

  * occupation counts (-> local-time profiles; left-closed bins
    [edge, edge + dx), matching the occupation estimator),
  * Ito sums of -dBtilde and their squares (-> white-noise slab
    integrals and quadratic variation; left-open bins (edge, edge+dx]
    so that nested slabs (r, r + h] re-bracket exactly), plus the same
    sums weighted by the fractional position within the bin (-> exact
    bin-averaged slab integrals, see the residual checks),
  * optional rectangle integrands g(Lhat, X) * (-dBtilde).

Stopping rules: hitting a level (with sub-step interpolation), local
time at a bin exceeding a threshold, or a fixed number of steps; a hard
step cap always applies.

While X sits above every measurement window it carries no information
(S is frozen whenever X > 0), so excursions above a margin are advanced
in one move by sampling the exact Brownian first-passage time back down
(Levy law d^2 / Z^2), rounded up to the grid.  This removes the heavy
upper-excursion cost without touching the law of anything measured
below the margin.

Symmetrically, once the path crosses a deep level placed below every
tracked bin, the whole excursion below it is excised: the excursion
returns to the deep level almost surely, touches no tracked statistic,
and interacts with the running-minimum boundary only below the deep
level (the minimum is at or below the crossing point by construction),
so removing it leaves the trace above the deep level, and hence every
output, exactly unchanged.  Only the clock is altered: `steps` then
counts retained time, which is what the cap is applied to.  Without
this, inverse-local-time stops are impractical: the time spent below
is heavy-tailed (the return needs the maximum process to travel a
macroscopic distance) and dominated by regions that carry nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .paths import TimeIndex
from .rng import NormalChunks

STOP_NONE = 0
STOP_HIT = 1
STOP_LT = 2

STATUS_NEED_MORE = 0
STATUS_STOPPED = 1
STATUS_CAPPED = 2

# float state slots
_BT, _SM, _X, _INF, _FRAC, _DB, _XLEFT = range(7)
# int state slots
_STEPS, _USED, _OUT_LO, _OUT_HI, _SKIPS, _DIVES = range(6)


@njit(cache=True)
def _advance(st, ist, normals, dt, sqrt_dt, one_minus_mu,
             occ, occ_x0, occ_dx,
             wn, qv, wt, wn_x0, wn_dx,
             rl0, rl1, rx0, rx1, rw, gacc,
             stop_mode, stop_level, stop_bin, stop_cnt,
             skip_level, do_skip, deep_level, do_deep, cap_steps):
    bt = st[_BT]; s = st[_SM]; x = st[_X]; inf = st[_INF]
    steps = ist[_STEPS]
    out_lo = ist[_OUT_LO]; out_hi = ist[_OUT_HI]; skips = ist[_SKIPS]
    dives = ist[_DIVES]
    m_occ = occ.shape[0]
    m_wn = wn.shape[0]
    n_rects = rl0.shape[0]
    ell_scale = dt / occ_dx
    k = 0
    nmax = normals.shape[0]
    status = STATUS_NEED_MORE
    while True:
        if steps >= cap_steps:
            status = STATUS_CAPPED
            break
        if k + 1 >= nmax:
            status = STATUS_NEED_MORE
            break
        if stop_mode == STOP_HIT and x == stop_level:
            # exactly at the level on a grid point; current step untouched
            st[_FRAC] = -1.0  # marker: no partial-step adjustment needed
            status = STATUS_STOPPED
            break
        db = sqrt_dt * normals[k]
        k += 1
        nb = bt + db
        ns = nb if nb > s else s
        nx = one_minus_mu * ns - nb
        # accumulate the step [t, t+dt), integrands at the left endpoint x
        j = int(np.floor((x - occ_x0) / occ_dx))
        ell = -1.0
        if j < 0:
            out_lo += 1
        elif j >= m_occ:
            out_hi += 1
        else:
            ell = occ[j] * ell_scale
            occ[j] += 1
        pos = (x - wn_x0) / wn_dx
        jw = int(np.ceil(pos)) - 1
        if 0 <= jw < m_wn:
            wn[jw] -= db
            qv[jw] += db * db
            wt[jw] -= (pos - jw) * db
        if n_rects > 0 and ell >= 0.0:
            for ri in range(n_rects):
                if rl0[ri] <= ell < rl1[ri] and rx0[ri] <= x < rx1[ri]:
                    gacc[ri] -= rw[ri] * db
        steps += 1
        # stopping rules on the transition x -> nx
        if stop_mode == STOP_HIT:
            if (x - stop_level) * (nx - stop_level) <= 0.0:
                denom = x - nx
                frac = 0.0 if denom == 0.0 else (x - stop_level) / denom
                st[_FRAC] = frac
                st[_DB] = db
                st[_XLEFT] = x
                status = STATUS_STOPPED
                if nx < inf:
                    inf = nx
                bt = nb; s = ns; x = nx
                break
        elif stop_mode == STOP_LT and j == stop_bin:
            if occ[stop_bin] > stop_cnt:
                st[_FRAC] = stop_cnt - (occ[stop_bin] - 1.0)
                st[_DB] = db
                st[_XLEFT] = x
                status = STATUS_STOPPED
                if nx < inf:
                    inf = nx
                bt = nb; s = ns; x = nx
                break
        # exact first-passage skip of high excursions
        if do_skip and nx > skip_level:
            z2 = normals[k]
            k += 1
            if z2 == 0.0:
                z2 = 1e-300
            d = nx - skip_level
            tau = (d / z2) * (d / z2)
            nsk_f = tau / dt
            remaining = cap_steps - steps
            if nsk_f >= remaining:
                steps = cap_steps
                out_hi += remaining
                skips += 1
                status = STATUS_CAPPED
                bt = one_minus_mu * ns - skip_level
                s = ns
                x = skip_level
                break
            nsk = np.int64(nsk_f) + 1
            steps += nsk
            out_hi += nsk
            skips += 1
            nx = skip_level
            nb = one_minus_mu * ns - skip_level
        # excise the excursion below the deep level (see module docstring);
        # the clamped state keeps Btilde < S, so S stays frozen until the
        # next crossing, which is excised in turn
        elif do_deep and nx < deep_level:
            if nx < inf:
                inf = nx
            dives += 1
            nx = deep_level
            nb = one_minus_mu * ns - deep_level
        if nx < inf:
            inf = nx
        bt = nb; s = ns; x = nx
    st[_BT] = bt; st[_SM] = s; st[_X] = x; st[_INF] = inf
    ist[_STEPS] = steps
    ist[_USED] = k
    ist[_OUT_LO] = out_lo; ist[_OUT_HI] = out_hi; ist[_SKIPS] = skips
    ist[_DIVES] = dives
    return status


@njit(cache=True)
def _advance_collect(st, ist, normals, dt, sqrt_dt, coeff,
                     out_v, out_db, smax_target, skip_level, cap_steps):
    """Advance x = coeff * S - Btilde, collecting (value, dB) per kept step.

    Used for the descending branch of a two-sided process (coeff = 1 + mu,
    x = |B'| + mu * S').  Stops once mu * S' exceeds its target, i.e. once
    every earlier (unsimulated) value is guaranteed to stay above the
    tracked window.  Excursions above skip_level carry no tracked
    information and are skipped by exact first passage; their steps are
    not collected.
    """
    bt = st[_BT]; s = st[_SM]; x = st[_X]; inf = st[_INF]
    steps = ist[_STEPS]
    skips = ist[_SKIPS]
    c = ist[_OUT_LO]  # reuse the slot as the collected-sample count
    cap_c = out_v.shape[0]
    k = 0
    nmax = normals.shape[0]
    status = STATUS_NEED_MORE
    while True:
        if steps >= cap_steps:
            status = STATUS_CAPPED
            break
        if k + 1 >= nmax or c >= cap_c:
            status = STATUS_NEED_MORE
            break
        db = sqrt_dt * normals[k]
        k += 1
        nb = bt + db
        ns = nb if nb > s else s
        nx = coeff * ns - nb
        out_v[c] = nx
        out_db[c] = db
        c += 1
        steps += 1
        if nx < inf:
            inf = nx
        if ns > smax_target:
            bt = nb; s = ns; x = nx
            status = STATUS_STOPPED
            break
        if nx > skip_level:
            z2 = normals[k]
            k += 1
            if z2 == 0.0:
                z2 = 1e-300
            d = nx - skip_level
            tau = (d / z2) * (d / z2)
            nsk_f = tau / dt
            remaining = cap_steps - steps
            if nsk_f >= remaining:
                steps = cap_steps
                skips += 1
                status = STATUS_CAPPED
                bt = coeff * ns - skip_level
                s = ns
                x = skip_level
                break
            steps += np.int64(nsk_f) + 1
            skips += 1
            nx = skip_level
            nb = coeff * ns - skip_level
        bt = nb; s = ns; x = nx
    st[_BT] = bt; st[_SM] = s; st[_X] = x; st[_INF] = inf
    ist[_STEPS] = steps
    ist[_USED] = k
    ist[_OUT_LO] = c
    ist[_SKIPS] = skips
    return status


def collect_descent(rng: np.random.Generator, dt: float, mu: float,
                    smax_target: float, skip_level: float,
                    cap_steps: int = 10 ** 9, chunk: int = 1 << 16):
    """Run the descending branch until mu * S' > mu * smax_target.

    Returns (values, dbs, status, steps, skips): per kept step, the value
    at the end of the step and the Btilde increment over it, in the
    branch's own (descending) clock.
    """
    st = np.zeros(8)
    ist = np.zeros(6, dtype=np.int64)
    vals = []
    dbs = []
    out_v = np.empty(1 << 16)
    out_db = np.empty(1 << 16)
    leftover = _EMPTY
    chunks = NormalChunks(rng, chunk)
    while True:
        normals = np.concatenate([leftover, chunks.next()]) if leftover.size else chunks.next()
        ist[_OUT_LO] = 0
        status = _advance_collect(st, ist, normals, dt, np.sqrt(dt), 1.0 + mu,
                                  out_v, out_db, smax_target, skip_level,
                                  cap_steps)
        c = int(ist[_OUT_LO])
        vals.append(out_v[:c].copy())
        dbs.append(out_db[:c].copy())
        if status != STATUS_NEED_MORE:
            return (np.concatenate(vals), np.concatenate(dbs), status,
                    int(ist[_STEPS]), int(ist[_SKIPS]))
        leftover = normals[int(ist[_USED]):]


_EMPTY = np.zeros(0)


@dataclass
class StreamResult:
    """Outcome of one streaming simulation."""

    status: int
    stop: TimeIndex
    steps: int
    occ: np.ndarray       # float counts, partial stop step already weighted
    wn: np.ndarray
    qv: np.ndarray
    wt: np.ndarray        # wn weighted by fractional position in the bin
    gacc: np.ndarray
    inf: float
    out_lo: int
    out_hi: int
    skips: int
    dives: int
    state: np.ndarray

    @property
    def capped(self) -> bool:
        return self.status == STATUS_CAPPED


class StreamSim:
    """Chunked driver around the compiled kernel for one replica."""

    def __init__(self, rng: np.random.Generator, dt: float, mu: float,
                 occ_x0: float, occ_dx: float, m_occ: int,
                 wn_x0: float = 0.0, wn_dx: float = 1.0, m_wn: int = 0,
                 rects=None, stop_mode: int = STOP_NONE,
                 stop_level: float = 0.0, stop_bin: int = -1,
                 stop_local_time: float = 0.0,
                 skip_margin: float | None = 1.0,
                 deep_level: float | None = None,
                 cap_steps: int = 10 ** 9, chunk: int = 1 << 16,
                 occ_seed: np.ndarray | None = None,
                 wn_seed: np.ndarray | None = None,
                 qv_seed: np.ndarray | None = None,
                 wt_seed: np.ndarray | None = None,
                 init_state: np.ndarray | None = None,
                 init_steps: int = 0):
        self.rng = rng
        self.dt = float(dt)
        self.mu = float(mu)
        self.occ_x0 = float(occ_x0)
        self.occ_dx = float(occ_dx)
        self.m_occ = int(m_occ)
        self.wn_x0 = float(wn_x0)
        self.wn_dx = float(wn_dx)
        self.m_wn = int(m_wn)
        self.stop_mode = stop_mode
        self.stop_level = float(stop_level)
        self.stop_bin = int(stop_bin)
        self.stop_cnt = float(stop_local_time) * self.occ_dx / self.dt
        self.cap_steps = int(cap_steps)
        self.chunk = int(chunk)
        if rects is None:
            rects = []
        self.rl0 = np.array([r.l0 for r in rects], dtype=float)
        self.rl1 = np.array([r.l1 for r in rects], dtype=float)
        self.rx0 = np.array([r.x0 for r in rects], dtype=float)
        self.rx1 = np.array([r.x1 for r in rects], dtype=float)
        self.rw = np.array([r.weight for r in rects], dtype=float)
        tops = [occ_x0 + occ_dx * m_occ, wn_x0 + wn_dx * m_wn, stop_level, 0.0]
        if rects:
            tops.append(max(r.x1 for r in rects))
        if skip_margin is None:
            self.do_skip = False
            self.skip_level = np.inf
        else:
            self.do_skip = True
            self.skip_level = max(tops) + float(skip_margin)
        if deep_level is None:
            self.do_deep = False
            self.deep_level = -np.inf
        else:
            bottoms = [occ_x0]
            if m_wn > 0:
                bottoms.append(wn_x0)
            if stop_mode == STOP_HIT:
                bottoms.append(stop_level)
            if rects:
                bottoms.append(min(r.x0 for r in rects))
            if deep_level > min(bottoms):
                raise ValueError("deep_level must sit below every tracked bin"
                                 f" ({deep_level} > {min(bottoms)})")
            self.do_deep = True
            self.deep_level = float(deep_level)
        self.occ = np.zeros(self.m_occ, dtype=np.int64)
        if occ_seed is not None:
            self.occ[:] = occ_seed
        self.wn = np.zeros(self.m_wn)
        if wn_seed is not None:
            self.wn[:] = wn_seed
        self.qv = np.zeros(self.m_wn)
        if qv_seed is not None:
            self.qv[:] = qv_seed
        self.wt = np.zeros(self.m_wn)
        if wt_seed is not None:
            self.wt[:] = wt_seed
        self.gacc = np.zeros(len(rects))
        self.st = np.zeros(8)
        if init_state is not None:
            self.st[:init_state.size] = init_state
        self.ist = np.zeros(6, dtype=np.int64)
        self.ist[_STEPS] = int(init_steps)

    def run(self) -> StreamResult:
        leftover = _EMPTY
        chunks = NormalChunks(self.rng, self.chunk)
        while True:
            normals = np.concatenate([leftover, chunks.next()]) if leftover.size else chunks.next()
            status = _advance(
                self.st, self.ist, normals, self.dt, np.sqrt(self.dt),
                1.0 - self.mu,
                self.occ, self.occ_x0, self.occ_dx,
                self.wn, self.qv, self.wt, self.wn_x0, self.wn_dx,
                self.rl0, self.rl1, self.rx0, self.rx1, self.rw, self.gacc,
                self.stop_mode, self.stop_level, self.stop_bin, self.stop_cnt,
                self.skip_level, self.do_skip,
                self.deep_level, self.do_deep, self.cap_steps)
            if status != STATUS_NEED_MORE:
                return self._finish(status)
            used = int(self.ist[_USED])
            leftover = normals[used:]

    def _finish(self, status: int) -> StreamResult:
        occ = self.occ.astype(float)
        steps = int(self.ist[_STEPS])
        frac = float(self.st[_FRAC])
        if status == STATUS_STOPPED:
            if frac < 0.0:  # stopped exactly on a grid point, step untouched
                stop = TimeIndex(step=steps, frac=0.0)
            else:
                adj = frac if frac < 1.0 else 1.0
                x_left = float(self.st[_XLEFT])
                db = float(self.st[_DB])
                w = adj - 1.0  # remove the non-realised part of the stop step
                if w != 0.0:
                    j = int(np.floor((x_left - self.occ_x0) / self.occ_dx))
                    if 0 <= j < self.m_occ:
                        occ[j] += w
                    pos = (x_left - self.wn_x0) / self.wn_dx
                    jw = int(np.ceil(pos)) - 1
                    if 0 <= jw < self.m_wn:
                        self.wn[jw] -= w * db
                        self.qv[jw] += w * db * db
                        self.wt[jw] -= w * (pos - jw) * db
                    if self.rl0.size and 0 <= j < self.m_occ:
                        ell = (occ[j] - adj) * self.dt / self.occ_dx
                        for ri in range(self.rl0.size):
                            if (self.rl0[ri] <= ell < self.rl1[ri]
                                    and self.rx0[ri] <= x_left < self.rx1[ri]):
                                self.gacc[ri] -= w * self.rw[ri] * db
                if frac >= 1.0:
                    stop = TimeIndex(step=steps, frac=0.0)
                else:
                    stop = TimeIndex(step=steps - 1, frac=frac)
        else:
            from .paths import NOT_REACHED
            stop = NOT_REACHED if self.stop_mode != STOP_NONE else TimeIndex(step=steps, frac=0.0)
        return StreamResult(status=status, stop=stop, steps=steps, occ=occ,
                            wn=self.wn, qv=self.qv, wt=self.wt, gacc=self.gacc,
                            inf=float(self.st[_INF]),
                            out_lo=int(self.ist[_OUT_LO]),
                            out_hi=int(self.ist[_OUT_HI]),
                            skips=int(self.ist[_SKIPS]),
                            dives=int(self.ist[_DIVES]), state=self.st.copy())
