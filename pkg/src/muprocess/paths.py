"""Driving Brownian motion and the mu-process on a uniform time grid.

The pair (|B|, local time of B at 0) is simulated exactly through Levy's
identity: if Btilde is a standard Brownian motion with running maximum S,
then (S - Btilde, S) has the law of (|B|, L).  The mu-process is therefore

    X_t = |B_t| - mu * L_t = (1 - mu) * S_t - Btilde_t

with the local time at zero of B available exactly as S, and the grid
increments of  int sgn(B) dB  available exactly as -dBtilde.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import stream_from_seed


class ParameterError(ValueError):
    """A simulation parameter violates its precondition."""


@dataclass(frozen=True)
class TimeIndex:
    """A time on the grid: step index plus sub-step interpolation fraction."""

    step: int
    frac: float
    reached: bool = True

    def __post_init__(self):
        if self.reached and not (0.0 <= self.frac < 1.0):
            raise ParameterError(f"frac must lie in [0, 1), got {self.frac}")

    def time(self, dt: float) -> float:
        return (self.step + self.frac) * dt


NOT_REACHED = TimeIndex(step=-1, frac=0.0, reached=False)


@dataclass(frozen=True)
class DriverPath:
    """Driving Brownian path Btilde with its running maximum."""

    seed: int
    dt: float
    n: int
    btilde: np.ndarray
    smax: np.ndarray


@dataclass(frozen=True)
class MuProcessPath:
    """Mu-process X = (1-mu) S - Btilde on the driver's grid."""

    mu: float
    dt: float
    n: int
    x: np.ndarray
    lt_zero_b: np.ndarray  # local time at 0 of B, exact (= smax)
    inf_run: np.ndarray


def simulate_driver(seed: int, dt: float, n: int) -> DriverPath:
    """Simulate Btilde on n steps of size dt; bit-reproducible per seed."""
    if dt <= 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = stream_from_seed(seed)
    inc = rng.standard_normal(n) * np.sqrt(dt)
    btilde = np.empty(n + 1)
    btilde[0] = 0.0
    np.cumsum(inc, out=btilde[1:])
    smax = np.maximum.accumulate(btilde)
    return DriverPath(seed=int(seed), dt=float(dt), n=int(n), btilde=btilde, smax=smax)


def build_mu_process(driver: DriverPath, mu: float) -> MuProcessPath:
    """X = (1-mu) S - Btilde; exact local time at 0 and running infimum."""
    if mu <= 0:
        raise ParameterError(f"mu must be > 0 (recurrent case), got {mu}")
    x = (1.0 - mu) * driver.smax - driver.btilde
    inf_run = np.minimum.accumulate(x)
    return MuProcessPath(mu=float(mu), dt=driver.dt, n=driver.n, x=x,
                         lt_zero_b=driver.smax, inf_run=inf_run)


def hitting_time(path: MuProcessPath, r: float) -> TimeIndex:
    """First grid interval on which X crosses level r, with linear
    interpolation inside the step; NOT_REACHED if there is no crossing."""
    d = path.x - r
    if d[0] == 0.0:
        return TimeIndex(step=0, frac=0.0)
    cross = d[:-1] * d[1:] <= 0.0
    idx = np.nonzero(cross)[0]
    if idx.size == 0:
        return NOT_REACHED
    i = int(idx[0])
    denom = path.x[i] - path.x[i + 1]
    frac = 0.0 if denom == 0.0 else float(d[i] / denom)
    if frac >= 1.0:  # crossing exactly at the next grid point
        return TimeIndex(step=i + 1, frac=0.0)
    return TimeIndex(step=i, frac=frac)


def sgn_b_increments(driver: DriverPath) -> np.ndarray:
    """Exact grid increments of  int sgn(B) dB  (= -dBtilde under Levy)."""
    return -np.diff(driver.btilde)
