"""Squared Bessel oracles: exact transitions, Euler absorption, marginals.

The BESQ(delta) transition over a step h from z is sampled exactly via
the Poisson-mixed Gamma construction of the noncentral chi-square law:
Z_h = 2h * Gamma(delta/2 + K), K ~ Poisson(z / (2h)).  For delta <= 0
(and for absorbed processes) an Euler scheme with absorption at 0 stands
in; for negative dimensions the absorbed SDE solution *defines* the
process for the purposes of this package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .paths import ParameterError


@dataclass(frozen=True)
class BesqPath:
    delta: float
    z0: float
    dt: float
    n: int
    z: np.ndarray
    absorbed_at: int | None = None


def exact_step(z, delta: float, dt: float, rng: np.random.Generator):
    """One exact BESQ(delta) transition of size dt from z (scalar or array)."""
    if delta <= 0:
        raise ParameterError("exact_step requires delta > 0; use euler_absorbed")
    if dt <= 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ParameterError("z must be >= 0")
    k = np.where(z > 0, rng.poisson(z / (2.0 * dt), size=z.shape), 0)
    out = np.asarray(2.0 * dt * rng.gamma(shape=delta / 2.0 + k))
    return float(out) if out.ndim == 0 else out


def euler_absorbed(z0: float, delta: float, dt: float, n: int,
                   rng: np.random.Generator) -> BesqPath:
    """Euler path of dZ = delta dt + 2 sqrt(Z) dW, absorbed at 0."""
    if z0 < 0:
        raise ParameterError("z0 must be >= 0")
    if dt <= 0 or n < 1:
        raise ParameterError("need dt > 0 and n >= 1")
    z = np.empty(n + 1)
    z[0] = z0
    sqdt = np.sqrt(dt)
    absorbed_at = 0 if z0 == 0.0 else None
    cur = z0
    if absorbed_at is None:
        noise = rng.standard_normal(n)
        for i in range(n):
            cur = cur + delta * dt + 2.0 * np.sqrt(cur) * sqdt * noise[i]
            if cur <= 0.0:
                cur = 0.0
                z[i + 1] = 0.0
                absorbed_at = i + 1
                z[i + 2:] = 0.0
                break
            z[i + 1] = cur
    else:
        z[1:] = 0.0
    return BesqPath(delta=float(delta), z0=float(z0), dt=float(dt), n=int(n),
                    z=z, absorbed_at=absorbed_at)


def euler_absorbed_marginal(z0: float, delta: float, dt: float, n: int,
                            rng: np.random.Generator, n_paths: int) -> np.ndarray:
    """Terminal values of n_paths absorbed Euler paths (vectorized)."""
    z = np.full(n_paths, float(z0))
    alive = z > 0.0
    sqdt = np.sqrt(dt)
    for _ in range(n):
        if not alive.any():
            break
        za = z[alive]
        za = za + delta * dt + 2.0 * np.sqrt(za) * sqdt * rng.standard_normal(za.size)
        za[za < 0.0] = 0.0
        z[alive] = za
        alive = z > 0.0
    return z


def marginal_from_zero_cdf(delta: float, h: float, z) -> float | np.ndarray:
    """CDF of the BESQ(delta) marginal from 0 at time h: Gamma(delta/2, 2h)."""
    if delta <= 0:
        raise ParameterError(f"delta must be > 0, got {delta}")
    if h <= 0:
        raise ParameterError(f"h must be > 0, got {h}")
    return stats.gamma.cdf(z, a=delta / 2.0, scale=2.0 * h)
