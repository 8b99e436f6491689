"""Placement distribution: mean-of-uniforms with a signed concentration
parameter.

For an integer parameter eta >= 1 a sample is the mean of eta independent
U[0,1] draws; larger eta concentrates mass around 0.5. The family is
extended to eta <= -1 through the half-shift involution s on [0,1]
(X ~ D(eta) iff s(X) ~ D(-eta)), which moves the mass to the borders.
eta = 1 and eta = -1 are both the uniform distribution.

Densities come from the classic closed form for the distribution of a sum
of n uniforms:

    f_sum(y) = 1/(n-1)! * sum_{k=0}^{floor(y)} (-1)^k C(n,k) (y-k)^(n-1)

rescaled to the mean (f_mean(x) = n * f_sum(n*x)); the negative branch is a
rearrangement, density(x) = f_mean(s(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class BatesParam:
    """Concentration parameter: a nonzero integer (negative = border-heavy)."""

    eta: int

    def __post_init__(self):
        if isinstance(self.eta, bool) or not isinstance(self.eta, (int, np.integer)):
            raise DomainError(f"eta must be a nonzero integer, got {self.eta!r}")
        if self.eta == 0:
            raise DomainError("eta must be nonzero")
        object.__setattr__(self, "eta", int(self.eta))


def sawtooth(x: float) -> float:
    """Half-shift involution on [0,1]: x+0.5 below one half, x-0.5 from one
    half up. s(0) is defined as 0.5 so that s(s(0)) = 0."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"sawtooth domain is [0, 1], got {x}")
    return x + 0.5 if x < 0.5 else x - 0.5


def _sawtooth_array(x: np.ndarray) -> np.ndarray:
    if ((x < 0.0) | (x > 1.0)).any():
        raise DomainError("sawtooth domain is [0, 1]")
    return np.where(x < 0.5, x + 0.5, x - 0.5)


def bates_sample(p: BatesParam, rng: np.random.Generator) -> float:
    """Draw one sample, consuming exactly |eta| uniforms from the stream."""
    n = abs(p.eta)
    m = float(rng.random(n).mean())
    return m if p.eta > 0 else sawtooth(m)


def bates_sample_array(p: BatesParam, count: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sampling; consumes the stream exactly like `count`
    sequential bates_sample calls."""
    n = abs(p.eta)
    m = rng.random((count, n)).mean(axis=1)
    return m if p.eta > 0 else _sawtooth_array(m)


def _sum_uniform_pdf(n: int, y: float) -> float:
    # density of the sum of n iid U[0,1] at y in [0, n]
    if y < 0.0 or y > n:
        return 0.0
    total = 0.0
    for k in range(int(math.floor(y)) + 1):
        total += (-1.0) ** k * math.comb(n, k) * (y - k) ** (n - 1)
    return total / math.factorial(n - 1)


def _sum_uniform_cdf(n: int, y: float) -> float:
    if y <= 0.0:
        return 0.0
    if y >= n:
        return 1.0
    total = 0.0
    for k in range(int(math.floor(y)) + 1):
        total += (-1.0) ** k * math.comb(n, k) * (y - k) ** n
    return total / math.factorial(n)


def bates_pdf(p: BatesParam, x: float) -> float:
    """Density on [0,1]; the negative branch is density(x) = pdf(-eta, s(x))."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"bates_pdf domain is [0, 1], got {x}")
    if p.eta < 0:
        return bates_pdf(BatesParam(-p.eta), sawtooth(x))
    n = p.eta
    return n * _sum_uniform_pdf(n, n * x)


def bates_cdf(p: BatesParam, x: float) -> float:
    """Cumulative distribution on [0,1] (used by goodness-of-fit tests)."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"bates_cdf domain is [0, 1], got {x}")
    n = abs(p.eta)
    if p.eta > 0:
        return _sum_uniform_cdf(n, n * x)
    # Y = s(X): mass on [0, 0.5) comes from X in [0.5, 1], and mass on
    # [0.5, 1] from X in (0, 0.5); stitch the positive-branch CDF.
    f_half = _sum_uniform_cdf(n, n * 0.5)
    if x < 0.5:
        return _sum_uniform_cdf(n, n * (x + 0.5)) - f_half
    return 1.0 - f_half + _sum_uniform_cdf(n, n * (x - 0.5))
