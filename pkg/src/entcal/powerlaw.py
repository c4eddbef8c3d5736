"""Zipf distributions, training-set urns, singleton mass, and derailing.

The singleton mass is the expected fraction of training draws that occurred
exactly once; under a power law it decays as m^(1/a - 1), which is what the
asymptotic formula captures.  The derailing model turns that rare-token mass
into an entropy story: once a rare token enters the context, the process
permanently switches to a higher-entropy regime.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn

from .analysis import LogLogFit, fit_loglog

_CHUNK = 1_000_000
_MATERIALIZE_LIMIT = 20_000_000


class AsymptoticDomainError(ValueError):
    """The closed-form singleton asymptotic needs a Zipf exponent above 1."""


@dataclass(frozen=True)
class PowerLaw:
    """A finite Zipf distribution: p_i proportional to 1/i^zipf_exponent.

    `partition_sum` is the normalizing sum over ranks; `coefficient` is the
    multiplicative constant z with p_i = z * i^-zipf_exponent, i.e. the
    reciprocal of the partition sum.  Large vocabularies are supported by
    computing rank sums in chunks instead of materializing probabilities.
    """

    zipf_exponent: float
    vocab: int

    def __post_init__(self):
        if self.zipf_exponent <= 0.0:
            raise ValueError("zipf_exponent must be positive")
        if self.vocab < 1:
            raise ValueError("vocab must be at least 1")

    @cached_property
    def partition_sum(self) -> float:
        """Sum of i^-a over ranks, accumulated with compensated summation."""
        partials = []
        for lo in range(1, self.vocab + 1, _CHUNK):
            hi = min(lo + _CHUNK, self.vocab + 1)
            i = np.arange(lo, hi, dtype=np.float64)
            partials.append(float(np.sum(i ** -self.zipf_exponent)))
        return math.fsum(partials)

    @property
    def coefficient(self) -> float:
        return 1.0 / self.partition_sum

    @cached_property
    def probabilities(self) -> np.ndarray:
        """All rank probabilities, strictly decreasing, summing to 1."""
        if self.vocab > _MATERIALIZE_LIMIT:
            raise ValueError(
                f"refusing to materialize {self.vocab} probabilities; "
                "use the chunked operations instead"
            )
        i = np.arange(1, self.vocab + 1, dtype=np.float64)
        return (i ** -self.zipf_exponent) * self.coefficient

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.probabilities)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ranks (0-based) by inverse CDF with binary search."""
        u = rng.random(size)
        return np.searchsorted(self._cumulative, u, side="right")


@dataclass(frozen=True)
class UrnResult:
    """One simulated training set: draw counts and the singleton statistic."""

    m: int
    counts: np.ndarray
    k1: int

    @property
    def singleton_mass(self) -> float:
        return self.k1 / self.m


@dataclass(frozen=True)
class DerailConfig:
    """Two-regime entropy process: healthy at base_entropy, derailed adds entropy_bump."""

    base_entropy: float
    entropy_bump: float
    derail_prob: float
    length: int

    def __post_init__(self):
        if self.base_entropy < 0.0 or self.entropy_bump < 0.0:
            raise ValueError("entropies must be nonnegative")
        if not 0.0 <= self.derail_prob <= 1.0:
            raise ValueError("derail_prob must be a probability")
        if self.length < 1:
            raise ValueError("length must be at least 1")


def expected_singleton_mass_exact(pl: PowerLaw, m: int) -> float:
    """E[K_{m,1}] / m = sum_i p_i (1 - p_i)^(m-1), computed stably.

    The power term goes through exp((m-1) log1p(-p_i)); a single draw is
    always a singleton, so m = 1 returns exactly 1.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if m == 1:
        return 1.0
    z = pl.coefficient
    a = pl.zipf_exponent
    partials = []
    for lo in range(1, pl.vocab + 1, _CHUNK):
        hi = min(lo + _CHUNK, pl.vocab + 1)
        p = z * np.arange(lo, hi, dtype=np.float64) ** -a
        # p == 1 (single-type vocabulary) sends log1p to -inf; the exp
        # correctly collapses that term to zero.
        with np.errstate(divide="ignore"):
            partials.append(float(np.sum(p * np.exp((m - 1) * np.log1p(-p)))))
    return math.fsum(partials)


def singleton_mass_asymptotic(zipf_exponent: float, coefficient: float, m: int) -> float:
    """Large-m singleton mass (1/a) z^(1/a) m^(1/a - 1) Gamma(1 - 1/a).

    `coefficient` is the multiplicative constant z of p_i = z * i^-a (for a
    normalized finite law, the reciprocal of its partition sum).  The log-log
    slope in m is exactly 1/a - 1.  Only defined for a > 1, where the Gamma
    factor is finite.
    """
    a = zipf_exponent
    if a <= 1.0:
        raise AsymptoticDomainError(
            "the singleton-mass asymptotic needs zipf_exponent > 1 "
            "(the Gamma(1 - 1/a) factor diverges otherwise)"
        )
    if m < 1:
        raise ValueError("m must be at least 1")
    return (1.0 / a) * coefficient ** (1.0 / a) * m ** (1.0 / a - 1.0) * float(
        gamma_fn(1.0 - 1.0 / a)
    )


def draw_urn(pl: PowerLaw, m: int, rng: np.random.Generator) -> UrnResult:
    """Draw one training set of m i.i.d. tokens and count singletons."""
    draws = pl.sample(m, rng)
    counts = np.bincount(draws, minlength=pl.vocab)
    return UrnResult(m=m, counts=counts, k1=int((counts == 1).sum()))


def simulate_urn(pl: PowerLaw, m: int, trials: int, rng: np.random.Generator):
    """Mean and standard error of the singleton mass across independent trials.

    Each trial runs on its own generator spawned from `rng`, so a parallel
    driver handing trials to workers gets the same aggregate.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    masses = np.empty(trials)
    streams = rng.spawn(trials)
    for i, stream in enumerate(streams):
        masses[i] = draw_urn(pl, m, stream).singleton_mass
    se = masses.std(ddof=1) / np.sqrt(trials) if trials > 1 else 0.0
    return float(masses.mean()), float(se)


def geometric_m_grid(lo: int, hi: int, points_per_decade: int = 20) -> list:
    """Distinct integer grid, geometrically spaced between lo and hi inclusive."""
    if lo < 1 or hi <= lo:
        raise ValueError("need 1 <= lo < hi")
    n = max(2, int(round(points_per_decade * math.log10(hi / lo))) + 1)
    grid = np.unique(np.round(np.geomspace(lo, hi, n)).astype(int))
    return [int(m) for m in grid]


def fit_singleton_slope(
    pl: PowerLaw, m_grid, trials: int, rng: np.random.Generator
) -> LogLogFit:
    """Log-log OLS slope of simulated mean singleton mass against m.

    The grid must span at least a decade and stay below vocab/3, the window
    where the decay is close to a clean power law.
    """
    m_grid = sorted(int(m) for m in m_grid)
    if m_grid[-1] < 10 * m_grid[0]:
        raise ValueError("m grid must span at least one decade")
    if m_grid[-1] > pl.vocab / 3:
        raise ValueError("m grid must stay at or below vocab/3")
    means = []
    for m in m_grid:
        mean, _ = simulate_urn(pl, m, trials, rng)
        means.append(mean)
    return fit_loglog(np.array(m_grid, dtype=float), np.array(means))


def derail_expected_curve(cfg: DerailConfig) -> np.ndarray:
    """Exact per-step mean entropy H0 + (1 - (1-q)^t) * C_H, t = 1..L."""
    t = np.arange(1, cfg.length + 1, dtype=np.float64)
    return cfg.base_entropy + (1.0 - (1.0 - cfg.derail_prob) ** t) * cfg.entropy_bump


def simulate_derailing(
    cfg: DerailConfig, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Mean per-step entropy across trials of the absorbing two-regime process.

    Each trial draws the first-derail step from a geometric distribution (the
    regime flips before the step's token is emitted, so a trial can already be
    derailed at step 1); the entropy at step t is base_entropy plus the bump
    if the flip has happened by t.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    L, q = cfg.length, cfg.derail_prob
    if q == 0.0:
        return np.full(L, cfg.base_entropy)
    first = rng.geometric(q, size=trials)
    t = np.arange(1, L + 1)
    derailed_frac = (first[None, :] <= t[:, None]).mean(axis=1)
    return cfg.base_entropy + derailed_frac * cfg.entropy_bump


def derail_miscalibration_closed_form(cfg: DerailConfig) -> float:
    """Total excess entropy q * C_H * L(L-1)/2 under the small-q approximation."""
    q, L = cfg.derail_prob, cfg.length
    return q * cfg.entropy_bump * L * (L - 1) / 2.0


def derail_excess_exact(cfg: DerailConfig) -> float:
    """Exact total excess entropy: the absorbing-chain sum of E[H_t] - H0."""
    return float((derail_expected_curve(cfg) - cfg.base_entropy).sum())
