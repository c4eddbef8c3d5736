"""How much of a power-law sample is words seen exactly once?

Simulates the singleton mass of Zipf(1.5) draws over a growing sample
size m, prints it against the exact expectation and the large-m power
law, and fits the log-log slope.  The fitted slope runs slightly steeper
than the asymptotic 1/a - 1 = -1/3 because the finite vocabulary bends
the curve down near m = vocab.
"""

import numpy as np

from entcal import (
    PowerLaw,
    expected_singleton_mass_exact,
    fit_loglog,
    geometric_m_grid,
    simulate_urn,
    singleton_mass_asymptotic,
)
from entcal._util import child_rng

ZIPF_EXPONENT = 1.5
VOCAB = 100_000
TRIALS = 100
SEED = 0


def main():
    pl = PowerLaw(ZIPF_EXPONENT, VOCAB)
    grid = geometric_m_grid(10, VOCAB // 3, points_per_decade=5)
    rng = child_rng(SEED, 23, 0)

    print(f"Zipf({ZIPF_EXPONENT}) over {VOCAB} types, {TRIALS} trials per point")
    print(f"{'m':>8}  {'simulated':>10}  {'stderr':>8}  {'exact':>10}  {'asymptote':>10}")
    means = []
    for m in grid:
        mean, se = simulate_urn(pl, m, TRIALS, rng)
        exact = expected_singleton_mass_exact(pl, m)
        asym = singleton_mass_asymptotic(ZIPF_EXPONENT, pl.coefficient, m)
        means.append(mean)
        print(f"{m:8d}  {mean:10.5f}  {se:8.5f}  {exact:10.5f}  {asym:10.5f}")

    fit = fit_loglog(np.array(grid, float), np.array(means))
    print()
    print(f"fitted log-log slope  {fit.slope:+.4f}   (R^2 = {fit.r_squared:.5f})")
    print(f"asymptotic slope      {1 / ZIPF_EXPONENT - 1:+.4f}")


if __name__ == "__main__":
    main()
