"""Cooling a model that is more uncertain than it is wrong.

Builds a pair where the base model's generation entropy overshoots its
log loss on true data, then sweeps the sampling temperature downward.
Each cooling step trades calibration error against log loss: entropy
falls toward the log loss while the log loss itself creeps up.  The same
sweep is printed per rule, then the per-step entropy trace of the coldest
setting is shown with exponential smoothing, the way generation-time
entropy curves are usually plotted.
"""

from entcal import (
    ent_ce,
    entropy_overshoot_pair,
    entropy_per_step_exact,
    exponential_smooth,
    temperature,
    tradeoff_curve,
    truncated_model,
)

TAUS = [1.0, 0.95, 0.9, 0.85, 0.8]
SMOOTHING = 0.2


def main():
    true_model, base_model = entropy_overshoot_pair(seed=0)
    report = ent_ce(true_model, base_model)
    print(
        f"base model: entropy {report.total_entropy:.4f} nats, "
        f"log loss {report.total_logloss:.4f} nats "
        f"(overshoot {report.total_entropy - report.total_logloss:+.4f})"
    )
    print()

    points = tradeoff_curve(
        true_model, base_model, [temperature(tau) for tau in TAUS]
    )
    print(f"{'tau':>5}  {'entropy':>9}  {'log loss':>9}  {'EntCE/step':>10}")
    for tau, point in zip(TAUS, points):
        print(
            f"{tau:5.2f}  {point.total_entropy:9.4f}  {point.total_logloss:9.4f}  "
            f"{point.ent_ce_per_step:10.5f}"
        )

    coldest = truncated_model(base_model, temperature(TAUS[-1]))
    steps = entropy_per_step_exact(coldest)
    smoothed = exponential_smooth(steps, SMOOTHING)
    print()
    print(f"per-step entropy at tau={TAUS[-1]} (smoothing factor {SMOOTHING}):")
    for t, (raw, smooth) in enumerate(zip(steps, smoothed), start=1):
        print(f"  step {t}: {raw:.4f} nats  (smoothed {smooth:.4f})")


if __name__ == "__main__":
    main()
