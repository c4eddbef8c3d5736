"""Per-step and total entropy, log loss, and the entropy calibration error.

Entropy is always the evaluated model's entropy over its own generations;
log loss is the cross-entropy of the evaluated model against sequences from
the true distribution.  The calibration error is the absolute gap between
the two totals.  Exact versions marginalize over every prefix; the Monte
Carlo version averages conditional entropies along sampled trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import fmt_float, row_entropies
from .model import PromptSet
from .oracle import prefix_weights


@dataclass(frozen=True)
class CalibrationReport:
    """Per-step entropies and log losses with their totals and the gap."""

    per_step_entropy: np.ndarray
    per_step_logloss: np.ndarray
    total_entropy: float
    total_logloss: float
    ent_ce: float
    entropy_se: np.ndarray | None = None
    logloss_se: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.per_step_entropy)

    @property
    def ent_ce_per_step(self) -> float:
        """The calibration error averaged over generation steps."""
        return self.ent_ce / self.horizon

    def to_csv(self, path) -> None:
        """One row per step plus a trailing `total` summary row."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,entropy_nats,logloss_nats\n")
            for t in range(self.horizon):
                fh.write(
                    f"{t + 1},{fmt_float(self.per_step_entropy[t])},"
                    f"{fmt_float(self.per_step_logloss[t])}\n"
                )
            fh.write(
                f"total,{fmt_float(self.total_entropy)},{fmt_float(self.total_logloss)}\n"
            )


def _resolve_prompts(prompts: PromptSet | None) -> PromptSet:
    return prompts if prompts is not None else PromptSet.single()


def entropy_per_step_exact(model, prompts: PromptSet | None = None) -> np.ndarray:
    """H_t: expected conditional entropy at each step under the model's own prefixes."""
    prompts = _resolve_prompts(prompts)
    T = model.horizon
    out = np.zeros(T)
    for prompt, weight in prompts.entries:
        w = prefix_weights(model, prompt)
        for t in range(T):
            rows = model.level_rows(prompt.id, t)
            out[t] += weight * float(w[t] @ row_entropies(rows))
    return out


def entropy_per_step_mc(
    model,
    prompts: PromptSet | None = None,
    num_samples: int = 1000,
    rng: np.random.Generator | None = None,
):
    """Monte Carlo H_t estimate with standard errors.

    Averages the conditional entropy of each visited prefix rather than raw
    surprisal: same mean, lower variance.  Returns (means, standard errors),
    each of length T.
    """
    if num_samples < 2:
        raise ValueError("need num_samples >= 2 for a standard error")
    prompts = _resolve_prompts(prompts)
    rng = rng if rng is not None else np.random.default_rng()
    V, T = model.vocab_size, model.horizon
    idx = rng.choice(len(prompts.entries), size=num_samples, p=prompts.weights)
    values = np.empty((num_samples, T))
    for k, (prompt, _) in enumerate(prompts.entries):
        n_k = int((idx == k).sum())
        if n_k == 0:
            continue
        rows_at = np.zeros(n_k, dtype=np.int64)
        sel = idx == k
        for t in range(T):
            rows = model.level_rows(prompt.id, t)[rows_at]
            values[sel, t] = row_entropies(rows)
            cum = np.cumsum(rows, axis=1)
            u = rng.random(n_k)
            toks = np.minimum((cum < u[:, None]).sum(axis=1), V - 1)
            rows_at = rows_at * V + toks
    means = values.mean(axis=0)
    ses = values.std(axis=0, ddof=1) / np.sqrt(num_samples)
    return means, ses


def log_loss_per_step(true_model, eval_model, prompts: PromptSet | None = None) -> np.ndarray:
    """L_t: expected surprisal of the eval model on true-model data, exactly.

    A zero eval probability on a positive-probability true token makes the
    step's loss +inf; that is a value, not an error.
    """
    if (true_model.vocab_size, true_model.horizon) != (
        eval_model.vocab_size,
        eval_model.horizon,
    ):
        raise ValueError("models must share vocabulary size and horizon")
    prompts = _resolve_prompts(prompts)
    T = true_model.horizon
    out = np.zeros(T)
    for prompt, weight in prompts.entries:
        w = prefix_weights(true_model, prompt)
        for t in range(T):
            p_true = true_model.level_rows(prompt.id, t)
            p_eval = eval_model.level_rows(prompt.id, t)
            with np.errstate(divide="ignore"):
                neg_log = -np.log(p_eval)
            terms = np.where(p_true > 0.0, p_true * neg_log, 0.0)
            out[t] += weight * float(w[t] @ terms.sum(axis=1))
    return out


def ent_ce(true_model, eval_model, prompts: PromptSet | None = None) -> CalibrationReport:
    """Full calibration report: H_t, L_t, totals, and |H - L|."""
    prompts = _resolve_prompts(prompts)
    h = entropy_per_step_exact(eval_model, prompts)
    l = log_loss_per_step(true_model, eval_model, prompts)
    total_h = float(h.sum())
    total_l = float(l.sum())
    return CalibrationReport(
        per_step_entropy=h,
        per_step_logloss=l,
        total_entropy=total_h,
        total_logloss=total_l,
        ent_ce=abs(total_h - total_l),
    )
