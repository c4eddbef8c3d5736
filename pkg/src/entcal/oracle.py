"""Exact reference computations by enumeration and backward recursion.

Everything here treats a model as a set of per-depth conditional arrays, so
it works identically on base models and on adjusted models that expose the
same `level_rows`/`vocab_size`/`horizon` surface.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._util import fmt_float, row_entropies
from .model import (
    DEFAULT_CAP,
    ModelDomainError,
    Prompt,
    check_cap,
    decode_prefix,
    prefix_code,
)


class TemperatureDomainError(ValueError):
    """1 + alpha <= 0: the power-scaled distribution is ill-defined."""


@dataclass(frozen=True)
class JointDistribution:
    """All V^T sequence probabilities for one prompt, indexed by sequence code."""

    vocab_size: int
    horizon: int
    probs: np.ndarray  # shape (V^T,)

    def prob(self, sequence: Sequence[int]) -> float:
        if len(sequence) != self.horizon:
            raise ModelDomainError("sequence length must equal the horizon")
        return float(self.probs[prefix_code(sequence, self.vocab_size)])

    def sequences(self):
        for code in range(len(self.probs)):
            yield decode_prefix(code, self.horizon, self.vocab_size)

    def entropy(self) -> float:
        return float(row_entropies(self.probs[None, :])[0])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sequence,probability\n")
            for code, p in enumerate(self.probs):
                seq = decode_prefix(code, self.horizon, self.vocab_size)
                fh.write(" ".join(map(str, seq)) + "," + fmt_float(p) + "\n")


def _log_levels(model, prompt_id: str):
    with np.errstate(divide="ignore"):
        return [np.log(model.level_rows(prompt_id, t)) for t in range(model.horizon)]


def sequence_log_joint(model, prompt: Prompt) -> np.ndarray:
    """Log probability of every length-T sequence, shape (V^T,), -inf allowed."""
    acc = np.zeros(1)
    for lrows in _log_levels(model, prompt.id):
        acc = (acc[:, None] + lrows).ravel()
    return acc


def joint_distribution(model, prompt: Prompt, cap: int = DEFAULT_CAP) -> JointDistribution:
    """Enumerate the full sequence distribution for one prompt."""
    check_cap(model.vocab_size, model.horizon, cap)
    log_joint = sequence_log_joint(model, prompt)
    return JointDistribution(model.vocab_size, model.horizon, np.exp(log_joint))


def prefix_weights(model, prompt: Prompt):
    """Marginal probability of every prefix, one array per depth 0..T.

    Entry [t][code] is the model's probability of generating the length-t
    prefix encoded by `code`.  Depth 0 is the singleton [1.0].
    """
    out = [np.ones(1)]
    for t in range(model.horizon):
        rows = model.level_rows(prompt.id, t)
        out.append((out[-1][:, None] * rows).ravel())
    return out


def future_entropy_table(model, prompt: Prompt):
    """Future entropy of every prefix by backward recursion; one array per depth.

    Entry [t][code] is the model's entropy over all continuations of the
    length-t prefix encoded by `code`; depth T is identically zero.
    """
    V, T = model.vocab_size, model.horizon
    tables = [np.zeros(V**T)]
    for t in range(T - 1, -1, -1):
        rows = model.level_rows(prompt.id, t)
        child = tables[0].reshape(V**t, V)
        tables.insert(0, row_entropies(rows) + (rows * child).sum(axis=1))
    return tables


def future_entropy_exact(
    model, prompt: Prompt, prefix: Sequence[int], naive: bool = False
) -> float:
    """Entropy over all continuations of `prefix`, in nats.

    The default path is the backward recursion; `naive=True` instead sums
    -p log p over the enumerated block of continuations (which requires the
    prefix itself to have positive probability) as an independent check.
    """
    t = len(prefix)
    if t > model.horizon:
        raise ModelDomainError(f"prefix length {t} > horizon {model.horizon}")
    code = prefix_code(prefix, model.vocab_size)
    if not naive:
        return float(future_entropy_table(model, prompt)[t][code])
    if t == model.horizon:
        return 0.0
    block_size = model.vocab_size ** (model.horizon - t)
    joint = np.exp(sequence_log_joint(model, prompt))
    block = joint[code * block_size : (code + 1) * block_size]
    total = block.sum()
    if total <= 0.0:
        raise ModelDomainError("prefix has zero probability; conditional undefined")
    cond = block / total
    return float(row_entropies(cond[None, :])[0])


def suffix_logprobs(model, prompt: Prompt, prefix: Sequence[int]) -> np.ndarray:
    """Log probability of every continuation of `prefix`, shape (V^(T-len),)."""
    t0 = len(prefix)
    if t0 > model.horizon:
        raise ModelDomainError(f"prefix length {t0} > horizon {model.horizon}")
    V = model.vocab_size
    codes = np.array([prefix_code(prefix, V)], dtype=np.int64)
    acc = np.zeros(1)
    with np.errstate(divide="ignore"):
        for t in range(t0, model.horizon):
            lrows = np.log(model.level_rows(prompt.id, t)[codes])
            acc = (acc[:, None] + lrows).ravel()
            codes = (codes[:, None] * V + np.arange(V)).ravel()
    return acc


def global_temperature_model(
    model, prompt: Prompt, alpha: float, cap: int = DEFAULT_CAP
) -> JointDistribution:
    """The joint distribution proportional to p(sequence)^(1+alpha).

    Normalized over all V^T sequences in the log domain.  This is the global
    counterpart of per-row temperature scaling; the two differ exactly by the
    future-entropy term, which is what makes it worth keeping around as an
    oracle.
    """
    if 1.0 + alpha <= 0.0:
        raise TemperatureDomainError("need 1 + alpha > 0")
    check_cap(model.vocab_size, model.horizon, cap)
    log_joint = sequence_log_joint(model, prompt)
    scaled = (1.0 + alpha) * log_joint
    scaled -= logsumexp(scaled)
    return JointDistribution(model.vocab_size, model.horizon, np.exp(scaled))


def _power_mean_logprob(logs: np.ndarray, alpha: float) -> float:
    """E[log p] under the distribution proportional to p^(1+alpha)."""
    scaled = (1.0 + alpha) * logs
    w = np.exp(scaled - logsumexp(scaled))
    finite = logs > -np.inf
    return float((w[finite] * logs[finite]).sum())


def global_temp_logprob_gradient(
    model, prompt: Prompt, prefix: Sequence[int], token: int, alpha: float
) -> float:
    """d/d(alpha) of the globally tempered conditional log probability of `token`.

    Equals log p(token|prefix) plus the power-mean continuation log
    probability after the token, minus the same quantity from the prefix
    itself; everything by enumeration.
    """
    if 1.0 + alpha <= 0.0:
        raise TemperatureDomainError("need 1 + alpha > 0")
    row = model.conditional(prompt, tuple(prefix))
    with np.errstate(divide="ignore"):
        lp_tok = float(np.log(row[int(token)]))
    after = suffix_logprobs(model, prompt, tuple(prefix) + (int(token),))
    here = suffix_logprobs(model, prompt, tuple(prefix))
    return lp_tok + _power_mean_logprob(after, alpha) - _power_mean_logprob(here, alpha)


def global_conditional_logprob(
    model, prompt: Prompt, prefix: Sequence[int], token: int, alpha: float
) -> float:
    """log of the globally tempered next-token conditional, by enumeration."""
    if 1.0 + alpha <= 0.0:
        raise TemperatureDomainError("need 1 + alpha > 0")
    here = suffix_logprobs(model, prompt, tuple(prefix))
    V = model.vocab_size
    block = len(here) // V
    tok_slice = here[int(token) * block : (int(token) + 1) * block]
    scaled = (1.0 + alpha) * here
    return float(logsumexp((1.0 + alpha) * tok_slice) - logsumexp(scaled))


def global_first_order_error(
    model, prompt: Prompt, prefix: Sequence[int], alpha: float
) -> float:
    """Gap between the tempered conditional and its first-order surrogate.

    The surrogate for token v is (1+alpha) log p(v|prefix) - alpha * (future
    entropy after v); the two sides agree up to a per-prefix constant at
    first order in alpha, so the reported error is max-minus-min over tokens
    of the residual, which cancels any constant.  It should shrink
    quadratically in alpha.
    """
    V = model.vocab_size
    row = model.conditional(prompt, tuple(prefix))
    table = future_entropy_table(model, prompt)
    t = len(prefix)
    code = prefix_code(prefix, V)
    h_after = table[t + 1][code * V : (code + 1) * V]
    residuals = []
    with np.errstate(divide="ignore"):
        lrow = np.log(row)
    for v in range(V):
        exact = global_conditional_logprob(model, prompt, prefix, v, alpha)
        surrogate = (1.0 + alpha) * lrow[v] - alpha * h_after[v]
        residuals.append(exact - surrogate)
    residuals = np.array(residuals)
    return float(residuals.max() - residuals.min())
