"""Future-entropy scaling: the backward calibration loop and its checks.

The adjusted model reweights each candidate token v at step t by
(1 + alpha_t) * log p(v|prefix) - alpha_t * fhat_{t+1}(prefix + v), where
fhat_{t+1} predicts the adjusted model's own entropy over everything after
step t.  Each alpha_t is chosen to make the step-t log loss stationary;
predictors are fitted backward from t = T, so every quantity a step needs
is already fixed when the step is processed.  With exact predictors,
stationarity at every step forces entropy and log loss together without
ever increasing log loss; the checks at the bottom verify both claims and
the two structural facts the loop relies on (alpha_t only moves the step-t
loss; earlier adjustments never change a prefix's future entropy).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._util import child_rng, write_csv
from .model import (
    ModelDomainError,
    Prompt,
    PromptSet,
    TabularModel,
    decode_prefix,
    prefix_code,
)
from .metrics import ent_ce, log_loss_per_step
from .oracle import future_entropy_table, prefix_weights

logger = logging.getLogger(__name__)

PREDICTOR_KINDS = ("exact-oracle", "tabular", "per-token-constant")


def predictor_bound(vocab_size: int, horizon: int, step: int) -> float:
    """Upper bound on the future entropy a step-`step` predictor can output.

    A predictor with subscript s covers prefixes of length s-1, which leaves
    T - s + 1 generation steps, each worth at most ln V.
    """
    return (horizon - step + 1) * np.log(vocab_size)


class FutureEntropyPredictor:
    """Base predictor for one step subscript; concrete kinds fill in `dense`.

    `dense(prompt_id)` returns predictions for every prefix of length
    step - 1, indexed by prefix code.
    """

    kind: str

    def __init__(self, step: int, vocab_size: int, horizon: int):
        self.step = step
        self.vocab_size = vocab_size
        self.horizon = horizon

    def dense(self, prompt_id: str) -> np.ndarray:
        raise NotImplementedError

    def predict(self, prompt_id: str, prefix: Sequence[int]) -> float:
        if len(prefix) != self.step - 1:
            raise ModelDomainError(
                f"step-{self.step} predictor covers prefixes of length {self.step - 1}"
            )
        return float(self.dense(prompt_id)[prefix_code(prefix, self.vocab_size)])


class ZeroPredictor(FutureEntropyPredictor):
    """The fixed end-of-horizon predictor: no steps remain, entropy zero."""

    kind = "zero"

    def dense(self, prompt_id: str) -> np.ndarray:
        return np.zeros(self.vocab_size ** (self.step - 1))


class ExactOraclePredictor(FutureEntropyPredictor):
    """Snapshot of an exact future-entropy table; ignores any dataset."""

    kind = "exact-oracle"

    def __init__(self, step, vocab_size, horizon, tables: dict):
        super().__init__(step, vocab_size, horizon)
        self._tables = {pid: np.array(v) for pid, v in tables.items()}

    def dense(self, prompt_id: str) -> np.ndarray:
        return self._tables[prompt_id]


class TokenConstantPredictor(FutureEntropyPredictor):
    """One constant per final token: f(prefix + v) depends only on v."""

    kind = "per-token-constant"

    def __init__(self, step, vocab_size, horizon, constants: np.ndarray):
        super().__init__(step, vocab_size, horizon)
        self.constants = np.asarray(constants, dtype=np.float64)

    def dense(self, prompt_id: str) -> np.ndarray:
        reps = self.vocab_size ** (self.step - 2)
        return np.tile(self.constants, reps)


class TabularPredictor(FutureEntropyPredictor):
    """Mean label per seen prefix; unseen prefixes fall back to the per-token constant."""

    kind = "tabular"

    def __init__(self, step, vocab_size, horizon, table: dict, fallback: np.ndarray):
        super().__init__(step, vocab_size, horizon)
        self.table = dict(table)  # (prompt_id, prefix tuple) -> mean label
        self.fallback = np.asarray(fallback, dtype=np.float64)

    def dense(self, prompt_id: str) -> np.ndarray:
        reps = self.vocab_size ** (self.step - 2)
        out = np.tile(self.fallback, reps)
        V = self.vocab_size
        for (pid, prefix), value in self.table.items():
            if pid == prompt_id:
                out[prefix_code(prefix, V)] = value
        return out


def fit_predictor(
    dataset,
    kind: str,
    *,
    step: int,
    vocab_size: int,
    horizon: int,
    model=None,
) -> FutureEntropyPredictor:
    """Fit one future-entropy predictor from (prompt_id, prefix, label) rows.

    The tabular kind averages labels per exact prefix and falls back to
    per-token constants elsewhere; the per-token-constant kind keeps only
    one mean per final token.  Fitted outputs are clamped into the feasible
    entropy range, which can only shrink the error since the true value lies
    inside it.  The exact-oracle kind ignores the dataset and snapshots
    `model`'s future-entropy table instead.
    """
    if kind not in PREDICTOR_KINDS:
        raise ValueError(f"unknown predictor kind {kind!r}")
    if kind == "exact-oracle":
        if model is None:
            raise ValueError("exact-oracle fitting needs the model to snapshot")
        tables = {
            p.id: future_entropy_table(model, p)[step - 1] for p in model.prompts
        }
        return ExactOraclePredictor(step, vocab_size, horizon, tables)

    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be nonempty")
    bound = predictor_bound(vocab_size, horizon, step)
    labels_by_token: dict = {}
    for _, prefix, label in dataset:
        if not np.isfinite(label):
            raise ValueError("labels must be finite")
        labels_by_token.setdefault(int(prefix[-1]), []).append(float(label))
    overall = float(np.mean([lab for _, _, lab in dataset]))
    constants = np.array(
        [
            np.mean(labels_by_token[v]) if v in labels_by_token else overall
            for v in range(vocab_size)
        ]
    )
    constants = np.clip(constants, 0.0, bound)
    if kind == "per-token-constant":
        return TokenConstantPredictor(step, vocab_size, horizon, constants)

    sums: dict = {}
    for pid, prefix, label in dataset:
        key = (pid, tuple(int(v) for v in prefix))
        total, count = sums.get(key, (0.0, 0))
        sums[key] = (total + float(label), count + 1)
    table = {
        key: float(np.clip(total / count, 0.0, bound))
        for key, (total, count) in sums.items()
    }
    return TabularPredictor(step, vocab_size, horizon, table, constants)


# -- the adjusted model --------------------------------------------------


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    out = np.exp(shifted)
    return out / out.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class AdjustedModel:
    """A base model plus per-step weights and future-entropy predictors.

    `fhats[s-1]` is the predictor entering step s's conditional, covering
    prefixes of length s; the last entry is the end-of-horizon zero
    predictor.  Conditionals are materialized eagerly so the adjusted model
    exposes the same enumeration surface as a base model.
    """

    base: TabularModel
    alphas: np.ndarray
    fhats: tuple
    levels: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        T, V = self.base.horizon, self.base.vocab_size
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if alphas.shape != (T,):
            raise ValueError(f"need {T} step weights, got shape {alphas.shape}")
        if not np.all(np.isfinite(alphas)):
            raise ValueError("step weights must be finite")
        if len(self.fhats) != T:
            raise ValueError(f"need {T} predictors (steps 2..{T + 1})")
        for s, fhat in enumerate(self.fhats, start=1):
            if fhat.step != s + 1:
                raise ValueError(
                    f"predictor at position {s - 1} must have step {s + 1}, "
                    f"got {fhat.step}"
                )
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "fhats", tuple(self.fhats))
        levels = {}
        with np.errstate(divide="ignore"):
            for p in self.base.prompts:
                lvls = []
                for t in range(T):
                    logrows = np.log(self.base.level_rows(p.id, t))
                    fnext = self.fhats[t].dense(p.id)
                    if not np.all(np.isfinite(fnext)):
                        raise ValueError("predictor produced non-finite values")
                    a = alphas[t]
                    logits = (1.0 + a) * logrows - a * fnext.reshape(V**t, V)
                    rows = _softmax_rows(logits)
                    rows.flags.writeable = False
                    lvls.append(rows)
                levels[p.id] = tuple(lvls)
        object.__setattr__(self, "levels", levels)

    # Same read surface as TabularModel, so enumeration and metrics reuse it.
    @property
    def vocab_size(self) -> int:
        return self.base.vocab_size

    @property
    def horizon(self) -> int:
        return self.base.horizon

    @property
    def prompts(self) -> tuple:
        return self.base.prompts

    def level_rows(self, prompt_id: str, t: int) -> np.ndarray:
        if prompt_id not in self.levels:
            raise ModelDomainError(f"unknown prompt id {prompt_id!r}")
        if not 0 <= t < self.horizon:
            raise ModelDomainError(f"level {t} out of range")
        return self.levels[prompt_id][t]

    def conditional(self, prompt: Prompt, prefix: Sequence[int]) -> np.ndarray:
        t = len(prefix)
        if t >= self.horizon:
            raise ModelDomainError(f"prefix length {t} >= horizon {self.horizon}")
        return self.level_rows(prompt.id, t)[prefix_code(prefix, self.vocab_size)]

    def sequence_logprob(self, prompt: Prompt, sequence: Sequence[int]) -> float:
        return TabularModel.sequence_logprob(self, prompt, sequence)

    def sample_sequence(self, prompt: Prompt, rng: np.random.Generator) -> tuple:
        return tuple(int(t) for t in self.sample_sequences(prompt, 1, rng)[0])

    def sample_sequences(self, prompt, n: int, rng: np.random.Generator) -> np.ndarray:
        return TabularModel.sample_sequences(self, prompt, n, rng)

    def as_tabular(self) -> TabularModel:
        """Materialize into a plain model (for serialization or truncation)."""
        levels = {pid: [np.array(rows) for rows in lvls] for pid, lvls in self.levels.items()}
        return TabularModel(self.vocab_size, self.horizon, self.prompts, levels)


def identity_adjustment(base: TabularModel) -> AdjustedModel:
    """All-zero weights and zero predictors: identical to the base model."""
    T, V = base.horizon, base.vocab_size
    fhats = tuple(ZeroPredictor(s + 1, V, T) for s in range(1, T + 1))
    return AdjustedModel(base, np.zeros(T), fhats)


def adjusted_conditional(
    adjusted: AdjustedModel, prompt: Prompt, prefix: Sequence[int]
) -> np.ndarray:
    """Next-token distribution of the adjusted model after `prefix`."""
    return adjusted.conditional(prompt, prefix)


def future_entropy_mc(
    model, prompt: Prompt, prefix: Sequence[int], m: int, rng: np.random.Generator
) -> float:
    """Unbiased sampled estimate of the future entropy after `prefix`.

    Averages, over m sampled continuations, the summed surprisal of the
    model's own tokens.  Individual trajectories can exceed the entropy
    bound; only the mean is constrained.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    return float(_continuation_surprisals(model, prompt, prefix, m, rng).mean())


def _continuation_surprisals(
    model, prompt: Prompt, prefix: Sequence[int], m: int, rng: np.random.Generator
) -> np.ndarray:
    """Total surprisal of m sampled continuations of `prefix`, shape (m,)."""
    V, T = model.vocab_size, model.horizon
    t0 = len(prefix)
    if t0 > T:
        raise ModelDomainError(f"prefix length {t0} > horizon {T}")
    codes = np.full(m, prefix_code(prefix, V), dtype=np.int64)
    total = np.zeros(m)
    for t in range(t0, T):
        rows = model.level_rows(prompt.id, t)[codes]
        cum = np.cumsum(rows, axis=1)
        u = rng.random(m)
        toks = np.minimum((cum < u[:, None]).sum(axis=1), V - 1)
        with np.errstate(divide="ignore"):
            total -= np.log(rows[np.arange(m), toks])
        codes = codes * V + toks
    return total


# -- step-t loss in alpha ------------------------------------------------


class _StepLoss:
    """The step-t log loss and its derivative as functions of alpha_t.

    Everything that does not depend on alpha (true-model prefix weights,
    base log rows, predictor values, their difference g) is precomputed;
    each evaluation is then a row softmax plus weighted sums.  The loss is
    convex in alpha (its second derivative is an average variance), so the
    derivative is nondecreasing, which the optimizer exploits.
    """

    def __init__(self, true_model, base, fhat_next, t: int, prompts: PromptSet):
        V = base.vocab_size
        self.parts = []
        for prompt, qw in prompts.entries:
            if qw == 0.0:
                continue
            wstar = prefix_weights(true_model, prompt)[t - 1]
            with np.errstate(divide="ignore"):
                logrows = np.log(base.level_rows(prompt.id, t - 1))
            fnext = fhat_next.dense(prompt.id).reshape(-1, V)
            g = logrows - fnext
            p_true = true_model.level_rows(prompt.id, t - 1)
            finite = np.isfinite(g)
            true_term = np.where(p_true > 0.0, p_true * g, 0.0).sum(axis=1)
            self.parts.append((qw, wstar, logrows, fnext, g, p_true, finite, true_term))

    def loss(self, alpha: float) -> float:
        total = 0.0
        for qw, wstar, logrows, fnext, g, p_true, _, _ in self.parts:
            logits = (1.0 + alpha) * logrows - alpha * fnext
            lse = logsumexp(logits, axis=1)
            neg_log = lse[:, None] - logits
            terms = np.where(p_true > 0.0, p_true * neg_log, 0.0)
            total += qw * float(wstar @ terms.sum(axis=1))
        return total

    def grad(self, alpha: float) -> float:
        total = 0.0
        for qw, wstar, logrows, fnext, g, _, finite, true_term in self.parts:
            logits = (1.0 + alpha) * logrows - alpha * fnext
            lse = logsumexp(logits, axis=1)
            adj = np.exp(logits - lse[:, None])
            adj_term = np.where(finite, adj * g, 0.0).sum(axis=1)
            total += qw * float(wstar @ (adj_term - true_term))
        return total


@dataclass(frozen=True)
class CalibrationConfig:
    """Knobs for the backward calibration loop.

    `alpha_floor` is None by default: the step weight ranges over all reals,
    so a stationary point always exists (the step loss is strictly convex in
    alpha whenever the gradient spread is nonzero) and the calibration bound
    is meaningful on every instance.  Setting a floor restricts the search,
    and a step whose optimum is clamped at it is generally not stationary.
    """

    epsilon: float = 1e-8
    n: int = 200
    m: int = 64
    predictor_kind: str = "exact-oracle"
    bracket_halfwidth: float = 4.0
    max_expansions: int = 6
    seed: int = 0
    alpha_floor: float | None = None
    max_bisections: int = 200

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be at least 1")
        if self.predictor_kind not in PREDICTOR_KINDS:
            raise ValueError(f"predictor_kind must be one of {PREDICTOR_KINDS}")
        if self.bracket_halfwidth <= 0.0:
            raise ValueError("bracket halfwidth must be positive")
        if self.alpha_floor is not None and not np.isfinite(self.alpha_floor):
            raise ValueError("alpha floor must be finite when given")


def _golden_section(f, lo: float, hi: float, iters: int = 200) -> float:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a < 1e-14:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _solve_alpha(problem: _StepLoss, config: CalibrationConfig):
    """Find an epsilon-stationary alpha; returns (alpha, grad, method).

    Gradient-sign bracketing with doubling expansion, then bisection on the
    (nondecreasing) gradient.  If no sign change is found, golden-section
    minimizes the loss over the widest bracket and the method notes it.
    """
    floor = config.alpha_floor
    eps = config.epsilon
    lo = -config.bracket_halfwidth
    if floor is not None:
        lo = max(floor, lo)
    hi = config.bracket_halfwidth
    g_lo, g_hi = problem.grad(lo), problem.grad(hi)
    for _ in range(config.max_expansions):
        if g_lo <= 0.0 or (floor is not None and lo <= floor):
            break
        lo *= 2.0
        if floor is not None:
            lo = max(floor, lo)
        g_lo = problem.grad(lo)
    for _ in range(config.max_expansions):
        if g_hi >= 0.0:
            break
        hi *= 2.0
        g_hi = problem.grad(hi)

    if g_lo <= 0.0 <= g_hi:
        loss0 = problem.loss(0.0)
        mid = (lo + hi) / 2.0
        g_mid = problem.grad(mid)
        for _ in range(config.max_bisections):
            if abs(g_mid) <= eps and problem.loss(mid) <= loss0 + 1e-13:
                break
            if g_mid > 0.0:
                hi = mid
            else:
                lo = mid
            mid = (lo + hi) / 2.0
            g_mid = problem.grad(mid)
        if abs(g_mid) <= eps:
            return mid, g_mid, "bisection"
        logger.debug("bisection stalled at |grad|=%.3g", abs(g_mid))
        return mid, g_mid, "bisection-stalled"

    alpha = _golden_section(problem.loss, lo, hi)
    if problem.loss(alpha) > problem.loss(0.0):
        alpha = 0.0
    g = problem.grad(alpha)
    logger.debug("gradient sign change not bracketed; golden-section gave %.6g", alpha)
    return alpha, g, "golden-section"


def optimize_alpha_t(
    true_model,
    adjusted: AdjustedModel,
    t: int,
    config: CalibrationConfig,
    prompts: PromptSet | None = None,
) -> float:
    """Choose alpha_t so the step-t log loss is epsilon-stationary.

    Steps t+1..T of `adjusted` are taken as already fixed; the returned
    value never worsens the step-t loss relative to alpha_t = 0.
    """
    prompts = prompts if prompts is not None else PromptSet.single()
    problem = _StepLoss(true_model, adjusted.base, adjusted.fhats[t - 1], t, prompts)
    alpha, _, _ = _solve_alpha(problem, config)
    return float(alpha)


def logloss_gradient_alpha(
    true_model,
    adjusted: AdjustedModel,
    t: int,
    prompts: PromptSet | None = None,
) -> float:
    """Exact d/d(alpha_t) of the step-t log loss at the model's current alpha_t."""
    prompts = prompts if prompts is not None else PromptSet.single()
    problem = _StepLoss(true_model, adjusted.base, adjusted.fhats[t - 1], t, prompts)
    return problem.grad(float(adjusted.alphas[t - 1]))


# -- the backward loop ---------------------------------------------------


@dataclass(frozen=True)
class CalibrationRun:
    """Everything the backward loop produced, including the adjusted model.

    `deltas[s]` is the exactly measured mean absolute prediction error of
    the fitted step-s predictor under true-model prefix weights; `grads[t-1]`
    is the step-t loss derivative at the returned alpha_t.
    """

    adjusted: AdjustedModel
    alphas: np.ndarray
    grads: np.ndarray
    deltas: dict
    delta_max: float
    methods: tuple
    label_range: tuple
    config: CalibrationConfig

    def to_csv(self, path) -> None:
        """Rows t=1..T; the delta column belongs to the predictor entering
        step t's conditional (the one with subscript t+1), zero for t = T."""
        T = len(self.alphas)
        rows = []
        for t in range(1, T + 1):
            rows.append(
                (
                    t,
                    float(self.alphas[t - 1]),
                    float(self.grads[t - 1]),
                    float(self.deltas.get(t + 1, 0.0)),
                )
            )
        write_csv(path, ["t", "alpha", "grad_at_opt", "delta_measured"], rows)


def _sample_prefix_dataset(true_model, prompts: PromptSet, length: int, n: int, rng):
    """n prefixes of the given length: prompt by weight, tokens from the true model."""
    entries = prompts.entries
    idx = rng.choice(len(entries), size=n, p=prompts.weights)
    out = []
    for i in range(n):
        prompt, _ = entries[idx[i]]
        w = prefix_weights(true_model, prompt)[length]
        code = int(rng.choice(len(w), p=w / w.sum()))
        out.append((prompt, decode_prefix(code, length, true_model.vocab_size)))
    return out


def future_entropy_scaling(
    true_model: TabularModel,
    base_model: TabularModel,
    config: CalibrationConfig,
    prompts: PromptSet | None = None,
) -> CalibrationRun:
    """Run the backward loop: optimize each alpha_t, then fit that step's predictor.

    Iteration t first makes the step-t loss epsilon-stationary (using the
    already-fitted later predictors), then fits the step-t predictor from n
    true-model prefixes whose labels are sampled future entropies of the
    current adjusted model (m continuations per label, one derived RNG
    stream per label so the result is independent of any parallel split).
    With the exact-oracle kind, fitting snapshots the current adjusted
    model's future-entropy table instead.
    """
    prompts = prompts if prompts is not None else PromptSet.single()
    V, T = base_model.vocab_size, base_model.horizon
    alphas = np.zeros(T)
    fhats = [ZeroPredictor(s + 1, V, T) for s in range(1, T + 1)]
    grads = np.zeros(T)
    methods = [""] * T
    label_lo, label_hi = np.inf, -np.inf

    for t in range(T, 0, -1):
        problem = _StepLoss(true_model, base_model, fhats[t - 1], t, prompts)
        alpha, grad, method = _solve_alpha(problem, config)
        alphas[t - 1] = alpha
        grads[t - 1] = grad
        methods[t - 1] = method

        if t >= 2:
            snapshot = AdjustedModel(base_model, alphas.copy(), tuple(fhats))
            if config.predictor_kind == "exact-oracle":
                fhat_t = fit_predictor(
                    [], "exact-oracle", step=t, vocab_size=V, horizon=T, model=snapshot
                )
            else:
                prefix_rng = child_rng(config.seed, 97, t)
                pairs = _sample_prefix_dataset(
                    true_model, prompts, t - 2, config.n, prefix_rng
                )
                dataset = []
                for i, (prompt, prefix) in enumerate(pairs):
                    for v in range(V):
                        rng = child_rng(config.seed, t, i, v)
                        label = future_entropy_mc(
                            snapshot, prompt, prefix + (v,), config.m, rng
                        )
                        label_lo = min(label_lo, label)
                        label_hi = max(label_hi, label)
                        dataset.append((prompt.id, prefix + (v,), label))
                fhat_t = fit_predictor(
                    dataset, config.predictor_kind, step=t, vocab_size=V, horizon=T
                )
            fhats[t - 2] = fhat_t

    adjusted = AdjustedModel(base_model, alphas, tuple(fhats))
    final_tables = {
        p.id: future_entropy_table(adjusted, p) for p in adjusted.prompts
    }
    deltas = {}
    for s in range(2, T + 1):
        fhat = fhats[s - 2]
        err = 0.0
        for prompt, qw in prompts.entries:
            if qw == 0.0:
                continue
            wstar = prefix_weights(true_model, prompt)[s - 1]
            gap = np.abs(fhat.dense(prompt.id) - final_tables[prompt.id][s - 1])
            err += qw * float(wstar @ gap)
        deltas[s] = err
    delta_max = max(deltas.values(), default=0.0)
    if not np.isfinite(label_lo):
        label_lo = label_hi = 0.0
    return CalibrationRun(
        adjusted=adjusted,
        alphas=alphas,
        grads=grads,
        deltas=deltas,
        delta_max=float(delta_max),
        methods=tuple(methods),
        label_range=(float(label_lo), float(label_hi)),
        config=config,
    )


# -- verification --------------------------------------------------------


@dataclass(frozen=True)
class TheoremCheck:
    """Both theorem inequalities evaluated exactly, with margins."""

    ent_ce: float
    bound: float
    calibration_ok: bool
    calibration_margin: float
    logloss_base: float
    logloss_adjusted: float
    logloss_ok: bool
    logloss_margin: float

    @property
    def passes(self) -> bool:
        return self.calibration_ok and self.logloss_ok


def verify_theorem(
    true_model,
    base_model,
    adjusted: AdjustedModel,
    measured_delta: float,
    epsilon: float,
    prompts: PromptSet | None = None,
    entce_slack: float = 1e-6,
    logloss_slack: float = 1e-10,
) -> TheoremCheck:
    """Check |H - L| <= 2 T delta + sum_t |1 + alpha_t| epsilon, and that the
    adjustment never increased total log loss; both sides by enumeration."""
    prompts = prompts if prompts is not None else PromptSet.single()
    T = base_model.horizon
    report = ent_ce(true_model, adjusted, prompts)
    # The telescoping identity gives H - L = sum_t (1 + alpha_t) g_t with
    # |g_t| <= epsilon, so the weights enter the bound through their absolute
    # value; without that, a weight below -1 could drive the "bound" negative.
    bound = 2.0 * T * measured_delta + float(
        (np.abs(1.0 + adjusted.alphas) * epsilon).sum()
    )
    base_report = ent_ce(true_model, base_model, prompts)
    cal_margin = bound + entce_slack - report.ent_ce
    ll_margin = base_report.total_logloss + logloss_slack - report.total_logloss
    return TheoremCheck(
        ent_ce=report.ent_ce,
        bound=bound,
        calibration_ok=bool(cal_margin >= 0.0),
        calibration_margin=float(cal_margin),
        logloss_base=base_report.total_logloss,
        logloss_adjusted=report.total_logloss,
        logloss_ok=bool(ll_margin >= 0.0),
        logloss_margin=float(ll_margin),
    )


@dataclass(frozen=True)
class LemmaCheck:
    ok: bool
    detail: str
    worst: float


def lemma_logloss_check(
    true_model,
    adjusted: AdjustedModel,
    t: int,
    prompts: PromptSet | None = None,
    perturbation: float = 0.1,
    fd_step: float = 1e-5,
    other_tol: float = 1e-10,
    grad_tol: float = 1e-6,
) -> LemmaCheck:
    """Moving alpha_t must leave every other step's loss untouched, so the
    total-loss derivative in alpha_t equals the step-t derivative."""
    prompts = prompts if prompts is not None else PromptSet.single()
    if np.any(adjusted.alphas[: t - 1] != 0.0):
        raise ValueError("check requires alpha_1..alpha_{t-1} = 0")

    def with_alpha(val: float) -> AdjustedModel:
        a = np.array(adjusted.alphas)
        a[t - 1] = val
        return AdjustedModel(adjusted.base, a, adjusted.fhats)

    a0 = float(adjusted.alphas[t - 1])
    base_losses = log_loss_per_step(true_model, adjusted, prompts)
    bumped = log_loss_per_step(true_model, with_alpha(a0 + perturbation), prompts)
    others = np.abs(np.delete(bumped - base_losses, t - 1))
    worst_other = float(others.max()) if len(others) else 0.0
    if worst_other > other_tol:
        return LemmaCheck(False, "another step's loss moved", worst_other)

    lo = log_loss_per_step(true_model, with_alpha(a0 - fd_step), prompts)
    hi = log_loss_per_step(true_model, with_alpha(a0 + fd_step), prompts)
    d_total = float((hi.sum() - lo.sum()) / (2.0 * fd_step))
    d_step = float((hi[t - 1] - lo[t - 1]) / (2.0 * fd_step))
    gap = abs(d_total - d_step)
    if gap > grad_tol:
        return LemmaCheck(False, "total and step derivatives differ", gap)
    return LemmaCheck(True, "", max(worst_other, gap))


def lemma_fitting_check(
    adjusted: AdjustedModel, t: int, tol: float = 1e-12
) -> LemmaCheck:
    """A prefix's future entropy must not depend on adjustments before its
    first remaining step: zeroing alpha_1..alpha_{t-1} and the predictors
    they use leaves every length-(t-1) future entropy unchanged."""
    if t < 1 or t > adjusted.horizon:
        raise ValueError("t out of range")
    if t == 1:
        return LemmaCheck(True, "nothing precedes step 1", 0.0)
    V, T = adjusted.vocab_size, adjusted.horizon
    a = np.array(adjusted.alphas)
    a[: t - 1] = 0.0
    fhats = list(adjusted.fhats)
    for s in range(1, t):
        fhats[s - 1] = ZeroPredictor(s + 1, V, T)
    stripped = AdjustedModel(adjusted.base, a, tuple(fhats))
    worst = 0.0
    for p in adjusted.prompts:
        full = future_entropy_table(adjusted, p)[t - 1]
        bare = future_entropy_table(stripped, p)[t - 1]
        worst = max(worst, float(np.abs(full - bare).max()))
    if worst > tol:
        return LemmaCheck(False, "future entropy moved", worst)
    return LemmaCheck(True, "", worst)
