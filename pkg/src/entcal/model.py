"""Tabular autoregressive sequence models over a fixed horizon.

A model assigns a next-token distribution to every (prompt, prefix) pair,
for prefixes of length 0..T-1 over a vocabulary of size V.  Rows are stored
as one dense array per prefix depth, indexed by the prefix's base-V code,
so sampling, scoring, and full enumeration are exact and vectorized.  All
instances are immutable after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._util import fmt_float

DEFAULT_CAP = 10**6

TokenSequence = tuple  # token indices in [0, V), length <= T


class EnumerationCapError(ValueError):
    """V^T exceeds the configured enumeration cap."""


class ModelDomainError(ValueError):
    """Unknown prompt, over-length prefix, or token out of range."""


@dataclass(frozen=True)
class Prompt:
    """An opaque conditioning context: an identifier plus a token payload."""

    id: str
    payload: tuple = ()

    def __post_init__(self):
        if not self.id or any(ch.isspace() for ch in self.id):
            raise ValueError("prompt id must be non-empty and contain no whitespace")
        object.__setattr__(self, "payload", tuple(int(t) for t in self.payload))


DEFAULT_PROMPT = Prompt("default")


@dataclass(frozen=True)
class PromptSet:
    """A finite weighted list of prompts; weights sum to one."""

    entries: tuple  # of (Prompt, weight)

    def __post_init__(self):
        entries = tuple((p, float(w)) for p, w in self.entries)
        if not entries:
            raise ValueError("prompt set needs at least one entry")
        weights = np.array([w for _, w in entries])
        if np.any(weights < 0.0):
            raise ValueError("prompt weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("prompt weights must sum to 1 within 1e-12")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def single(cls, prompt: Prompt = DEFAULT_PROMPT) -> "PromptSet":
        return cls(((prompt, 1.0),))

    @property
    def prompts(self) -> tuple:
        return tuple(p for p, _ in self.entries)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])


def check_cap(vocab_size: int, horizon: int, cap: int = DEFAULT_CAP) -> None:
    if vocab_size**horizon > cap:
        raise EnumerationCapError(
            f"V^T = {vocab_size}^{horizon} exceeds the enumeration cap {cap}"
        )


def prefix_code(prefix: Sequence[int], vocab_size: int) -> int:
    """Big-endian base-V integer code of a prefix; the empty prefix is 0."""
    code = 0
    for tok in prefix:
        code = code * vocab_size + int(tok)
    return code


def decode_prefix(code: int, length: int, vocab_size: int) -> tuple:
    toks = []
    for _ in range(length):
        toks.append(code % vocab_size)
        code //= vocab_size
    return tuple(reversed(toks))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TabularModel:
    """A complete distribution over length-T sequences, per prompt.

    levels[prompt_id][t] has shape (V^t, V): row prefix_code(prefix) holds the
    next-token distribution after that length-t prefix.
    """

    vocab_size: int
    horizon: int
    prompts: tuple
    levels: dict = field(repr=False)

    def __post_init__(self):
        ids = [p.id for p in self.prompts]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate prompt ids")
        if set(ids) != set(self.levels):
            raise ValueError("levels must be keyed exactly by the prompt ids")
        V, T = self.vocab_size, self.horizon
        if V < 1 or T < 1:
            raise ValueError("need V >= 1 and T >= 1")
        frozen = {}
        for pid, lvls in self.levels.items():
            if len(lvls) != T:
                raise ValueError(f"prompt {pid!r}: expected {T} levels, got {len(lvls)}")
            out = []
            for t, rows in enumerate(lvls):
                rows = np.asarray(rows, dtype=np.float64)
                if rows.shape != (V**t, V):
                    raise ValueError(
                        f"prompt {pid!r} level {t}: expected shape {(V**t, V)}, got {rows.shape}"
                    )
                if np.any(rows < 0.0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
                    raise ValueError(
                        f"prompt {pid!r} level {t}: rows must be nonnegative and sum to 1"
                    )
                out.append(_freeze(rows))
            frozen[pid] = tuple(out)
        object.__setattr__(self, "levels", frozen)
        object.__setattr__(self, "prompts", tuple(self.prompts))

    # -- lookups ---------------------------------------------------------

    def prompt_by_id(self, prompt_id: str) -> Prompt:
        for p in self.prompts:
            if p.id == prompt_id:
                return p
        raise ModelDomainError(f"unknown prompt id {prompt_id!r}")

    def level_rows(self, prompt_id: str, t: int) -> np.ndarray:
        if prompt_id not in self.levels:
            raise ModelDomainError(f"unknown prompt id {prompt_id!r}")
        if not 0 <= t < self.horizon:
            raise ModelDomainError(f"level {t} out of range for horizon {self.horizon}")
        return self.levels[prompt_id][t]

    def conditional(self, prompt: Prompt, prefix: Sequence[int]) -> np.ndarray:
        """Next-token distribution after `prefix` (a read-only view)."""
        t = len(prefix)
        if t >= self.horizon:
            raise ModelDomainError(f"prefix length {t} >= horizon {self.horizon}")
        if any(not 0 <= int(v) < self.vocab_size for v in prefix):
            raise ModelDomainError("prefix token out of range")
        return self.level_rows(prompt.id, t)[prefix_code(prefix, self.vocab_size)]

    def sequence_logprob(self, prompt: Prompt, sequence: Sequence[int]) -> float:
        """Log probability in nats of a full length-T sequence (-inf allowed)."""
        if len(sequence) != self.horizon:
            raise ModelDomainError(
                f"sequence length {len(sequence)} != horizon {self.horizon}"
            )
        total = 0.0
        code = 0
        V = self.vocab_size
        for t, tok in enumerate(sequence):
            tok = int(tok)
            if not 0 <= tok < V:
                raise ModelDomainError("sequence token out of range")
            p = self.level_rows(prompt.id, t)[code, tok]
            with np.errstate(divide="ignore"):
                total += float(np.log(p))
            code = code * V + tok
        return total

    # -- sampling --------------------------------------------------------

    def sample_sequence(self, prompt: Prompt, rng: np.random.Generator) -> tuple:
        """Ancestral sample of one length-T sequence."""
        return tuple(int(t) for t in self.sample_sequences(prompt, 1, rng)[0])

    def sample_sequences(self, prompt: Prompt, n: int, rng: np.random.Generator) -> np.ndarray:
        """Ancestral samples, shape (n, T); deterministic given the generator state."""
        if prompt.id not in self.levels:
            raise ModelDomainError(f"unknown prompt id {prompt.id!r}")
        V, T = self.vocab_size, self.horizon
        out = np.empty((n, T), dtype=np.int64)
        codes = np.zeros(n, dtype=np.int64)
        for t in range(T):
            rows = self.levels[prompt.id][t][codes]
            cum = np.cumsum(rows, axis=1)
            u = rng.random(n)
            toks = np.minimum((cum < u[:, None]).sum(axis=1), V - 1)
            out[:, t] = toks
            codes = codes * V + toks
        return out


# -- constructors --------------------------------------------------------


def _single_prompt_tuple(prompts):
    if prompts is None:
        return (DEFAULT_PROMPT,)
    return tuple(prompts)


def random_model(
    vocab_size: int,
    horizon: int,
    concentration: float = 1.0,
    seed: int = 0,
    prompts: Iterable[Prompt] | None = None,
    cap: int = DEFAULT_CAP,
) -> TabularModel:
    """A model whose rows are i.i.d. symmetric Dirichlet draws.

    Deterministic given the seed; every entry is strictly positive.
    """
    if vocab_size < 2 or horizon < 1:
        raise ValueError("need V >= 2 and T >= 1")
    if concentration <= 0.0:
        raise ValueError("concentration must be positive")
    check_cap(vocab_size, horizon, cap)
    prompts = _single_prompt_tuple(prompts)
    rng = np.random.default_rng(seed)
    levels = {}
    for p in prompts:
        lvls = []
        for t in range(horizon):
            rows = rng.dirichlet([concentration] * vocab_size, size=vocab_size**t)
            # Dirichlet draws can hit exact zero in float; nudge and renormalize.
            rows = np.clip(rows, 1e-300, None)
            rows /= rows.sum(axis=1, keepdims=True)
            lvls.append(rows)
        levels[p.id] = lvls
    return TabularModel(vocab_size, horizon, prompts, levels)


def uniform_model(
    vocab_size: int, horizon: int, prompts: Iterable[Prompt] | None = None
) -> TabularModel:
    prompts = _single_prompt_tuple(prompts)
    levels = {
        p.id: [
            np.full((vocab_size**t, vocab_size), 1.0 / vocab_size)
            for t in range(horizon)
        ]
        for p in prompts
    }
    return TabularModel(vocab_size, horizon, prompts, levels)


def deterministic_model(
    vocab_size: int,
    horizon: int,
    sequence: Sequence[int] | None = None,
    prompts: Iterable[Prompt] | None = None,
) -> TabularModel:
    """One-hot rows: the model emits `sequence` (default all zeros) with probability 1."""
    if sequence is None:
        sequence = (0,) * horizon
    if len(sequence) != horizon:
        raise ValueError("sequence length must equal the horizon")
    prompts = _single_prompt_tuple(prompts)
    levels = {}
    for p in prompts:
        lvls = []
        for t in range(horizon):
            rows = np.zeros((vocab_size**t, vocab_size))
            rows[:, int(sequence[t])] = 1.0
            lvls.append(rows)
        levels[p.id] = lvls
    return TabularModel(vocab_size, horizon, prompts, levels)


def _has_token(codes: np.ndarray, length: int, vocab_size: int, token: int) -> np.ndarray:
    """Boolean mask: does the length-`length` prefix encoded by each code contain `token`."""
    hit = np.zeros(codes.shape, dtype=bool)
    rest = codes.copy()
    for _ in range(length):
        hit |= rest % vocab_size == token
        rest //= vocab_size
    return hit


def entropy_overshoot_pair(
    vocab_size: int = 8,
    horizon: int = 5,
    seed: int = 0,
    tail_true: float = 0.02,
    tail_model: float = 0.30,
    noise: float = 0.35,
    concentration: float = 0.3,
    prompts: Iterable[Prompt] | None = None,
) -> tuple:
    """A (true, model) pair whose model entropy exceeds its log loss.

    The last token acts as a rare-tail trigger: once it appears in the prefix,
    both distributions switch permanently to uniform rows.  The model inflates
    the trigger mass (tail_model >> tail_true), so its own generations derail
    into the high-entropy regime far more often than true data does; because
    the shared healthy core is sharp (low `concentration`), the cross-entropy
    on mostly-healthy true data stays well below the uniform ceiling while the
    model's generation entropy climbs toward it, so entropy overshoots log
    loss.  `noise` perturbs the model's healthy rows multiplicatively so each
    row's cross-entropy strictly exceeds its entropy, which makes log loss
    increase monotonically when the model is cooled along a temperature sweep.
    """
    V, T = vocab_size, horizon
    if V < 3:
        raise ValueError("need V >= 3 for a tail token plus a healthy core")
    check_cap(V, T)
    prompts = _single_prompt_tuple(prompts)
    rng = np.random.default_rng(seed)
    trigger = V - 1
    true_levels: dict = {p.id: [] for p in prompts}
    model_levels: dict = {p.id: [] for p in prompts}
    for p in prompts:
        for t in range(T):
            n_rows = V**t
            codes = np.arange(n_rows, dtype=np.int64)
            derailed = _has_token(codes, t, V, trigger)
            core = rng.dirichlet([concentration] * (V - 1), size=n_rows)
            # Sharp Dirichlet draws can underflow to exact zero; keep the
            # supports of the pair identical.
            core = np.clip(core, 1e-12, None)
            core /= core.sum(axis=1, keepdims=True)
            core_noisy = core * np.exp(noise * rng.standard_normal(core.shape))
            core_noisy /= core_noisy.sum(axis=1, keepdims=True)

            rows_true = np.empty((n_rows, V))
            rows_true[:, :trigger] = (1.0 - tail_true) * core
            rows_true[:, trigger] = tail_true
            rows_model = np.empty((n_rows, V))
            rows_model[:, :trigger] = (1.0 - tail_model) * core_noisy
            rows_model[:, trigger] = tail_model

            rows_true[derailed] = 1.0 / V
            rows_model[derailed] = 1.0 / V
            true_levels[p.id].append(rows_true)
            model_levels[p.id].append(rows_model)
    t_model = TabularModel(V, T, prompts, true_levels)
    m_model = TabularModel(V, T, prompts, model_levels)
    return t_model, m_model


# -- serialization -------------------------------------------------------

_MAGIC = "tabular-model 1"


def save_model(model: TabularModel, path) -> None:
    """Write a model as structured text; round-trips bit-exactly.

    Layout: a magic line, vocab/horizon/prompt headers, then one line per
    stored row: prompt id, the prefix tokens, and V probabilities with 17
    significant digits.  Rows are ordered by prompt, then depth, then code.
    """
    V, T = model.vocab_size, model.horizon
    n_rows = len(model.prompts) * sum(V**t for t in range(T))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"vocab {V}\n")
        fh.write(f"horizon {T}\n")
        fh.write(f"prompts {len(model.prompts)}\n")
        for p in model.prompts:
            fh.write(" ".join(["prompt", p.id, *map(str, p.payload)]).rstrip() + "\n")
        fh.write(f"rows {n_rows}\n")
        for p in model.prompts:
            for t in range(T):
                rows = model.levels[p.id][t]
                for code in range(V**t):
                    prefix = decode_prefix(code, t, V)
                    fields = [p.id, *map(str, prefix)]
                    fields += [fmt_float(x) for x in rows[code]]
                    fh.write(" ".join(fields) + "\n")


def load_model(path) -> TabularModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    it = iter(lines)

    def expect(tag):
        ln = next(it)
        head, _, rest = ln.partition(" ")
        if head != tag:
            raise ValueError(f"expected {tag!r} line, got {ln!r}")
        return rest

    if next(it) != _MAGIC:
        raise ValueError("not a tabular model file")
    V = int(expect("vocab"))
    T = int(expect("horizon"))
    n_prompts = int(expect("prompts"))
    prompts = []
    for _ in range(n_prompts):
        parts = expect("prompt").split()
        prompts.append(Prompt(parts[0], tuple(int(x) for x in parts[1:])))
    n_rows = int(expect("rows"))
    levels = {
        p.id: [np.zeros((V**t, V)) for t in range(T)] for p in prompts
    }
    seen = 0
    for ln in it:
        if not ln:
            continue
        parts = ln.split()
        pid = parts[0]
        prefix = tuple(int(x) for x in parts[1 : len(parts) - V])
        probs = [float(x) for x in parts[len(parts) - V :]]
        if pid not in levels:
            raise ValueError(f"row for unknown prompt {pid!r}")
        levels[pid][len(prefix)][prefix_code(prefix, V)] = probs
        seen += 1
    if seen != n_rows:
        raise ValueError(f"expected {n_rows} rows, found {seen}")
    return TabularModel(V, T, tuple(prompts), levels)
