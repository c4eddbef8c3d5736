"""Corpus statistics: token counts, rank-frequency fits, and curve smoothing.

The rank-frequency fit is plain OLS in log10-log10 space over the top-ranked
tokens, which is the comparable quantity for power-law exponents reported
from frequency plots (not a maximum-likelihood tail fit).
"""
from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from ._util import write_csv


class CorpusError(ValueError):
    """Bad corpus input: undecodable bytes or too little data to fit."""


@dataclass(frozen=True)
class TokenCounts:
    """Occurrence counts per token string."""

    counts: dict
    total: int

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of counts")
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("counts must be at least 1")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "TokenCounts":
        counts = dict(Counter(tokens))
        return cls(counts=counts, total=sum(counts.values()))

    def ranked(self) -> list:
        """(token, count) pairs by decreasing count, ties in token order."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_csv(self, path) -> None:
        write_csv(path, ["token", "count"], self.ranked())


@dataclass(frozen=True)
class LogLogFit:
    """OLS fit of log10(y) on log10(x)."""

    slope: float
    intercept: float
    r_squared: float


def lowercase_whitespace(text: str) -> list:
    return text.lower().split()


def ingest_corpus(
    source, tokenizer: Callable[[str], list] | None = None
) -> TokenCounts:
    """Count tokens from a path, text stream, or raw string.

    The default tokenizer lowercases and splits on whitespace.  A file that
    is not valid UTF-8 raises CorpusError naming the byte offset.
    """
    tokenizer = tokenizer if tokenizer is not None else lowercase_whitespace
    counter: Counter = Counter()

    def consume(lines):
        for line in lines:
            counter.update(tokenizer(line))

    if isinstance(source, (str, os.PathLike)) and not isinstance(source, io.IOBase):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                consume(fh)
        except UnicodeDecodeError as e:
            raise CorpusError(
                f"corpus is not valid UTF-8 at byte offset {e.start}"
            ) from e
    else:
        consume(source)
    counts = dict(counter)
    return TokenCounts(counts=counts, total=sum(counts.values()))


def fit_loglog(xs, ys) -> LogLogFit:
    """OLS in log10 space; recovers noiseless power laws exactly."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D and the same length")
    if len(xs) < 3:
        raise ValueError("need at least 3 points")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit needs strictly positive values")
    lx, ly = np.log10(xs), np.log10(ys)
    if np.allclose(lx, lx[0]):
        raise ValueError("degenerate fit: all x values coincide")
    res = stats.linregress(lx, ly)
    return LogLogFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue) ** 2,
    )


def loglog_fit_to_csv(fit: LogLogFit, path) -> None:
    write_csv(
        path,
        ["slope", "intercept", "r_squared"],
        [(fit.slope, fit.intercept, fit.r_squared)],
    )


def zipf_exponent(counts: TokenCounts, top_n: int = 5000) -> LogLogFit:
    """Rank-frequency fit over the top_n ranks; the exponent is -slope."""
    ranked = counts.ranked()
    if len(ranked) < top_n:
        raise CorpusError(
            f"need at least {top_n} distinct tokens, have {len(ranked)}"
        )
    freqs = np.array([c for _, c in ranked[:top_n]], dtype=np.float64)
    ranks = np.arange(1, top_n + 1, dtype=np.float64)
    return fit_loglog(ranks, freqs)


def predicted_scaling_exponent(zipf_exp: float) -> float:
    """Map a Zipf exponent a to the singleton-mass decay exponent 1/a - 1."""
    if zipf_exp <= 0.0:
        raise ValueError("zipf exponent must be positive")
    return 1.0 / zipf_exp - 1.0


def exponential_smooth(series, factor: float):
    """First-order smoothing: y_0 = x_0, y_t = factor*x_t + (1-factor)*y_{t-1}."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("factor must be in (0, 1]")
    xs = np.asarray(series, dtype=np.float64)
    if xs.ndim != 1 or len(xs) == 0:
        raise ValueError("series must be 1-D and nonempty")
    out = np.empty_like(xs)
    out[0] = xs[0]
    for t in range(1, len(xs)):
        out[t] = factor * xs[t] + (1.0 - factor) * out[t - 1]
    return out
