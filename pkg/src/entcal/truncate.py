"""Distribution-truncation decoders and the calibration/diversity tradeoff.

Temperature rescales a row as row^(1/tau); the hard rules (top-k, top-p,
min-p) zero out low-probability tokens and renormalize.  None of them can
empty a row, since the row maximum always survives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import row_entropies, write_csv
from .metrics import ent_ce
from .model import PromptSet, TabularModel


@dataclass(frozen=True)
class TruncationRule:
    """One decoder modification: kind in {temperature, top_k, top_p, min_p}."""

    kind: str
    param: float

    def __post_init__(self):
        kind, param = self.kind, self.param
        if kind == "temperature":
            if not param > 0.0:
                raise ValueError("temperature must be positive")
        elif kind == "top_k":
            if int(param) != param or param < 1:
                raise ValueError("top_k needs a positive integer k")
        elif kind == "top_p":
            if not 0.0 < param <= 1.0:
                raise ValueError("top_p needs p in (0, 1]")
        elif kind == "min_p":
            if not 0.0 <= param <= 1.0:
                raise ValueError("min_p needs r in [0, 1]")
        else:
            raise ValueError(f"unknown truncation kind {kind!r}")

    def label(self) -> str:
        return f"{self.kind}({self.param:g})"


def temperature(tau: float) -> TruncationRule:
    return TruncationRule("temperature", float(tau))


def top_k(k: int) -> TruncationRule:
    return TruncationRule("top_k", float(k))


def top_p(p: float) -> TruncationRule:
    return TruncationRule("top_p", float(p))


def min_p(r: float) -> TruncationRule:
    return TruncationRule("min_p", float(r))


def _truncate_rows(rows: np.ndarray, rule: TruncationRule) -> np.ndarray:
    """Vectorized row transform; `rows` has shape (n, V)."""
    kind, param = rule.kind, rule.param
    if kind == "temperature":
        # Power transform in the log domain; zeros stay zero.
        with np.errstate(divide="ignore"):
            logs = np.log(rows) / param
        logs -= logs.max(axis=1, keepdims=True)
        out = np.exp(logs)
        out[rows == 0.0] = 0.0
    else:
        if kind == "top_k":
            k = min(int(param), rows.shape[1])
            order = np.argsort(-rows, axis=1, kind="stable")
            keep = np.zeros(rows.shape, dtype=bool)
            np.put_along_axis(keep, order[:, :k], True, axis=1)
        elif kind == "top_p":
            order = np.argsort(-rows, axis=1, kind="stable")
            sorted_rows = np.take_along_axis(rows, order, axis=1)
            cum = np.cumsum(sorted_rows, axis=1)
            # Index of the first sorted position where cumulative mass >= p;
            # everything up to and including it survives.  If rounding keeps
            # the cumulative sum below p, keep the whole row.
            j = np.minimum((cum < param).sum(axis=1), rows.shape[1] - 1)
            keep_sorted = np.arange(rows.shape[1])[None, :] <= j[:, None]
            keep = np.zeros(rows.shape, dtype=bool)
            np.put_along_axis(keep, order, keep_sorted, axis=1)
        else:  # min_p
            keep = rows >= param * rows.max(axis=1, keepdims=True)
        out = np.where(keep, rows, 0.0)
    return out / out.sum(axis=1, keepdims=True)


def truncate_row(row: np.ndarray, rule: TruncationRule) -> np.ndarray:
    """Apply one rule to a single probability row; returns a fresh row summing to 1."""
    row = np.asarray(row, dtype=np.float64)
    return _truncate_rows(row[None, :], rule)[0]


def truncated_model(model: TabularModel, rule: TruncationRule) -> TabularModel:
    """Apply a rule to every conditional row of a model."""
    levels = {
        p.id: [
            _truncate_rows(model.level_rows(p.id, t), rule)
            for t in range(model.horizon)
        ]
        for p in model.prompts
    }
    return TabularModel(model.vocab_size, model.horizon, model.prompts, levels)


@dataclass(frozen=True)
class TradeoffPoint:
    """Exact metrics for one decoder setting applied to the base model."""

    rule: TruncationRule
    ent_ce_per_step: float
    total_logloss: float
    total_entropy: float


def tradeoff_curve(
    true_model: TabularModel,
    base_model: TabularModel,
    rules,
    prompts: PromptSet | None = None,
) -> list:
    """One exact (calibration error, log loss) point per truncation rule.

    Hard truncations can zero out tokens the true distribution uses, in
    which case the log loss is +inf; the point is still reported.
    """
    points = []
    for rule in rules:
        report = ent_ce(true_model, truncated_model(base_model, rule), prompts)
        points.append(
            TradeoffPoint(
                rule=rule,
                ent_ce_per_step=report.ent_ce_per_step,
                total_logloss=report.total_logloss,
                total_entropy=report.total_entropy,
            )
        )
    return points


def tradeoff_to_csv(points, path) -> None:
    write_csv(
        path,
        ["rule", "param", "entce_per_step", "total_logloss"],
        [
            (pt.rule.kind, float(pt.rule.param), pt.ent_ce_per_step, pt.total_logloss)
            for pt in points
        ],
    )


def rowwise_entropy_drop(model: TabularModel, rule: TruncationRule) -> float:
    """Largest per-row entropy increase caused by a rule (should be <= 0 for
    entropy-reducing settings); a convenience diagnostic for sweeps."""
    worst = -np.inf
    for p in model.prompts:
        for t in range(model.horizon):
            rows = model.level_rows(p.id, t)
            delta = row_entropies(_truncate_rows(rows, rule)) - row_entropies(rows)
            worst = max(worst, float(delta.max()))
    return worst
