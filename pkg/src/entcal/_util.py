"""Shared plumbing: float formatting, derived RNG streams, CSV writing."""
from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np


def fmt_float(x: float) -> str:
    """Format a float with 17 significant digits (round-trips float64 exactly)."""
    return "%.17g" % float(x)


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Derive an independent generator from a master seed and an integer key path.

    The same (master_seed, key) always yields the same stream, regardless of
    how many other streams were derived before it, so parallel work can hand
    out streams per task without coupling results to worker count.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows as CSV with a fixed header, formatting floats to 17 digits.

    Values that are numpy/python floats go through fmt_float; everything else
    is str()'d.  Fields here never contain commas, so no quoting is needed.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fields = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    fields.append(fmt_float(v))
                else:
                    fields.append(str(v))
            fh.write(",".join(fields) + "\n")


def row_entropies(rows: np.ndarray) -> np.ndarray:
    """Entropy in nats of each row of a (n, V) probability matrix.

    Zero entries contribute zero (the -0 log 0 = 0 convention).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0.0, -rows * np.log(rows), 0.0)
    return terms.sum(axis=-1)
