"""Reproducible experiment driver.

Every run is fully determined by its effective configuration and the master
seed.  All randomness flows through generators derived from the master seed
plus a fixed integer key path (one purpose-specific constant, then loop
indices), so any sub-experiment can be reproduced in isolation and the
results cannot depend on how work is split across processes.

Each run directory receives `config.json` (the effective configuration),
`manifest.json` (the list of produced files), and the subcommand's outputs.
Exit status: 0 on success, 1 when the experiment itself fails (for the
theorem check, when any instance violates a bound), 2 for configuration or
usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from ._util import child_rng, write_csv
from .analysis import (
    CorpusError,
    fit_loglog,
    ingest_corpus,
    loglog_fit_to_csv,
    predicted_scaling_exponent,
    exponential_smooth,
    zipf_exponent,
)
from .calibrate import (
    PREDICTOR_KINDS,
    CalibrationConfig,
    future_entropy_scaling,
    verify_theorem,
)
from .metrics import ent_ce, entropy_per_step_exact
from .model import entropy_overshoot_pair, random_model, save_model
from .powerlaw import (
    DerailConfig,
    PowerLaw,
    derail_expected_curve,
    derail_excess_exact,
    derail_miscalibration_closed_form,
    expected_singleton_mass_exact,
    geometric_m_grid,
    simulate_derailing,
    simulate_urn,
)
from .truncate import temperature, tradeoff_curve, tradeoff_to_csv, truncated_model


class ConfigError(Exception):
    """A problem with the configuration or its file; maps to exit status 2."""


def derive_seed(master: int, *key: int) -> int:
    """A 64-bit integer seed from the master seed and an integer key path."""
    ss = np.random.SeedSequence([int(master), *map(int, key)])
    return int(ss.generate_state(1, np.uint64)[0])


_DEFAULTS = {
    "theorem-check": {
        "vocab_size": 4,
        "horizon": 4,
        "num_pairs": 20,
        "concentration": 1.0,
        "epsilon": 1e-8,
        "predictor_kind": "exact-oracle",
        "n": 200,
        "m": 64,
        "write_runs": False,
    },
    "urn": {
        "zipf_exponents": [1.5],
        "vocab": 100_000,
        "m_lo": 10,
        "m_hi": None,
        "points_per_decade": 20,
        "trials": 100,
        "include_exact": True,
    },
    "derail": {
        "base_entropy": 2.0,
        "entropy_bump": 2.0,
        "derail_prob": 1e-3,
        "length": 100,
        "trials": 20_000,
    },
    "tradeoff": {
        "vocab_size": 8,
        "horizon": 5,
        "taus": [1.0, 0.95, 0.9, 0.85, 0.8],
        "smoothing": 0.2,
        "tail_true": 0.02,
        "tail_model": 0.3,
        "noise": 0.35,
        "concentration": 0.3,
    },
    "zipf": {
        "corpus": None,
        "tokens": 10_000_000,
        "zipf_exponent": 1.1,
        "vocab": 50_000,
        "top_n": 5000,
    },
    "scaling-fit": {
        "input": None,
        "xs": None,
        "ys": None,
    },
    "calibrate-demo": {
        "vocab_size": 4,
        "horizon": 4,
        "concentration": 1.0,
        "epsilon": 1e-8,
        "predictor_kind": "exact-oracle",
        "n": 200,
        "m": 64,
        "write_models": False,
    },
}


def _load_config(path, command: str) -> dict:
    merged = dict(_DEFAULTS[command])
    if path is None:
        return merged
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(data) - set(merged))
    if unknown:
        raise ConfigError(
            f"unknown config keys for {command}: {', '.join(unknown)}"
        )
    merged.update(data)
    return merged


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- theorem-check -------------------------------------------------------


def _theorem_pair(task: tuple):
    """Worker for one random instance; safe to run in any process."""
    (k, master, vocab_size, horizon, concentration, epsilon, kind, n, m) = task
    true_model = random_model(
        vocab_size, horizon, concentration, seed=derive_seed(master, 11, k)
    )
    base_model = random_model(
        vocab_size, horizon, concentration, seed=derive_seed(master, 13, k)
    )
    cfg = CalibrationConfig(
        epsilon=epsilon,
        n=n,
        m=m,
        predictor_kind=kind,
        seed=derive_seed(master, 17, k),
    )
    run = future_entropy_scaling(true_model, base_model, cfg)
    check = verify_theorem(
        true_model, base_model, run.adjusted, run.delta_max, epsilon
    )
    T = horizon
    run_rows = [
        (
            t,
            float(run.alphas[t - 1]),
            float(run.grads[t - 1]),
            float(run.deltas.get(t + 1, 0.0)),
        )
        for t in range(1, T + 1)
    ]
    row = (
        k,
        check.ent_ce,
        check.bound,
        check.calibration_margin,
        check.logloss_base,
        check.logloss_adjusted,
        check.logloss_margin,
        run.delta_max,
        int(check.passes),
    )
    return k, row, run_rows


def _run_theorem_check(config: dict, out: Path, seed: int, jobs: int):
    kind = config["predictor_kind"]
    if kind not in PREDICTOR_KINDS:
        raise ConfigError(f"predictor_kind must be one of {PREDICTOR_KINDS}")
    tasks = [
        (
            k,
            seed,
            int(config["vocab_size"]),
            int(config["horizon"]),
            float(config["concentration"]),
            float(config["epsilon"]),
            kind,
            int(config["n"]),
            int(config["m"]),
        )
        for k in range(int(config["num_pairs"]))
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_theorem_pair, tasks))
    else:
        results = [_theorem_pair(t) for t in tasks]

    outputs = []
    rows = [row for _, row, _ in results]
    write_csv(
        out / "theorem.csv",
        [
            "pair",
            "entce",
            "bound",
            "calibration_margin",
            "logloss_base",
            "logloss_adjusted",
            "logloss_margin",
            "delta_max",
            "passes",
        ],
        rows,
    )
    outputs.append("theorem.csv")
    if config["write_runs"]:
        for k, _, run_rows in results:
            name = f"run_pair{k}.csv"
            write_csv(
                out / name,
                ["t", "alpha", "grad_at_opt", "delta_measured"],
                run_rows,
            )
            outputs.append(name)
    failing = [row[0] for row in rows if row[-1] == 0]
    if failing:
        print(
            "theorem check failed for pairs: "
            + ", ".join(str(k) for k in failing),
            file=sys.stderr,
        )
        return 1, outputs
    return 0, outputs


# -- urn -----------------------------------------------------------------


def _run_urn(config: dict, out: Path, seed: int, jobs: int):
    exponents = config["zipf_exponents"]
    if not isinstance(exponents, (list, tuple)) or not exponents:
        raise ConfigError("zipf_exponents must be a nonempty list")
    vocab = int(config["vocab"])
    trials = int(config["trials"])
    m_lo = int(config["m_lo"])
    m_hi = int(config["m_hi"]) if config["m_hi"] is not None else vocab // 3
    grid = geometric_m_grid(m_lo, m_hi, int(config["points_per_decade"]))
    multi = len(exponents) > 1
    outputs = []
    slope_rows = []
    for idx, a in enumerate(exponents):
        pl = PowerLaw(float(a), vocab)
        rng = child_rng(seed, 23, idx)
        rows = []
        means = []
        for m in grid:
            mean, se = simulate_urn(pl, m, trials, rng)
            rows.append((m, mean, se))
            means.append(mean)
        tag = f"_a{a:g}" if multi else ""
        name = f"singleton{tag}.csv"
        write_csv(out / name, ["m", "mean_singleton_mass", "stderr"], rows)
        outputs.append(name)
        if config["include_exact"]:
            exact_name = f"singleton_exact{tag}.csv"
            write_csv(
                out / exact_name,
                ["m", "exact_singleton_mass"],
                [(m, expected_singleton_mass_exact(pl, m)) for m in grid],
            )
            outputs.append(exact_name)
        fit = fit_loglog(np.array(grid, dtype=float), np.array(means))
        if a > 1.0:
            asymptotic = 1.0 / a - 1.0
        else:
            asymptotic = "unavailable"
        slope_rows.append((f"{a:g}", fit.slope, fit.intercept, fit.r_squared, asymptotic))
    write_csv(
        out / "slopes.csv",
        ["exponent", "slope", "intercept", "r_squared", "asymptotic_slope"],
        slope_rows,
    )
    outputs.append("slopes.csv")
    return 0, outputs


# -- derail --------------------------------------------------------------


def _run_derail(config: dict, out: Path, seed: int, jobs: int):
    cfg = DerailConfig(
        base_entropy=float(config["base_entropy"]),
        entropy_bump=float(config["entropy_bump"]),
        derail_prob=float(config["derail_prob"]),
        length=int(config["length"]),
    )
    rng = child_rng(seed, 31)
    simulated = simulate_derailing(cfg, int(config["trials"]), rng)
    expected = derail_expected_curve(cfg)
    steps = np.arange(1, cfg.length + 1)
    write_csv(out / "derail.csv", ["t", "mean_entropy"], zip(steps, simulated))
    write_csv(out / "derail_expected.csv", ["t", "mean_entropy"], zip(steps, expected))

    q = cfg.derail_prob
    window = cfg.length if q == 0.0 else min(cfg.length, max(2, int(0.1 / q)))
    fit = linregress(steps[:window].astype(float), simulated[:window])
    closed = derail_miscalibration_closed_form(cfg)
    exact = derail_excess_exact(cfg)
    summary = {
        "measured_slope": float(fit.slope),
        "predicted_slope": q * cfg.entropy_bump,
        "window_steps": int(window),
        "closed_form_excess": closed,
        "exact_excess": exact,
        "excess_ratio": closed / exact if exact > 0.0 else None,
    }
    _write_json(out / "summary.json", summary)
    return 0, ["derail.csv", "derail_expected.csv", "summary.json"]


# -- tradeoff ------------------------------------------------------------


def _run_tradeoff(config: dict, out: Path, seed: int, jobs: int):
    true_model, base_model = entropy_overshoot_pair(
        vocab_size=int(config["vocab_size"]),
        horizon=int(config["horizon"]),
        seed=derive_seed(seed, 19, 0),
        tail_true=float(config["tail_true"]),
        tail_model=float(config["tail_model"]),
        noise=float(config["noise"]),
        concentration=float(config["concentration"]),
    )
    taus = [float(tau) for tau in config["taus"]]
    if not taus:
        raise ConfigError("taus must be a nonempty list")
    rules = [temperature(tau) for tau in taus]
    points = tradeoff_curve(true_model, base_model, rules)
    tradeoff_to_csv(points, out / "tradeoff.csv")
    ent_ce(true_model, base_model).to_csv(out / "report.csv")

    factor = float(config["smoothing"])
    time_rows = []
    for rule in rules:
        swept = truncated_model(base_model, rule)
        entropies = entropy_per_step_exact(swept)
        smoothed = exponential_smooth(entropies, factor)
        for t in range(len(entropies)):
            time_rows.append(
                (rule.kind, float(rule.param), t + 1, entropies[t], smoothed[t])
            )
    write_csv(
        out / "entropy_time.csv",
        ["rule", "param", "step", "entropy_nats", "entropy_smoothed"],
        time_rows,
    )
    return 0, ["tradeoff.csv", "report.csv", "entropy_time.csv"]


# -- zipf ----------------------------------------------------------------


def _synthetic_counts(pl: PowerLaw, n_tokens: int, rng) -> np.ndarray:
    counts = np.zeros(pl.vocab, dtype=np.int64)
    remaining = n_tokens
    while remaining > 0:
        chunk = min(remaining, 1_000_000)
        counts += np.bincount(pl.sample(chunk, rng), minlength=pl.vocab)
        remaining -= chunk
    return counts


def _run_zipf(config: dict, out: Path, seed: int, jobs: int):
    from .analysis import TokenCounts

    if config["corpus"] is not None:
        counts = ingest_corpus(config["corpus"])
        source = str(config["corpus"])
    else:
        n_tokens = int(config["tokens"])
        if n_tokens < 1:
            raise ConfigError("tokens must be positive")
        pl = PowerLaw(float(config["zipf_exponent"]), int(config["vocab"]))
        raw = _synthetic_counts(pl, n_tokens, child_rng(seed, 29))
        counts = TokenCounts(
            {str(i): int(c) for i, c in enumerate(raw) if c > 0}, int(raw.sum())
        )
        source = f"synthetic({config['zipf_exponent']:g}, vocab={pl.vocab})"

    counts.to_csv(out / "counts.csv")
    distinct = len(counts.counts)
    top_n = min(int(config["top_n"]), distinct)
    fit = zipf_exponent(counts, top_n=top_n)
    loglog_fit_to_csv(fit, out / "fit.csv")
    exponent = -fit.slope
    summary = {
        "source": source,
        "total_tokens": counts.total,
        "distinct_tokens": distinct,
        "top_n": top_n,
        "fitted_exponent": exponent,
        "r_squared": fit.r_squared,
        "predicted_scaling_exponent": (
            predicted_scaling_exponent(exponent) if exponent > 0 else None
        ),
    }
    _write_json(out / "summary.json", summary)
    return 0, ["counts.csv", "fit.csv", "summary.json"]


# -- scaling-fit ---------------------------------------------------------


def _read_xy_csv(path) -> tuple:
    xs, ys = [], []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read input file {path}: {exc}")
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{i + 1}: expected two comma-separated fields")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            if i == 0:
                continue  # header line
            raise ConfigError(f"{path}:{i + 1}: not numeric")
    return np.array(xs), np.array(ys)


def _run_scaling_fit(config: dict, out: Path, seed: int, jobs: int):
    if config["input"] is not None:
        xs, ys = _read_xy_csv(config["input"])
    elif config["xs"] is not None and config["ys"] is not None:
        xs = np.asarray(config["xs"], dtype=float)
        ys = np.asarray(config["ys"], dtype=float)
    else:
        raise ConfigError("scaling-fit needs either 'input' or both 'xs' and 'ys'")
    try:
        fit = fit_loglog(xs, ys)
    except ValueError as exc:
        raise ConfigError(str(exc))
    loglog_fit_to_csv(fit, out / "fit.csv")
    return 0, ["fit.csv"]


# -- calibrate-demo ------------------------------------------------------


def _run_calibrate_demo(config: dict, out: Path, seed: int, jobs: int):
    kind = config["predictor_kind"]
    if kind not in PREDICTOR_KINDS:
        raise ConfigError(f"predictor_kind must be one of {PREDICTOR_KINDS}")
    vocab_size = int(config["vocab_size"])
    horizon = int(config["horizon"])
    concentration = float(config["concentration"])
    epsilon = float(config["epsilon"])
    true_model = random_model(
        vocab_size, horizon, concentration, seed=derive_seed(seed, 11, 0)
    )
    base_model = random_model(
        vocab_size, horizon, concentration, seed=derive_seed(seed, 13, 0)
    )
    cfg = CalibrationConfig(
        epsilon=epsilon,
        n=int(config["n"]),
        m=int(config["m"]),
        predictor_kind=kind,
        seed=derive_seed(seed, 17, 0),
    )
    run = future_entropy_scaling(true_model, base_model, cfg)
    check = verify_theorem(
        true_model, base_model, run.adjusted, run.delta_max, epsilon
    )
    run.to_csv(out / "run.csv")
    ent_ce(true_model, base_model).to_csv(out / "report_base.csv")
    ent_ce(true_model, run.adjusted).to_csv(out / "report_adjusted.csv")
    base_report = ent_ce(true_model, base_model)
    summary = {
        "entce_base": base_report.ent_ce,
        "entce_adjusted": check.ent_ce,
        "bound": check.bound,
        "calibration_margin": check.calibration_margin,
        "logloss_base": check.logloss_base,
        "logloss_adjusted": check.logloss_adjusted,
        "logloss_margin": check.logloss_margin,
        "delta_max": run.delta_max,
        "alphas": [float(a) for a in run.alphas],
        "methods": list(run.methods),
        "passes": bool(check.passes),
    }
    _write_json(out / "summary.json", summary)
    outputs = ["run.csv", "report_base.csv", "report_adjusted.csv", "summary.json"]
    if config["write_models"]:
        save_model(true_model, out / "true_model.txt")
        save_model(base_model, out / "base_model.txt")
        save_model(run.adjusted.as_tabular(), out / "adjusted_model.txt")
        outputs += ["true_model.txt", "base_model.txt", "adjusted_model.txt"]
    return (0 if check.passes else 1), outputs


_COMMANDS = {
    "theorem-check": _run_theorem_check,
    "urn": _run_urn,
    "derail": _run_derail,
    "tradeoff": _run_tradeoff,
    "zipf": _run_zipf,
    "scaling-fit": _run_scaling_fit,
    "calibrate-demo": _run_calibrate_demo,
}

_HELP = {
    "theorem-check": "verify both calibration inequalities on random instances",
    "urn": "singleton-mass decay of power-law draws against the exact curve",
    "derail": "two-regime entropy growth: simulation, exact curve, closed form",
    "tradeoff": "temperature sweep mapping calibration error against log loss",
    "zipf": "rank-frequency exponent of a corpus (real or synthetic)",
    "scaling-fit": "log-log straight-line fit of supplied (x, y) points",
    "calibrate-demo": "one full calibration run with before/after reports",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entcal",
        description="Entropy-calibration experiments on exactly enumerable models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument(
            "--out",
            default=None,
            help="output directory (default entcal-out/<command>)",
        )
        p.add_argument(
            "--jobs", type=int, default=1, help="parallel worker processes"
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed < 0:
        print("error: seed must be a nonnegative integer", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("error: jobs must be at least 1", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out is not None else Path("entcal-out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    try:
        status, outputs = _COMMANDS[args.command](config, out, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_json(
        out / "config.json",
        {"command": args.command, "seed": args.seed, "parameters": config},
    )
    _write_json(
        out / "manifest.json",
        {
            "command": args.command,
            "seed": args.seed,
            "jobs": args.jobs,
            "outputs": sorted(outputs + ["config.json"]),
        },
    )
    print(f"{args.command}: wrote {len(outputs) + 2} files to {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
