"""Command-line entry point: solve a single instance, run experiment grids,
evaluate measurement bounds, and estimate Gaussian widths.

Each subcommand takes one self-describing JSON config (plus dotted-key
overrides) and writes its artifacts into an output directory; identical
inputs always reproduce byte-identical files apart from recorded wall times.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .core import expected_gauss_norm
from .harness import (
    ExperimentSpec,
    aggregate_to_csv,
    convergence_study,
    phase_transition,
    records_to_csv,
)
from .sets import descriptor_from_dict, window_family
from .solver import ProblemInstance, SolverConfig, solve, trace_to_csv
from .theory import (
    min_measurements,
    uniqueness_lower_bound,
    width_difference_cones,
    width_set,
    width_support_union,
    width_tangent_cone,
)

__all__ = ["main", "run"]


class ConfigError(ValueError):
    pass


def _load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from exc


def _parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_overrides(config, overrides):
    applied = []
    for item in overrides:
        key, value = _parse_override(item)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = value
        applied.append({"key": key, "value": value})
    return applied


def _load_array(entry, name, expect_matrix=False):
    if isinstance(entry, dict):
        path = entry.get("file")
        if path is None:
            raise ConfigError(f"{name}: file reference needs a 'file' key")
        if not os.path.exists(path):
            raise ConfigError(f"{name}: file not found: {path}")
        if path.endswith(".npy"):
            arr = np.load(path)
        else:
            arr = np.loadtxt(path, delimiter=",")
    else:
        arr = np.asarray(entry, dtype=float)
    if expect_matrix:
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
    return arr


def _solver_config(entry, seed_override=None):
    entry = dict(entry or {})
    if seed_override is not None:
        entry["seed"] = seed_override
    if entry.get("prior_q") is not None:
        entry["prior_q"] = np.asarray(entry["prior_q"], dtype=float)
    if entry.get("m_grid") is not None:
        entry.pop("m_grid")
    return SolverConfig(**entry)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_vector_csv(path, header, values):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{header}\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


def _summary(out_dir, command, config, overrides, outputs):
    payload = {
        "command": command,
        "config": config,
        "overrides": overrides,
        "outputs": outputs,
    }
    _write_json(os.path.join(out_dir, "summary.json"), payload)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def cmd_solve(config, out_dir, verbose=False, seed=None):
    problem_cfg = config.get("problem")
    if not isinstance(problem_cfg, dict):
        raise ConfigError("solve config needs a 'problem' object")
    A = _load_array(problem_cfg.get("A"), "A", expect_matrix=True)
    y = _load_array(problem_cfg.get("y"), "y")
    set_entries = problem_cfg.get("sets")
    if not set_entries:
        raise ConfigError("solve config needs a non-empty 'problem.sets' list")
    sets = tuple(descriptor_from_dict(d) for d in set_entries)
    x_true = problem_cfg.get("x_true")
    if x_true is not None:
        x_true = _load_array(x_true, "x_true")
    problem = ProblemInstance(A, y, sets, x_true=x_true)
    cfg = _solver_config(config.get("solver"), seed)

    result = solve(problem, cfg)
    _write_vector_csv(os.path.join(out_dir, "x_hat.csv"), "x_hat", result.x_hat)
    trace_to_csv(result.trace, os.path.join(out_dir, "trace.csv"))
    _write_json(
        os.path.join(out_dir, "certificates.json"),
        _jsonable(result.certificates.to_dict()),
    )
    outputs = {
        "chosen_set": result.chosen_set,
        "iterations_run": result.iterations_run,
    }
    if problem.x_true is not None:
        rel = float(
            np.linalg.norm(result.x_hat - problem.x_true)
            / np.linalg.norm(problem.x_true)
        )
        outputs["rel_error"] = rel
        print(f"rel_error={rel!r}")
    if verbose:
        print(f"wrote x_hat.csv, trace.csv, certificates.json to {out_dir}", file=sys.stderr)
    return outputs


def _check_assertions(assertions, table):
    failures = []
    thresholds = {"union": math.inf, "baseline": math.inf}

    def threshold(rate, key):
        best = math.inf
        for row in table:
            if row[key] >= rate:
                best = min(best, row["m"])
        return best

    for spec in assertions:
        kind = spec.get("type")
        if kind == "success_rate_at_least":
            m, rate = int(spec["m"]), float(spec["rate"])
            rows = [row for row in table if row["m"] == m]
            if not rows or rows[0]["success_rate"] < rate:
                got = rows[0]["success_rate"] if rows else None
                failures.append(f"success rate at M={m} is {got}, needs >= {rate}")
        elif kind == "dominates_baseline":
            slack_sd = float(spec.get("slack_sd", 1.0))
            trials = int(spec["trials"])
            for row in table:
                pu, pb = row["success_rate"], row["baseline_success_rate"]
                sd = math.sqrt((pu * (1 - pu) + pb * (1 - pb)) / trials)
                if pu < pb - slack_sd * sd:
                    failures.append(
                        f"union rate {pu} at M={row['m']} below baseline "
                        f"{pb} by more than {slack_sd} sd"
                    )
        elif kind == "earlier_threshold":
            rate = float(spec.get("rate", 0.9))
            mine = threshold(rate, "success_rate")
            base = threshold(rate, "baseline_success_rate")
            thresholds = {"union": mine, "baseline": base}
            if not mine < base:
                failures.append(
                    f"union reaches {rate:.0%} at M={mine}, baseline at M={base}; "
                    "need strictly earlier"
                )
        else:
            raise ConfigError(f"unknown assertion type: {kind!r}")
    return failures, thresholds


def cmd_experiment(config, out_dir, verbose=False, seed=None, threads=1):
    config = dict(config)
    assertions = config.pop("assertions", [])
    study = config.pop("study", None)
    solver_cfg = _solver_config(config.pop("solver", {}))
    if seed is not None:
        config["seed"] = seed
    spec = ExperimentSpec(
        n=int(config["n"]),
        k=int(config["k"]),
        m_grid=tuple(config["m_grid"]),
        set_family=config.get("set_family", "windows"),
        trials=int(config.get("trials", 1)),
        solver=solver_cfg,
        success_tol=float(config.get("success_tol", 1e-3)),
        seed=int(config.get("seed", 0)),
        quantizer_edges=config.get("quantizer_edges"),
        sets_file=config.get("sets_file"),
    )
    outputs = {}
    if study:
        out = convergence_study(spec, tuple(study["schedules"]))
        _write_json(os.path.join(out_dir, "study.json"), _jsonable(out))
        outputs["study"] = {
            name: {
                "step_energy_slope": data["step_energy_slope"],
                "mw_regret_slope": data["mw_regret_slope"],
            }
            for name, data in out.items()
        }
    else:
        result = phase_transition(spec, workers=threads)
        records_to_csv(result.records, os.path.join(out_dir, "trials.csv"))
        records_to_csv(
            result.baseline_records, os.path.join(out_dir, "baseline_trials.csv")
        )
        aggregate_to_csv(result.table, os.path.join(out_dir, "aggregate.csv"))
        outputs["table"] = [dict(row) for row in result.table]
        failures, thresholds = _check_assertions(assertions, result.table)
        outputs["assertion_failures"] = failures
        outputs["thresholds"] = _jsonable(thresholds)
        for line in failures:
            print(f"assertion failed: {line}", file=sys.stderr)
        if verbose:
            for row in result.table:
                print(
                    f"M={row['m']}: union {row['success_rate']:.2f} "
                    f"baseline {row['baseline_success_rate']:.2f}",
                    file=sys.stderr,
                )
        if failures:
            return outputs, 1
    return outputs, 0


def _family_widths(family, samples, seed):
    n, k = int(family["n"]), int(family["k"])
    windows = window_family(n, k)
    union = width_support_union(windows, samples, seed)
    pair_estimates = width_difference_cones(windows, samples, seed)
    x_ref = np.zeros(n)
    x_ref[: k + 1] = 1.0
    tangent = width_tangent_cone(x_ref, samples, seed)
    return windows, union, pair_estimates, tangent


def cmd_bounds(config, out_dir, verbose=False, seed=None):
    epsilon = float(config.get("epsilon", 0.25))
    target = float(config.get("target", 0.9))
    samples = int(config.get("samples", 20000))
    cfg_seed = int(config.get("seed", 0) if seed is None else seed)

    if "family" in config:
        _, _, pair_estimates, tangent = _family_widths(
            config["family"], samples, cfg_seed
        )
        omega_tangent = tangent.mean
        omega_pairs = [est.mean for est in pair_estimates.values()]
    else:
        widths = config.get("widths")
        if not widths:
            raise ConfigError("bounds config needs either 'family' or 'widths'")
        omega_tangent = float(widths["tangent"])
        omega_pairs = [float(w) for w in widths["pairs"]]

    search = min_measurements(omega_tangent, omega_pairs, epsilon, target)
    m_report = int(config.get("M", search.m_with_prior))
    report = uniqueness_lower_bound(m_report, omega_tangent, omega_pairs, epsilon)
    payload = {
        "report": report.to_dict(),
        "search": search.to_dict(),
        "target": target,
        "gates": {
            "p1_active": report.a_m >= report.omega_tangent,
            "p2_active": bool(
                all(
                    (1 - 2 * epsilon) * report.a_m >= w for w in report.omega_pairs
                )
            ),
        },
    }
    _write_json(os.path.join(out_dir, "bounds.json"), _jsonable(payload))
    print(
        f"delta_M={search.delta_m} (with prior M={search.m_with_prior}, "
        f"without prior M={search.m_without_prior}) at target {target!r}"
    )
    return payload


def cmd_width(config, out_dir, verbose=False, seed=None):
    samples = int(config.get("samples", 20000))
    cfg_seed = int(config.get("seed", 0) if seed is None else seed)
    include_pairs = bool(config.get("pairs", False))
    rows = []

    if "family" in config:
        windows, union, pair_estimates, tangent = _family_widths(
            config["family"], samples, cfg_seed
        )
        for i, _ in enumerate(windows):
            est = width_support_union([windows[i]], samples, cfg_seed)
            rows.append((f"window_{i}", est))
        rows.append(("union", union))
        rows.append(("tangent", tangent))
        if include_pairs:
            for (i, j), est in sorted(pair_estimates.items()):
                rows.append((f"pair_{i}_{j}", est))
    elif "sets" in config:
        steps = int(config.get("ascent_steps", 500))
        for i, entry in enumerate(config["sets"]):
            est = width_set(descriptor_from_dict(entry), samples, cfg_seed, steps=steps)
            rows.append((f"set_{i}", est))
    else:
        raise ConfigError("width config needs either 'family' or 'sets'")

    path = os.path.join(out_dir, "widths.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("set_id,mean,std_error,samples\n")
        for name, est in rows:
            fh.write(f"{name},{est.mean!r},{est.std_error!r},{est.samples}\n")
    outputs = {name: {"mean": est.mean, "std_error": est.std_error} for name, est in rows}
    if verbose:
        ref = config.get("family")
        if ref:
            k = int(ref["k"])
            print(
                f"reference a_{k + 1} = {expected_gauss_norm(k + 1)!r}",
                file=sys.stderr,
            )
    return outputs


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="unioncs",
        description="Sparse recovery over unions of convex sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "experiment", "bounds", "width"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override (repeatable)",
        )
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        overrides = _apply_overrides(config, args.overrides)
        os.makedirs(args.out, exist_ok=True)
        status = 0
        if args.command == "solve":
            outputs = cmd_solve(config, args.out, args.verbose, args.seed)
        elif args.command == "experiment":
            outputs, status = cmd_experiment(
                config, args.out, args.verbose, args.seed, max(1, args.threads)
            )
        elif args.command == "bounds":
            outputs = cmd_bounds(config, args.out, args.verbose, args.seed)
        else:
            outputs = cmd_width(config, args.out, args.verbose, args.seed)
        _summary(args.out, args.command, _jsonable(config), _jsonable(overrides), _jsonable(outputs))
        return status
    except (ConfigError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
