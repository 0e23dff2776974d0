"""Reproducible recovery experiments: seeded problem generation, paired
union-prior vs no-prior trials, phase-transition grids over the measurement
count, and convergence-rate studies across weight step-size schedules."""

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import substream
from .sets import (
    Box,
    Intersection,
    descriptor_from_dict,
    phase_retrieval_branches,
    quantize,
    quantized_cells,
    window_family,
)
from .solver import ProblemInstance, SolverConfig, solve

__all__ = [
    "ExperimentSpec",
    "TrialRecord",
    "PhaseTransitionResult",
    "generate_problem",
    "run_trial",
    "phase_transition",
    "convergence_study",
    "records_to_csv",
    "aggregate_to_csv",
    "STUDY_HORIZONS",
]

SET_FAMILIES = ("windows", "quantized", "phase-branches", "custom")
STUDY_HORIZONS = tuple(2**k for k in range(7, 14))

_P_MATRIX = 0
_P_SET = 1
_P_SIGNAL = 2


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """Everything needed to regenerate an experiment from scratch."""

    n: int
    k: int
    m_grid: tuple
    set_family: str = "windows"
    trials: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    success_tol: float = 1e-3
    seed: int = 0
    quantizer_edges: tuple | None = None
    sets_file: str | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 0 or self.k > self.n:
            raise ValueError("need 0 <= k <= n with n >= 1")
        grid = tuple(int(m) for m in self.m_grid)
        if not grid or any(m < 1 for m in grid):
            raise ValueError("m_grid must list positive measurement counts")
        object.__setattr__(self, "m_grid", grid)
        if self.set_family not in SET_FAMILIES:
            raise ValueError(f"set_family must be one of {SET_FAMILIES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.success_tol > 0:
            raise ValueError("success_tol must be positive")
        if self.set_family == "quantized" and self.quantizer_edges is None:
            raise ValueError("quantized experiments need quantizer_edges")
        if self.set_family == "custom" and self.sets_file is None:
            raise ValueError("custom experiments need sets_file")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    m: int
    seed_used: int
    rel_error: float
    success: bool
    chosen_set: int
    true_set: int
    iterations_run: int
    wall_time: float


@dataclass(frozen=True, eq=False)
class PhaseTransitionResult:
    records: tuple
    baseline_records: tuple
    table: tuple  # per-M aggregate rows (dicts)


def _sparse_signal(spec, trial_id, nnz):
    rng_support = substream(spec.seed, trial_id, _P_SET)
    rng_signal = substream(spec.seed, trial_id, _P_SIGNAL)
    support = np.sort(rng_support.choice(spec.n, size=nnz, replace=False))
    coeffs = rng_signal.standard_normal(nnz)
    while not np.any(coeffs):
        coeffs = rng_signal.standard_normal(nnz)
    x = np.zeros(spec.n)
    x[support] = coeffs / np.linalg.norm(coeffs)
    return x


def generate_problem(spec, trial_id, m=None):
    """Draw the seeded instance for one trial: i.i.d. standard normal sensing
    matrix, a unit-norm signal placed in one candidate set chosen uniformly,
    and exact noiseless measurements.

    Returns ``(problem, x_true, true_set_index)``. Streams are keyed by
    (seed, trial_id, purpose) so trials are independent and reproducible.
    """
    m = spec.m_grid[0] if m is None else int(m)
    A = substream(spec.seed, trial_id, _P_MATRIX).standard_normal((m, spec.n))

    if spec.set_family == "windows":
        sets = window_family(spec.n, spec.k)
        true_idx = int(substream(spec.seed, trial_id, _P_SET).integers(len(sets)))
        rng_signal = substream(spec.seed, trial_id, _P_SIGNAL)
        coeffs = rng_signal.standard_normal(spec.k + 1)
        while not np.any(coeffs):
            coeffs = rng_signal.standard_normal(spec.k + 1)
        x = np.zeros(spec.n)
        x[true_idx:true_idx + spec.k + 1] = coeffs / np.linalg.norm(coeffs)
        problem = ProblemInstance(A, A @ x, sets, x_true=x)
        return problem, x, true_idx

    if spec.set_family == "quantized":
        x = _sparse_signal(spec, trial_id, max(spec.k, 1))
        edges = np.asarray(spec.quantizer_edges, dtype=float)
        levels = quantize(A @ x, edges)
        cells = quantized_cells(A, levels, edges)
        members = []
        for cell in cells:
            if isinstance(cell, Intersection):
                members.extend(cell.members)
            elif not isinstance(cell, Box):
                members.append(cell)
        joint = (
            Intersection(tuple(members))
            if members
            else Box(np.full(spec.n, -np.inf), np.full(spec.n, np.inf))
        )
        # midpoint decode feeds the data term; the slabs carry the exact
        # quantization constraints
        finite = edges[np.isfinite(edges)]
        lo, hi = edges[levels], edges[levels + 1]
        lo = np.where(np.isfinite(lo), lo, finite[0])
        hi = np.where(np.isfinite(hi), hi, finite[-1])
        problem = ProblemInstance(A, (lo + hi) / 2.0, (joint,), x_true=x)
        return problem, x, 0

    if spec.set_family == "phase-branches":
        x = _sparse_signal(spec, trial_id, max(spec.k, 1))
        raw = A @ x
        branches = phase_retrieval_branches(A, raw**2, max_rows=10)
        free = [i for i in range(m) if raw[i] != 0.0]
        index = 0
        for i in free:
            index = (index << 1) | (1 if raw[i] < 0 else 0)
        problem = ProblemInstance(
            np.zeros((m, spec.n)), np.zeros(m), tuple(branches), x_true=x
        )
        return problem, x, index

    with open(spec.sets_file, "r", encoding="utf-8") as fh:
        sets = tuple(descriptor_from_dict(d) for d in json.load(fh))
    true_idx = int(substream(spec.seed, trial_id, _P_SET).integers(len(sets)))
    rng_signal = substream(spec.seed, trial_id, _P_SIGNAL)
    x = sets[true_idx].project(rng_signal.standard_normal(spec.n))
    while not np.any(x):
        x = sets[true_idx].project(rng_signal.standard_normal(spec.n))
    problem = ProblemInstance(A, A @ x, sets, x_true=x)
    return problem, x, true_idx


def _free_space(n):
    return Box(np.full(n, -np.inf), np.full(n, np.inf))


def run_trial(spec, trial_id, m=None, baseline=False):
    """Solve one seeded instance and record the outcome.

    ``baseline=True`` re-solves the identical instance with the single
    unconstrained set (no union prior). Solver failures produce a failed
    record instead of raising.
    """
    start = time.perf_counter()
    try:
        problem, x_true, true_idx = generate_problem(spec, trial_id, m)
        if baseline:
            problem = ProblemInstance(
                problem.A, problem.y, (_free_space(spec.n),), x_true=x_true
            )
            true_idx = 0
        result = solve(problem, spec.solver)
        rel_error = float(
            np.linalg.norm(result.x_hat - x_true) / np.linalg.norm(x_true)
        )
        record = TrialRecord(
            trial_id=trial_id,
            m=problem.m,
            seed_used=spec.seed,
            rel_error=rel_error,
            success=bool(rel_error <= spec.success_tol),
            chosen_set=result.chosen_set,
            true_set=true_idx,
            iterations_run=result.iterations_run,
            wall_time=time.perf_counter() - start,
        )
    except Exception:
        record = TrialRecord(
            trial_id=trial_id,
            m=int(m) if m is not None else spec.m_grid[0],
            seed_used=spec.seed,
            rel_error=math.inf,
            success=False,
            chosen_set=-1,
            true_set=-1,
            iterations_run=0,
            wall_time=time.perf_counter() - start,
        )
    return record


def _run_pair(args):
    spec, trial_id, m = args
    return (
        run_trial(spec, trial_id, m),
        run_trial(spec, trial_id, m, baseline=True),
    )


def phase_transition(spec, workers=1):
    """Per-M success statistics over the grid, with the paired no-prior
    baseline; trial ids are globally unique so parallel execution and
    re-runs reproduce identical records."""
    tasks = [
        (spec, mi * spec.trials + t, m)
        for mi, m in enumerate(spec.m_grid)
        for t in range(spec.trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(_run_pair, tasks, chunksize=1))
    else:
        pairs = [_run_pair(task) for task in tasks]
    records = tuple(p[0] for p in pairs)
    baseline = tuple(p[1] for p in pairs)

    table = []
    for mi, m in enumerate(spec.m_grid):
        block = slice(mi * spec.trials, (mi + 1) * spec.trials)
        mine, base = records[block], baseline[block]
        table.append(
            {
                "m": m,
                "success_rate": float(np.mean([r.success for r in mine])),
                "mean_rel_error": float(np.mean([r.rel_error for r in mine])),
                "mean_wall_time": float(np.mean([r.wall_time for r in mine])),
                "baseline_success_rate": float(np.mean([r.success for r in base])),
                "baseline_mean_rel_error": float(np.mean([r.rel_error for r in base])),
                "baseline_mean_wall_time": float(np.mean([r.wall_time for r in base])),
            }
        )
    return PhaseTransitionResult(records, baseline, tuple(table))


def _study_config(base, schedule, horizon, num_sets):
    changes = {"p_schedule": schedule, "horizon": horizon}
    if schedule == "inverse-t" and base.lambda3 == 0:
        # the inverse-t schedule runs the prior-regularized weight path
        changes["lambda3"] = 1.0
        changes["prior_q"] = np.full(num_sets, 1.0 / num_sets)
    return dataclasses.replace(base, **changes)


def convergence_study(spec, schedules, horizons=STUDY_HORIZONS):
    """Run one fixed seeded instance across horizons for each schedule and
    fit log-log slopes of the averaged step energy and the weight regret."""
    problem, _, _ = generate_problem(spec, trial_id=0)
    out = {}
    for schedule in schedules:
        series = []
        for horizon in horizons:
            cfg = _study_config(spec.solver, schedule, horizon, problem.num_sets)
            certs = solve(problem, cfg).certificates
            series.append(
                {
                    "T": horizon,
                    "step_energy": certs.step_energy,
                    "step_energy_bound": certs.step_energy_bound,
                    "mw_regret": certs.mw_regret,
                    "mw_regret_bound": certs.mw_regret_bound,
                }
            )
        logs_t = np.log([row["T"] for row in series])

        def _slope(key):
            vals = np.array([row[key] for row in series])
            if np.any(vals <= 0):
                return math.nan
            return float(np.polyfit(logs_t, np.log(vals), 1)[0])

        out[schedule] = {
            "series": series,
            "step_energy_slope": _slope("step_energy"),
            "mw_regret_slope": _slope("mw_regret"),
        }
    return out


_RECORD_FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]


def records_to_csv(records, path):
    """One row per trial; floats use round-trip decimal formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_RECORD_FIELDS) + "\n")
        for r in records:
            cells = []
            for name in _RECORD_FIELDS:
                value = getattr(r, name)
                if isinstance(value, bool):
                    cells.append("1" if value else "0")
                elif isinstance(value, float):
                    cells.append(repr(value))
                else:
                    cells.append(str(value))
            fh.write(",".join(cells) + "\n")


def aggregate_to_csv(table, path):
    """Per-M aggregate rows from :func:`phase_transition`."""
    if not table:
        raise ValueError("empty aggregate table")
    names = list(table[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in table:
            fh.write(
                ",".join(
                    str(row[k]) if isinstance(row[k], int) else repr(float(row[k]))
                    for k in names
                )
                + "\n"
            )
