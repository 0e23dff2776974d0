"""Alternating multiplicative-weight / proximal-gradient solver for sparse
recovery over a union of convex sets, with per-run convergence certificates.

The objective couples a simplex-weighted set penalty with an l1 + least
squares + energy term:

    f_i(x) = ||x||_1 + h_i(x) + (lambda1/2)||y - Ax||^2 + (lambda2/2)||x||^2
    L(p, x) = sum_i p_i f_i(x),   p on the simplex

Weights follow either an exponentiated (multiplicative) update or, when a
prior q with lambda3 > 0 is configured, a projected gradient step on the
q-regularized objective L(p, x) + (lambda3/2)||p - q||^2.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import (
    as_matrix,
    as_vector,
    check_simplex,
    project_simplex,
    soft_threshold,
    spectral_norm,
)
from .sets import (
    PenaltyConfig,
    SupportWindow,
    penalty,
    penalty_grad,
    project_set,
    project_union,
    smoothness_constant,
)

__all__ = [
    "SCHEDULES",
    "ProblemInstance",
    "SolverConfig",
    "Trace",
    "CertificateReport",
    "SolverResult",
    "objective_components",
    "lagrangian",
    "mw_update_p",
    "regularized_update_p",
    "prox_gradient_step_x",
    "solve",
    "certificates",
    "trace_to_csv",
]

SCHEDULES = ("fixed-horizon", "doubling-trick", "inverse-t", "inverse-t-squared")

# consecutive near-stationary steps required before an early stop
_STALL_STEPS = 10


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Measurements ``y = A x`` plus the candidate constraint sets."""

    A: np.ndarray
    y: np.ndarray
    sets: tuple
    x_true: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", as_matrix(self.A, "A"))
        object.__setattr__(self, "y", as_vector(self.y, "y"))
        object.__setattr__(self, "sets", tuple(self.sets))
        if self.y.size != self.A.shape[0]:
            raise ValueError("y length must equal the number of rows of A")
        if not self.sets:
            raise ValueError("at least one constraint set is required")
        n = self.A.shape[1]
        for i, s in enumerate(self.sets):
            if s.dim != n:
                raise ValueError(f"set {i} has dimension {s.dim}, expected {n}")
        if self.x_true is not None:
            xt = as_vector(self.x_true, "x_true")
            if xt.size != n:
                raise ValueError("x_true length must equal the number of columns of A")
            object.__setattr__(self, "x_true", xt)

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def num_sets(self):
        return len(self.sets)

    @cached_property
    def operator_norm(self):
        return spectral_norm(self.A)


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Multipliers, radius bound, horizon and step-size schedule."""

    lambda1: float = 10.0
    lambda2: float = 1e-3
    lambda3: float = 0.0
    radius: float = 10.0
    horizon: int = 1000
    eta_x: object = "auto"
    p_schedule: str = "fixed-horizon"
    prior_q: np.ndarray | None = None
    penalty_scale: float | None = None
    seed: int = 0
    stop_tol: float = 0.0

    def __post_init__(self):
        if not self.lambda1 > 0 or not self.lambda2 > 0:
            raise ValueError("lambda1 and lambda2 must be positive")
        if self.lambda3 < 0:
            raise ValueError("lambda3 must be nonnegative")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be at least 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.p_schedule not in SCHEDULES:
            raise ValueError(f"p_schedule must be one of {SCHEDULES}")
        if self.p_schedule == "inverse-t" and not self.lambda3 > 0:
            raise ValueError("the inverse-t schedule requires lambda3 > 0")
        if self.lambda3 > 0:
            if self.prior_q is None:
                raise ValueError("lambda3 > 0 requires a prior weight vector")
            object.__setattr__(self, "prior_q", check_simplex(self.prior_q, name="prior_q"))
        elif self.prior_q is not None:
            raise ValueError("a prior weight vector requires lambda3 > 0")
        if self.eta_x != "auto":
            if not float(self.eta_x) > 0:
                raise ValueError("eta_x must be positive or 'auto'")
            object.__setattr__(self, "eta_x", float(self.eta_x))
        if self.penalty_scale is not None and not self.penalty_scale > 0:
            raise ValueError("penalty_scale must be positive")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")


class _Workspace:
    """Resolved constants and vectorized evaluators for one (problem, config).

    All-window set families get a mask-matrix fast path; mixed families fall
    back to per-set penalty calls. Both share the public ops' formulas.
    """

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        self.op_norm = problem.operator_norm
        scale = cfg.penalty_scale
        if scale is None:
            # default ties infeasibility to the data-term curvature; fall back
            # to lambda1 alone for zero sensing matrices
            scale = 10.0 * cfg.lambda1 * self.op_norm**2
            if scale <= 0.0:
                scale = 10.0 * cfg.lambda1
        self.pcfg = PenaltyConfig(scale)
        self.smoothness = [smoothness_constant(s, self.pcfg) for s in problem.sets]
        self.l_h = max(self.smoothness) + cfg.lambda1 * self.op_norm**2 + cfg.lambda2
        self.eta_x = 1.0 / self.l_h if cfg.eta_x == "auto" else cfg.eta_x
        self._windows = all(isinstance(s, SupportWindow) for s in problem.sets)
        if self._windows:
            mask = np.zeros((problem.num_sets, problem.n))
            for i, s in enumerate(problem.sets):
                mask[i, s.start:s.stop] = 1.0
            self._mask = mask
            self._mask_t = np.ascontiguousarray(mask.T)
        self.r_f = self._bound_r_f()
        self.r_g = math.sqrt(problem.num_sets) * self.r_f + cfg.lambda3 * math.sqrt(2.0)

    def _bound_r_f(self):
        cfg, problem = self.cfg, self.problem
        r = cfg.radius
        c = self.pcfg.scale
        penalty_sup = 0.0
        for s in problem.sets:
            if isinstance(s, SupportWindow):
                bound = c * r * r
            else:
                anchor = np.linalg.norm(project_set(s, np.zeros(problem.n)))
                bound = 0.5 * c * (r + anchor) ** 2
            penalty_sup = max(penalty_sup, bound)
        data = 0.5 * cfg.lambda1 * (np.linalg.norm(problem.y) + self.op_norm * r) ** 2
        return math.sqrt(problem.n) * r + penalty_sup + data + 0.5 * cfg.lambda2 * r * r

    def residual(self, x):
        return self.problem.A @ x - self.problem.y

    def penalty_vector(self, x):
        if self._windows:
            xx = x * x
            return self.pcfg.scale * (xx.sum() - self._mask @ xx)
        return np.array([penalty(s, self.pcfg, x) for s in self.problem.sets])

    def components(self, x, r=None):
        if r is None:
            r = self.residual(x)
        cfg = self.cfg
        common = (
            np.abs(x).sum()
            + 0.5 * cfg.lambda1 * (r @ r)
            + 0.5 * cfg.lambda2 * (x @ x)
        )
        return common + self.penalty_vector(x)

    def weighted_penalty_grad(self, x, p):
        if self._windows:
            return 2.0 * self.pcfg.scale * (x - x * (self._mask_t @ p))
        g = np.zeros_like(x)
        for w, s in zip(p, self.problem.sets):
            g += w * penalty_grad(s, self.pcfg, x)
        return g

    def gradient(self, x, p, r=None):
        if r is None:
            r = self.residual(x)
        cfg = self.cfg
        return (
            cfg.lambda1 * (self.problem.A.T @ r)
            + cfg.lambda2 * x
            + self.weighted_penalty_grad(x, p)
        )

    def prox_step(self, x, p, eta, r=None):
        return soft_threshold(x - eta * self.gradient(x, p, r), eta)


def _check_x(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x must have shape ({problem.n},), got {x.shape}")
    return x


def objective_components(problem, cfg, x):
    """Per-set objective values ``f_i(x)``; every entry is nonnegative."""
    x = _check_x(problem, x)
    return _Workspace(problem, cfg).components(x)


def lagrangian(problem, cfg, p, x):
    """Weighted objective ``sum_i p_i f_i(x)``, plus the prior-regularizer
    ``(lambda3/2)||p - q||^2`` when configured."""
    p = check_simplex(p, tol=1e-9, name="p")
    if p.size != problem.num_sets:
        raise ValueError("p length must equal the number of sets")
    value = float(p @ objective_components(problem, cfg, x))
    if cfg.lambda3 > 0:
        d = p - cfg.prior_q
        value += 0.5 * cfg.lambda3 * float(d @ d)
    return value


def mw_update_p(p, f, eta_p):
    """Multiplicative weight update ``p_i <- p_i * exp(-eta_p f_i)``, normalized.

    Shift-invariant in ``f`` and overflow-safe; never zeroes a weight.
    """
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("loss vector contains non-finite entries")
    if np.any(p <= 0):
        raise ValueError("multiplicative updates require strictly positive weights")
    if not eta_p >= 0:
        raise ValueError("eta_p must be nonnegative")
    w = p * np.exp(-eta_p * (f - f.min()))
    return w / w.sum()


def regularized_update_p(p, f, q, lambda3, eta_p):
    """Projected gradient step on ``<p, f> + (lambda3/2)||p - q||^2``."""
    if not lambda3 > 0:
        raise ValueError("the regularized update requires lambda3 > 0")
    p = check_simplex(p, tol=1e-9, name="p")
    q = check_simplex(q, tol=1e-9, name="q")
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("loss vector contains non-finite entries")
    return project_simplex(p - eta_p * (f + lambda3 * (p - q)))


def prox_gradient_step_x(problem, cfg, x, p, eta_x):
    """One proximal gradient step on ``x`` at fixed weights ``p``:
    soft-threshold of ``x - eta_x * grad`` with threshold ``eta_x``."""
    x = _check_x(problem, x)
    p = check_simplex(p, tol=1e-9, name="p")
    if p.size != problem.num_sets:
        raise ValueError("p length must equal the number of sets")
    return _Workspace(problem, cfg).prox_step(x, p, eta_x)


def _eta_p_sequence(cfg, r_f, num_sets, horizon):
    """Per-iteration weight step sizes for the configured schedule."""
    t = np.arange(1, horizon + 1, dtype=float)
    log_l = math.log(num_sets)
    if cfg.p_schedule == "fixed-horizon":
        return np.full(horizon, math.sqrt(2.0 * log_l / horizon) / r_f)
    if cfg.p_schedule == "doubling-trick":
        block = np.floor(np.log2(t))
        return np.sqrt(2.0 * log_l / np.exp2(block)) / r_f
    if cfg.p_schedule == "inverse-t":
        return 1.0 / (cfg.lambda3 * t)
    # inverse-t-squared: any summable proportionality constant works for the
    # step-energy rate; scale by 1/lambda3 on the regularized path and by the
    # fixed-horizon constant otherwise
    if cfg.lambda3 > 0:
        return 1.0 / (cfg.lambda3 * t**2)
    return (math.sqrt(2.0 * log_l) / r_f if log_l > 0 else 1.0) / t**2


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-iteration history of one solve (row ``t`` is the state the
    updates at step ``t`` were computed from)."""

    objective: np.ndarray  # path objective, incl. prior regularizer if any
    f: np.ndarray  # (T, L) per-set objective values
    p: np.ndarray  # (T, L) simplex weights
    step_sq: np.ndarray  # ||x^{t+1} - x^t||^2 after each update
    eta_p: np.ndarray

    def __len__(self):
        return self.objective.size

    @property
    def p_entropy(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(self.p > 0, self.p * np.log(self.p), 0.0)
        return -terms.sum(axis=1)


@dataclass(frozen=True, eq=False)
class CertificateReport:
    """Empirical optimality/convergence quantities next to their certified
    bounds (bounds use the a-priori constants, so each inequality is implied
    by the convergence analysis whenever the run matches its schedule)."""

    mw_regret: float
    mw_regret_bound: float
    prox_gap: float
    prox_gap_bound: float
    inner_residual: float
    step_energy: float
    step_energy_bound: float
    r_f: float
    r_f_observed: float
    r_g: float
    l_h: float

    def to_dict(self):
        return {
            "mw_regret": self.mw_regret,
            "mw_regret_bound": self.mw_regret_bound,
            "prox_gap": self.prox_gap,
            "prox_gap_bound": self.prox_gap_bound,
            "inner_residual": self.inner_residual,
            "step_energy": self.step_energy,
            "step_energy_bound": self.step_energy_bound,
            "r_f": self.r_f,
            "r_f_observed": self.r_f_observed,
            "r_g": self.r_g,
            "l_h": self.l_h,
        }


@dataclass(frozen=True, eq=False)
class SolverResult:
    x_hat: np.ndarray
    chosen_set: int
    x_bar: np.ndarray
    p_bar: np.ndarray
    trace: Trace
    certificates: CertificateReport

    @property
    def iterations_run(self):
        return len(self.trace)


def solve(problem, cfg):
    """Run the alternating weight/signal updates for the configured horizon.

    Starts from uniform weights and zero signal; every iteration evaluates
    the per-set objectives at the current iterate, updates the weights
    (multiplicative or projected-gradient path), takes one proximal gradient
    step, and rescales back onto the radius ball if needed. Returns the
    iterate averages, their projection onto the nearest set, the full trace,
    and the certificate report. Deterministic given (problem, cfg, seed).
    """
    ws = _Workspace(problem, cfg)
    horizon = cfg.horizon
    n, num_sets = problem.n, problem.num_sets
    eta_p_seq = _eta_p_sequence(cfg, ws.r_f, num_sets, horizon)
    regularized = cfg.lambda3 > 0

    p = np.full(num_sets, 1.0 / num_sets)
    x = np.zeros(n)
    sum_p = np.zeros(num_sets)
    sum_x = np.zeros(n)
    objective = np.empty(horizon)
    f_hist = np.empty((horizon, num_sets))
    p_hist = np.empty((horizon, num_sets))
    step_sq = np.empty(horizon)

    stalled = 0
    t_eff = horizon
    for t in range(horizon):
        r = ws.residual(x)
        f = ws.components(x, r)
        obj = float(p @ f)
        if regularized:
            d = p - cfg.prior_q
            obj += 0.5 * cfg.lambda3 * float(d @ d)
        f_hist[t] = f
        p_hist[t] = p
        objective[t] = obj

        if regularized:
            p_next = regularized_update_p(p, f, cfg.prior_q, cfg.lambda3, eta_p_seq[t])
        else:
            p_next = mw_update_p(p, f, eta_p_seq[t])
        x_next = ws.prox_step(x, p, ws.eta_x, r)
        norm_x = np.linalg.norm(x_next)
        if norm_x > cfg.radius:
            x_next = x_next * (cfg.radius / norm_x)
        delta = x_next - x
        step_sq[t] = float(delta @ delta)

        sum_p += p
        sum_x += x
        p, x = p_next, x_next

        if cfg.stop_tol > 0:
            stalled = stalled + 1 if math.sqrt(step_sq[t]) <= cfg.stop_tol else 0
            if stalled >= _STALL_STEPS:
                t_eff = t + 1
                break

    trace = Trace(
        objective=objective[:t_eff],
        f=f_hist[:t_eff],
        p=p_hist[:t_eff],
        step_sq=step_sq[:t_eff],
        eta_p=eta_p_seq[:t_eff],
    )
    x_bar = sum_x / t_eff
    p_bar = sum_p / t_eff
    x_hat, chosen = project_union(problem.sets, x_bar)
    report = certificates(trace, cfg, problem)
    return SolverResult(
        x_hat=x_hat,
        chosen_set=chosen,
        x_bar=x_bar,
        p_bar=p_bar,
        trace=trace,
        certificates=report,
    )


def _minimize_at_fixed_weights(ws, p_bar, x_start, max_iters, tol=1e-10):
    """Inner proximal-gradient solve of ``min_x L(p_bar, x)``; returns the
    approximate minimizer and the final step norm."""
    x = x_start.copy()
    residual_norm = np.inf
    for _ in range(max_iters):
        x_next = ws.prox_step(x, p_bar, ws.eta_x)
        residual_norm = float(np.linalg.norm(x_next - x))
        x = x_next
        if residual_norm <= tol:
            break
    return x, residual_norm


def _mw_regret_bound(cfg, trace, r_f, num_sets):
    horizon = len(trace)
    log_l = math.log(num_sets)
    if log_l == 0.0:
        return 0.0
    if cfg.p_schedule == "fixed-horizon":
        eta = trace.eta_p[0]
        return log_l / (eta * horizon) + eta * r_f**2 / 2.0
    if cfg.p_schedule == "doubling-trick":
        total = 0.0
        start = 1
        k = 0
        while start <= horizon:
            length = min(2**k, horizon - start + 1)
            eta = math.sqrt(2.0 * log_l / 2**k) / r_f
            total += log_l / eta + 0.5 * r_f**2 * length * eta
            start += 2**k
            k += 1
        return total / horizon
    # no plain-regret guarantee for summable schedules
    return math.inf


def certificates(trace, cfg, problem):
    """Empirical certificate quantities and their theory bounds for a trace.

    ``mw_regret`` compares the realized weighted losses against the best
    fixed weight vector (a simplex vertex on the multiplicative path; the
    exact regularized minimizer otherwise). ``prox_gap`` compares against an
    inner proximal-gradient solve at the averaged weights, whose final step
    norm is reported as ``inner_residual``.
    """
    if len(trace) == 0:
        raise ValueError("certificates require a non-empty trace")
    ws = _Workspace(problem, cfg)
    horizon = len(trace)
    num_sets = problem.num_sets
    plain = np.einsum("tl,tl->t", trace.p, trace.f)
    f_totals = trace.f.sum(axis=0)

    if cfg.lambda3 > 0:
        q = cfg.prior_q
        p_star = project_simplex(q - f_totals / (horizon * cfg.lambda3))
        d = p_star - q
        best = float(p_star @ f_totals) + 0.5 * cfg.lambda3 * horizon * float(d @ d)
        mw_regret = (float(trace.objective.sum()) - best) / horizon
        mw_regret_bound = ws.r_g**2 * math.log(horizon) / (2.0 * cfg.lambda3 * horizon)
    else:
        mw_regret = (float(plain.sum()) - float(f_totals.min())) / horizon
        mw_regret_bound = _mw_regret_bound(cfg, trace, ws.r_f, num_sets)

    p_bar = trace.p.mean(axis=0)
    x_start = np.zeros(problem.n)
    x_star, inner_residual = _minimize_at_fixed_weights(
        ws, p_bar, x_start, max_iters=10 * horizon
    )
    best_fixed_x = float(p_bar @ ws.components(x_star))
    prox_gap = float(plain.mean()) - best_fixed_x
    prox_gap_bound = 2.0 * cfg.radius**2 / (ws.eta_x * horizon)

    step_energy = float(trace.step_sq.mean())
    eta = trace.eta_p
    if cfg.lambda3 > 0:
        tail = 2.0 * ws.r_g**2 * float(np.sum(eta + 0.5 * cfg.lambda3 * eta**2))
    else:
        tail = 4.0 * ws.r_f**2 * float(eta.sum())
    step_energy_bound = (2.0 * float(trace.objective[0]) + tail) / (ws.l_h * horizon)

    return CertificateReport(
        mw_regret=mw_regret,
        mw_regret_bound=mw_regret_bound,
        prox_gap=prox_gap,
        prox_gap_bound=prox_gap_bound,
        inner_residual=inner_residual,
        step_energy=step_energy,
        step_energy_bound=step_energy_bound,
        r_f=ws.r_f,
        r_f_observed=float(np.abs(trace.f).max()),
        r_g=ws.r_g,
        l_h=ws.l_h,
    )


def trace_to_csv(trace, path):
    """Write one CSV row per iteration: t, objective, min/max per-set value,
    squared step length, weight entropy. Numbers use round-trip formatting."""
    entropy = trace.p_entropy
    min_f = trace.f.min(axis=1)
    max_f = trace.f.max(axis=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,L_value,min_f,max_f,step_sq,p_entropy\n")
        for t in range(len(trace)):
            row = (
                str(t + 1),
                repr(float(trace.objective[t])),
                repr(float(min_f[t])),
                repr(float(max_f[t])),
                repr(float(trace.step_sq[t])),
                repr(float(entropy[t])),
            )
            fh.write(",".join(row) + "\n")
