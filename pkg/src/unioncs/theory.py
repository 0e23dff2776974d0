"""Numerical evaluation of the measurement-count theory: Monte Carlo Gaussian
widths for support-window families and l1 descent cones, the two probability
bounds behind the uniqueness event, and minimal-measurement search."""

import math
from dataclasses import dataclass

import numpy as np

from .core import CapacityError, as_vector, expected_gauss_norm, substream
from .sets import Ball, Intersection, SupportWindow, project_set

__all__ = [
    "WidthEstimate",
    "BoundReport",
    "MeasurementSearch",
    "width_support_union",
    "width_difference_cones",
    "width_tangent_cone",
    "width_set",
    "p1_bound",
    "p2_bound",
    "uniqueness_lower_bound",
    "min_measurements",
]

_BLOCK = 2048
_PURPOSE_UNION = 0
_PURPOSE_PAIRS = 1
_PURPOSE_TANGENT = 2
_PURPOSE_SET = 3

_M_CAP = 2**32


@dataclass(frozen=True)
class WidthEstimate:
    """Monte Carlo mean width with its standard error."""

    mean: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("an estimate needs at least 2 samples")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    """Assembled uniqueness bound at a fixed measurement count."""

    m: int
    a_m: float
    omega_tangent: float
    omega_pairs: tuple
    epsilon: float
    p1: float
    p2: float
    pr_lower: float

    def to_dict(self):
        return {
            "M": self.m,
            "a_M": self.a_m,
            "omega_tangent": self.omega_tangent,
            "omega_pairs": list(self.omega_pairs),
            "epsilon": self.epsilon,
            "p1_bound": self.p1,
            "p2_bound": self.p2,
            "pr_E_lower": self.pr_lower,
        }


@dataclass(frozen=True)
class MeasurementSearch:
    """Smallest measurement counts reaching a target uniqueness probability,
    with and without the union prior."""

    m_with_prior: int
    m_without_prior: int

    @property
    def delta_m(self):
        return self.m_without_prior - self.m_with_prior

    def to_dict(self):
        return {
            "M_with_prior": self.m_with_prior,
            "M_without_prior": self.m_without_prior,
            "delta_M": self.delta_m,
        }


def _window_masks(windows):
    windows = list(windows)
    if not windows:
        raise ValueError("window list must be non-empty")
    if not all(isinstance(w, SupportWindow) for w in windows):
        raise ValueError("width estimators of this family require support windows")
    dims = {w.dim for w in windows}
    if len(dims) != 1:
        raise ValueError("windows must share one ambient dimension")
    n = dims.pop()
    mask = np.zeros((len(windows), n))
    for i, w in enumerate(windows):
        mask[i, w.start:w.stop] = 1.0
    return mask, n


def _check_samples(samples):
    if samples < 100:
        raise ValueError("at least 100 Monte Carlo samples are required")
    return int(samples)


class _MeanAccumulator:
    """Streaming mean/variance over fixed-size blocks; the merge is a plain
    sum of block partials, so any block partitioning gives the same result."""

    def __init__(self, columns):
        self.sums = np.zeros(columns)
        self.sq_sums = np.zeros(columns)
        self.count = 0

    def add(self, values):
        values = np.atleast_2d(values)
        self.sums += values.sum(axis=0)
        self.sq_sums += (values * values).sum(axis=0)
        self.count += values.shape[0]

    def estimates(self):
        n = self.count
        mean = self.sums / n
        var = np.maximum(self.sq_sums - n * mean * mean, 0.0) / (n - 1)
        return mean, np.sqrt(var / n)


def _gaussian_blocks(seed, purpose, samples, dim):
    produced = 0
    block_index = 0
    while produced < samples:
        count = min(_BLOCK, samples - produced)
        rng = substream(seed, purpose, block_index)
        yield rng.standard_normal((count, dim))
        produced += count
        block_index += 1


def width_support_union(windows, samples, seed):
    """Width of the union of window slices of the unit sphere.

    The per-sample supremum of ``<g, x>`` over unit vectors supported on one
    of the windows is exactly ``max_i ||g restricted to window i||``.
    """
    samples = _check_samples(samples)
    mask, n = _window_masks(windows)
    acc = _MeanAccumulator(1)
    for g in _gaussian_blocks(seed, _PURPOSE_UNION, samples, n):
        norms = np.sqrt((g * g) @ mask.T)
        acc.add(norms.max(axis=1)[:, None])
    mean, se = acc.estimates()
    return WidthEstimate(float(mean[0]), float(se[0]), samples)


def width_difference_cones(windows, samples, seed):
    """Sphere-slice widths of all pairwise difference cones of a window
    family, keyed by pair ``(i, j)`` with ``i <= j``.

    Differences of vectors from two windows live in the union of the two
    supports, so the per-sample supremum is the Gaussian norm restricted to
    the support union; the estimate is symmetric in the pair by construction.
    """
    samples = _check_samples(samples)
    mask, n = _window_masks(windows)
    count = mask.shape[0]
    pairs = [(i, j) for i in range(count) for j in range(i, count)]
    union_masks = np.stack([np.maximum(mask[i], mask[j]) for i, j in pairs])
    acc = _MeanAccumulator(len(pairs))
    for g in _gaussian_blocks(seed, _PURPOSE_PAIRS, samples, n):
        acc.add(np.sqrt((g * g) @ union_masks.T))
    mean, se = acc.estimates()
    return {
        pair: WidthEstimate(float(mean[k]), float(se[k]), samples)
        for k, pair in enumerate(pairs)
    }


def _golden_section_min(objective, hi, iters=64):
    """Vectorized golden-section minimization of a unimodal objective over
    [0, hi] per row; returns the objective value at the located minimum."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo = np.zeros_like(hi)
    for _ in range(iters):
        span = hi - lo
        c = hi - inv_phi * span
        d = lo + inv_phi * span
        shrink_right = objective(c) < objective(d)
        hi = np.where(shrink_right, d, hi)
        lo = np.where(shrink_right, lo, c)
    return objective((lo + hi) / 2.0)


def width_tangent_cone(x_ref, samples, seed):
    """Upper estimate of the sphere-slice width of the l1 descent cone at
    ``x_ref``.

    Per sample the distance from ``g`` to the polar (normal) cone is
    ``min_{t>=0} dist(g, t * subdifferential of ||x_ref||_1)``, a unimodal
    1-d problem solved by golden section; the mean of those distances upper
    bounds the cone width.
    """
    x_ref = as_vector(x_ref, "x_ref")
    if not np.any(x_ref):
        raise ValueError("x_ref must be nonzero")
    samples = _check_samples(samples)
    support = x_ref != 0.0
    signs = np.sign(x_ref[support])
    k = int(support.sum())
    acc = _MeanAccumulator(1)
    for g in _gaussian_blocks(seed, _PURPOSE_TANGENT, samples, x_ref.size):
        g_sup = g[:, support]
        g_off = np.abs(g[:, ~support])
        aligned = g_sup @ signs

        def sq_dist(t):
            on = g_sup - t[:, None] * signs
            value = (on * on).sum(axis=1)
            if g_off.shape[1]:
                off = np.maximum(g_off - t[:, None], 0.0)
                value = value + (off * off).sum(axis=1)
            return value

        # the derivative is positive beyond both the largest off-support
        # magnitude and the aligned mean, so this brackets the minimum
        hi = np.maximum(aligned / k, 0.0)
        if g_off.shape[1]:
            hi = np.maximum(hi, g_off.max(axis=1))
        best = _golden_section_min(sq_dist, hi + 1e-3)
        acc.add(np.sqrt(best)[:, None])
    mean, se = acc.estimates()
    return WidthEstimate(float(mean[0]), float(se[0]), samples)


def width_set(descriptor, samples, seed, steps=500):
    """Generic width estimate ``E sup <g, x>`` over ``set ∩ unit ball`` by
    per-sample projected ascent (projection is the one primitive every
    descriptor provides). Slower and downward-biased; window families should
    use the exact reductions above."""
    samples = _check_samples(samples)
    n = descriptor.dim
    region = Intersection((descriptor, Ball(np.zeros(n), 1.0)))
    acc = _MeanAccumulator(1)
    for g in _gaussian_blocks(seed, _PURPOSE_SET, samples, n):
        for row in g:
            x = project_set(region, row)
            for _ in range(steps):
                x = project_set(region, x + row)
            acc.add(np.array([[row @ x]]))
    mean, se = acc.estimates()
    return WidthEstimate(float(mean[0]), float(se[0]), samples)


def p1_bound(a_m, omega_tangent):
    """Failure bound from the l1 descent cone: ``exp(-(a_M - w)^2 / 2)``
    when ``a_M >= w``, else the vacuous 1."""
    if a_m < omega_tangent:
        return 1.0
    return min(1.0, math.exp(-((a_m - omega_tangent) ** 2) / 2.0))


def p2_bound(a_m, omega_pairs, epsilon):
    """Failure bound from the pairwise difference cones.

    Gated at ``(1 - 2*epsilon) * a_M >= omega_ij`` for every pair; when any
    pair violates the gate the bound is the vacuous 1.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie strictly between 0 and 1/2")
    omega_pairs = np.asarray(omega_pairs, dtype=float)
    slack = (1.0 - 2.0 * epsilon) * a_m
    if omega_pairs.size and np.any(slack < omega_pairs):
        return 1.0
    total = 1.5 * math.exp(-(epsilon**2) * a_m**2 / 2.0)
    if omega_pairs.size:
        total += float(np.exp(-((slack - omega_pairs) ** 2) / 2.0).sum())
    return min(1.0, total)


def uniqueness_lower_bound(m, omega_tangent, omega_pairs, epsilon):
    """Assemble the recovery-uniqueness bound ``Pr >= 1 - min(P1, P2)``."""
    if m < 1:
        raise ValueError("measurement count must be at least 1")
    a_m = expected_gauss_norm(m)
    p1 = p1_bound(a_m, omega_tangent)
    p2 = p2_bound(a_m, omega_pairs, epsilon)
    return BoundReport(
        m=int(m),
        a_m=a_m,
        omega_tangent=float(omega_tangent),
        omega_pairs=tuple(float(w) for w in np.asarray(omega_pairs, dtype=float)),
        epsilon=float(epsilon),
        p1=p1,
        p2=p2,
        pr_lower=1.0 - min(p1, p2),
    )


def _search_min_m(prob_at):
    m = 1
    while prob_at(m) < 0:
        m *= 2
        if m > _M_CAP:
            raise CapacityError(f"target unreachable below {_M_CAP} measurements")
    if m == 1:
        return 1
    lo, hi = m // 2, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prob_at(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def min_measurements(omega_tangent, omega_pairs, epsilon, target):
    """Smallest M with ``pr_E_lower >= target``, found by doubling plus
    bisection on the monotone probability curve; also reports the
    prior-free counterpart (descent-cone bound alone) so callers can print
    the measurement savings."""
    if not 0.0 < target < 1.0:
        raise ValueError("target probability must lie strictly inside (0, 1)")
    omega_pairs = np.asarray(omega_pairs, dtype=float)

    def margin_with(m):
        rep = uniqueness_lower_bound(m, omega_tangent, omega_pairs, epsilon)
        return rep.pr_lower - target

    def margin_without(m):
        return (1.0 - p1_bound(expected_gauss_norm(m), omega_tangent)) - target

    return MeasurementSearch(
        m_with_prior=_search_min_m(margin_with),
        m_without_prior=_search_min_m(margin_without),
    )
