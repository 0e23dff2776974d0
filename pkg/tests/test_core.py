import math

import numpy as np
import pytest

from unioncs.core import (
    expected_gauss_norm,
    project_simplex,
    soft_threshold,
    spectral_norm,
    substream,
)


# ---------------------------------------------------------------- oracles


def grid_argmin_prox(v, tau, step=1e-3):
    """Brute-force per-coordinate minimizer of tau*|z| + 0.5*(z - v)^2."""
    out = np.empty_like(v)
    for j, vj in enumerate(v):
        grid = np.arange(vj - 2.0, vj + 2.0 + step, step)
        vals = tau * np.abs(grid) + 0.5 * (grid - vj) ** 2
        out[j] = grid[np.argmin(vals)]
    return out


def active_set_projection(v):
    """Exhaustive support enumeration for the simplex projection (small L)."""
    L = v.size
    best, best_dist = None, np.inf
    for mask in range(1, 2**L):
        support = [i for i in range(L) if mask >> i & 1]
        p = np.zeros(L)
        p[support] = v[support] + (1.0 - v[support].sum()) / len(support)
        if p[support].min() < -1e-12:
            continue
        dist = np.linalg.norm(p - v)
        if dist < best_dist:
            best, best_dist = p, dist
    return best


def jacobi_max_eigenvalue(S, sweeps=100, tol=1e-14):
    """Cyclic Jacobi rotations on a symmetric matrix; returns the largest
    eigenvalue."""
    S = S.copy()
    n = S.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(S[p, q]) <= tol:
                    continue
                off = max(off, abs(S[p, q]))
                tau = 0.5 * (S[q, q] - S[p, p]) / S[p, q]
                if tau == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                S = rot.T @ S @ rot
        if off <= tol:
            break
    return float(np.diag(S).max())


# ---------------------------------------------------------------- soft_threshold


def test_soft_threshold_examples():
    np.testing.assert_allclose(soft_threshold([3.0, -0.5, 0.0], 1.0), [2.0, 0.0, 0.0])
    v = np.array([0.3, -1.7, 2.2])
    np.testing.assert_array_equal(soft_threshold(v, 0.0), v)


def test_soft_threshold_rejects_negative_tau():
    with pytest.raises(ValueError):
        soft_threshold([1.0], -0.1)


def test_soft_threshold_matches_grid_oracle():
    rng = substream(101, 0)
    for _ in range(50):
        v = rng.uniform(-1.5, 1.5, size=3)
        for tau in (0.1, 1.0):
            got = soft_threshold(v, tau)
            want = grid_argmin_prox(v, tau)
            np.testing.assert_allclose(got, want, atol=2e-3)


def test_soft_threshold_is_one_lipschitz():
    rng = substream(102, 0)
    for _ in range(1000):
        u = rng.standard_normal(6)
        v = rng.standard_normal(6)
        tau = rng.uniform(0.0, 2.0)
        lhs = np.linalg.norm(soft_threshold(u, tau) - soft_threshold(v, tau))
        assert lhs <= np.linalg.norm(u - v) + 1e-12


# ---------------------------------------------------------------- project_simplex


def test_project_simplex_examples():
    np.testing.assert_allclose(project_simplex([0.2, 0.8]), [0.2, 0.8], atol=1e-15)
    np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0], atol=1e-15)


def test_project_simplex_rejects_empty():
    with pytest.raises(ValueError):
        project_simplex([])


def test_project_simplex_matches_active_set_oracle():
    rng = substream(103, 0)
    for _ in range(100):
        L = int(rng.integers(1, 7))
        v = rng.uniform(-2.0, 2.0, size=L)
        got = project_simplex(v)
        want = active_set_projection(v)
        np.testing.assert_allclose(got, want, atol=1e-8)


def test_project_simplex_output_on_simplex_and_idempotent():
    rng = substream(104, 0)
    for _ in range(200):
        v = rng.standard_normal(8) * 3
        p = project_simplex(v)
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


# ---------------------------------------------------------------- spectral_norm


def test_spectral_norm_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.diag([2.0, 1.0])) == pytest.approx(2.0, abs=1e-9)
    assert spectral_norm(np.zeros((3, 4))) == 0.0


def test_spectral_norm_matches_jacobi_oracle():
    rng = substream(105, 0)
    for _ in range(20):
        A = rng.standard_normal((8, 12))
        got = spectral_norm(A, iters=2000, tol=1e-14)
        want = math.sqrt(jacobi_max_eigenvalue(A.T @ A))
        assert got == pytest.approx(want, rel=1e-6)


def test_spectral_norm_quotient_lower_bound():
    rng = substream(106, 0)
    for _ in range(20):
        A = rng.standard_normal((5, 7))
        e1 = np.zeros(7)
        e1[0] = 1.0
        assert spectral_norm(A) >= np.linalg.norm(A @ e1) - 1e-8


def test_spectral_norm_rejects_bad_iters():
    with pytest.raises(ValueError):
        spectral_norm(np.eye(2), iters=0)


# ---------------------------------------------------------------- expected_gauss_norm


def test_expected_gauss_norm_known_values():
    assert expected_gauss_norm(1) == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-12)
    assert expected_gauss_norm(3) == pytest.approx(2.0 * math.sqrt(2.0 / math.pi), abs=1e-12)


def test_expected_gauss_norm_monte_carlo():
    rng = substream(107, 0)
    for m in (3, 10):
        draws = rng.standard_normal((200_000, m))
        norms = np.linalg.norm(draws, axis=1)
        se = norms.std(ddof=1) / math.sqrt(norms.size)
        assert abs(expected_gauss_norm(m) - norms.mean()) <= 3 * se


def test_expected_gauss_norm_sandwich_and_monotone():
    prev = 0.0
    for m in range(1, 2001):
        a = expected_gauss_norm(m)
        assert m / math.sqrt(m + 1) <= a <= math.sqrt(m)
        assert a > prev
        prev = a


def test_expected_gauss_norm_rejects_zero():
    with pytest.raises(ValueError):
        expected_gauss_norm(0)
