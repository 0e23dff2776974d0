"""Shared numerical primitives: l1 prox, simplex projection, spectral norm,
and the exact expected norm of a standard Gaussian vector."""

import math

import numpy as np

__all__ = [
    "CapacityError",
    "as_vector",
    "as_matrix",
    "check_simplex",
    "soft_threshold",
    "project_simplex",
    "spectral_norm",
    "expected_gauss_norm",
    "substream",
]


class CapacityError(ValueError):
    """Raised when a request exceeds a hard enumeration/search limit."""


def as_vector(v, name="vector"):
    """Validate and return a 1-d float array with finite entries."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(a, name="matrix"):
    """Validate and return a 2-d float array with finite entries."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_simplex(p, tol=1e-12, name="weights"):
    """Validate that ``p`` lies on the probability simplex within ``tol``."""
    arr = as_vector(p, name)
    if np.any(arr < -tol):
        raise ValueError(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > max(tol, 1e-12):
        raise ValueError(f"{name} does not sum to 1 (sum={arr.sum()!r})")
    return arr


def soft_threshold(v, tau):
    """Proximal operator of ``tau * ||.||_1``.

    Componentwise shrinkage ``sign(v_j) * max(|v_j| - tau, 0)``; minimizes
    ``tau*||z||_1 + 0.5*||z - v||^2`` exactly.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def project_simplex(v):
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold construction (O(L log L)): find the offset theta with
    ``sum(max(v - theta, 0)) = 1`` and clip.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("input must be a non-empty 1-d array")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    p = np.maximum(v - theta, 0.0)
    # large-magnitude inputs leave O(|v| * eps) residue in the sum; renormalize
    return p / p.sum()


def spectral_norm(A, iters=500, tol=1e-10):
    """Largest singular value of ``A`` by deterministic power iteration.

    Starts from the normalized all-ones vector (first canonical basis vector
    if that lies in the null space) and iterates ``v <- A^T A v`` until the
    Rayleigh estimate is stable to ``tol`` or ``iters`` is exhausted.
    """
    A = np.asarray(A, dtype=float)
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if A.size == 0 or not np.any(A):
        return 0.0
    n = A.shape[1]
    v = np.ones(n) / math.sqrt(n)
    if not np.any(A @ v):
        # all-ones start is in the null space; fall back to a canonical basis
        # vector whose column is nonzero
        j = int(np.argmax(np.any(A != 0.0, axis=0)))
        v = np.zeros(n)
        v[j] = 1.0
    sigma = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma_new = np.linalg.norm(A @ v)
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1.0):
            return float(sigma_new)
        sigma = sigma_new
    return float(sigma)


def substream(seed, *path):
    """Independent counter-based random stream keyed by (seed, *path).

    Streams with distinct keys never share state, so Monte Carlo loops and
    experiment trials can be partitioned across workers without coordination.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def expected_gauss_norm(m):
    """Expected Euclidean norm of an m-dimensional standard Gaussian vector.

    Equals ``sqrt(2) * Gamma((m+1)/2) / Gamma(m/2)``, evaluated through
    log-gamma for stability; satisfies ``m/sqrt(m+1) <= value <= sqrt(m)``.
    """
    if m < 1:
        raise ValueError(f"dimension must be at least 1, got {m}")
    return math.exp(
        0.5 * math.log(2.0) + math.lgamma((m + 1) / 2.0) - math.lgamma(m / 2.0)
    )
