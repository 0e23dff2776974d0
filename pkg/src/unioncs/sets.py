"""Convex constraint sets: descriptors, exact Euclidean projections, smooth
penalty surrogates with certified smoothness constants, membership tests, and
constructors for support-window / quantized / magnitude-measurement families.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import CapacityError, as_matrix, as_vector

__all__ = [
    "SupportWindow",
    "AffineSlice",
    "Halfspace",
    "Box",
    "Ball",
    "Intersection",
    "PenaltyConfig",
    "project_set",
    "penalty",
    "penalty_grad",
    "smoothness_constant",
    "contains",
    "project_union",
    "window_family",
    "quantize",
    "quantized_cells",
    "phase_retrieval_branches",
    "descriptor_to_dict",
    "descriptor_from_dict",
]

DYKSTRA_SWEEPS = 200
DYKSTRA_TOL = 1e-10


@dataclass(frozen=True)
class SupportWindow:
    """Coordinates outside the inclusive index range [start, start+width]
    are forced to zero."""

    start: int
    width: int
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.width < 0:
            raise ValueError("width must be nonnegative")
        if self.start < 0 or self.start + self.width > self.dim - 1:
            raise ValueError(
                f"window [{self.start}, {self.start + self.width}] leaves "
                f"dimension range [0, {self.dim - 1}]"
            )

    @property
    def stop(self):
        """One past the last in-window index (slice end)."""
        return self.start + self.width + 1

    def project(self, x):
        out = np.zeros_like(x)
        out[self.start:self.stop] = x[self.start:self.stop]
        return out


@dataclass(frozen=True)
class AffineSlice:
    """The hyperplane {x : <a, x> = b}."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", as_vector(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))
        if not np.any(self.a):
            raise ValueError("normal vector a must be nonzero")

    @property
    def dim(self):
        return self.a.size

    def project(self, x):
        return x - ((self.a @ x - self.b) / (self.a @ self.a)) * self.a


@dataclass(frozen=True)
class Halfspace:
    """The halfspace {x : <a, x> <= b}."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", as_vector(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))
        if not np.any(self.a):
            raise ValueError("normal vector a must be nonzero")

    @property
    def dim(self):
        return self.a.size

    def project(self, x):
        excess = self.a @ x - self.b
        if excess <= 0.0:
            return x.copy()
        return x - (excess / (self.a @ self.a)) * self.a


@dataclass(frozen=True)
class Box:
    """Per-coordinate intervals; bounds may be -inf/+inf (unconstrained)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or hi.shape != lo.shape or lo.size == 0:
            raise ValueError("lower and upper must be matching non-empty vectors")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of positive radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / nd)


@dataclass(frozen=True)
class Intersection:
    """Intersection of member sets; projected by Dykstra's alternating
    projections (members must have nonempty common intersection)."""

    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("intersection needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise ValueError(f"member dimensions disagree: {sorted(dims)}")
        object.__setattr__(self, "members", members)

    @property
    def dim(self):
        return self.members[0].dim

    def project(self, x, sweeps=DYKSTRA_SWEEPS, tol=DYKSTRA_TOL):
        z = x.copy()
        increments = [np.zeros_like(x) for _ in self.members]
        for _ in range(sweeps):
            z_start = z
            for i, member in enumerate(self.members):
                target = z + increments[i]
                z = member.project(target)
                increments[i] = target - z
            if np.linalg.norm(z - z_start) <= tol:
                break
        return z


@dataclass(frozen=True)
class PenaltyConfig:
    """Stiffness of the smooth surrogate that replaces set membership."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("penalty scale must be positive")


def _check_dim(s, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != s.dim:
        raise ValueError(
            f"vector of length {x.size if x.ndim == 1 else x.shape} does not "
            f"match set dimension {s.dim}"
        )
    return x


def project_set(s, x):
    """Euclidean projection of ``x`` onto the set."""
    return s.project(_check_dim(s, x))


def penalty(s, cfg, x):
    """Smooth nonnegative surrogate that vanishes exactly on the set.

    Support windows use ``c * sum(off-window x_j^2)``; every other variant
    uses the squared-distance form ``(c/2) * dist(x, set)^2``, which is
    convex and globally ``c``-smooth.
    """
    x = _check_dim(s, x)
    c = cfg.scale
    if isinstance(s, SupportWindow):
        inside = x[s.start:s.stop]
        return c * float(x @ x - inside @ inside)
    d = x - s.project(x)
    return 0.5 * c * float(d @ d)


def penalty_grad(s, cfg, x):
    """Gradient of :func:`penalty` (zero on the set)."""
    x = _check_dim(s, x)
    c = cfg.scale
    if isinstance(s, SupportWindow):
        g = 2.0 * c * x
        g[s.start:s.stop] = 0.0
        return g
    return c * (x - s.project(x))


def smoothness_constant(s, cfg):
    """A certified gradient-Lipschitz constant of :func:`penalty`."""
    if isinstance(s, SupportWindow):
        return 2.0 * cfg.scale
    return cfg.scale


def contains(s, x, tol=0.0):
    """True iff the distance from ``x`` to the set is at most ``tol``."""
    x = _check_dim(s, x)
    return float(np.linalg.norm(x - s.project(x))) <= tol


def project_union(sets, x):
    """Project onto a union of sets: nearest per-set projection wins.

    Returns ``(projection, index)``; ties break to the smallest index.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("set list must be non-empty")
    best = None
    best_dist = np.inf
    best_idx = -1
    for i, s in enumerate(sets):
        proj = project_set(s, x)
        dist = float(np.linalg.norm(np.asarray(x, dtype=float) - proj))
        if dist < best_dist:
            best, best_dist, best_idx = proj, dist, i
    return best, best_idx


def window_family(dim, width):
    """All contiguous support windows of the given width (width+1 coords)."""
    count = dim - width
    if count < 1:
        raise ValueError("window width too large for dimension")
    return [SupportWindow(start, width, dim) for start in range(count)]


def quantize(values, edges):
    """Map real values to quantizer cell indices.

    ``edges`` is a strictly increasing breakpoint list (outer entries may be
    -inf/+inf); cell ``k`` is the interval ``[edges[k], edges[k+1]]``.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("edges must list at least two breakpoints")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing")
    values = np.asarray(values, dtype=float)
    if np.any(values < edges[0]) or np.any(values > edges[-1]):
        raise ValueError("value outside the quantizer range")
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.minimum(idx, edges.size - 2).astype(int)


def quantized_cells(a_rows, y, quantizer_edges):
    """Per-measurement slabs ``lo_k <= <a_i, x> <= hi_k`` for quantized
    measurements ``y_i`` holding cell indices.

    The returned cells describe a joint intersection constraint, not a union;
    consumers should combine them into a single composite set.
    """
    A = as_matrix(a_rows, "a_rows")
    edges = np.asarray(quantizer_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing with >= 2 entries")
    y = np.asarray(y, dtype=float)
    if y.shape != (A.shape[0],):
        raise ValueError("y length must match the number of measurement rows")
    ncells = edges.size - 1
    levels = np.rint(y).astype(int)
    if np.any(np.abs(y - levels) > 1e-9) or np.any(levels < 0) or np.any(levels >= ncells):
        raise ValueError("y entries must be valid quantizer cell indices")
    cells = []
    for i, k in enumerate(levels):
        lo, hi = edges[k], edges[k + 1]
        a = A[i]
        parts = []
        if np.isfinite(hi):
            parts.append(Halfspace(a, hi))
        if np.isfinite(lo):
            parts.append(Halfspace(-a, -lo))
        if len(parts) == 2:
            cells.append(Intersection(tuple(parts)))
        elif len(parts) == 1:
            cells.append(parts[0])
        else:
            n = A.shape[1]
            cells.append(Box(np.full(n, -np.inf), np.full(n, np.inf)))
    return cells


def phase_retrieval_branches(a_rows, y, max_rows=10):
    """Sign-pattern branches for magnitude measurements ``y_i = <a_i, x>^2``.

    Each branch fixes one sign per measurement row, giving the affine system
    ``<a_i, x> = s_i * sqrt(y_i)``. Rows with ``y_i = 0`` contribute a single
    constraint (both signs coincide), so the branch count is
    ``2**(#nonzero y)``. Refuses more than ``max_rows`` rows.
    """
    A = as_matrix(a_rows, "a_rows")
    y = as_vector(y, "y")
    if y.shape != (A.shape[0],):
        raise ValueError("y length must match the number of measurement rows")
    if np.any(y < 0):
        raise ValueError("squared magnitudes must be nonnegative")
    l = A.shape[0]
    if l > max_rows:
        raise CapacityError(
            f"{l} measurement rows would enumerate 2^{l} branches; "
            f"limit is {max_rows} rows"
        )
    roots = np.sqrt(y)
    free = [i for i in range(l) if roots[i] > 0.0]
    branches = []
    for signs in itertools.product((1.0, -1.0), repeat=len(free)):
        sign_vec = np.ones(l)
        for s, i in zip(signs, free):
            sign_vec[i] = s
        slices = tuple(AffineSlice(A[i], sign_vec[i] * roots[i]) for i in range(l))
        branches.append(slices[0] if l == 1 else Intersection(slices))
    return branches


_KINDS = {
    SupportWindow: "support_window",
    AffineSlice: "affine_slice",
    Halfspace: "halfspace",
    Box: "box",
    Ball: "ball",
    Intersection: "intersection",
}


def descriptor_to_dict(s):
    """JSON-ready form with a ``kind`` discriminator."""
    kind = _KINDS[type(s)]
    if isinstance(s, SupportWindow):
        return {"kind": kind, "start": s.start, "width": s.width, "dim": s.dim}
    if isinstance(s, (AffineSlice, Halfspace)):
        return {"kind": kind, "a": s.a.tolist(), "b": s.b}
    if isinstance(s, Box):
        lo = [None if v == -np.inf else v for v in s.lower]
        hi = [None if v == np.inf else v for v in s.upper]
        return {"kind": kind, "lower": lo, "upper": hi}
    if isinstance(s, Ball):
        return {"kind": kind, "center": s.center.tolist(), "radius": s.radius}
    return {"kind": kind, "members": [descriptor_to_dict(m) for m in s.members]}


def descriptor_from_dict(d):
    """Inverse of :func:`descriptor_to_dict`."""
    kind = d.get("kind")
    if kind == "support_window":
        return SupportWindow(int(d["start"]), int(d["width"]), int(d["dim"]))
    if kind == "affine_slice":
        return AffineSlice(np.asarray(d["a"], dtype=float), float(d["b"]))
    if kind == "halfspace":
        return Halfspace(np.asarray(d["a"], dtype=float), float(d["b"]))
    if kind == "box":
        lo = np.array([-np.inf if v is None else float(v) for v in d["lower"]])
        hi = np.array([np.inf if v is None else float(v) for v in d["upper"]])
        return Box(lo, hi)
    if kind == "ball":
        return Ball(np.asarray(d["center"], dtype=float), float(d["radius"]))
    if kind == "intersection":
        return Intersection(tuple(descriptor_from_dict(m) for m in d["members"]))
    raise ValueError(f"unknown set kind: {kind!r}")
