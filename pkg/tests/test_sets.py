import numpy as np
import pytest

from unioncs.core import CapacityError, substream
from unioncs.sets import (
    AffineSlice,
    Ball,
    Box,
    Halfspace,
    Intersection,
    PenaltyConfig,
    SupportWindow,
    contains,
    descriptor_from_dict,
    descriptor_to_dict,
    penalty,
    penalty_grad,
    phase_retrieval_branches,
    project_set,
    project_union,
    quantize,
    quantized_cells,
    smoothness_constant,
    window_family,
)

DIM = 5


def sample_sets(rng, dim=DIM):
    """One random instance of every descriptor variant."""
    a = rng.standard_normal(dim)
    a2 = rng.standard_normal(dim)
    lo = rng.standard_normal(dim) - 1.5
    start = int(rng.integers(0, dim - 1))
    width = int(rng.integers(0, dim - start - 1))
    return [
        SupportWindow(start, width, dim),
        AffineSlice(a, float(rng.standard_normal())),
        Halfspace(a2, float(rng.standard_normal())),
        Box(lo, lo + rng.uniform(0.5, 2.0, size=dim)),
        Ball(rng.standard_normal(dim), float(rng.uniform(0.5, 2.0))),
        Intersection(
            (
                Halfspace(rng.standard_normal(dim), float(rng.uniform(0.5, 2.0))),
                Ball(rng.standard_normal(dim) * 0.1, float(rng.uniform(1.0, 2.0))),
            )
        ),
    ]


# ---------------------------------------------------------------- projections


def test_project_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(
        project_set(SupportWindow(1, 1, 4), x), [0.0, 2.0, 3.0, 0.0]
    )
    h = Halfspace(np.array([1.0, 0.0]), 0.0)
    np.testing.assert_allclose(project_set(h, np.array([-1.0, 5.0])), [-1.0, 5.0])
    b = Ball(np.zeros(2), 1.0)
    np.testing.assert_allclose(project_set(b, np.array([3.0, 4.0])), [0.6, 0.8])


def test_project_dimension_mismatch():
    with pytest.raises(ValueError):
        project_set(SupportWindow(0, 1, 4), np.ones(3))


def test_projection_idempotent_and_nonexpansive():
    rng = substream(201, 0)
    for trial in range(60):
        for s in sample_sets(rng):
            u = rng.standard_normal(DIM) * 2
            v = rng.standard_normal(DIM) * 2
            pu, pv = project_set(s, u), project_set(s, v)
            np.testing.assert_allclose(project_set(s, pu), pu, atol=1e-10)
            assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-9


def test_dykstra_matches_closed_forms():
    # two orthogonal halfspaces: joint projection is a componentwise clamp
    quad = Intersection(
        (Halfspace(np.array([1.0, 0.0]), 0.0), Halfspace(np.array([0.0, 1.0]), 0.0))
    )
    np.testing.assert_allclose(
        project_set(quad, np.array([2.0, 3.0])), [0.0, 0.0], atol=1e-9
    )
    np.testing.assert_allclose(
        project_set(quad, np.array([-1.0, 2.0])), [-1.0, 0.0], atol=1e-9
    )
    # intersection of affine slices: least-norm correction via lstsq
    rng = substream(202, 0)
    A = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    inter = Intersection(tuple(AffineSlice(A[i], b[i]) for i in range(2)))
    x = rng.standard_normal(4)
    want = x + np.linalg.lstsq(A, b - A @ x, rcond=None)[0]
    np.testing.assert_allclose(project_set(inter, x), want, atol=1e-8)


# ---------------------------------------------------------------- penalties


def test_penalty_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    cfg = PenaltyConfig(1.0)
    assert penalty(SupportWindow(1, 1, 4), cfg, x) == pytest.approx(17.0)
    h = Halfspace(np.array([1.0, 0.0]), 1.0)
    assert penalty(h, PenaltyConfig(2.0), np.array([3.0, 0.0])) == pytest.approx(4.0)


def test_penalty_zero_iff_member():
    rng = substream(203, 0)
    cfg = PenaltyConfig(1.7)
    for trial in range(50):
        for s in sample_sets(rng):
            x = rng.standard_normal(DIM) * 2
            feasible = project_set(s, x)
            assert penalty(s, cfg, feasible) <= 1e-12
            assert contains(s, feasible, 1e-8)
            val = penalty(s, cfg, x)
            member = contains(s, x, 1e-10)
            assert (val <= 1e-14) == member


def test_penalty_grad_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    cfg = PenaltyConfig(1.0)
    np.testing.assert_allclose(
        penalty_grad(SupportWindow(1, 1, 4), cfg, x), [2.0, 0.0, 0.0, 8.0]
    )
    w = SupportWindow(0, 2, 4)
    inside = np.array([1.0, -1.0, 2.0, 0.0])
    np.testing.assert_allclose(penalty_grad(w, cfg, inside), np.zeros(4), atol=1e-14)


def test_penalty_grad_matches_finite_differences():
    rng = substream(204, 0)
    cfg = PenaltyConfig(2.3)
    step = 1e-5
    checked = 0
    while checked < 100:
        for s in sample_sets(rng):
            x = rng.standard_normal(DIM) * 1.5
            grad = penalty_grad(s, cfg, x)
            fd = np.empty(DIM)
            for j in range(DIM):
                e = np.zeros(DIM)
                e[j] = step
                fd[j] = (penalty(s, cfg, x + e) - penalty(s, cfg, x - e)) / (2 * step)
            tol = 1e-4 * max(1.0, np.linalg.norm(fd))
            assert np.linalg.norm(grad - fd) <= tol
            checked += 1


def test_smoothness_constants():
    assert smoothness_constant(SupportWindow(0, 1, 4), PenaltyConfig(1.0)) == 2.0
    assert smoothness_constant(Ball(np.zeros(2), 1.0), PenaltyConfig(3.0)) == 3.0


def test_smoothness_constant_is_gradient_lipschitz():
    rng = substream(205, 0)
    cfg = PenaltyConfig(1.9)
    for s in sample_sets(rng):
        L = smoothness_constant(s, cfg)
        for _ in range(1000):
            u = rng.standard_normal(DIM) * 2
            v = rng.standard_normal(DIM) * 2
            gap = np.linalg.norm(penalty_grad(s, cfg, u) - penalty_grad(s, cfg, v))
            assert gap <= L * np.linalg.norm(u - v) + 1e-8


# ---------------------------------------------------------------- membership


def test_contains_tolerance():
    w = SupportWindow(1, 1, 4)
    assert contains(w, np.array([0.0, 1.0, 2.0, 0.0]), 0.0)
    h = Halfspace(np.array([1.0, 0.0]), 1.0)
    assert contains(h, np.array([1.0 + 1e-12, 0.0]), 1e-9)
    assert not contains(h, np.array([2.0, 0.0]), 1e-9)


def test_contains_agrees_with_projection_distance():
    rng = substream(206, 0)
    for trial in range(170):
        for s in sample_sets(rng):
            x = rng.standard_normal(DIM) * 2
            tol = float(rng.uniform(0.0, 1.0))
            dist = np.linalg.norm(x - project_set(s, x))
            assert contains(s, x, tol) == (dist <= tol)


# ---------------------------------------------------------------- unions


def test_project_union_examples():
    windows = [SupportWindow(0, 1, 4), SupportWindow(2, 1, 4)]
    x = np.array([1.0, 1.0, 2.0, 2.0])
    proj, idx = project_union(windows, x)
    np.testing.assert_allclose(proj, [0.0, 0.0, 2.0, 2.0])
    assert idx == 1

    member = np.array([0.0, 0.0, 1.0, 3.0])
    proj, idx = project_union(windows, member)
    np.testing.assert_allclose(proj, member)
    assert idx == 1


def test_project_union_prefers_smallest_index_on_ties():
    windows = [SupportWindow(0, 0, 2), SupportWindow(1, 0, 2)]
    _, idx = project_union(windows, np.array([1.0, 1.0]))
    assert idx == 0


def test_project_union_matches_brute_force():
    rng = substream(207, 0)
    for _ in range(1000):
        count = int(rng.integers(1, 9))
        sets = [sample_sets(rng)[int(rng.integers(0, 6))] for _ in range(count)]
        x = rng.standard_normal(DIM) * 2
        proj, idx = project_union(sets, x)
        dists = [np.linalg.norm(x - project_set(s, x)) for s in sets]
        assert idx == int(np.argmin(dists))
        for d in dists:
            assert np.linalg.norm(x - proj) <= d + 1e-12


def test_project_union_rejects_empty():
    with pytest.raises(ValueError):
        project_union([], np.ones(2))


# ---------------------------------------------------------------- quantized cells


def test_quantized_cells_single_halfline():
    A = np.array([[1.0, 0.0]])
    cells = quantized_cells(A, np.array([1.0]), [-np.inf, 0.0, np.inf])
    assert len(cells) == 1
    # level 1 is the cell [0, inf): feasibility of points with <a,x> >= 0
    assert contains(cells[0], np.array([2.0, 5.0]), 1e-9)
    assert not contains(cells[0], np.array([-1.0, 0.0]), 1e-9)


def test_quantized_cells_contain_ground_truth():
    rng = substream(208, 0)
    n, m = 6, 20
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    A = rng.standard_normal((m, n))
    edges = np.linspace(-4.0, 4.0, 9)  # 3-bit uniform quantizer on [-4, 4]
    levels = quantize(A @ x, edges)
    cells = quantized_cells(A, levels, edges)
    for cell in cells:
        assert contains(cell, x, 1e-9)


def test_quantized_cells_rejects_bad_levels():
    A = np.array([[1.0, 0.0]])
    with pytest.raises(ValueError):
        quantized_cells(A, np.array([5.0]), [-1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        quantized_cells(A, np.array([0.5]), [-1.0, 0.0, 1.0])


def test_quantize_rejects_out_of_range():
    with pytest.raises(ValueError):
        quantize([3.0], [-1.0, 0.0, 1.0])


# ---------------------------------------------------------------- phase branches


def test_phase_branches_single_measurement():
    A = np.array([[2.0, 0.0]])
    y = np.array([4.0])
    branches = phase_retrieval_branches(A, y)
    assert len(branches) == 2
    assert isinstance(branches[0], AffineSlice)
    assert branches[0].b == pytest.approx(2.0)
    assert branches[1].b == pytest.approx(-2.0)


def test_phase_branches_dedupe_zero():
    A = np.array([[1.0, 1.0]])
    branches = phase_retrieval_branches(A, np.array([0.0]))
    assert len(branches) == 1


def test_phase_branches_sign_pattern_feasibility():
    rng = substream(209, 0)
    n, rows = 5, 3
    x = rng.standard_normal(n)
    A = rng.standard_normal((rows, n))
    y = (A @ x) ** 2
    branches = phase_retrieval_branches(A, y)
    assert len(branches) == 8
    feasible = [i for i, s in enumerate(branches) if contains(s, x, 1e-8)]
    assert len(feasible) == 1


def test_phase_branches_capacity_guard():
    rng = substream(210, 0)
    A = rng.standard_normal((11, 4))
    y = np.abs(rng.standard_normal(11))
    with pytest.raises(CapacityError):
        phase_retrieval_branches(A, y, max_rows=10)


# ---------------------------------------------------------------- serialization


def test_descriptor_roundtrip():
    rng = substream(211, 0)
    for s in sample_sets(rng):
        d = descriptor_to_dict(s)
        back = descriptor_from_dict(d)
        x = rng.standard_normal(DIM)
        np.testing.assert_allclose(project_set(back, x), project_set(s, x), atol=1e-12)
    box = Box(np.array([-np.inf, 0.0]), np.array([1.0, np.inf]))
    d = descriptor_to_dict(box)
    assert d["lower"][0] is None and d["upper"][1] is None
    back = descriptor_from_dict(d)
    np.testing.assert_array_equal(back.lower, box.lower)


def test_window_family_count():
    fam = window_family(8, 3)
    assert len(fam) == 5
    assert fam[0].start == 0 and fam[-1].start == 4


def test_invalid_descriptors():
    with pytest.raises(ValueError):
        SupportWindow(3, 2, 4)
    with pytest.raises(ValueError):
        Ball(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        Box(np.array([1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        Halfspace(np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        Intersection(())
