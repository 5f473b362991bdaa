"""Unit tests for sparsity patterns, CSR assembly, CG, and trace estimation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compactgp import (
    assemble,
    conjugate_gradient,
    hutchinson_trace,
    make_basis,
    make_compact_kernel,
    sparsity_pattern_generic,
    sparsity_pattern_sorted,
    spmv,
)
from compactgp.errors import (
    BreakdownDetected,
    DimensionMismatch,
    DuplicatePoints,
    PatternTooSmall,
    UnsortedInput,
)
from compactgp.gp import dense_gram


def _random_kernel(rng, m=3, cutoff=1.5, family="fourier"):
    B = rng.standard_normal((m, m))
    return make_compact_kernel(make_basis(family, m), B @ B.T / m, cutoff)


def _pattern_pairs(pattern):
    return set(zip(pattern.row_index().tolist(), pattern.col_indices.tolist()))


def test_sorted_pattern_small_example():
    # Hand-worked: pairs within distance < 1.5 of [0, 1, 2.5, 3].
    pattern = sparsity_pattern_sorted([0.0, 1.0, 2.5, 3.0], 1.5)
    expected = {(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)}
    assert _pattern_pairs(pattern) == expected
    assert pattern.nnz == 8


def test_pattern_strict_at_cutoff():
    # |x_i - x_j| exactly equal to the cutoff is excluded (kernel is zero there).
    pattern = sparsity_pattern_sorted([0.0, 1.0], 1.0)
    assert _pattern_pairs(pattern) == {(0, 0), (1, 1)}


def test_sorted_and_generic_patterns_agree():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(0, 20, 200))
    for cutoff in [0.1, 0.7, 3.0]:
        a = sparsity_pattern_sorted(x, cutoff)
        b = sparsity_pattern_generic(x, cutoff)
        assert _pattern_pairs(a) == _pattern_pairs(b)


@given(
    xs=st.lists(
        st.floats(-100.0, 100.0, allow_nan=False), min_size=1, max_size=40, unique=True
    ),
    cutoff=st.floats(0.01, 50.0, allow_nan=False),
)
@settings(max_examples=60, deadline=None)
def test_sorted_pattern_matches_brute_force(xs, cutoff):
    x = np.sort(np.array(xs))
    pattern = sparsity_pattern_sorted(x, cutoff)
    expected = {
        (i, j)
        for i in range(x.size)
        for j in range(x.size)
        if abs(x[i] - x[j]) < cutoff
    }
    assert _pattern_pairs(pattern) == expected


def test_generic_pattern_uses_uniform_norm():
    pts = np.array([[0.0, 0.0], [0.5, 0.9], [2.0, 0.0]])
    pattern = sparsity_pattern_generic(pts, 1.0)
    pairs = _pattern_pairs(pattern)
    assert (0, 1) in pairs and (1, 0) in pairs
    assert (0, 2) not in pairs and (1, 2) not in pairs


def test_pattern_validation():
    with pytest.raises(UnsortedInput):
        sparsity_pattern_sorted([1.0, 0.0], 1.0)
    with pytest.raises(DuplicatePoints):
        sparsity_pattern_sorted([0.0, 0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        sparsity_pattern_sorted([0.0, 1.0], 0.0)


def test_assemble_matches_dense_gram():
    rng = np.random.default_rng(1)
    kernel = _random_kernel(rng)
    x = np.sort(rng.uniform(0, 10, 150))
    pattern = sparsity_pattern_sorted(x, kernel.support)
    matrix = assemble(kernel, x, pattern, noise=0.25)
    dense = dense_gram(kernel, x) + 0.25 * np.eye(150)
    assert np.allclose(matrix.to_dense(), dense, atol=1e-13)
    assert np.allclose(matrix.diagonal(), np.diag(dense), atol=1e-13)


def test_assemble_two_dimensional_tensor_product():
    rng = np.random.default_rng(2)
    kernel = _random_kernel(rng, cutoff=2.0)
    pts = rng.uniform(0, 5, (40, 2))
    pattern = sparsity_pattern_generic(pts, kernel.support)
    matrix = assemble(kernel, pts, pattern)
    dense = dense_gram(kernel, pts)
    assert np.allclose(matrix.to_dense(), dense, atol=1e-13)


def test_pattern_too_small_detected():
    rng = np.random.default_rng(3)
    kernel = _random_kernel(rng, cutoff=2.0)
    x = np.sort(rng.uniform(0, 10, 100))
    pattern = sparsity_pattern_sorted(x, 0.5)  # misses pairs within support
    with pytest.raises(PatternTooSmall):
        assemble(kernel, x, pattern)
    # The check can be bypassed for deliberately truncated assemblies.
    assemble(kernel, x, pattern, check_pattern=False)


def test_spmv_matches_dense():
    rng = np.random.default_rng(4)
    kernel = _random_kernel(rng)
    x = np.sort(rng.uniform(0, 8, 80))
    pattern = sparsity_pattern_sorted(x, kernel.support)
    matrix = assemble(kernel, x, pattern, noise=0.1)
    v = rng.standard_normal(80)
    assert np.allclose(spmv(matrix, v), matrix.to_dense() @ v, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        spmv(matrix, np.ones(7))


@pytest.mark.parametrize("precond", [None, "jacobi"])
def test_cg_matches_direct_solve(precond):
    rng = np.random.default_rng(5)
    kernel = _random_kernel(rng)
    x = np.sort(rng.uniform(0, 12, 120))
    pattern = sparsity_pattern_sorted(x, kernel.support)
    matrix = assemble(kernel, x, pattern, noise=0.05)
    b = rng.standard_normal(120)
    sol, stats = conjugate_gradient(matrix, b, tol=1e-12, precond=precond)
    assert stats.converged
    direct = np.linalg.solve(matrix.to_dense(), b)
    assert np.max(np.abs(sol - direct)) < 1e-8


def test_cg_accepts_callable_operator():
    rng = np.random.default_rng(6)
    B = rng.standard_normal((30, 30))
    K = B @ B.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    sol, stats = conjugate_gradient(lambda v: K @ v, b, tol=1e-12)
    assert stats.converged
    assert np.allclose(K @ sol, b, atol=1e-8)


def test_cg_zero_rhs():
    sol, stats = conjugate_gradient(lambda v: v, np.zeros(5))
    assert stats.iterations == 0 and stats.converged
    assert np.array_equal(sol, np.zeros(5))


def test_cg_breakdown_on_indefinite_operator():
    K = np.diag([1.0, -1.0])
    with pytest.raises(BreakdownDetected):
        conjugate_gradient(lambda v: K @ v, np.array([0.0, 1.0]))


def test_cg_reports_non_convergence():
    rng = np.random.default_rng(7)
    B = rng.standard_normal((50, 50))
    K = B @ B.T + 1e-8 * np.eye(50)  # very ill-conditioned
    b = rng.standard_normal(50)
    _, stats = conjugate_gradient(lambda v: K @ v, b, tol=1e-14, max_iter=3)
    assert not stats.converged
    assert stats.iterations == 3


def test_hutchinson_identity_trace():
    # K = I, dK = I: each probe contributes ||b||^2; the mean estimates n.
    n = 64
    est, se = hutchinson_trace(lambda b: b, lambda b: b, n, probes=400, seed=0)
    assert abs(est - n) <= 4 * se + 1e-12


def test_hutchinson_unbiased_for_general_matrices():
    rng = np.random.default_rng(8)
    B = rng.standard_normal((40, 40))
    K = B @ B.T + 40 * np.eye(40)
    D = rng.standard_normal((40, 40))
    D = D + D.T
    Kinv = np.linalg.inv(K)
    truth = float(np.trace(Kinv @ D))
    est, se = hutchinson_trace(
        lambda b: Kinv @ b, lambda b: D @ b, 40, probes=600, seed=1
    )
    assert abs(est - truth) <= 4 * se


def test_hutchinson_reproducible_and_probe_indexed():
    f = lambda b: b
    a1, _ = hutchinson_trace(f, f, 16, probes=8, seed=3)
    a2, _ = hutchinson_trace(f, f, 16, probes=8, seed=3)
    assert a1 == a2
    b1, _ = hutchinson_trace(f, f, 16, probes=8, seed=4)
    assert a1 != b1
    with pytest.raises(ValueError):
        hutchinson_trace(f, f, 16, probes=0)
