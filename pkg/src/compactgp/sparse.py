"""Sparsity patterns, CSR kernel matrices, CG, and stochastic traces.

Compact kernels make the Gram matrix exactly sparse: entry (i, j) can be
nonzero only when the points are within the cutoff of each other.  The
pattern is built once (sliding window for sorted 1-D inputs, brute force
otherwise) and reused across assemblies with different parameters.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import (
    BreakdownDetected,
    DimensionMismatch,
    DuplicatePoints,
    PatternTooSmall,
    UnsortedInput,
)


@dataclass(frozen=True)
class SparsityPattern:
    n: int
    row_offsets: np.ndarray  # int64, length n + 1
    col_indices: np.ndarray  # int64, length nnz, sorted within each row

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    def row_index(self):
        """Row index of every stored entry (expanded CSR rows)."""
        counts = np.diff(self.row_offsets)
        return np.repeat(np.arange(self.n, dtype=np.int64), counts)


def sparsity_pattern_sorted(points, cutoff):
    """Pattern for strictly sorted 1-D points via a sliding window.

    Entry (i, j) is present iff |x_i - x_j| < cutoff (strict: kernel
    values at exactly the cutoff are zero).  Two monotone window pointers
    give O(N + nnz) construction.
    """
    points = np.asarray(points, dtype=float).ravel()
    n = points.size
    if np.any(np.diff(points) < 0):
        raise UnsortedInput("points must be sorted ascending")
    if np.any(np.diff(points) == 0):
        raise DuplicatePoints("duplicate points are not allowed")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")

    lo = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    left = 0
    right = 0
    for i in range(n):
        while points[i] - points[left] >= cutoff:
            left += 1
        if right < i + 1:
            right = i + 1
        while right < n and points[right] - points[i] < cutoff:
            right += 1
        lo[i] = left
        hi[i] = right
    counts = hi - lo
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    col_indices = np.concatenate(
        [np.arange(a, b, dtype=np.int64) for a, b in zip(lo, hi)]
    ) if n else np.empty(0, dtype=np.int64)
    return SparsityPattern(n, row_offsets, col_indices)


def sparsity_pattern_generic(points, cutoff):
    """Brute-force pattern for d-dimensional points under the uniform norm.

    Matches the tensor-product kernel support: (i, j) present iff
    max_k |x_ik - x_jk| < cutoff.  O(N^2) time; intended for moderate N.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    dist = np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=-1)
    mask = dist < cutoff
    np.fill_diagonal(mask, True)
    counts = mask.sum(axis=1)
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    col_indices = np.nonzero(mask)[1].astype(np.int64)
    return SparsityPattern(n, row_offsets, col_indices)


@dataclass(frozen=True)
class SparseKernelMatrix:
    pattern: SparsityPattern
    values: np.ndarray  # kernel values, no noise
    noise_diag: float

    @property
    def n(self):
        return self.pattern.n

    def _csr(self):
        csr = scipy.sparse.csr_matrix(
            (self.values, self.pattern.col_indices, self.pattern.row_offsets),
            shape=(self.n, self.n),
        )
        return csr

    def apply(self, v):
        return spmv(self, v)

    def diagonal(self):
        return self._csr().diagonal() + self.noise_diag

    def to_dense(self):
        return self._csr().toarray() + self.noise_diag * np.eye(self.n)


def _pattern_has_all_support_pairs(points, pattern, support, rng):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    present = set(zip(pattern.row_index().tolist(), pattern.col_indices.tolist()))
    if n <= 2048:
        dist = np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=-1)
        ii, jj = np.nonzero(dist < support)
        return all((int(i), int(j)) in present for i, j in zip(ii, jj))
    idx = rng.integers(0, n, size=(1000, 2))
    for i, j in idx:
        if np.max(np.abs(points[i] - points[j])) < support:
            if (int(i), int(j)) not in present:
                return False
    return True


def assemble(kernel, points, pattern, noise=0.0, check_pattern=True):
    """Fill a sparsity pattern with kernel values.

    ``kernel`` needs vectorized ``at`` and finite ``support``; d > 1 inputs
    use the tensor-product extension.  Raises :class:`PatternTooSmall` when
    a within-support pair is missing (exhaustive for n <= 2048, sampled
    otherwise).
    """
    points = np.asarray(points, dtype=float)
    pts = points if points.ndim > 1 else points[:, None]
    if pts.shape[0] != pattern.n:
        raise DimensionMismatch("pattern size does not match point count")
    if check_pattern and np.isfinite(kernel.support):
        rng = np.random.default_rng(0)
        if not _pattern_has_all_support_pairs(points, pattern, kernel.support, rng):
            raise PatternTooSmall("pattern is missing a pair within kernel support")
    rows = pattern.row_index()
    diffs = pts[rows] - pts[pattern.col_indices]
    per_dim = np.asarray(kernel.at(diffs))
    values = np.prod(per_dim, axis=-1) if per_dim.ndim > 1 else per_dim
    return SparseKernelMatrix(pattern, np.asarray(values, dtype=float), float(noise))


def spmv(matrix, v):
    """CSR matrix-vector product plus the noise diagonal."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != matrix.n:
        raise DimensionMismatch(f"vector length {v.shape[0]} != {matrix.n}")
    return matrix._csr() @ v + matrix.noise_diag * v


@dataclass(frozen=True)
class CGStats:
    iterations: int
    final_residual_norm: float
    converged: bool


def conjugate_gradient(apply, b, tol=1e-10, max_iter=None, precond=None, diag=None):
    """Preconditioned conjugate gradient for an SPD operator.

    ``apply`` is either a callable v -> Av or a :class:`SparseKernelMatrix`.
    ``precond`` is None or "jacobi"; Jacobi uses ``diag`` (taken from the
    matrix when available).  Converged means ||Ax - b|| / ||b|| <= tol.
    """
    if isinstance(apply, SparseKernelMatrix):
        matrix = apply
        csr = matrix._csr()
        noise = matrix.noise_diag
        op = lambda v: csr @ v + noise * v
        if diag is None:
            diag = matrix.diagonal()
    else:
        op = apply
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    if precond == "jacobi":
        if diag is None:
            raise ValueError("jacobi preconditioning requires the diagonal")
        inv_diag = 1.0 / np.asarray(diag, dtype=float)
        minv = lambda r: inv_diag * r
    elif precond is None:
        minv = lambda r: r
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), CGStats(0, 0.0, True)
    x = np.zeros(n)
    r = b.copy()
    z = minv(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    converged = False
    while it < max_iter:
        ap = op(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise BreakdownDetected(
                f"p^T A p = {pap} <= 0 at iteration {it}: operator is not PSD"
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        if np.linalg.norm(r) <= tol * b_norm:
            converged = True
            break
        z = minv(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
    true_res = float(np.linalg.norm(op(x) - b))
    converged = true_res <= tol * b_norm
    return x, CGStats(it, true_res, converged)


def hutchinson_trace(solve, apply_dK, n, probes, seed=0):
    """Stochastic estimate of tr(K^{-1} dK) from Gaussian probes.

    Each probe b ~ N(0, I) contributes <K^{-1} b, dK b>; ``solve`` maps
    b -> K^{-1} b.  Probe p draws from generator seed (seed, p), so results
    are reproducible independently of evaluation order.  Returns
    (estimate, standard_error).
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    samples = np.empty(probes)
    for p in range(probes):
        rng = np.random.default_rng((int(seed), p))
        bvec = rng.standard_normal(n)
        samples[p] = float(solve(bvec) @ apply_dK(bvec))
    est = float(np.mean(samples))
    if probes == 1:
        return est, 0.0
    se = float(np.std(samples, ddof=1) / np.sqrt(probes))
    return est, se
