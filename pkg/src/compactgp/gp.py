"""GP likelihood, posterior inference, gradients, MLE training, sampling.

The mean function is fixed at zero.  Observation noise sigma_n^2 is an
explicit diagonal term: compact-kernel Gram matrices can be numerically
singular without it.  Dense paths use Cholesky; the sparse path uses the
CSR machinery in :mod:`compactgp.sparse` with CG solves.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AllCutoffsFailed, DimensionMismatch, NotPositiveDefinite
from .kernels import make_compact_kernel
from .phi import compute_phi, phi_entry_values
from .sparse import (
    SparseKernelMatrix,
    assemble,
    conjugate_gradient,
    hutchinson_trace,
    sparsity_pattern_generic,
    sparsity_pattern_sorted,
)

DENSE_LIMIT = 8192
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GPDataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch("x and y must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("inputs must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def dim(self):
        return 1 if self.x.ndim == 1 else self.x.shape[1]

    def is_sorted(self):
        return self.x.ndim == 1 and bool(np.all(np.diff(self.x) > 0))


def dense_gram(kernel, x1, x2=None):
    """Dense kernel matrix; d > 1 uses the tensor-product extension."""
    x1 = np.asarray(x1, dtype=float)
    x2 = x1 if x2 is None else np.asarray(x2, dtype=float)
    if x1.ndim == 1:
        return kernel.at(x1[:, None] - x2[None, :])
    return np.prod(kernel.at(x1[:, None, :] - x2[None, :, :]), axis=-1)


def _chol(K):
    try:
        return scipy.linalg.cho_factor(K, lower=True)
    except scipy.linalg.LinAlgError as exc:
        msg = str(exc)
        pivot = None
        head = msg.split("-th", 1)[0]
        if head.isdigit():
            pivot = int(head)
        raise NotPositiveDefinite(msg, pivot=pivot) from exc


def nll_dense(kernel, data, noise):
    """Negative log marginal likelihood via dense Cholesky."""
    K = dense_gram(kernel, data.x) + noise * np.eye(data.n)
    cho = _chol(K)
    alpha = scipy.linalg.cho_solve(cho, data.y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return 0.5 * float(data.y @ alpha) + 0.5 * (logdet + data.n * LOG_2PI)


@dataclass
class PosteriorResult:
    mean: np.ndarray
    variance: np.ndarray | None
    cg_iterations: int = 0
    converged: bool = True


def _clamp_variance(var, k0):
    # Small negative values are roundoff from the subtraction; clamp them.
    floor = -1e-8 * k0
    return np.where((var < 0) & (var >= floor), 0.0, var)


def build_pattern(kernel, x, sorted_hint=True):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and sorted_hint:
        return sparsity_pattern_sorted(x, kernel.support)
    return sparsity_pattern_generic(x, kernel.support)


def posterior(
    kernel,
    train,
    query,
    noise,
    mode="dense",
    mean_only=False,
    jitter=0.0,
    cg_tol=1e-10,
    matrix=None,
):
    """Posterior mean and pointwise variance at query points.

    Dense mode factorizes the training Gram matrix.  Sparse mode (finite
    kernel support required) assembles a CSR matrix and runs CG: one solve
    for the mean, one per query point for the variance.  ``matrix`` lets a
    caller reuse an assembled :class:`SparseKernelMatrix`.
    """
    query = np.asarray(query, dtype=float)
    k0 = kernel.k0()
    diag_noise = noise + jitter
    if mode == "dense":
        K = dense_gram(kernel, train.x) + diag_noise * np.eye(train.n)
        cho = _chol(K)
        alpha = scipy.linalg.cho_solve(cho, train.y)
        Kq = dense_gram(kernel, query, train.x)
        mean = Kq @ alpha
        if mean_only:
            return PosteriorResult(mean, None)
        sol = scipy.linalg.cho_solve(cho, Kq.T)
        var = k0 - np.einsum("qn,nq->q", Kq, sol)
        return PosteriorResult(mean, _clamp_variance(var, k0))
    if mode != "sparse":
        raise ValueError(f"unknown mode {mode!r}")
    if not np.isfinite(kernel.support):
        raise ValueError("sparse mode requires a compactly supported kernel")
    if matrix is None:
        pattern = build_pattern(kernel, train.x, sorted_hint=train.is_sorted())
        matrix = assemble(kernel, train.x, pattern, noise=diag_noise)
    alpha, stats = conjugate_gradient(matrix, train.y, tol=cg_tol, precond="jacobi")
    total_iters = stats.iterations
    ok = stats.converged
    Kq = dense_gram(kernel, query, train.x)  # rows are sparse by support
    mean = Kq @ alpha
    if mean_only:
        return PosteriorResult(mean, None, total_iters, ok)
    var = np.empty(query.shape[0])
    for q in range(query.shape[0]):
        row = Kq[q]
        if not np.any(row):
            var[q] = k0
            continue
        sol, st = conjugate_gradient(matrix, row, tol=cg_tol, precond="jacobi")
        total_iters += st.iterations
        ok = ok and st.converged
        var[q] = k0 - float(row @ sol)
    return PosteriorResult(mean, _clamp_variance(var, k0), total_iters, ok)


def _grad_entry_support(kernel, x):
    """Within-support entry values for the Gram derivative matrices.

    Returns (rows, cols, vals) where vals[i, j] holds Phi_ij(|dx|/c) on the
    stored (row, col) pairs; entries outside the support are identically
    zero and never materialized.
    """
    dx = np.abs(x[:, None] - x[None, :]) / kernel.cutoff
    rows, cols = np.nonzero(dx < 1.0)
    vals = phi_entry_values(kernel.phi, dx[rows, cols])
    return rows, cols, vals


def nll_grad_A(kernel, data, noise, mode="dense", probes=16, seed=0, matrix=None):
    """Gradient of the NLL with respect to A entries and sigma_n^2.

    Entries of A are treated as independent (full-matrix storage); the
    quadratic term is exact in both modes, the trace term is exact in
    dense mode and a Hutchinson estimate in "hutchinson" mode.  Only 1-D
    inputs are supported (the gradient path targets time-series data).
    """
    if data.dim != 1:
        raise DimensionMismatch("gradients are implemented for 1-D inputs")
    m = kernel.order
    x = np.asarray(data.x, dtype=float)
    G = np.zeros((m, m))
    if mode == "dense":
        K = dense_gram(kernel, x) + noise * np.eye(data.n)
        cho = _chol(K)
        alpha = scipy.linalg.cho_solve(cho, data.y)
        Kinv = scipy.linalg.cho_solve(cho, np.eye(data.n))
        rows, cols, vals = _grad_entry_support(kernel, x)
        aa = alpha[rows] * alpha[cols]
        kk = Kinv[rows, cols]
        for i in range(m):
            for j in range(i, m):
                p = vals[i, j]
                g = -0.5 * float(p @ aa) + 0.5 * float(p @ kk)
                G[i, j] = g
                G[j, i] = g
        g_noise = -0.5 * float(alpha @ alpha) + 0.5 * float(np.trace(Kinv))
        return G, g_noise
    if mode != "hutchinson":
        raise ValueError(f"unknown mode {mode!r}")
    if matrix is None:
        pattern = build_pattern(kernel, x, sorted_hint=data.is_sorted())
        matrix = assemble(kernel, x, pattern, noise=noise)
    else:
        pattern = matrix.pattern
    alpha, _ = conjugate_gradient(matrix, data.y, precond="jacobi")
    solve = lambda b: conjugate_gradient(matrix, b, precond="jacobi")[0]
    rows = pattern.row_index()
    taus = np.abs(x[rows] - x[pattern.col_indices]) / kernel.cutoff
    entry_vals = phi_entry_values(kernel.phi, taus)  # (M, M, nnz)
    for i in range(m):
        for j in range(i, m):
            dK = SparseKernelMatrix(pattern, entry_vals[i, j], 0.0)
            quad = -0.5 * float(alpha @ dK.apply(alpha))
            tr_est, _ = hutchinson_trace(
                solve, dK.apply, data.n, probes, seed=seed + 1000 * (i * m + j)
            )
            g = quad + 0.5 * tr_est
            G[i, j] = g
            G[j, i] = g
    tr_inv, _ = hutchinson_trace(solve, lambda b: b, data.n, probes, seed=seed + 999_999)
    g_noise = -0.5 * float(alpha @ alpha) + 0.5 * tr_inv
    return G, g_noise


@dataclass
class FitConfig:
    cutoffs: tuple = (1.0,)
    learning_rate: float = 0.05
    max_epochs: int = 200
    tol: float = 1e-5
    probes: int = 16
    noise: float | None = None  # fixed sigma_n^2; None means learned
    seed: int = 0
    dense_limit: int = DENSE_LIMIT
    stochastic: bool = False

    def __post_init__(self):
        if not self.cutoffs:
            raise ValueError("cutoff grid must be nonempty")
        for c in self.cutoffs:
            if not c > 0:
                raise ValueError("cutoffs must be positive")
        for name in ("learning_rate", "max_epochs", "tol", "probes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FitReport:
    kernel: object
    noise: float
    cutoff: float
    nll_trace: list
    wall_time: float
    cg_iterations: int
    epochs: int
    all_cutoff_nll: dict = field(default_factory=dict)


class _Adam:
    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _fit_single_cutoff(data, basis, phi, cutoff, cfg):
    m = basis.order
    n = data.n
    vy = float(np.var(data.y))
    if vy == 0.0:
        vy = 1.0
    noise_floor = 1e-8 * vy
    L = np.sqrt(vy / m) * np.eye(m)
    log_noise = np.log(0.01 * vy)
    learn_noise = cfg.noise is None
    tril = np.tril_indices(m)
    params = np.concatenate([L[tril], [log_noise]])
    adam = _Adam(params.shape, cfg.learning_rate)
    use_dense = n <= cfg.dense_limit and not cfg.stochastic
    if not use_dense and n > cfg.dense_limit:
        raise ValueError("fit_mle tracks NLL densely; n exceeds the dense limit")
    trace = []
    cg_total = 0
    prev_nll = np.inf
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        L = np.zeros((m, m))
        L[tril] = params[:-1]
        A = L @ L.T
        assert np.linalg.eigvalsh(A)[0] >= -1e-12 * max(np.trace(A), 1.0)
        noise = max(float(np.exp(params[-1])), noise_floor) if learn_noise else cfg.noise
        kernel = make_compact_kernel(basis, A, cutoff, phi=phi)
        nll = nll_dense(kernel, data, noise)
        if not np.isfinite(nll):
            return None
        trace.append(float(nll))
        if cfg.stochastic:
            G, g_noise = nll_grad_A(
                kernel, data, noise, mode="hutchinson", probes=cfg.probes, seed=cfg.seed + epoch
            )
        else:
            G, g_noise = nll_grad_A(kernel, data, noise)
        dL = (G + G.T) @ L
        grad = np.concatenate(
            [dL[tril], [g_noise * noise if learn_noise else 0.0]]
        )
        params = params - adam.step(grad)
        if abs(prev_nll - nll) < cfg.tol:
            break
        prev_nll = nll
    L = np.zeros((m, m))
    L[tril] = params[:-1]
    noise = max(float(np.exp(params[-1])), noise_floor) if learn_noise else cfg.noise
    kernel = make_compact_kernel(basis, L @ L.T, cutoff, phi=phi)
    final_nll = nll_dense(kernel, data, noise)
    if not np.isfinite(final_nll):
        return None
    trace.append(float(final_nll))
    return kernel, noise, trace, cg_total, epoch


def fit_mle(data, basis, cfg):
    """Maximum-likelihood fit of A = L L^T and (optionally) the noise.

    The cutoff is grid-searched over ``cfg.cutoffs``; A and log sigma_n^2
    are optimized with Adam for each candidate and the best final NLL wins.
    """
    start = time.monotonic()
    phi = compute_phi(basis)
    best = None
    per_cutoff = {}
    for c in cfg.cutoffs:
        out = _fit_single_cutoff(data, basis, phi, float(c), cfg)
        if out is None:
            per_cutoff[float(c)] = float("nan")
            continue
        kernel, noise, trace, cg_total, epochs = out
        per_cutoff[float(c)] = trace[-1]
        if best is None or trace[-1] < best[2][-1]:
            best = (kernel, noise, trace, cg_total, epochs, float(c))
    if best is None:
        raise AllCutoffsFailed("every cutoff candidate produced a non-finite NLL")
    kernel, noise, trace, cg_total, epochs, c = best
    return FitReport(
        kernel=kernel,
        noise=noise,
        cutoff=c,
        nll_trace=trace,
        wall_time=time.monotonic() - start,
        cg_iterations=cg_total,
        epochs=epochs,
        all_cutoff_nll=per_cutoff,
    )


def sample_gp(kernel, points, noise, seed=0):
    """Draw y ~ N(0, K + sigma_n^2 I) at the given points (dense path)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"sampling is dense-only; n must be <= {DENSE_LIMIT}")
    k0 = kernel.k0()
    K = dense_gram(kernel, points) + 1e-10 * k0 * np.eye(n)
    try:
        L = scipy.linalg.cholesky(K, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    zp = rng.standard_normal(n)
    return L @ z + np.sqrt(noise) * zp


def metrics(mean, truth, variance, noise=0.0):
    """(RMSE, mean pointwise Gaussian NLL with variance + sigma_n^2)."""
    mean = np.asarray(mean, dtype=float)
    truth = np.asarray(truth, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if not (mean.shape == truth.shape and mean.shape == variance.shape):
        raise DimensionMismatch("metrics inputs must have equal length")
    rmse = float(np.sqrt(np.mean((mean - truth) ** 2)))
    s = variance + noise
    nll = 0.5 * (np.log(2.0 * np.pi * s) + (truth - mean) ** 2 / s)
    return rmse, float(np.mean(nll))
