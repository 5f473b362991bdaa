"""L2 fitting of a compact kernel to a target kernel on [-c, c].

The fit minimizes

    1/2 sum_ijkl R_ijkl A_ij A_kl  -  sum_ij B_ij A_ij

over PSD matrices A subject to the peak-matching equality
tr(A Phi(0)) = K(0).  R and B are inner products of the correlation
entry functions, computed offline by composite Gauss-Legendre quadrature.
The cone-constrained quadratic program is solved with a self-contained
ADMM splitting: an equality-constrained quadratic step (one KKT solve)
alternating with projection onto the PSD cone.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EigenFailure, InfeasibleConstraint, MaxIterationsExceeded
from .phi import phi_entry_values, phi_eval


@dataclass(frozen=True)
class QuadratureSpec:
    panels: int = 64
    nodes_per_panel: int = 32

    def __post_init__(self):
        if self.panels < 1:
            raise ValueError("panels must be >= 1")
        if not (2 <= self.nodes_per_panel <= 128):
            raise ValueError("nodes_per_panel must be in [2, 128]")

    def nodes(self, c):
        """Composite Gauss-Legendre nodes and weights on [0, c]."""
        xs, ws = np.polynomial.legendre.leggauss(self.nodes_per_panel)
        edges = np.linspace(0.0, c, self.panels + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = (mids[:, None] + half[:, None] * xs[None, :]).ravel()
        wts = (half[:, None] * ws[None, :]).ravel()
        return pts, wts


def compute_B(phi, target, c, quad=QuadratureSpec()):
    """B_ij = 2 * integral_0^c K(t) Phi_ij(t/c) dt."""
    t, w = quad.nodes(c)
    kt = target.at(t)
    vals = phi_entry_values(phi, t / c)  # (M, M, K)
    return 2.0 * np.einsum("ijk,k->ij", vals, w * kt)


def compute_R(phi, c, quad=QuadratureSpec()):
    """R_ijkl = 2 * integral_0^c Phi_ij(t/c) Phi_kl(t/c) dt."""
    t, w = quad.nodes(c)
    vals = phi_entry_values(phi, t / c)  # (M, M, K)
    m = phi.order
    flat = vals.reshape(m * m, -1)
    gram = 2.0 * (flat * w) @ flat.T  # exploits (ij)<->(kl) symmetry via Gram form
    return gram.reshape(m, m, m, m)


def l2_error(A, phi, target, c, quad=QuadratureSpec()):
    """L2([-c, c]) norm of tr(A Phi(t/c)) - K(t)."""
    t, w = quad.nodes(c)
    vals = phi_entry_values(phi, t / c)
    resid = np.einsum("ij,ijk->k", np.asarray(A, dtype=float), vals) - target.at(t)
    return float(np.sqrt(2.0 * np.sum(w * resid**2)))


@dataclass(frozen=True)
class ApproxProblem:
    R: np.ndarray  # (M, M, M, M)
    B: np.ndarray  # (M, M)
    Phi0: np.ndarray  # (M, M)
    K0: float
    cutoff: float


def build_problem(phi, target, c, quad=QuadratureSpec()):
    return ApproxProblem(
        R=compute_R(phi, c, quad),
        B=compute_B(phi, target, c, quad),
        Phi0=phi_eval(phi, 0.0),
        K0=float(target.at(0.0)),
        cutoff=float(c),
    )


def project_psd(S):
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped)."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    try:
        w, v = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    w = np.maximum(w, 0.0)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


@dataclass
class ApproxResult:
    A: np.ndarray
    l2_error: float
    iterations: int
    primal_residual: float
    dual_residual: float
    objective_trace: list = field(default_factory=list)


def _objective(problem, a_vec, R2):
    return 0.5 * a_vec @ (R2 @ a_vec) - problem.B.ravel() @ a_vec


def solve_compact_approx(
    problem,
    phi=None,
    target=None,
    quad=QuadratureSpec(),
    tol=1e-8,
    max_iter=100_000,
    rho=1.0,
    snapshot_every=100,
    peak_match=True,
):
    """ADMM solve of the PSD-constrained least-squares fit.

    Splits into an equality-constrained quadratic block (solved through a
    prefactored KKT system) and a PSD-cone block (eigenvalue clamp), with
    residual balancing of the penalty every 50 iterations.  ``phi`` and
    ``target`` are only needed to report the final L2 error; pass None to
    skip that (l2_error is then NaN).
    """
    m = problem.Phi0.shape[0]
    n = m * m
    f = problem.Phi0.ravel()
    b = problem.B.ravel()
    R2 = problem.R.reshape(n, n)
    R2 = 0.5 * (R2 + R2.T)

    def finish(A, iters, pri, dua, trace):
        err = np.nan
        if phi is not None and target is not None:
            err = l2_error(A, phi, target, problem.cutoff, quad)
        return ApproxResult(A, err, iters, pri, dua, trace)

    if problem.K0 == 0.0 and peak_match:
        if np.allclose(problem.Phi0, 0.0):
            return finish(np.zeros((m, m)), 0, 0.0, 0.0, [0.0])
        # PSD cone plus tr(A Phi0) = 0 with Phi0 positive definite forces A = 0.
        return finish(np.zeros((m, m)), 0, 0.0, 0.0, [0.0])
    if peak_match and np.allclose(problem.Phi0, 0.0):
        raise InfeasibleConstraint("Phi(0) = 0 but K(0) != 0")

    def factor(rho_):
        if not peak_match:
            return scipy.linalg.lu_factor(R2 + rho_ * np.eye(n))
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = R2 + rho_ * np.eye(n)
        kkt[:n, n] = f
        kkt[n, :n] = f
        return scipy.linalg.lu_factor(kkt)

    lu = factor(rho)
    z = np.zeros(n)
    u = np.zeros(n)
    trace = []
    a = z
    pri = dua = np.inf
    for it in range(1, max_iter + 1):
        if peak_match:
            rhs = np.empty(n + 1)
            rhs[:n] = b + rho * (z - u)
            rhs[n] = problem.K0
            a = scipy.linalg.lu_solve(lu, rhs)[:n]
        else:
            a = scipy.linalg.lu_solve(lu, b + rho * (z - u))
        z_prev = z
        z = project_psd((a + u).reshape(m, m)).ravel()
        u = u + a - z
        r_norm = np.linalg.norm(a - z)
        s_norm = rho * np.linalg.norm(z - z_prev)
        scale_pri = max(np.linalg.norm(a), np.linalg.norm(z), 1.0)
        scale_dua = max(np.linalg.norm(rho * u), 1.0)
        pri = r_norm / scale_pri
        dua = s_norm / scale_dua
        if it % snapshot_every == 0:
            trace.append(_objective(problem, z, R2))
        if pri < tol and dua < tol:
            break
        if it % 50 == 0:
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                u /= 2.0
                lu = factor(rho)
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                u *= 2.0
                lu = factor(rho)
    else:
        A_best = project_psd(z.reshape(m, m))
        raise MaxIterationsExceeded(
            f"ADMM did not converge in {max_iter} iterations "
            f"(primal {pri:.2e}, dual {dua:.2e})",
            best=finish(A_best, max_iter, pri, dua, trace),
        )

    A = project_psd(z.reshape(m, m))
    # The PSD projection can leave a tiny equality violation; a positive
    # rescale stays in the cone and restores tr(A Phi0) = K0 exactly.
    tr0 = float(f @ A.ravel())
    if peak_match and tr0 > 0.0 and problem.K0 > 0.0:
        A = A * (problem.K0 / tr0)
    trace.append(_objective(problem, A.ravel(), R2))
    return finish(A, it, pri, dua, trace)


def approximate_target(phi, target, c, quad=QuadratureSpec(), **opts):
    """Convenience wrapper: build the problem and solve it."""
    problem = build_problem(phi, target, c, quad)
    return solve_compact_approx(problem, phi=phi, target=target, quad=quad, **opts)
