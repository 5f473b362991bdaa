"""The matrix-valued correlation function generated by a basis family.

Each entry is the symmetrized autocorrelation of two basis functions,
rescaled to have support on [-1, 1]:

    entry(i, j)(tau) = 1/2 * integral_{-1}^{1 - 2 min(tau, 1)}
        [ phi_i*(x) phi_j(x + 2 tau) + phi_j(x) phi_i*(x + 2 tau) ] dx

For the Fourier family the integral has a closed form in terms of cosines
and the normalized sinc; for the polynomial family it is a polynomial in
tau of degree at most 2M-1, computed once by exact symbolic integration.
"""

from dataclasses import dataclass

import numpy as np
import sympy

from .basis import BasisFamily, BasisSpec, basis_function
from .errors import QuadratureNonConvergence
from .numutil import nsinc


@dataclass(frozen=True)
class FourierEntry:
    """Closed-form Fourier entry cos(s pi tau)(1-tau) sinc(d (1-tau))."""

    s: int  # m + n
    d: int  # n - m

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        inside = tau < 1.0
        one_m = 1.0 - tau
        val = np.cos(self.s * np.pi * tau) * one_m * np.asarray(nsinc(self.d * one_m))
        out = np.where(inside, val, 0.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PolynomialEntry:
    """Polynomial-in-tau entry; coeffs ascending, support cut at tau = 1."""

    coeffs: tuple

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        inside = tau < 1.0
        val = np.polynomial.polynomial.polyval(tau, np.asarray(self.coeffs))
        out = np.where(inside, val, 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def degree(self):
        return len(self.coeffs) - 1


@dataclass(frozen=True)
class PhiMatrix:
    basis: BasisSpec
    entries: tuple  # upper-triangular, keyed by _tri_index

    @property
    def order(self):
        return self.basis.order

    def entry(self, i, j):
        if i > j:
            i, j = j, i
        return self.entries[_tri_index(i, j, self.order)]


def _tri_index(i, j, m):
    # Row-major upper triangle, i <= j.
    return i * m - i * (i - 1) // 2 + (j - i)


def _polynomial_entries(m):
    x, tau = sympy.symbols("x tau")
    out = []
    for i in range(m):
        for j in range(i, m):
            integrand = x**i * (x + 2 * tau) ** j + x**j * (x + 2 * tau) ** i
            expr = sympy.integrate(integrand, (x, -1, 1 - 2 * tau)) / 2
            poly = sympy.Poly(sympy.expand(expr), tau)
            coeffs = [float(c) for c in reversed(poly.all_coeffs())]
            out.append(PolynomialEntry(tuple(coeffs)))
    return out


def compute_phi(basis):
    """Build the closed-form entry table for a basis specification."""
    m = basis.order
    if basis.family is BasisFamily.FOURIER:
        entries = [
            FourierEntry(i + j, j - i) for i in range(m) for j in range(i, m)
        ]
    else:
        entries = _polynomial_entries(m)
    return PhiMatrix(basis, tuple(entries))


def phi_eval(phi, tau):
    """Evaluate the full symmetric M x M matrix at a scalar lag tau >= 0."""
    m = phi.order
    out = np.zeros((m, m))
    if tau >= 1.0:
        return out
    for i in range(m):
        for j in range(i, m):
            v = phi.entry(i, j)(tau)
            out[i, j] = v
            out[j, i] = v
    return out


def phi_entry_values(phi, taus):
    """Evaluate every entry on an array of lags; returns shape (M, M, K)."""
    taus = np.asarray(taus, dtype=float)
    m = phi.order
    out = np.zeros((m, m) + taus.shape)
    for i in range(m):
        for j in range(i, m):
            v = phi.entry(i, j)(taus)
            out[i, j] = v
            out[j, i] = v
    return out


def _gauss_panels(a, b, panels, nodes=16):
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = (mids[:, None] + half[:, None] * xs[None, :]).ravel()
    wts = (half[:, None] * ws[None, :]).ravel()
    return pts, wts


def phi_numeric_oracle(basis, i, j, tau, tol=1e-12, max_panels=1 << 14):
    """Quadrature evaluation of a single correlation entry.

    Integrates the symmetrized autocorrelation integrand directly with
    composite Gauss-Legendre panels, doubling the panel count until two
    successive estimates agree to ``tol``.  Kept independent of the
    closed forms so it can serve as their oracle.
    """
    tau = float(tau)
    upper = 1.0 - 2.0 * min(tau, 1.0)
    if upper <= -1.0:
        return 0.0

    def integrand(x):
        fi = basis_function(basis, i, x)
        fj = basis_function(basis, j, x)
        fi_s = basis_function(basis, i, x + 2 * tau)
        fj_s = basis_function(basis, j, x + 2 * tau)
        return 0.5 * (np.conj(fi) * fj_s + fj * np.conj(fi_s))

    panels = 4
    pts, wts = _gauss_panels(-1.0, upper, panels)
    prev = np.sum(wts * integrand(pts))
    while panels <= max_panels:
        panels *= 2
        pts, wts = _gauss_panels(-1.0, upper, panels)
        cur = np.sum(wts * integrand(pts))
        if abs(cur - prev) < tol:
            return float(np.real(cur))
        prev = cur
    raise QuadratureNonConvergence(
        f"entry ({i},{j}) at tau={tau} did not reach tol={tol}"
    )


def rank_dimension(phi, grid_size=512, tol=1e-10):
    """Numerical dimension of the span of the distinct entry functions.

    Samples the M(M+1)/2 upper-triangular entries on a uniform grid in
    [0, 1) and counts singular values above ``tol`` times the largest.
    """
    m = phi.order
    n_entries = m * (m + 1) // 2
    if grid_size < n_entries:
        raise ValueError("grid_size must be at least M(M+1)/2")
    taus = np.linspace(0.0, 1.0, grid_size, endpoint=False)
    rows = np.empty((n_entries, grid_size))
    r = 0
    for i in range(m):
        for j in range(i, m):
            rows[r] = phi.entry(i, j)(taus)
            r += 1
    sv = np.linalg.svd(rows, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))
