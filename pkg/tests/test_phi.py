"""Unit tests for the basis correlation matrices (closed forms vs oracles)."""

import numpy as np
import pytest

from compactgp import compute_phi, make_basis, phi_eval, rank_dimension
from compactgp.errors import OrderOutOfRange, QuadratureNonConvergence
from compactgp.numutil import nsinc
from compactgp.phi import PolynomialEntry, phi_entry_values, phi_numeric_oracle

TAUS = np.linspace(0.0, 0.999, 41)


def test_nsinc_basics():
    assert nsinc(0.0) == 1.0
    # Exact zeros at nonzero integers, by construction.
    for k in [1, 2, 3, -1, -5]:
        assert nsinc(float(k)) == 0.0
    x = np.array([0.5, 1.5, 0.25])
    assert np.allclose(nsinc(x), np.sin(np.pi * x) / (np.pi * x), atol=1e-14)
    # Series region agrees with the direct ratio.
    x = 1e-5
    assert abs(nsinc(x) - np.sin(np.pi * x) / (np.pi * x)) < 1e-14


def test_polynomial_entry_00_is_triangular():
    # Hand derivation: 1/2 * integral_{-1}^{1-2 tau} 2 dx = 2 - 2 tau.
    phi = compute_phi(make_basis("polynomial", 1))
    assert np.allclose(phi.entry(0, 0)(TAUS), 2.0 - 2.0 * TAUS, atol=1e-14)


def test_polynomial_m2_cross_entry_is_zero():
    # Hand derivation: the odd symmetrized integrand integrates to exactly 0.
    phi = compute_phi(make_basis("polynomial", 2))
    assert np.all(phi.entry(0, 1)(TAUS) == 0.0)


def test_polynomial_entry_11_closed_form():
    # Hand derivation: integral_{-1}^{1-2t} x(x+2t) dx = 2/3 - 2t + 4/3 t^3.
    phi = compute_phi(make_basis("polynomial", 2))
    expected = 2.0 / 3.0 - 2.0 * TAUS + 4.0 / 3.0 * TAUS**3
    assert np.allclose(phi.entry(1, 1)(TAUS), expected, atol=1e-12)


def test_polynomial_degree_bound():
    for m in range(1, 7):
        phi = compute_phi(make_basis("polynomial", m))
        for e in phi.entries:
            assert isinstance(e, PolynomialEntry)
            assert e.degree <= 2 * m - 1


def test_fourier_entry_01_closed_form():
    # Hand derivation: the (0, 1) entry reduces to sin(2 pi tau) / (2 pi).
    phi = compute_phi(make_basis("fourier", 2))
    expected = np.sin(2.0 * np.pi * TAUS) / (2.0 * np.pi)
    assert np.allclose(phi.entry(0, 1)(TAUS), expected, atol=1e-14)


def test_fourier_phi_zero_is_exact_identity():
    for m in [1, 3, 6]:
        phi = compute_phi(make_basis("fourier", m))
        assert np.array_equal(phi_eval(phi, 0.0), np.eye(m))


def test_polynomial_phi_zero_is_monomial_gram():
    # Entry (i, j) at tau = 0 is integral_{-1}^{1} x^{i+j} dx.
    m = 4
    phi = compute_phi(make_basis("polynomial", m))
    expected = np.array(
        [
            [2.0 / (i + j + 1) if (i + j) % 2 == 0 else 0.0 for j in range(m)]
            for i in range(m)
        ]
    )
    assert np.allclose(phi_eval(phi, 0.0), expected, atol=1e-12)


def test_support_ends_at_one():
    for fam in ["fourier", "polynomial"]:
        phi = compute_phi(make_basis(fam, 3))
        assert np.array_equal(phi_eval(phi, 1.0), np.zeros((3, 3)))
        assert np.array_equal(phi_eval(phi, 2.5), np.zeros((3, 3)))
        vals = phi_entry_values(phi, np.array([1.0, 1.7]))
        assert np.all(vals == 0.0)


@pytest.mark.parametrize("family,order", [("fourier", 4), ("polynomial", 3)])
def test_closed_form_matches_numeric_oracle(family, order):
    basis = make_basis(family, order)
    phi = compute_phi(basis)
    taus = np.linspace(0.0, 1.0, 21)
    for i in range(order):
        for j in range(i, order):
            closed = phi.entry(i, j)(taus)
            numeric = np.array([phi_numeric_oracle(basis, i, j, t) for t in taus])
            assert np.max(np.abs(closed - numeric)) <= 1e-10


def test_numeric_oracle_is_symmetric_in_indices():
    basis = make_basis("fourier", 3)
    for t in [0.1, 0.45, 0.8]:
        a = phi_numeric_oracle(basis, 0, 2, t)
        b = phi_numeric_oracle(basis, 2, 0, t)
        assert abs(a - b) < 1e-12


def test_numeric_oracle_raises_on_tight_budget():
    basis = make_basis("fourier", 6)
    with pytest.raises(QuadratureNonConvergence):
        phi_numeric_oracle(basis, 0, 5, 0.173, tol=0.0, max_panels=4)


def test_rank_dimension_frozen_values():
    # Oracle values from an independent SVD of quadrature-sampled entries.
    fourier_ranks = [1, 3, 5, 7, 9, 11, 13, 15]
    poly_ranks = [1, 2, 4, 5, 7, 8, 10, 11]
    for m in range(1, 9):
        phi = compute_phi(make_basis("fourier", m))
        assert rank_dimension(phi) == fourier_ranks[m - 1]
        phi = compute_phi(make_basis("polynomial", m))
        assert rank_dimension(phi) == poly_ranks[m - 1]


def test_rank_dimension_grid_validation():
    phi = compute_phi(make_basis("fourier", 8))
    with pytest.raises(ValueError):
        rank_dimension(phi, grid_size=10)


def test_order_validation():
    with pytest.raises(OrderOutOfRange):
        make_basis("fourier", 0)
    with pytest.raises(OrderOutOfRange):
        make_basis("polynomial", 33)
    with pytest.raises(ValueError):
        make_basis("chebyshev", 3)
