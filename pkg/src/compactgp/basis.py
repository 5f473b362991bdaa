"""Basis families used to generate compactly-supported kernels.

A basis is a finite set of functions on [-1, 1]; their pairwise symmetrized
autocorrelations form the matrix-valued function evaluated in
:mod:`compactgp.phi`.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OrderOutOfRange

MAX_ORDER = 32


class BasisFamily(str, Enum):
    POLYNOMIAL = "polynomial"
    FOURIER = "fourier"


@dataclass(frozen=True)
class BasisSpec:
    family: BasisFamily
    order: int


def make_basis(family, order):
    """Validate and build a basis specification.

    ``family`` may be a :class:`BasisFamily` or its string value.  ``order``
    is the number of basis functions M, 1 <= M <= 32.
    """
    family = BasisFamily(family)
    if not (1 <= order <= MAX_ORDER):
        raise OrderOutOfRange(f"order must be in [1, {MAX_ORDER}], got {order}")
    return BasisSpec(family, int(order))


def basis_function(spec, k, x):
    """Evaluate the k-th basis function at x (vectorized).

    Polynomial: x^k.  Fourier: e^{i pi k x} / sqrt(2) with zero-based k
    (complex-valued; the autocorrelations are real).
    """
    x = np.asarray(x, dtype=float)
    if spec.family is BasisFamily.POLYNOMIAL:
        return x**k
    return np.exp(1j * np.pi * k * x) / np.sqrt(2.0)
