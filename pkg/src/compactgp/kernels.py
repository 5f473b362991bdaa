"""Kernel types: trace-parameterized compact kernels and classical targets.

A compact kernel is K(t) = tr(A Phi(|t|/c)) for a PSD matrix A and cutoff
c; it is exactly zero for |t| >= c.  Target kernels are the classical
families (squared-exponential, Ornstein-Uhlenbeck, Matern 5/2, sinc) plus
the four standard Wendland polynomials used as fixed compact baselines.
"""

import json
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .basis import BasisFamily, make_basis
from .errors import DimensionMismatch
from .numutil import nsinc
from .phi import compute_phi, phi_entry_values, phi_eval

PSD_TOL = 1e-10


@dataclass(frozen=True)
class CompactKernel:
    basis: object
    phi: object
    A: np.ndarray
    cutoff: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        m = self.basis.order
        if A.shape != (m, m):
            raise DimensionMismatch(f"A must be {m}x{m}, got {A.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("A must be exactly symmetric; use make_compact_kernel")
        w = np.linalg.eigvalsh(A)
        if w[0] < -PSD_TOL * max(1.0, float(np.trace(A))):
            raise ValueError(f"A is not PSD: min eigenvalue {w[0]}")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        object.__setattr__(self, "A", A)

    @property
    def order(self):
        return self.basis.order

    @property
    def support(self):
        return self.cutoff

    def at(self, t):
        """Evaluate K(t) at scalar or array lags."""
        t = np.asarray(t, dtype=float)
        tau = np.abs(t) / self.cutoff
        if tau.ndim == 0:
            vals = phi_entry_values(self.phi, tau)
            return float(np.einsum("ij,ij", self.A, vals))
        # Entries are identically zero for tau >= 1; only evaluate inside.
        out = np.zeros(tau.shape)
        inside = tau < 1.0
        if np.any(inside):
            vals = phi_entry_values(self.phi, tau[inside])
            out[inside] = np.einsum("ij,ijk->k", self.A, vals)
        return out

    def k0(self):
        return self.at(0.0)


def make_compact_kernel(basis, A, cutoff, phi=None):
    """Build a compact kernel, symmetrizing A as (A + A^T)/2."""
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    if phi is None:
        phi = compute_phi(basis)
    return CompactKernel(basis, phi, A, float(cutoff))


def kernel_eval(kernel, t):
    """K(t) = tr(A Phi(|t|/c)); exactly zero outside the support."""
    return kernel.at(t)


def kernel_grad_A(kernel, t):
    """Gradient of K(t) with respect to A, i.e. Phi(|t|/c)."""
    tau = abs(float(t)) / kernel.cutoff
    return phi_eval(kernel.phi, tau)


class TargetFamily(str, Enum):
    SE = "se"
    OU = "ou"
    MATERN52 = "matern52"
    SINC = "sinc"
    WENDLAND1 = "wendland1"
    WENDLAND2 = "wendland2"
    WENDLAND3 = "wendland3"
    WENDLAND4 = "wendland4"


_WENDLAND = {
    TargetFamily.WENDLAND1,
    TargetFamily.WENDLAND2,
    TargetFamily.WENDLAND3,
    TargetFamily.WENDLAND4,
}


def _unit_target(family, u):
    """Unit-amplitude, unit-lengthscale kernel shape at u = |t|/l >= 0."""
    if family is TargetFamily.SE:
        return np.exp(-(u**2))
    if family is TargetFamily.OU:
        return np.exp(-u)
    if family is TargetFamily.MATERN52:
        s5 = np.sqrt(5.0)
        return np.exp(-s5 * u) * (1.0 + s5 * u + (5.0 / 3.0) * u**2)
    if family is TargetFamily.SINC:
        return np.asarray(nsinc(u))
    plus = np.maximum(1.0 - u, 0.0)
    if family is TargetFamily.WENDLAND1:
        return plus
    if family is TargetFamily.WENDLAND2:
        return plus**4 * (4.0 * u + 1.0)
    if family is TargetFamily.WENDLAND3:
        return plus**6 * (35.0 * u**2 + 18.0 * u + 3.0) / 3.0
    if family is TargetFamily.WENDLAND4:
        return plus**8 * (32.0 * u**3 + 25.0 * u**2 + 8.0 * u + 1.0)
    raise ValueError(f"unknown target family {family}")


@dataclass(frozen=True)
class TargetKernel:
    family: TargetFamily
    amplitude: float = 1.0  # variance sigma^2
    lengthscale: float = 1.0

    def __post_init__(self):
        if not (self.amplitude > 0 and self.lengthscale > 0):
            raise ValueError("amplitude and lengthscale must be positive")
        object.__setattr__(self, "family", TargetFamily(self.family))

    @property
    def support(self):
        # Wendland shapes vanish at u = 1, i.e. |t| = lengthscale.
        return self.lengthscale if self.family in _WENDLAND else np.inf

    def at(self, t):
        t = np.asarray(t, dtype=float)
        u = np.abs(t) / self.lengthscale
        out = self.amplitude * _unit_target(self.family, u)
        return float(out) if out.ndim == 0 else out

    def k0(self):
        return self.at(0.0)


def target_eval(kernel, t):
    return kernel.at(t)


def tensor_product_eval(kernel, x):
    """d-dimensional kernel value as a product of 1-D values per coordinate."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 0:
        raise DimensionMismatch("tensor product needs at least one coordinate")
    return float(np.prod(kernel.at(x)))


def eval_diffs(kernel, diffs):
    """Kernel values on an array of (signed) lag vectors.

    ``diffs`` has shape (...,) for 1-D inputs or (..., d) for d-D inputs;
    the d-D case takes the coordinatewise product (tensor-product kernel).
    """
    diffs = np.asarray(diffs, dtype=float)
    return kernel.at(diffs) if diffs.ndim <= 1 else np.prod(kernel.at(diffs), axis=-1)


# -- serialization ----------------------------------------------------------


def kernel_to_json(kernel, noise=0.0):
    """Kernel JSON document (full row-major A, plus the noise variance)."""
    return {
        "basis": kernel.basis.family.value,
        "order": kernel.order,
        "cutoff": kernel.cutoff,
        "A": [float(v) for v in np.asarray(kernel.A).ravel()],
        "noise": float(noise),
    }


def kernel_from_json(doc):
    """Load a (kernel, noise) pair; A is symmetrized as (A + A^T)/2."""
    basis = make_basis(BasisFamily(doc["basis"]), int(doc["order"]))
    m = basis.order
    A = np.asarray(doc["A"], dtype=float).reshape(m, m)
    kernel = make_compact_kernel(basis, A, float(doc["cutoff"]))
    return kernel, float(doc.get("noise", 0.0))


def save_kernel(path, kernel, noise=0.0):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(kernel_to_json(kernel, noise), fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_kernel(path):
    with open(path, encoding="utf-8") as fh:
        return kernel_from_json(json.load(fh))
