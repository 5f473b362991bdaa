"""Small numeric helpers."""

import numpy as np

# Series switch-over for the normalized sinc below; see `nsinc`.
_SINC_SMALL = 1e-4


def nsinc(x):
    """Normalized sinc, sin(pi x)/(pi x), with sinc(0) = 1.

    Near zero the ratio is replaced by its Taylor expansion
    1 - (pi x)^2/6 + (pi x)^4/120 so the removable singularity never
    produces a 0/0.
    """
    x = np.asarray(x, dtype=float)
    px = np.pi * x
    small = np.abs(x) < _SINC_SMALL
    # Guard the denominator; the small entries are patched below.
    out = np.sin(px) / np.where(small, 1.0, px)
    if out.ndim == 0:
        if small:
            p = float(px)
            return 1.0 - p**2 / 6.0 + p**4 / 120.0
        # sin(pi k) for integer k is exactly zero in exact arithmetic; enforce
        # it so e.g. the Fourier correlation matrix at lag 0 is exactly the
        # identity.
        return 0.0 if x == np.round(x) else float(out)
    if np.any(small):
        p = px[small]
        out[small] = 1.0 - p**2 / 6.0 + p**4 / 120.0
    integer = (x == np.round(x)) & ~small
    if np.any(integer):
        out[integer] = 0.0
    return out
