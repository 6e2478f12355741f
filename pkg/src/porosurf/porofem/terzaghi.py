"""Series solution of one-dimensional consolidation, used as a solver oracle.

Nondimensional column of unit height, drained at z = 1, impervious at z = 0,
unit step load at t = 0:

    p(z, t) = sum_m (4/pi)/(2m+1) sin((2m+1) pi (1-z)/2) exp(-((2m+1) pi/2)^2 t)
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInput


def terzaghi_pressure(z, t, n_terms: int = 64):
    """Nondimensional excess pore pressure of the consolidation column.

    Accepts scalars or arrays broadcast against each other; ``t`` must be
    positive (the series does not converge pointwise at t = 0).
    """
    if n_terms < 1:
        raise InvalidInput("need at least one series term")
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidInput("the series oracle requires t > 0")
    m = np.arange(n_terms)
    a = (2 * m + 1) * (np.pi / 2.0)                       # (n_terms,)
    shape = np.broadcast_shapes(z.shape, t.shape)
    zb = np.broadcast_to(z, shape)[..., None]
    tb = np.broadcast_to(t, shape)[..., None]
    terms = (4.0 / np.pi) / (2 * m + 1) * np.sin(a * (1.0 - zb)) * np.exp(-a**2 * tb)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def terzaghi_settlement(t, n_terms: int = 64):
    """Nondimensional top-surface settlement (degree of consolidation).

    U(t) = 1 - sum_m 8/((2m+1)^2 pi^2) exp(-((2m+1) pi/2)^2 t); tends to 1.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidInput("the series oracle requires t > 0")
    m = np.arange(n_terms)
    a = (2 * m + 1) * (np.pi / 2.0)
    coeff = 8.0 / ((2 * m + 1) ** 2 * np.pi**2)
    out = 1.0 - (coeff * np.exp(-a**2 * t[..., None])).sum(axis=-1)
    return float(out) if out.ndim == 0 else out
