"""Characteristic scales for traction- and flux-driven poroelastic problems.

A :class:`ScaleSet` carries the seven characteristic quantities that map one
benchmark between dimensional and nondimensional form, plus the dimensionless
constants (A, B) of the loading-scale relations

    flux loading:      u* = A mu_f s*^2 q*/(k* E),   p* = B mu_f s* q*/k*
    traction loading:  u* = A s* t*/E,               p* = B t*

and the characteristic time T* = time_factor * (A/B) * mu_f s*^2/(k* E).
``time_factor`` is 1 for the consolidation set.  The subsidence set stretches
time by the squared aspect ratio (W/H)^2 relative to the canonical A/B scale
(horizontal drainage over W versus vertical compaction over H), which is why
the factor is carried explicitly instead of being folded into A or B.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .errors import InvalidInput, SingularParameter

TRACTION = "traction"
FLUX = "flux"


@dataclass(frozen=True)
class DimensionalParams:
    """Dimensional material, geometry, and loading description of a problem.

    Geometry is either a single length ``L`` (consolidation) or a width/height
    pair ``W, H`` (subsidence).  Exactly one loading scale is used: traction
    ``t0`` [Pa] or boundary discharge ``q0`` [m/s].
    """

    E: float                    # Young's modulus [Pa]
    nu: float                   # Poisson's ratio
    mu_f: float                 # fluid viscosity [Pa s]
    k_star: float               # reference permeability [m^2]
    mu_kappa: float = 0.0       # mean log-permeability [ln m^2]
    L: Optional[float] = None   # layer thickness [m]
    W: Optional[float] = None   # domain width [m]
    H: Optional[float] = None   # domain height [m]
    t0: Optional[float] = None  # traction magnitude [Pa]
    q0: Optional[float] = None  # discharge magnitude [m/s]

    def __post_init__(self):
        if self.E <= 0 or self.mu_f <= 0 or self.k_star <= 0:
            raise InvalidInput("E, mu_f and k_star must be positive")
        if not 0.0 < self.nu < 0.5:
            raise SingularParameter("Poisson's ratio must lie in (0, 0.5)")


@dataclass(frozen=True)
class ScaleSet:
    """The characteristic scales that nondimensionalize one benchmark."""

    T_star: float   # time [s]
    s_star: float   # length [m]
    k_star: float   # permeability [m^2]
    u_star: float   # displacement [m]
    p_star: float   # pressure [Pa]
    t_star: float   # traction [Pa]
    q_star: float   # discharge [m/s]
    A: float
    B: float
    time_factor: float = 1.0

    def __post_init__(self):
        for name in ("T_star", "s_star", "k_star", "u_star", "p_star",
                     "t_star", "q_star"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleSet":
        return cls(**d)


def volume_compressibility(E: float, nu: float) -> float:
    """Oedometric (constrained) compressibility (1-2nu)(1+nu)/(E(1-nu))."""
    return (1.0 - 2.0 * nu) * (1.0 + nu) / (E * (1.0 - nu))


def consolidation_scales(params: DimensionalParams) -> ScaleSet:
    """Scales of the traction-driven consolidation benchmark.

    m_v is the coefficient of volume compressibility, c_v = k*/(mu_f m_v) the
    coefficient of consolidation; T* = L^2/c_v, u* = m_v L t0, p* = t0.
    """
    if params.t0 is None or params.L is None:
        raise InvalidInput("consolidation scales need a traction t0 and length L")
    if params.t0 <= 0 or params.L <= 0:
        raise InvalidInput("t0 and L must be positive")
    m_v = volume_compressibility(params.E, params.nu)
    c_v = params.k_star / (params.mu_f * m_v)
    L, t0 = params.L, params.t0
    return ScaleSet(
        T_star=L**2 / c_v,
        s_star=L,
        k_star=params.k_star,
        u_star=m_v * L * t0,
        p_star=t0,
        t_star=t0,
        # q* chosen so the nondimensional Darcy law keeps a unit coefficient
        q_star=params.k_star * t0 / (params.mu_f * L),
        A=m_v * params.E,
        B=1.0,
        time_factor=1.0,
    )


def subsidence_scales(params: DimensionalParams) -> ScaleSet:
    """Scales of the flux-driven subsidence benchmark (confined aquifer).

    m_v' = 2(1-2nu)(1+nu)/E, c_v' = k*/(mu_f m_v'); the time scale carries the
    aspect ratio: T* = (W/H) W^2/c_v'.  u* = m_v' mu_f W H q0/k*,
    p* = mu_f W q0/k*.  The stress scale t* is taken equal to p* (the problem
    has no applied traction; p* is the only stress-like scale available).
    """
    if params.q0 is None or params.W is None or params.H is None:
        raise InvalidInput("subsidence scales need a discharge q0 and geometry W, H")
    if params.q0 <= 0 or params.W <= 0 or params.H <= 0:
        raise InvalidInput("q0, W and H must be positive")
    E, nu, mu_f, k = params.E, params.nu, params.mu_f, params.k_star
    W, H, q0 = params.W, params.H, params.q0
    m_vp = 2.0 * (1.0 - 2.0 * nu) * (1.0 + nu) / E
    c_vp = k / (mu_f * m_vp)
    p_star = mu_f * W * q0 / k
    return ScaleSet(
        T_star=(W / H) * W**2 / c_vp,
        s_star=W,
        k_star=k,
        u_star=m_vp * mu_f * W * H * q0 / k,
        p_star=p_star,
        t_star=p_star,
        q_star=q0,
        A=m_vp * E * H / W,
        B=1.0,
        time_factor=(W / H) ** 2,
    )


def generic_scales(kind: str, A: float, B: float, params: DimensionalParams,
                   time_factor: float = 1.0) -> ScaleSet:
    """Scale set from caller-supplied dimensionless constants (A, B).

    ``kind`` selects the loading relation (``"traction"`` uses t0, ``"flux"``
    uses q0); the reference length is L for traction and W for flux problems.
    """
    if A <= 0 or B <= 0:
        raise InvalidInput("A and B must be positive")
    if time_factor <= 0:
        raise InvalidInput("time_factor must be positive")
    E, mu_f, k = params.E, params.mu_f, params.k_star
    if kind == TRACTION:
        if params.t0 is None or params.L is None:
            raise InvalidInput("traction scaling needs t0 and L")
        s, t0 = params.L, params.t0
        u_star = A * s * t0 / E
        p_star = B * t0
        t_star = t0
        q_star = k * p_star / (mu_f * s)
    elif kind == FLUX:
        if params.q0 is None or params.W is None:
            raise InvalidInput("flux scaling needs q0 and W")
        s, q0 = params.W, params.q0
        u_star = A * mu_f * s**2 * q0 / (k * E)
        p_star = B * mu_f * s * q0 / k
        t_star = p_star
        q_star = q0
    else:
        raise InvalidInput(f"unknown loading kind {kind!r}")
    return ScaleSet(
        T_star=time_factor * (A / B) * mu_f * s**2 / (k * E),
        s_star=s, k_star=k, u_star=u_star, p_star=p_star,
        t_star=t_star, q_star=q_star, A=A, B=B, time_factor=time_factor,
    )


_SCALE_FOR = {
    "u": "u_star",
    "p": "p_star",
    "t": "t_star",
    "q": "q_star",
    "time": "T_star",
    "length": "s_star",
}


def redimensionalize(values, scale: ScaleSet, which: str):
    """Multiply nondimensional values by the corresponding starred scale."""
    try:
        factor = getattr(scale, _SCALE_FOR[which])
    except KeyError:
        raise InvalidInput(f"unknown variable kind {which!r}; "
                           f"expected one of {sorted(_SCALE_FOR)}") from None
    return np.asarray(values, dtype=float) * factor


def nondimensionalize(values, scale: ScaleSet, which: str):
    """Inverse of :func:`redimensionalize`."""
    try:
        factor = getattr(scale, _SCALE_FOR[which])
    except KeyError:
        raise InvalidInput(f"unknown variable kind {which!r}; "
                           f"expected one of {sorted(_SCALE_FOR)}") from None
    return np.asarray(values, dtype=float) / factor
