"""Excitable-membrane kinetics and the governing right-hand sides.

The two-component system on a tube couples a cubic activator u1 to a
linear recovery variable u2:

    cm * du1/dt = lap u1 + f(u1) - u2
         du2/dt = eps * (u1 - gamma * u2)

where ``lap`` is the conductance-scaled diffusion operator of the tube
(for a straight tube of radius R it is G * (dxx + R^-2 dtt) with
G = pi R^2 / r_int) and

    f(u1) = -u1 (u1 - alpha) (u1 - 1).

In the frame moving with speed c the axisymmetric system gains
advection terms:

    du1/dt = d * dzz u1 + c * dz u1 + cm^-1 (f(u1) - u2)
    du2/dt = c * dz u2 + eps (u1 - gamma u2)

with the axial diffusivity d = G / cm. Linearizing about a profile
phi leaves the exact cubic remainder

    N(v) = (cm^-1 v1^2 (-v1 - 3 phi1 + alpha + 1), 0),

so F(phi + v) - F(phi) - L v = N(v) holds as an algebraic identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameterError
from .grid_ops import (
    AssembledOperator,
    Field1D,
    Field2D,
    MovingOps,
)


@dataclass(frozen=True)
class ModelParams:
    """Kinetic and membrane parameters.

    alpha   excitation threshold, in (0, 1/2)
    eps     recovery rate scale, > 0
    gamma   recovery feedback, > 0
    cm      membrane capacitance per area, > 0
    r_int   internal resistivity scale entering the conductance, > 0
    radius  reference tube radius, > 0
    """

    alpha: float
    eps: float
    gamma: float
    cm: float = 1.0
    r_int: float = 0.1
    radius: float = 0.8

    def __post_init__(self):
        checks = (
            ("alpha", self.alpha, 0.0 < self.alpha < 0.5),
            ("eps", self.eps, self.eps > 0.0),
            ("gamma", self.gamma, self.gamma > 0.0),
            ("cm", self.cm, self.cm > 0.0),
            ("r_int", self.r_int, self.r_int > 0.0),
            ("radius", self.radius, self.radius > 0.0),
        )
        for name, value, ok in checks:
            if not ok:
                raise InvalidParameterError(f"{name} out of range: {value}")


FIG_DEFAULTS = ModelParams(alpha=0.01, eps=1e-4, gamma=7.0, cm=1.0, r_int=0.1, radius=0.8)


def kinetics_f(u1, alpha: float):
    """Cubic source -u1 (u1 - alpha) (u1 - 1)."""
    return -u1 * (u1 - alpha) * (u1 - 1.0)


def kinetics_fprime(u1, alpha: float):
    """Derivative of the cubic: -3 u1^2 + 2 (1 + alpha) u1 - alpha."""
    return -3.0 * u1 * u1 + 2.0 * (1.0 + alpha) * u1 - alpha


def kinetics_fsecond(u1, alpha: float):
    return -6.0 * u1 + 2.0 * (1.0 + alpha)


def conductance(p: ModelParams) -> float:
    """Membrane conductance scale G = pi R^2 / r_int."""
    return np.pi * p.radius**2 / p.r_int


def effective_diffusivity(p: ModelParams) -> float:
    """Axial diffusivity d = G / cm of the reference tube."""
    return conductance(p) / p.cm


def decay_rate_eta(p: ModelParams) -> float:
    """Uniform dissipation rate min(alpha/cm, (1-alpha)/cm, eps*gamma).

    Uses the far-field slopes f'(0) = -alpha and f'(1) = alpha - 1 at the
    printed rest levels.
    """
    return float(min(p.alpha / p.cm, (1.0 - p.alpha) / p.cm, p.eps * p.gamma))


def decay_rate_eta_prime(p: ModelParams, beta: float) -> float:
    """Projected decay rate: eta further capped by the measured gap beta."""
    if beta <= 0.0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    return float(min(decay_rate_eta(p), beta))


@dataclass(frozen=True)
class DerivedConstants:
    """Scalar constants computed from the parameters once per run."""

    diffusivity: float
    conductance: float
    eta: float

    @classmethod
    def from_params(cls, p: ModelParams) -> "DerivedConstants":
        return cls(
            diffusivity=effective_diffusivity(p),
            conductance=conductance(p),
            eta=decay_rate_eta(p),
        )


def rest_state_upper(p: ModelParams):
    """Excited rest state: the upper intersection of f(u1) = u1 / gamma.

    Solves (u1 - alpha)(1 - u1) = 1/gamma on the upper branch; raises if
    the nullclines do not intersect there (gamma too small).
    """
    disc = (1.0 + p.alpha) ** 2 - 4.0 * (p.alpha + 1.0 / p.gamma)
    if disc <= 0.0:
        raise InvalidParameterError(
            f"no excited rest state: gamma = {p.gamma} is below the fold"
        )
    u1 = 0.5 * ((1.0 + p.alpha) + np.sqrt(disc))
    return float(u1), float(u1 / p.gamma)


# ============================================================
# right-hand sides
# ============================================================


def rhs_static(state: Field2D, lap: AssembledOperator, p: ModelParams) -> Field2D:
    """Laboratory-frame time derivative on the tube.

    ``lap`` must include the conductance so that lap u1 carries the full
    membrane current of the geometry.
    """
    du1 = (lap.apply(state.u1) + kinetics_f(state.u1, p.alpha) - state.u2) / p.cm
    du2 = p.eps * (state.u1 - p.gamma * state.u2)
    return Field2D(du1, du2)


def rhs_moving(state: Field1D, c: float, ops: MovingOps, p: ModelParams) -> Field1D:
    """Co-moving-frame time derivative for axisymmetric states."""
    d = effective_diffusivity(p)
    du1 = (
        d * (ops.dzz @ state.u1)
        + c * (ops.dz @ state.u1)
        + (kinetics_f(state.u1, p.alpha) - state.u2) / p.cm
    )
    du2 = c * (ops.dz @ state.u2) + p.eps * (state.u1 - p.gamma * state.u2)
    return Field1D(du1, du2)


def nonlinear_remainder(v, phi1: np.ndarray, p: ModelParams):
    """Exact cubic remainder of the linearization about phi1.

    Returns a field of the same type as ``v`` with second component zero.
    """
    r1 = v.u1 * v.u1 * (-v.u1 - 3.0 * phi1 + p.alpha + 1.0) / p.cm
    if isinstance(v, Field1D):
        return Field1D(r1, np.zeros_like(v.u2))
    return Field2D(r1, np.zeros_like(v.u2))


def moving_linearization(
    phi1: np.ndarray, c: float, ops: MovingOps, p: ModelParams, n: int = 0
) -> sp.csr_matrix:
    """Sparse linearization of the co-moving system about a profile.

    Block structure on stacked states [v1; v2]:

        [ d (dzz - n^2/R^2) + c dz + cm^-1 f'(phi1)    -cm^-1 ]
        [ eps                                    c dz - eps gamma ]

    The angular wavenumber ``n`` only shifts the diffusion diagonal. Built
    from the same discrete operators as ``rhs_moving`` so the Taylor
    identity against ``nonlinear_remainder`` is exact at n = 0.
    """
    if n < 0:
        raise InvalidParameterError(f"angular mode must be >= 0, got {n}")
    nn = ops.grid.n
    d = effective_diffusivity(p)
    eye = sp.identity(nn, format="csr")
    a11 = (
        d * ops.dzz
        + c * ops.dz
        + sp.diags(kinetics_fprime(phi1, p.alpha) / p.cm)
        - (d * n**2 / p.radius**2) * eye
    )
    a12 = (-1.0 / p.cm) * eye
    a21 = p.eps * eye
    a22 = c * ops.dz - (p.eps * p.gamma) * eye
    return sp.bmat([[a11, a12], [a21, a22]], format="csr")
