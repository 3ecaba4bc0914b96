"""Linearization about the front: blocks per angular mode, spectra,
far-field branches, the rank-1 projection, and probe utilities.

Angular Fourier mode ``n`` of the linearized co-moving system is the
two-component operator on the axis

    L_n = [ d (dzz - n^2/R^2) + c dz + f'(phi1)/cm      -1/cm ]
          [ eps                                  c dz - eps gamma ],

discretized with the same compact stencils as the simulation. The
far-field limits of L_0 are constant-coefficient, so their spectra are
the closed-form curves ``essential_branch_lambda``; on a truncated
domain these appear as eigenvalue arcs whose eigenvectors fill the
domain. Eigenvectors are classified by the relaxation-weighted
participation ratio

    PR(v) = (sum W |v|^2)^2 / (sum W * sum W |v|^4),

which is near 1 for domain-filling modes and of order (interface
width / domain length) for modes pinned to the front; PR > 0.5 counts
as essential-like, PR <= 0.5 as localized.

All pairings here are the relaxation-weighted inner product with the
straight-tube measure at the model radius; the adjoint of a matrix M
in that product is W^-1 M^H W with W the diagonal weight.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegeneracyError, InvalidParameterError
from .front import FrontProfile
from .geometry import make_constant
from .grid_ops import (
    Field1D,
    Grid1D,
    moving_frame_operators,
    state_weight_vector,
)
from .model import (
    ModelParams,
    effective_diffusivity,
    kinetics_fprime,
    kinetics_fsecond,
    moving_linearization,
    nonlinear_remainder,
    rhs_moving,
)

DENSE_CAP = 4096


# ============================================================
# far-field closed forms
# ============================================================


def _rest_level(branch: str) -> float:
    if branch == "+":
        return 0.0
    if branch == "-":
        return 1.0
    raise InvalidParameterError(f"branch must be '+' or '-', got {branch!r}")


def multiplier_matrix(k: float, n: int, branch: str, p: ModelParams, c: float) -> np.ndarray:
    """Constant-coefficient far-field symbol at axial wavenumber k.

    ``branch`` selects the rest level ahead of ('+', u1 = 0) or behind
    ('-', u1 = 1) the front.
    """
    if n < 0:
        raise InvalidParameterError(f"angular mode must be >= 0, got {n}")
    d = effective_diffusivity(p)
    fp = kinetics_fprime(_rest_level(branch), p.alpha)
    ick = 1j * c * k
    return np.array(
        [
            [-d * (k**2 + n**2 / p.radius**2) + ick + fp / p.cm, -1.0 / p.cm],
            [p.eps, ick - p.eps * p.gamma],
        ],
        dtype=complex,
    )


def essential_branch_lambda(k, branch: str, p: ModelParams, c: float):
    """Both quadratic roots of the n = 0 far-field symbol, closed form.

    Vectorized over k; returns an array of shape (2,) + shape(k) with
    the slow root first.
    """
    k = np.asarray(k, dtype=float)
    d = effective_diffusivity(p)
    fp = kinetics_fprime(_rest_level(branch), p.alpha)
    a = d * k**2 - fp / p.cm
    ick = 1j * c * k
    disc = np.sqrt((a - p.eps * p.gamma).astype(complex) ** 2 - 4.0 * p.eps / p.cm)
    lam_slow = ick - 0.5 * (a + p.eps * p.gamma - disc)
    lam_fast = ick - 0.5 * (a + p.eps * p.gamma + disc)
    return np.stack([lam_slow, lam_fast])


# ============================================================
# discrete blocks
# ============================================================


@dataclass
class LinearBlock:
    """Sparse discretization of one angular mode of the linearization."""

    n: int
    matrix: sp.csr_matrix
    grid: Grid1D
    c: float
    front_hash: str
    params: ModelParams


def _front_hash(front: FrontProfile) -> str:
    h = hashlib.sha256()
    h.update(front.phi.u1.tobytes())
    h.update(front.phi.u2.tobytes())
    h.update(np.float64(front.c).tobytes())
    return h.hexdigest()[:16]


def assemble_ln(front: FrontProfile, n: int, p: ModelParams) -> LinearBlock:
    """Linearization block for angular mode n on the front's grid."""
    ops = moving_frame_operators(front.grid)
    mat = moving_linearization(front.phi.u1, front.c, ops, p, n=n)
    return LinearBlock(
        n=n,
        matrix=mat,
        grid=front.grid,
        c=front.c,
        front_hash=_front_hash(front),
        params=p,
    )


def tangent_vector(front: FrontProfile) -> Field1D:
    """Discrete translation direction, minus the centered derivative."""
    ops = moving_frame_operators(front.grid)
    return Field1D(-(ops.dz @ front.phi.u1), -(ops.dz @ front.phi.u2))


def block_weights(block: LinearBlock) -> np.ndarray:
    """Stacked relaxation weights matching the block's grid and params."""
    return state_weight_vector(
        block.grid, block.params.eps, make_constant(block.params.radius, block.grid.length)
    )


def participation_ratio(vec: np.ndarray, weights: np.ndarray) -> float:
    """Weighted inverse concentration of |vec|^2; 1 = uniform, ~0 = point."""
    a2 = np.abs(vec) ** 2
    num = float(np.sum(weights * a2)) ** 2
    den = float(np.sum(weights)) * float(np.sum(weights * a2 * a2))
    if den == 0.0:
        return 0.0
    return num / den


def alignment_angle(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """Angle between two stacked vectors in the weighted inner product."""
    inner = np.sum(weights * a * np.conj(b))
    na = math.sqrt(float(np.real(np.sum(weights * a * np.conj(a)))))
    nb = math.sqrt(float(np.real(np.sum(weights * b * np.conj(b)))))
    cosang = min(1.0, abs(inner) / (na * nb))
    return math.acos(cosang)


def kernel_disk_radius(dx: float) -> float:
    """Radius of the near-zero disk used when counting kernel modes."""
    return max(10.0 * dx * dx, 1e-4)


@dataclass
class SpectrumReport:
    """Windowed dense spectrum of one block, sorted by Re descending."""

    n: int
    eigenvalues: np.ndarray
    participation: np.ndarray
    localized: np.ndarray
    gap: float
    zero_mode: tuple | None
    eta: float
    dx: float
    window_sigma: float
    total_count: int
    localized_in_disk: int = 0
    disk_radius: float = 0.0
    beta_localized: float | None = None
    summary: dict = field(default_factory=dict)


def spectrum_block(block: LinearBlock, sigma: float = 1.0) -> SpectrumReport:
    """Dense eigensolve of a block, reporting modes with Re >= -sigma.

    The near-zero eigenvalue (smallest modulus, n = 0 only) is reported
    with its eigenvector; the gap is taken over all other eigenvalues,
    windowed or not. Localized modes inside the near-zero disk are
    counted separately from the essential-like arcs.
    """
    size = block.matrix.shape[0]
    if size > DENSE_CAP:
        raise InvalidParameterError(
            f"block size {size} above the dense cap {DENSE_CAP}; use a coarser grid"
        )
    from .model import decay_rate_eta

    vals, vecs = sla.eig(block.matrix.toarray())
    weights = block_weights(block)
    dx = block.grid.dx

    zero_mode = None
    zero_idx = None
    if block.n == 0:
        zero_idx = int(np.argmin(np.abs(vals)))
        zero_mode = (complex(vals[zero_idx]), vecs[:, zero_idx].copy())

    others = np.delete(vals, zero_idx) if zero_idx is not None else vals
    gap = float(-np.max(np.real(others))) if others.size else math.nan

    keep = np.nonzero(np.real(vals) >= -sigma)[0]
    keep = keep[np.argsort(-np.real(vals[keep]))]
    kept_vals = vals[keep]
    pr = np.array([participation_ratio(vecs[:, i], weights) for i in keep])
    localized = pr <= 0.5

    radius = kernel_disk_radius(dx)
    in_disk = np.abs(kept_vals) <= radius
    localized_in_disk = int(np.sum(localized & in_disk))

    beta_localized = None
    mask = localized.copy()
    if zero_idx is not None:
        zero_pos = np.nonzero(keep == zero_idx)[0]
        if zero_pos.size:
            mask[zero_pos[0]] = False
    if np.any(mask):
        beta_localized = float(-np.max(np.real(kept_vals[mask])))

    return SpectrumReport(
        n=block.n,
        eigenvalues=kept_vals,
        participation=pr,
        localized=localized,
        gap=gap,
        zero_mode=zero_mode,
        eta=decay_rate_eta(block.params),
        dx=dx,
        window_sigma=sigma,
        total_count=size,
        localized_in_disk=localized_in_disk,
        disk_radius=radius,
        beta_localized=beta_localized,
        summary={
            "max_re": float(np.max(np.real(vals))),
            "window_count": int(keep.size),
        },
    )


# ============================================================
# adjoint zero mode and the rank-1 projection
# ============================================================


def adjoint_zero_mode(
    block_n0: LinearBlock, tau, mu_rel: float = 1e-6
) -> np.ndarray:
    """Quasi-null vector of the weighted adjoint, normalized to <tau, .>_W = 1.

    The adjoint in the relaxation-weighted product is W^-1 M^T W.  On a
    truncated domain its exact discrete kernel collapses onto a spike at
    the outflow boundary (the left null space carries the inverse of the
    exponential weight) and pairs to zero with the tangent, so inverse
    iteration converges to a useless vector.  Instead take the damped
    least-squares direction reachable from the tangent: with S = sqrt(W)
    and the balanced adjoint A = S^-1 M^T S, solve

        (A^T A + mu I) y = S tau,      tau_star = y / S.

    The damping mu = (mu_rel ||A||_inf)^2 sits between the boundary-spike
    singular value and the O(dx^2) truncation floor, so the result is the
    interface-supported near-kernel rather than the spike.  Raises a
    degeneracy error when the result is nearly orthogonal to the tangent
    (normalization impossible).
    """
    tau_vec = np.concatenate([tau.u1, tau.u2]) if isinstance(tau, Field1D) else np.asarray(tau)
    weights = block_weights(block_n0)
    s = np.sqrt(weights)
    ahat = (sp.diags(1.0 / s) @ block_n0.matrix.T @ sp.diags(s)).tocsc()
    mu = (mu_rel * spla.norm(ahat, np.inf)) ** 2
    gram = (ahat.T @ ahat + mu * sp.identity(ahat.shape[0])).tocsc()
    y = spla.splu(gram).solve(s * tau_vec)
    tau_star = y / s
    # degeneracy check on unit-norm representatives
    nt = math.sqrt(float(np.sum(weights * tau_vec**2)))
    ns = math.sqrt(float(np.sum(weights * tau_star**2)))
    inner = float(np.sum(weights * tau_vec * tau_star))
    if abs(inner) / (nt * ns) < 1e-8:
        raise DegeneracyError("adjoint mode is orthogonal to the tangent")
    return tau_star / inner


def riesz_projection_apply(v: np.ndarray, tau: np.ndarray, tau_star: np.ndarray, weights: np.ndarray):
    """Rank-1 spectral projection P v = <v, tau*> tau."""
    coef = np.sum(weights * v * np.conj(tau_star))
    return coef * tau


def riesz_complement_apply(v: np.ndarray, tau: np.ndarray, tau_star: np.ndarray, weights: np.ndarray):
    return v - riesz_projection_apply(v, tau, tau_star, weights)


# ============================================================
# probes
# ============================================================


@dataclass
class ProbeReport:
    """Rayleigh-quotient sampling of one block."""

    n: int
    samples: int
    max_rayleigh: float
    threshold: float
    tol_disc: float
    violations: int


def dissipativity_probe(
    block: LinearBlock,
    samples: int,
    p: ModelParams,
    phi1: np.ndarray,
    seed: int = 0,
    project=None,
) -> ProbeReport:
    """Sample Re <L_n v, v> / <v, v> with random complex vectors.

    The threshold is -eta + tol_disc with the discretization allowance
    tol_disc = 10 dx^2 sup |f''(phi1)|. An optional ``project`` callable
    is applied to each sample first (used for the complement probe at
    n = 0).
    """
    from .model import decay_rate_eta

    rng = np.random.default_rng(seed)
    weights = block_weights(block)
    size = block.matrix.shape[0]
    tol_disc = 10.0 * block.grid.dx**2 * float(
        np.max(np.abs(kinetics_fsecond(phi1, p.alpha)))
    )
    threshold = -decay_rate_eta(p) + tol_disc
    worst = -math.inf
    violations = 0
    for _ in range(samples):
        v = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        if project is not None:
            v = project(v)
        num = float(np.real(np.sum(weights * (block.matrix @ v) * np.conj(v))))
        den = float(np.real(np.sum(weights * v * np.conj(v))))
        q = num / den
        worst = max(worst, q)
        if q > threshold:
            violations += 1
    return ProbeReport(
        n=block.n,
        samples=samples,
        max_rayleigh=worst,
        threshold=threshold,
        tol_disc=tol_disc,
        violations=violations,
    )


@dataclass
class TaylorReport:
    """Remainder ladder of the nonlinearity about the front."""

    observed_order: float
    identity_residual_rel: float
    h_values: tuple
    remainders: tuple


def taylor_remainder_check(
    front: FrontProfile, v: Field1D, p: ModelParams, h_ladder=(1e-1, 1e-2, 1e-3)
) -> TaylorReport:
    """Order of ||F(phi + h v) - F(phi) - h L v|| in h, plus the exact
    remainder identity F(phi+v) - F(phi) - L v - N(v) = 0."""
    grid = front.grid
    ops = moving_frame_operators(grid)
    lin = moving_linearization(front.phi.u1, front.c, ops, p, n=0)
    vvec = np.concatenate([v.u1, v.u2])

    def fvec(state: Field1D) -> np.ndarray:
        f = rhs_moving(state, front.c, ops, p)
        return np.concatenate([f.u1, f.u2])

    f0 = fvec(front.phi)
    lv = lin @ vvec

    rems = []
    for h in h_ladder:
        state = Field1D(front.phi.u1 + h * v.u1, front.phi.u2 + h * v.u2)
        rems.append(float(np.linalg.norm(fvec(state) - f0 - h * lv)))
    hs = np.asarray(h_ladder, dtype=float)
    order = float(np.polyfit(np.log(hs), np.log(np.asarray(rems)), 1)[0])

    state1 = Field1D(front.phi.u1 + v.u1, front.phi.u2 + v.u2)
    nl = nonlinear_remainder(v, front.phi.u1, p)
    nlvec = np.concatenate([nl.u1, nl.u2])
    f1 = fvec(state1)
    resid = np.linalg.norm(f1 - f0 - lv - nlvec) / max(np.linalg.norm(f1), 1e-300)
    return TaylorReport(
        observed_order=order,
        identity_residual_rel=float(resid),
        h_values=tuple(float(h) for h in h_ladder),
        remainders=tuple(rems),
    )


def imex_split_matrices(phi1: np.ndarray, c: float, grid: Grid1D, p: ModelParams):
    """Implicit linear part and explicit Jacobian of the IMEX splitting.

    Their sum equals the full linearization; the split mirrors what the
    co-moving stepper treats implicitly vs explicitly, for spectral
    mapping checks against the one-step matrix.
    """
    ops = moving_frame_operators(grid)
    full = moving_linearization(phi1, c, ops, p, n=0)
    jac = sp.block_diag(
        [sp.diags(kinetics_fprime(phi1, p.alpha) / p.cm), sp.csr_matrix((grid.n, grid.n))],
        format="csr",
    )
    return (full - jac).tocsr(), jac
