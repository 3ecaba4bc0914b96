"""Traveling-front construction and distance to the front manifold.

The front is built in two stages on the straight reference tube:

1. Freezing: evolve the axisymmetric co-moving system while steering
   the frame speed until the profile stops moving (``simulate_moving``),
   then keep relaxing past speed convergence until the steady residual
   is small; the recovery tail equilibrates on the slow 1/(eps*gamma)
   time scale, long after the speed has settled, and Newton needs the
   tail roughly in place to be in its basin.
2. Newton: polish profile and speed together on the bordered system

       [ L(phi, c)   dF/dc ] [ dphi ]   [ -F(phi, c) ]
       [ w^T             0 ] [ dc   ] = [ -s(phi)    ],

   where L is the linearization, dF/dc = dz phi, and the phase
   condition s(phi) = <phi - phi_ref, dz phi_ref> (relaxation-weighted)
   pins the translation degree of freedom that makes L singular. A
   damped line search on ||F||^2 + s^2 guards each step.

   The bordered matrix is itself nearly singular on a truncated
   domain: the adjoint kernel carries the weight exp(c z / d), so it
   concentrates at the outflow boundary where both F and dz phi vanish,
   leaving one direction with a singular value at roundoff level (well
   separated from the rest of the spectrum). Steps therefore come from
   Levenberg-Marquardt damped normal equations; the damping freezes
   that direction, whose residual component is roundoff anyway, and
   leaves Newton-quality steps elsewhere.

If the Newton stage stalls the freezing result is returned with
``refined = False`` so callers can still proceed with a slightly less
accurate profile.

``dist_to_manifold`` measures how far a state is from the set of all
translates of the front: a coarse scan of the shift (one grid spacing
per candidate) brackets the minimum and golden-section refines it. All
norms are the straight-tube reference norms at the model radius, also
for states simulated on warped tubes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DegeneracyError,
    ExistenceError,
    FrontNotFoundError,
    InvalidParameterError,
    SolverError,
)
from .geometry import make_constant
from .grid_ops import (
    Field1D,
    Field2D,
    Grid1D,
    Grid2D,
    NormOps,
    make_norm_ops,
    moving_frame_operators,
    shift_field,
    state_weight_vector,
)
from .model import ModelParams, moving_linearization, rhs_moving
from .timestepper import (
    ImexConfig,
    Scheme,
    front_position,
    initial_front_state,
    resample_field,
    simulate_moving,
)


@dataclass(frozen=True)
class FrontOptions:
    """Knobs for the two construction stages."""

    anchor_frac: float = 0.6
    init_width: float = 6.0
    dt: float = 0.2
    scheme: Scheme = Scheme.IMEX_EULER
    t_max: float = 4000.0
    k_p: float = 0.5
    k_d: float = 0.3
    conv_tol: float = 1e-6
    conv_window: int = 100
    relax_rel_tol: float = 2e-5
    refine: bool = True
    newton_tol: float = 1e-8
    newton_max_iter: int = 25


@dataclass
class FrontProfile:
    """Converged traveling front on the straight reference tube."""

    grid: Grid1D
    phi: Field1D
    c: float
    anchor: float
    stage1_converged: bool
    refined: bool
    residual: float
    residual_rel: float


def initial_front_guess(grid: Grid1D, anchor: float, width: float = 6.0) -> Field1D:
    return initial_front_state(grid, anchor, width, kind="tanh")


def front_residual(phi: Field1D, c: float, grid: Grid1D, p: ModelParams) -> float:
    """Relaxation-weighted norm of the steady co-moving equations."""
    ops = moving_frame_operators(grid)
    f = rhs_moving(phi, c, ops, p)
    w = state_weight_vector(grid, p.eps, make_constant(p.radius, grid.length))
    vec = np.concatenate([f.u1, f.u2])
    return float(np.sqrt(np.sum(w * vec * vec)))


def _newton_refine(
    phi0: Field1D,
    c0: float,
    grid: Grid1D,
    p: ModelParams,
    tol_rel: float,
    max_iter: int,
):
    n = grid.n
    ops = moving_frame_operators(grid)
    wvec = state_weight_vector(grid, p.eps, make_constant(p.radius, grid.length))
    x_ref = np.concatenate([phi0.u1, phi0.u2])
    tau = np.concatenate([ops.dz @ phi0.u1, ops.dz @ phi0.u2])
    scale = make_norm_ops(grid, p.radius).h21(phi0, p.eps)

    def residual(x, c):
        f = rhs_moving(Field1D(x[:n], x[n:]), c, ops, p)
        return np.concatenate([f.u1, f.u2])

    def phase(x):
        return float(np.sum(wvec * (x - x_ref) * tau))

    def merit(f, s):
        return float(np.sum(wvec * f * f) + s * s)

    x = x_ref.copy()
    c = float(c0)
    pvec = wvec * tau
    lm_rel = 1e-7
    res_prev = None
    for _ in range(max_iter):
        f = residual(x, c)
        s = phase(x)
        res_w = math.sqrt(float(np.sum(wvec * f * f)))
        if res_w + abs(s) <= tol_rel * scale:
            return Field1D(x[:n].copy(), x[n:].copy()), c, res_w
        if res_prev is not None and res_w > 0.9 * res_prev:
            lm_rel = max(lm_rel / 10.0, 1e-15)
        res_prev = res_w
        lin = moving_linearization(x[:n], c, ops, p)
        dfdc = np.concatenate([ops.dz @ x[:n], ops.dz @ x[n:]])
        # Damped normal equations for the bordered system [[L, d], [p^T, 0]].
        # The border row and column are dense, so the gram matrix is kept in
        # sparse-plus-rank-2 form: Sherman-Morrison for the phase row, a
        # scalar Schur complement for the speed column (an explicit gram
        # would fill in to O(n^2)).
        row_abs = np.abs(lin) @ np.ones(2 * n) + np.abs(dfdc)
        norm_b = max(float(row_abs.max()), float(np.abs(pvec).sum()))
        mu = (lm_rel * norm_b) ** 2
        ksolve = spla.splu((lin.T @ lin + mu * sp.identity(2 * n)).tocsc()).solve
        kp = ksolve(pvec)

        def asolve(v):
            kv = ksolve(v)
            return kv - kp * (float(pvec @ kv) / (1.0 + float(pvec @ kp)))

        b1 = lin.T @ (-f) + pvec * (-s)
        q = lin.T @ dfdc
        ab1 = asolve(b1)
        aq = asolve(q)
        dc = (float(dfdc @ (-f)) - float(q @ ab1)) / (
            float(dfdc @ dfdc) + mu - float(q @ aq)
        )
        delta = np.concatenate([ab1 - dc * aq, [dc]])
        m0 = merit(f, s)
        step = 1.0
        for _ in range(9):
            x_try = x + step * delta[:-1]
            c_try = c + step * delta[-1]
            f_try = residual(x_try, c_try)
            if merit(f_try, phase(x_try)) < m0:
                x, c = x_try, c_try
                break
            step *= 0.5
        else:
            raise SolverError("front refinement: line search stalled")
    f = residual(x, c)
    res_w = math.sqrt(float(np.sum(wvec * f * f)))
    if res_w + abs(phase(x)) <= tol_rel * scale:
        return Field1D(x[:n].copy(), x[n:].copy()), c, res_w
    raise SolverError(f"front refinement: no convergence in {max_iter} iterations")


def compute_front(grid: Grid1D, p: ModelParams, opts: FrontOptions | None = None) -> FrontProfile:
    """Build the traveling front on the straight tube at the model radius."""
    opts = opts or FrontOptions()
    anchor = opts.anchor_frac * grid.length
    if not 0.0 < anchor < grid.length:
        raise InvalidParameterError(f"anchor {anchor} outside the domain")
    init = initial_front_guess(grid, anchor, opts.init_width)
    frozen = simulate_moving(
        grid,
        p,
        ImexConfig(opts.dt, opts.scheme),
        init,
        anchor=anchor,
        t_max=opts.t_max,
        k_p=opts.k_p,
        k_d=opts.k_d,
        conv_window=opts.conv_window,
        conv_tol=opts.conv_tol,
        residual_rel_tol=opts.relax_rel_tol,
    )
    phi, c = frozen.state, frozen.c
    refined = False
    residual = front_residual(phi, c, grid, p)
    if opts.refine:
        try:
            phi, c, residual = _newton_refine(
                phi, c, grid, p, opts.newton_tol, opts.newton_max_iter
            )
            refined = True
        except SolverError:
            if not frozen.converged:
                raise ExistenceError(
                    "front construction failed: freezing did not settle and "
                    "refinement stalled"
                )
    scale = make_norm_ops(grid, p.radius).h21(phi, p.eps)
    return FrontProfile(
        grid=grid,
        phi=phi,
        c=float(c),
        anchor=anchor,
        stage1_converged=frozen.converged,
        refined=refined,
        residual=residual,
        residual_rel=residual / scale,
    )


def axisymmetric_extension(phi: Field1D, grid: Grid2D) -> Field2D:
    """Tile an axisymmetric state around the tube."""
    if phi.u1.shape != (grid.n,):
        raise InvalidParameterError(
            f"profile has {phi.u1.shape[0]} nodes, grid wants {grid.n}"
        )
    return Field2D(
        np.tile(phi.u1[:, None], (1, grid.m)),
        np.tile(phi.u2[:, None], (1, grid.m)),
    )


# ============================================================
# speed measurement
# ============================================================


@dataclass(frozen=True)
class SpeedFit:
    """Least-squares fit of front position against time."""

    speed: float
    intercept: float
    rms_residual: float
    n_used: int
    t_range: tuple


def measure_speed(times, positions, t_min: float | None = None, min_points: int = 3) -> SpeedFit:
    """Fit position = speed * t + b over rows with t >= t_min.

    By default the first fifth of the time span is discarded as the
    transient. Rows with a nan position (no front yet) are dropped.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(positions, dtype=float)
    if t.shape != x.shape or t.ndim != 1:
        raise InvalidParameterError("times and positions must be 1-d and equal length")
    if t_min is None:
        t_min = t.min() + 0.2 * (t.max() - t.min())
    keep = np.isfinite(x) & (t >= t_min)
    if int(keep.sum()) < min_points:
        raise FrontNotFoundError(
            f"only {int(keep.sum())} usable front positions past t = {t_min:.6g}"
        )
    tk, xk = t[keep], x[keep]
    if np.ptp(tk) == 0.0:
        raise DegeneracyError("speed fit needs a spread of times")
    coef, res = np.polyfit(tk, xk, 1), None
    fit = coef[0] * tk + coef[1]
    res = float(np.sqrt(np.mean((xk - fit) ** 2)))
    return SpeedFit(
        speed=float(coef[0]),
        intercept=float(coef[1]),
        rms_residual=res,
        n_used=int(keep.sum()),
        t_range=(float(tk.min()), float(tk.max())),
    )


# ============================================================
# distance to the front manifold
# ============================================================


@dataclass
class DistResult:
    """Minimal shifted-front distance and where it was attained."""

    dist: float
    h_star: float
    on_edge: bool
    n_evals: int


def dist_to_manifold(
    u,
    front: FrontProfile,
    grid,
    p: ModelParams,
    *,
    half_width: float = 60.0,
    norm: str = "h21",
    norm_ops: NormOps | None = None,
    refine_rel_tol: float = 1e-3,
) -> DistResult:
    """min over h of ||u - Phi(. - h)|| in the straight-tube norms.

    The scan window is centered at the shift suggested by the front
    positions of ``u`` and ``Phi`` and sampled at one grid spacing;
    golden-section refinement narrows the bracket to ``refine_rel_tol``
    grid spacings. ``on_edge`` reports a minimum pinned to the window
    boundary (widen ``half_width`` in that case).
    """
    if norm not in ("h21", "l2"):
        raise InvalidParameterError(f"unknown norm {norm!r}")
    two_d = isinstance(grid, Grid2D)
    g1 = grid.axial if two_d else grid
    if norm_ops is None:
        norm_ops = make_norm_ops(grid, p.radius)

    phi = front.phi
    if front.grid != g1:
        if abs(front.grid.length - g1.length) > 1e-9 * g1.length:
            raise InvalidParameterError("front and state live on different domains")
        phi = resample_field(phi, front.grid, g1)
    ref = axisymmetric_extension(phi, grid) if two_d else phi

    pos_u = front_position(u, grid)
    pos_phi = front_position(phi, g1)
    center = 0.0 if math.isnan(pos_u) or math.isnan(pos_phi) else pos_u - pos_phi

    evals = 0

    def dist_at(h):
        nonlocal evals
        evals += 1
        moved = shift_field(ref, h, grid)
        diff = type(ref)(u.u1 - moved.u1, u.u2 - moved.u2)
        if norm == "h21":
            return norm_ops.h21(diff, p.eps)
        return norm_ops.l2(diff, p.eps)

    dx = g1.dx
    offsets = np.arange(-half_width, half_width + 0.5 * dx, dx)
    hs = center + offsets
    values = np.array([dist_at(h) for h in hs])
    i = int(np.argmin(values))
    on_edge = i == 0 or i == len(hs) - 1

    if on_edge:
        return DistResult(float(values[i]), float(hs[i]), True, evals)

    # golden-section on the bracketing triple
    a, b = hs[i - 1], hs[i + 1]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = dist_at(c1), dist_at(c2)
    tol = refine_rel_tol * dx
    while (b - a) > tol:
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = dist_at(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = dist_at(c2)
    h_best = c1 if f1 <= f2 else c2
    d_best = min(f1, f2, values[i])
    h_best = h_best if min(f1, f2) <= values[i] else hs[i]
    return DistResult(float(d_best), float(h_best), False, evals)
