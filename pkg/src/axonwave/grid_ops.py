"""Grids, finite-difference operators, and the weighted calculus.

Discretization
==============
Axial nodes ``x_i = i * dx`` with ``dx = length / n`` for ``i = 0..n-1``
(the last node sits one cell short of ``length``); angular nodes
``theta_j = j * 2*pi / m``. Two-component states are stored as separate
axial-major arrays ``u1, u2`` of shape ``(n,)`` or ``(n, m)``; the
flattened index of node ``(i, j)`` is ``i * m + j``.

Operators
=========
Variable-coefficient diffusion is assembled in divergence form
``(1/w1) D(w2 D u)`` by composing centered first differences, with
one-sided second-order rows at the ends and the boundary flux zeroed
(zero-flux closure). The composition produces the wide interior stencil

    [w2_{i+1} u_{i+2} - (w2_{i+1} + w2_{i-1}) u_i + w2_{i-1} u_{i-2}]
        / (4 dx^2 w1_i).

A compact conservative alternative (``w2`` at half nodes) sits behind the
``compact`` flag. Constant-radius tubes are also served by a plain
3-point second difference with mirror-ghost zero-flux rows, which is the
stencil used for constant-geometry time stepping and spectral work.

The full tube operator is

    (pi / r_int) * [axial divergence form (+) angular second difference]

which for ``rho = R`` reduces to ``(pi R^2 / r_int) (dxx + R^-2 dtt)``.

Inner products
==============
``weighted_inner`` implements the relaxation-weighted pairing

    <u, w> = integral (u1 conj(w1) + eps^-1 u2 conj(w2)) sqrt(g) dtheta dx

with trapezoid weights axially and the uniform sum angularly. For 1-d
states the angular integral contributes the factor 2*pi, so a 1-d state
and its axisymmetric extension have identical norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import shift as _ndshift

from .errors import InvalidParameterError, ShapeError
from .geometry import SurfaceProfile, eval_metric, make_constant

# ============================================================
# grids and fields
# ============================================================


@dataclass(frozen=True)
class Grid1D:
    """Uniform axial grid with n nodes on [0, length)."""

    n: int
    length: float

    def __post_init__(self):
        if self.n < 8:
            raise InvalidParameterError(f"need at least 8 axial nodes, got {self.n}")
        if self.length <= 0.0:
            raise InvalidParameterError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(self.n)


@dataclass(frozen=True)
class Grid2D:
    """Axial grid times m uniformly spaced angles on [0, 2*pi)."""

    axial: Grid1D
    m: int

    def __post_init__(self):
        if self.m < 4 or self.m % 2 != 0:
            raise InvalidParameterError(f"m must be even and >= 4, got {self.m}")

    @property
    def n(self) -> int:
        return self.axial.n

    @property
    def dx(self) -> float:
        return self.axial.dx

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.m

    @cached_property
    def thetas(self) -> np.ndarray:
        return self.dtheta * np.arange(self.m)


@dataclass
class Field1D:
    """Axisymmetric two-component state sampled on a Grid1D."""

    u1: np.ndarray
    u2: np.ndarray

    def copy(self) -> "Field1D":
        return Field1D(self.u1.copy(), self.u2.copy())


@dataclass
class Field2D:
    """Two-component state sampled on a Grid2D, axial-major."""

    u1: np.ndarray
    u2: np.ndarray

    def copy(self) -> "Field2D":
        return Field2D(self.u1.copy(), self.u2.copy())


def check_field(u, grid) -> None:
    """Raise ShapeError unless the field arrays match the grid."""
    want = (grid.n, grid.m) if isinstance(grid, Grid2D) else (grid.n,)
    for name, arr in (("u1", u.u1), ("u2", u.u2)):
        if arr.shape != want:
            raise ShapeError(f"{name} has shape {arr.shape}, grid wants {want}")


# ============================================================
# one-dimensional building blocks
# ============================================================


def first_derivative(grid: Grid1D) -> sp.csr_matrix:
    """Centered first difference with one-sided second-order end rows."""
    n, dx = grid.n, grid.dx
    d = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        d[i, i - 1] = -0.5
        d[i, i + 1] = 0.5
    d[0, 0], d[0, 1], d[0, 2] = -1.5, 2.0, -0.5
    d[n - 1, n - 1], d[n - 1, n - 2], d[n - 1, n - 3] = 1.5, -2.0, 0.5
    return (d / dx).tocsr()


def _zero_end_rows(n: int) -> sp.csr_matrix:
    keep = np.ones(n)
    keep[0] = keep[-1] = 0.0
    return sp.diags(keep).tocsr()


def composed_second_derivative(grid: Grid1D) -> sp.csr_matrix:
    """Unit-weight composition D(D u) with the boundary flux zeroed."""
    d1 = first_derivative(grid)
    return (d1 @ _zero_end_rows(grid.n) @ d1).tocsr()


def compact_second_derivative(grid: Grid1D) -> sp.csr_matrix:
    """Plain 3-point second difference, mirror-ghost zero-flux rows."""
    n, dx = grid.n, grid.dx
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    d = sp.diags([off, main, off], [-1, 0, 1]).tolil()
    d[0, 1] = 2.0
    d[n - 1, n - 2] = 2.0
    return (d / dx**2).tocsr()


def angular_second_difference(m: int, dtheta: float) -> sp.csr_matrix:
    """Periodic 3-point second difference on the circle."""
    main = -2.0 * np.ones(m)
    off = np.ones(m - 1)
    t = sp.diags([off, main, off], [-1, 0, 1]).tolil()
    t[0, m - 1] = 1.0
    t[m - 1, 0] = 1.0
    return (t / dtheta**2).tocsr()


# ============================================================
# assembled operators
# ============================================================


@dataclass
class AssembledOperator:
    """Sparse operator on flattened states plus provenance metadata."""

    matrix: sp.csr_matrix
    grid_shape: tuple
    geometry_digest: str
    includes_conductance: bool
    kind: str

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Matrix-vector product respecting the grid shape of ``values``."""
        if values.shape != self.grid_shape:
            if values.shape == (self.matrix.shape[1],):
                return self.matrix @ values
            raise ShapeError(
                f"operand shape {values.shape} does not match "
                f"operator grid shape {self.grid_shape}"
            )
        return (self.matrix @ values.ravel()).reshape(self.grid_shape)


def _divergence_form_1d(profile: SurfaceProfile, grid: Grid1D, compact: bool) -> sp.csr_matrix:
    metric = eval_metric(profile, grid.nodes)
    inv_w1 = sp.diags(1.0 / metric.w1)
    if not compact:
        d1 = first_derivative(grid)
        flux = _zero_end_rows(grid.n) @ sp.diags(metric.w2) @ d1
        return (inv_w1 @ d1 @ flux).tocsr()
    # conservative 3-point form, w2 at half nodes, zero flux past the ends;
    # end rows doubled (mirror-ghost scaling) so the operator is symmetric
    # under trapezoid weights and reduces exactly to the constant-tube stencil
    n, dx = grid.n, grid.dx
    half = profile.rho(grid.nodes[:-1] + 0.5 * dx) ** 3 / np.sqrt(
        1.0 + profile.rho1(grid.nodes[:-1] + 0.5 * dx) ** 2
    )
    lower = half / dx**2
    main = np.zeros(n)
    main[:-1] -= half / dx**2
    main[1:] -= half / dx**2
    a = sp.diags([lower, main, lower], [-1, 0, 1]).tolil()
    a[0, :2] *= 2.0
    a[n - 1, n - 2 :] *= 2.0
    return (inv_w1 @ a.tocsr()).tocsr()


def build_axial_operator(
    profile: SurfaceProfile, grid: Grid1D, compact: bool = False
) -> AssembledOperator:
    """Divergence-form axial operator ``(1/w1) D(w2 D u)`` on the axial grid."""
    return AssembledOperator(
        matrix=_divergence_form_1d(profile, grid, compact),
        grid_shape=(grid.n,),
        geometry_digest=profile.digest(),
        includes_conductance=False,
        kind="axial_divergence_compact" if compact else "axial_divergence",
    )


def build_angular_operator(grid: Grid2D, digest: str = "") -> AssembledOperator:
    """Angular second difference acting on full 2-d states."""
    t = angular_second_difference(grid.m, grid.dtheta)
    return AssembledOperator(
        matrix=sp.kron(sp.identity(grid.n), t, format="csr"),
        grid_shape=(grid.n, grid.m),
        geometry_digest=digest,
        includes_conductance=False,
        kind="angular",
    )


def assemble_laplace_beltrami(
    profile: SurfaceProfile,
    grid: Grid2D,
    r_int: float,
    compact: bool = False,
    include_conductance: bool = True,
) -> AssembledOperator:
    """Diffusion operator of the warped tube on flattened 2-d states.

    Returns ``(pi / r_int) * [kron(axial, I) + kron(I, dtt)]`` where the
    axial factor is the divergence form of ``build_axial_operator``. With
    ``include_conductance=False`` the membrane prefactor is dropped and
    the result is normalized by the reference conductance of the profile
    mean radius, which for a constant profile yields exactly
    ``dxx + R^-2 dtt``.
    """
    if r_int <= 0.0:
        raise InvalidParameterError(f"r_int must be positive, got {r_int}")
    ax = _divergence_form_1d(profile, grid.axial, compact)
    tt = angular_second_difference(grid.m, grid.dtheta)
    mat = sp.kron(ax, sp.identity(grid.m), format="csr") + sp.kron(
        sp.identity(grid.n), tt, format="csr"
    )
    if include_conductance:
        mat = (np.pi / r_int) * mat
    else:
        radius = float(np.mean(profile.rho(grid.axial.nodes)))
        mat = mat / radius**2
    return AssembledOperator(
        matrix=mat.tocsr(),
        grid_shape=(grid.n, grid.m),
        geometry_digest=profile.digest(),
        includes_conductance=include_conductance,
        kind="laplace_beltrami_compact" if compact else "laplace_beltrami",
    )


def assemble_standard_cylinder(
    grid: Grid2D,
    radius: float,
    r_int: float,
    include_conductance: bool = True,
) -> AssembledOperator:
    """Constant-radius tube operator with plain central differences.

    ``G (dxx + R^-2 dtt)`` with ``G = pi R^2 / r_int``; without the
    conductance the bare ``dxx + R^-2 dtt``. Both directions use compact
    3-point stencils (mirror-ghost zero-flux axially, periodic angularly).
    """
    if radius <= 0.0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    if r_int <= 0.0:
        raise InvalidParameterError(f"r_int must be positive, got {r_int}")
    xx = compact_second_derivative(grid.axial)
    tt = angular_second_difference(grid.m, grid.dtheta)
    mat = sp.kron(xx, sp.identity(grid.m), format="csr") + (1.0 / radius**2) * sp.kron(
        sp.identity(grid.n), tt, format="csr"
    )
    if include_conductance:
        mat = (np.pi * radius**2 / r_int) * mat
    return AssembledOperator(
        matrix=mat.tocsr(),
        grid_shape=(grid.n, grid.m),
        geometry_digest=make_constant(radius, grid.axial.length).digest(),
        includes_conductance=include_conductance,
        kind="standard_cylinder",
    )


@dataclass
class MovingOps:
    """First and second axial derivatives for the co-moving frame."""

    dzz: sp.csr_matrix
    dz: sp.csr_matrix
    grid: Grid1D


def moving_frame_operators(grid: Grid1D) -> MovingOps:
    """Compact second difference plus centered first difference."""
    return MovingOps(
        dzz=compact_second_derivative(grid),
        dz=first_derivative(grid),
        grid=grid,
    )


# ============================================================
# weighted inner products and norms
# ============================================================


def axial_quadrature(grid: Grid1D) -> np.ndarray:
    """Trapezoid weights on the axial nodes."""
    w = np.full(grid.n, grid.dx)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _area_weights(grid, profile: SurfaceProfile) -> np.ndarray:
    """sqrt(g) times quadrature weight per node; includes 2*pi for 1-d."""
    g1 = grid.axial if isinstance(grid, Grid2D) else grid
    wx = axial_quadrature(g1)
    sqrt_g = eval_metric(profile, g1.nodes).w1
    if isinstance(grid, Grid2D):
        return np.outer(wx * sqrt_g, np.full(grid.m, grid.dtheta))
    return 2.0 * np.pi * wx * sqrt_g


def weighted_inner(u, w, grid, eps: float, profile: SurfaceProfile):
    """Relaxation-weighted pairing of two states (conjugate-linear in w)."""
    if eps <= 0.0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    check_field(u, grid)
    check_field(w, grid)
    aw = _area_weights(grid, profile)
    total = np.sum(aw * (u.u1 * np.conj(w.u1) + (1.0 / eps) * u.u2 * np.conj(w.u2)))
    return total if np.iscomplexobj(total) else float(total)


def weighted_norm(u, grid, eps: float, profile: SurfaceProfile) -> float:
    val = weighted_inner(u, u, grid, eps, profile)
    return float(np.sqrt(np.real(val)))


def state_weight_vector(grid: Grid1D, eps: float, profile: SurfaceProfile) -> np.ndarray:
    """Diagonal weights for stacked 1-d states [u1; u2] of length 2n.

    Encodes the same pairing as ``weighted_inner`` on Field1D, so
    ``<a, b> = sum(W * a * conj(b))`` for stacked vectors a, b.
    """
    aw = _area_weights(grid, profile)
    return np.concatenate([aw, aw / eps])


def stacked_inner(a: np.ndarray, b: np.ndarray, weights: np.ndarray):
    """Pairing of stacked vectors under the diagonal weights."""
    return np.sum(weights * a * np.conj(b))


def norm_h21(u, lap: AssembledOperator, dz, grid, eps: float, profile: SurfaceProfile) -> float:
    """Second-order energy norm ``||(lap u1, dz u2)|| + ||u||``.

    ``lap`` should be a geometric (conductance-free) diffusion operator
    and ``dz`` the axial first derivative; both are applied discretely.
    """
    check_field(u, grid)
    lap_u1 = lap.apply(u.u1)
    dz_mat = dz.matrix if isinstance(dz, AssembledOperator) else dz
    if isinstance(grid, Grid2D):
        dz_u2 = dz_mat @ u.u2  # (n, n) @ (n, m)
        pair = Field2D(lap_u1, dz_u2)
    else:
        dz_u2 = dz_mat @ u.u2
        pair = Field1D(lap_u1, dz_u2)
    return weighted_norm(pair, grid, eps, profile) + weighted_norm(u, grid, eps, profile)


@dataclass
class NormOps:
    """Bundle of operators needed to evaluate the second-order norm."""

    lap: AssembledOperator
    dz: sp.csr_matrix
    grid: object
    profile: SurfaceProfile

    def h21(self, u, eps: float) -> float:
        return norm_h21(u, self.lap, self.dz, self.grid, eps, self.profile)

    def l2(self, u, eps: float) -> float:
        return weighted_norm(u, self.grid, eps, self.profile)


def make_norm_ops(grid, radius: float, r_int: float = 1.0) -> NormOps:
    """Geometric norm operators on the constant-radius reference tube.

    The reference tube fixes the measure sqrt(g) = radius regardless of
    the simulated geometry, matching the convention that warped states
    are measured in the straight-tube norms.
    """
    if isinstance(grid, Grid2D):
        lap = assemble_standard_cylinder(grid, radius, r_int, include_conductance=False)
        dz = first_derivative(grid.axial)
        profile = make_constant(radius, grid.axial.length)
    else:
        lap = AssembledOperator(
            matrix=compact_second_derivative(grid),
            grid_shape=(grid.n,),
            geometry_digest=make_constant(radius, grid.length).digest(),
            includes_conductance=False,
            kind="axial_geometric",
        )
        dz = first_derivative(grid)
        profile = make_constant(radius, grid.length)
    return NormOps(lap=lap, dz=dz, grid=grid, profile=profile)


# ============================================================
# field utilities
# ============================================================


def shift_field(u, h: float, grid):
    """Translate a field by ``h`` along the axis with cubic interpolation.

    Positive ``h`` moves content toward larger x. Values shifted in from
    beyond the ends are clamped to the boundary value. Accepts Field1D,
    Field2D, or bare arrays; returns the same type.
    """
    g1 = grid.axial if isinstance(grid, Grid2D) else grid
    cells = h / g1.dx

    def move(arr):
        if arr.ndim == 1:
            return _ndshift(arr, cells, order=3, mode="nearest")
        return _ndshift(arr, (cells, 0.0), order=3, mode="nearest")

    if isinstance(u, Field1D):
        return Field1D(move(u.u1), move(u.u2))
    if isinstance(u, Field2D):
        return Field2D(move(u.u1), move(u.u2))
    return move(np.asarray(u, dtype=float))


def angular_mean(arr: np.ndarray) -> np.ndarray:
    """Mean over the angular index of a 2-d nodal array."""
    if arr.ndim == 1:
        return arr
    return arr.mean(axis=1)


def odd_even_energy_split(arr: np.ndarray):
    """Fractions of squared mass on even and odd axial indices.

    A smooth field splits close to (1/2, 1/2); mass migrating onto one
    sublattice signals checkerboard decoupling of the wide stencil.
    """
    a = np.asarray(arr)
    e_even = float(np.sum(np.abs(a[0::2]) ** 2))
    e_odd = float(np.sum(np.abs(a[1::2]) ** 2))
    total = e_even + e_odd
    if total == 0.0:
        return 0.5, 0.5
    return e_even / total, e_odd / total
