"""Kinetics, derived constants, and right-hand sides."""

import numpy as np
import pytest

from axonwave.errors import InvalidParameterError
from axonwave.geometry import make_constant, make_pearls
from axonwave.grid_ops import (
    Field1D,
    Field2D,
    Grid1D,
    Grid2D,
    moving_frame_operators,
)
from axonwave.model import (
    DerivedConstants,
    ModelParams,
    conductance,
    decay_rate_eta,
    decay_rate_eta_prime,
    effective_diffusivity,
    kinetics_f,
    kinetics_fprime,
    kinetics_fsecond,
    moving_linearization,
    nonlinear_remainder,
    rest_state_upper,
    rhs_moving,
    rhs_static,
)
from axonwave.timestepper import assemble_diffusion

ALPHA = 0.01


def base_params():
    return ModelParams(alpha=0.01, eps=1e-4, gamma=7.0)


# ------------------------------------------------------------
# kinetics
# ------------------------------------------------------------


def test_kinetics_roots():
    assert kinetics_f(0.0, ALPHA) == 0.0
    assert kinetics_f(ALPHA, ALPHA) == 0.0
    assert kinetics_f(1.0, ALPHA) == 0.0
    # sign pattern of the bistable cubic
    assert kinetics_f(0.005, ALPHA) < 0.0
    assert kinetics_f(0.5, ALPHA) > 0.0
    assert kinetics_f(1.5, ALPHA) < 0.0


def test_kinetics_derivatives_by_differencing():
    u = np.linspace(-0.5, 1.5, 41)
    errs = []
    hs = (1e-3, 5e-4, 2.5e-4)
    for h in hs:
        num = (kinetics_f(u + h, ALPHA) - kinetics_f(u - h, ALPHA)) / (2 * h)
        errs.append(np.max(np.abs(num - kinetics_fprime(u, ALPHA))))
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(order - 2.0) < 0.1

    num2 = (
        kinetics_fprime(u + 1e-4, ALPHA) - kinetics_fprime(u - 1e-4, ALPHA)
    ) / 2e-4
    assert np.max(np.abs(num2 - kinetics_fsecond(u, ALPHA))) < 1e-6


# ------------------------------------------------------------
# parameters and derived constants
# ------------------------------------------------------------


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        ModelParams(alpha=0.7, eps=1e-4, gamma=7.0)
    with pytest.raises(InvalidParameterError):
        ModelParams(alpha=0.01, eps=-1e-4, gamma=7.0)
    with pytest.raises(InvalidParameterError):
        ModelParams(alpha=0.01, eps=1e-4, gamma=7.0, r_int=0.0)


def test_conductance_and_diffusivity_closed_form():
    p = base_params()
    expected = np.pi * 0.8**2 / 0.1
    assert conductance(p) == pytest.approx(expected, rel=1e-15)
    assert effective_diffusivity(p) == pytest.approx(expected / p.cm, rel=1e-15)
    p2 = ModelParams(alpha=0.01, eps=1e-4, gamma=7.0, cm=2.0)
    assert effective_diffusivity(p2) == pytest.approx(expected / 2.0, rel=1e-15)


def test_decay_rates():
    p = base_params()
    # eps*gamma = 7e-4 is the smallest of the three candidate rates
    assert decay_rate_eta(p) == pytest.approx(7e-4, rel=1e-12)
    assert decay_rate_eta_prime(p, beta=1.0) == pytest.approx(7e-4, rel=1e-12)
    assert decay_rate_eta_prime(p, beta=1e-5) == pytest.approx(1e-5, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        decay_rate_eta_prime(p, beta=-1.0)
    dc = DerivedConstants.from_params(p)
    assert dc.eta == decay_rate_eta(p)
    assert dc.conductance == conductance(p)


def test_rest_state_upper_is_equilibrium():
    p = base_params()
    u1, u2 = rest_state_upper(p)
    # independent closed form of the upper nullcline intersection
    disc = (1.0 + p.alpha) ** 2 - 4.0 * (p.alpha + 1.0 / p.gamma)
    assert u1 == pytest.approx(0.5 * (1.01 + np.sqrt(disc)), rel=1e-14)
    assert kinetics_f(u1, p.alpha) - u2 == pytest.approx(0.0, abs=1e-14)
    assert u1 - p.gamma * u2 == pytest.approx(0.0, abs=1e-14)


def test_rest_state_missing_below_fold():
    with pytest.raises(InvalidParameterError):
        rest_state_upper(ModelParams(alpha=0.01, eps=1e-4, gamma=2.0))


# ------------------------------------------------------------
# right-hand sides
# ------------------------------------------------------------


def test_rest_states_are_fixed_points_of_rhs_static():
    p = base_params()
    g2 = Grid2D(Grid1D(64, 1000.0), 8)
    for prof in (make_constant(0.8, 1000.0), make_pearls(0.9, 0.12, 1000.0)):
        lap = assemble_diffusion(prof, g2, p)
        zero = Field2D(np.zeros((64, 8)), np.zeros((64, 8)))
        out = rhs_static(zero, lap, p)
        assert np.max(np.abs(out.u1)) == 0.0
        assert np.max(np.abs(out.u2)) == 0.0
        u1, u2 = rest_state_upper(p)
        rest = Field2D(np.full((64, 8), u1), np.full((64, 8), u2))
        out = rhs_static(rest, lap, p)
        assert np.max(np.abs(out.u1)) < 1e-12
        assert np.max(np.abs(out.u2)) < 1e-18


def test_rhs_static_matches_moving_at_zero_speed():
    p = base_params()
    n, m = 128, 8
    g2 = Grid2D(Grid1D(n, 1000.0), m)
    g1 = g2.axial
    lap = assemble_diffusion(make_constant(p.radius, 1000.0), g2, p)
    ops = moving_frame_operators(g1)
    rng = np.random.default_rng(3)
    u1 = np.cumsum(rng.standard_normal(n)) * 0.01  # smooth-ish profile
    u2 = np.cumsum(rng.standard_normal(n)) * 0.01
    out2 = rhs_static(
        Field2D(np.tile(u1[:, None], (1, m)), np.tile(u2[:, None], (1, m))), lap, p
    )
    out1 = rhs_moving(Field1D(u1, u2), 0.0, ops, p)
    # angularly constant data: every angular column equals the 1-d result
    assert np.max(np.abs(out2.u1 - out1.u1[:, None])) < 1e-10
    assert np.max(np.abs(out2.u2 - out1.u2[:, None])) < 1e-14


def test_nonlinear_remainder_is_quadratic():
    p = base_params()
    rng = np.random.default_rng(4)
    phi1 = rng.uniform(0.0, 1.0, 64)
    v = Field1D(rng.standard_normal(64), rng.standard_normal(64))
    ratios = []
    for h in (1e-2, 1e-3, 1e-4):
        scaled = Field1D(h * v.u1, h * v.u2)
        r = nonlinear_remainder(scaled, phi1, p)
        ratios.append(np.linalg.norm(r.u1) / h**2)
    spread = (max(ratios) - min(ratios)) / max(ratios)
    assert spread < 0.05


def test_linearization_identity_is_exact():
    # F(phi + v) - F(phi) = L v + N(v) holds to round-off for the cubic
    p = base_params()
    g = Grid1D(128, 1000.0)
    ops = moving_frame_operators(g)
    rng = np.random.default_rng(5)
    phi = Field1D(rng.uniform(0, 1, 128), rng.uniform(0, 0.2, 128))
    v = Field1D(0.1 * rng.standard_normal(128), 0.1 * rng.standard_normal(128))
    c = 3.1
    lin = moving_linearization(phi.u1, c, ops, p)
    f0 = rhs_moving(phi, c, ops, p)
    f1 = rhs_moving(Field1D(phi.u1 + v.u1, phi.u2 + v.u2), c, ops, p)
    nl = nonlinear_remainder(v, phi.u1, p)
    lhs = np.concatenate([f1.u1 - f0.u1, f1.u2 - f0.u2])
    rhs = lin @ np.concatenate([v.u1, v.u2]) + np.concatenate([nl.u1, nl.u2])
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_linearization_matches_directional_derivative():
    p = base_params()
    g = Grid1D(96, 1000.0)
    ops = moving_frame_operators(g)
    rng = np.random.default_rng(6)
    phi = Field1D(rng.uniform(0, 1, 96), rng.uniform(0, 0.2, 96))
    v = np.concatenate([rng.standard_normal(96), rng.standard_normal(96)])
    lin = moving_linearization(phi.u1, 2.0, ops, p)

    def fvec(x):
        f = rhs_moving(Field1D(x[:96], x[96:]), 2.0, ops, p)
        return np.concatenate([f.u1, f.u2])

    x0 = np.concatenate([phi.u1, phi.u2])
    h = 1e-6
    num = (fvec(x0 + h * v) - fvec(x0 - h * v)) / (2 * h)
    assert np.max(np.abs(num - lin @ v)) < 1e-7 * max(1.0, np.max(np.abs(num)))


def test_moving_linearization_mode_shift():
    # n >= 1 subtracts d n^2 / R^2 from the u1 diagonal only
    p = base_params()
    g = Grid1D(64, 1000.0)
    ops = moving_frame_operators(g)
    phi1 = np.linspace(0.0, 1.0, 64)
    l0 = moving_linearization(phi1, 3.0, ops, p, n=0)
    l2 = moving_linearization(phi1, 3.0, ops, p, n=2)
    d = effective_diffusivity(p)
    shift = (l0 - l2).toarray()
    expected = np.zeros_like(shift)
    expected[:64, :64] = np.eye(64) * (d * 4.0 / p.radius**2)
    assert np.max(np.abs(shift - expected)) < 1e-12 * d
    with pytest.raises(InvalidParameterError):
        moving_linearization(phi1, 3.0, ops, p, n=-1)
