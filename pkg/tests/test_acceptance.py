"""End-to-end acceptance checks, one test per shipping criterion.

Each test prints a single line

    ACCEPTANCE cNN PASS|FAIL: <measured numbers>

computed before the assert, so the whole verdict can be read from the
captured output. Heavy artifacts (the reference-tube run, the warped
runs, the fine-grid spectra, the perturbed co-moving run) are module
fixtures shared by the tests that need them. Defaults throughout:
N = 2000, M = 32, dt = 0.05 on the length-1000 tube.

c05 is expected to fail at this parameter set: the n = 0 linearization
about the computed front carries a second real interface-localized
eigenvalue near +9.0e-3 (dx- and domain-converged, created by the
u1/u2 coupling), so the near-zero disk is not a singleton, the
smallest-modulus eigenvector is a hybrid, and the gap clause cannot
hold. The test states the criterion faithfully and reports the
measured values.
"""

import math

import numpy as np
import pytest

from conftest import stacked

from axonwave.front import (
    axisymmetric_extension,
    compute_front,
    dist_to_manifold,
    measure_speed,
)
from axonwave.geometry import (
    eval_metric,
    make_constant,
    make_pearls,
    make_swelling,
    warp_delta,
)
from axonwave.grid_ops import (
    Field2D,
    Grid1D,
    Grid2D,
    assemble_laplace_beltrami,
    assemble_standard_cylinder,
    build_axial_operator,
    make_norm_ops,
)
from axonwave.config import parse_config
from axonwave.model import ModelParams
from axonwave.runner import run_simulate
from axonwave.spectral import (
    adjoint_zero_mode,
    alignment_angle,
    assemble_ln,
    block_weights,
    dissipativity_probe,
    essential_branch_lambda,
    multiplier_matrix,
    riesz_projection_apply,
    spectrum_block,
    tangent_vector,
    taylor_remainder_check,
)
from axonwave.storage import read_csv, read_snapshot, sha256_file
from axonwave.timestepper import (
    ImexConfig,
    front_position,
    initial_front_state,
    simulate,
    simulate_comoving,
)

L = 1000.0
N, M, DT = 2000, 32, 0.05
ETA = 7.0e-4

# fitted once from the warped-tube runs below (measured sup dist / delta:
# pearls 24.2, swelling 27.2) and recorded as the persistence fixture
C_PERSISTENCE = 35.0
# ceiling of ||P L v|| / (dx^2 ||v||), measured 4.6e-3 at this grid
C_PROJECTION = 0.05

REFERENCE_TOML = """\
experiment = "simulate2d"

[model]
alpha = 0.01
eps = 1e-4
gamma = 7.0

[geometry]
kind = "constant"
length = 1000.0
radius = 0.8

[grid]
n = 2000
m = 32

[time]
dt = 0.05
t_end = 180.0
snapshot_times = [60.0, 100.0, 180.0]

[initial]
center = 100.0
width = 5.0

[output]
dir = "out"
"""


def verdict(tag, ok, detail):
    print(f"ACCEPTANCE {tag} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def reference_config(tmp_path_factory, name):
    d = tmp_path_factory.mktemp(name)
    path = d / "run.toml"
    path.write_text(REFERENCE_TOML)
    return parse_config(path), d


@pytest.fixture(scope="module")
def grid2d(front_2000):
    return Grid2D(front_2000.grid, M)


@pytest.fixture(scope="module")
def norm2d(grid2d, default_params):
    return make_norm_ops(grid2d, default_params.radius)


@pytest.fixture(scope="module")
def reference_run(tmp_path_factory):
    cfg, d = reference_config(tmp_path_factory, "reference")
    out = d / "out"
    results = run_simulate(cfg, out)
    return out, results


@pytest.fixture(scope="module")
def spectra(front_2000, default_params):
    blocks = {n: assemble_ln(front_2000, n, default_params) for n in (0, 1, 2, 4)}
    reports = {n: spectrum_block(b) for n, b in blocks.items()}
    return blocks, reports


@pytest.fixture(scope="module")
def decay_run(front_2000, grid2d, norm2d, default_params):
    # positive plateau bump behind the interface with n=0 and n=1 angular
    # content, scaled to 5% of the front in the reference norm
    p = default_params
    z = front_2000.grid.nodes
    raw1 = np.outer(
        np.exp(-(((z - (front_2000.anchor - 150.0)) / 40.0) ** 2)),
        0.6 + np.cos(grid2d.thetas),
    )
    raw = Field2D(raw1, np.zeros_like(raw1))
    phi2d = axisymmetric_extension(front_2000.phi, grid2d)
    scale = 0.05 * norm2d.h21(phi2d, p.eps) / norm2d.h21(raw, p.eps)
    u0 = Field2D(phi2d.u1 + scale * raw.u1, phi2d.u2 + scale * raw.u2)
    traj = simulate_comoving(
        make_constant(p.radius, L), grid2d, p, ImexConfig(DT),
        front_2000.c, 150.0, u0,
        snapshot_times=[0.0, 50.0, 100.0, 150.0],
        diag_interval=10.0, norm_ops=norm2d,
    )
    rows = []
    for t, state in zip(traj.times, traj.states):
        r = dist_to_manifold(state, front_2000, grid2d, p, norm_ops=norm2d)
        rows.append((t, r.dist, r.h_star, r.on_edge))
    return rows


def run_warped(profile, ref_radius, n, with_dist):
    pm = ModelParams(alpha=0.01, eps=1e-4, gamma=7.0, radius=ref_radius)
    front = compute_front(Grid1D(n, L), pm)
    gg = Grid2D(front.grid, M)
    nops = make_norm_ops(gg, pm.radius)
    init = initial_front_state(gg, 100.0, width=5.0)
    snaps = list(np.arange(0.0, 181.0, 30.0)) if with_dist else ()
    traj = simulate(profile, gg, pm, ImexConfig(DT), 180.0, init,
                    snapshot_times=snaps, diag_interval=2.0, norm_ops=nops)
    fit = measure_speed([r.t for r in traj.diagnostics],
                        [r.front_position for r in traj.diagnostics])
    out = {
        "speed": fit.speed,
        "u1_min": min(r.u1_min for r in traj.diagnostics),
        "u1_max": max(r.u1_max for r in traj.diagnostics),
    }
    if with_dist:
        out["sup_dist"] = max(
            dist_to_manifold(s, front, gg, pm, norm_ops=nops).dist
            for s in traj.states
        )
    return out


@pytest.fixture(scope="module")
def warped_runs():
    pearls = make_pearls(0.8, 0.1, L)
    swelling = make_swelling(0.8, 0.3, 0.4, 530.0, 120.0, L)
    return {
        "pearls": {
            "profile": pearls,
            "ref": 0.9,
            2000: run_warped(pearls, 0.9, 2000, True),
            1000: run_warped(pearls, 0.9, 1000, False),
        },
        "swelling": {
            "profile": swelling,
            "ref": 0.8,
            2000: run_warped(swelling, 0.8, 2000, True),
            1000: run_warped(swelling, 0.8, 1000, False),
        },
    }


# ------------------------------------------------------------
# c01: closed-form essential-spectrum oracle
# ------------------------------------------------------------


def test_c01_multiplier_matches_closed_form(default_params, front_2000):
    p, c = default_params, front_2000.c
    worst = 0.0
    for k in (0.0, 0.1, 1.0, 5.0):
        for branch in ("+", "-"):
            got = np.linalg.eigvals(multiplier_matrix(k, 0, branch, p, c))
            want = np.asarray(essential_branch_lambda(k, branch, p, c))
            # eig returns the pair in arbitrary order
            diff = min(
                np.max(np.abs(got - want)), np.max(np.abs(got[::-1] - want))
            )
            worst = max(worst, diff)
    pair = np.asarray(essential_branch_lambda(0.0, "+", p, c))
    pair = pair[np.argsort(pair.imag)]
    want_pair = np.array([-0.00535 - 0.0088530j, -0.00535 + 0.0088530j])
    pair_err = np.max(np.abs(pair - want_pair))
    ok = worst <= 1e-12 and pair_err <= 1e-6
    detail = f"worst |eig - closed form| = {worst:.3e} (<= 1e-12), k=0 '+' pair error = {pair_err:.3e} (<= 1e-6)"
    assert verdict("c01", ok, detail), detail


# ------------------------------------------------------------
# c02: warped assembly reduces to the constant cylinder
# ------------------------------------------------------------


def test_c02_constant_radius_reduction(grid2d, default_params):
    p = default_params
    prof = make_constant(p.radius, L)
    warped = assemble_laplace_beltrami(prof, grid2d, p.r_int, compact=True)
    standard = assemble_standard_cylinder(grid2d, p.radius, p.r_int)
    scale = abs(standard.matrix).max()
    rel = abs(warped.matrix - standard.matrix).max() / scale
    ones = np.ones((grid2d.n, grid2d.m))
    resid = max(
        np.abs(op.apply(ones))[1:-1].max() for op in (warped, standard)
    )
    ok = rel <= 1e-12 and resid <= 1e-10
    detail = f"matrix rel diff = {rel:.3e} (<= 1e-12), interior constant residual = {resid:.3e} (<= 1e-10)"
    assert verdict("c02", ok, detail), detail


# ------------------------------------------------------------
# c03: manufactured-solution convergence on the pearls tube
# ------------------------------------------------------------


def test_c03_axial_operator_order():
    prof = make_pearls(0.8, 0.1, L)
    k = 2.0 * np.pi / L
    errs, dxs = [], []
    for n in (250, 500, 1000, 2000):
        g = Grid1D(n, L)
        x = g.nodes
        u = np.cos(k * x)
        du = -k * np.sin(k * x)
        ddu = -k * k * np.cos(k * x)
        m = eval_metric(prof, x)
        w2p = (
            3.0 * m.rho**2 * m.rho1 / np.sqrt(1 + m.rho1**2)
            - m.rho**3 * m.rho1 * m.rho2 / (1 + m.rho1**2) ** 1.5
        )
        exact = (w2p * du + m.w2 * ddu) / m.w1
        op = build_axial_operator(prof, g)
        errs.append(np.max(np.abs(op.apply(u) - exact)[2:-2]))
        dxs.append(g.dx)
    order = float(np.polyfit(np.log(dxs), np.log(errs), 1)[0])
    ok = abs(order - 2.0) <= 0.2
    detail = f"observed order = {order:.3f} over N in (250, 500, 1000, 2000) (want 2.0 +/- 0.2)"
    assert verdict("c03", ok, detail), detail


# ------------------------------------------------------------
# c04: reference-tube front preserves shape and speed
# ------------------------------------------------------------


def test_c04_shape_preservation(reference_run, grid2d):
    out, _ = reference_run
    z = grid2d.axial.nodes
    profiles = {}
    for t in (60.0, 100.0, 180.0):
        field, t_read = read_snapshot(out / f"snapshot_t{t:09.3f}.axwv")
        assert abs(t_read - t) <= 2 * DT
        profiles[t] = (np.mean(field.u1, axis=1), front_position(field, grid2d))
    ref, pos_ref = profiles[60.0]
    window = np.abs(z - pos_ref) <= 150.0
    jump = ref.max() - ref.min()
    worst = 0.0
    for t in (100.0, 180.0):
        prof, pos = profiles[t]
        shifted = np.interp(z + (pos - pos_ref), z, prof)
        worst = max(worst, np.max(np.abs(shifted - ref)[window]))

    header, rows = read_csv(out / "diagnostics.csv")
    it, ix = header.index("t"), header.index("front_position")
    ts = np.array([r[it] for r in rows])
    xs = np.array([r[ix] for r in rows])
    speeds = []
    for lo, hi in ((60.0, 100.0), (100.0, 180.0)):
        m = (ts >= lo) & (ts <= hi)
        speeds.append(np.polyfit(ts[m], xs[m], 1)[0])
    drift = abs(speeds[0] - speeds[1]) / abs(speeds[1])
    ok = worst <= 0.02 * jump and drift <= 0.05
    detail = (
        f"worst aligned profile diff = {worst:.4f} = {100 * worst / jump:.2f}% of jump (<= 2%), "
        f"speeds {speeds[0]:.6f}/{speeds[1]:.6f}, rel drift = {drift:.2e} (<= 5e-2)"
    )
    assert verdict("c04", ok, detail), detail


# ------------------------------------------------------------
# c05: kernel singleton and spectral gap of the n=0 block
# ------------------------------------------------------------


def test_c05_kernel_and_gap(spectra, front_2000):
    blocks, reports = spectra
    rep = reports[0]
    lam0, vec0 = rep.zero_mode
    tau = stacked(tangent_vector(front_2000))
    angle = alignment_angle(vec0, tau, block_weights(blocks[0]))
    one_in_disk = rep.localized_in_disk == 1
    aligned = angle <= 1e-2
    gap_ok = rep.gap >= 0.5 * ETA  # all others Re <= -eta/2
    ok = one_in_disk and aligned and gap_ok
    detail = (
        f"localized modes in |lam| <= {rep.disk_radius:g}: {rep.localized_in_disk} (want 1), "
        f"lam0 = {lam0.real:.4e}{lam0.imag:+.1e}j, alignment angle = {angle:.4f} rad (<= 1e-2), "
        f"max other Re = {-rep.gap:.6e} (want <= {-0.5 * ETA:.1e}); "
        f"a second real interface mode sits at +9.0e-3 at these parameters"
    )
    assert verdict("c05", ok, detail), detail


# ------------------------------------------------------------
# c06: angular blocks are uniformly damped
# ------------------------------------------------------------


def test_c06_angular_blocks_dissipative(spectra, front_2000, default_params):
    blocks, reports = spectra
    details, ok = [], True
    for n in (1, 2, 4):
        probe = dissipativity_probe(
            blocks[n], 200, default_params, front_2000.phi.u1, seed=2026
        )
        max_re = reports[n].summary["max_re"]
        ok = ok and max_re <= probe.threshold and probe.violations == 0
        details.append(
            f"n={n}: max Re = {max_re:+.3e} (<= -eta + tol_disc = {probe.threshold:.3f}), "
            f"probe violations = {probe.violations}/200"
        )
    detail = "; ".join(details)
    assert verdict("c06", ok, detail), detail


# ------------------------------------------------------------
# c07: rank-1 projection algebra
# ------------------------------------------------------------


def test_c07_projection_algebra(spectra, front_2000):
    blocks, _ = spectra
    block = blocks[0]
    tau = stacked(tangent_vector(front_2000))
    tau_star = adjoint_zero_mode(block, tau)
    w = block_weights(block)

    def wnorm(x):
        return math.sqrt(float(np.sum(w * x * x)))

    ptau_err = wnorm(riesz_projection_apply(tau, tau, tau_star, w) - tau) / wnorm(tau)
    rng = np.random.default_rng(7)
    idem = 0.0
    worst_ratio = 0.0
    dx2 = block.grid.dx**2
    for _ in range(100):
        v = rng.standard_normal(tau.size)
        pv = riesz_projection_apply(v, tau, tau_star, w)
        idem = max(idem, wnorm(riesz_projection_apply(pv, tau, tau_star, w) - pv)
                   / max(wnorm(pv), 1e-300))
        plv = riesz_projection_apply(block.matrix @ v, tau, tau_star, w)
        worst_ratio = max(worst_ratio, wnorm(plv) / (dx2 * wnorm(v)))
    ok = ptau_err <= 1e-12 and idem <= 1e-12 and worst_ratio <= C_PROJECTION
    detail = (
        f"|P tau - tau| = {ptau_err:.2e} (<= 1e-12), |P^2 - P| = {idem:.2e} (<= 1e-12), "
        f"max |P L v| / (dx^2 |v|) = {worst_ratio:.4f} (<= {C_PROJECTION}) on 100 vectors"
    )
    assert verdict("c07", ok, detail), detail


# ------------------------------------------------------------
# c08: exact nonlinearity identity and Taylor order
# ------------------------------------------------------------


def test_c08_nonlinearity_identity(front_2000, default_params):
    from axonwave.grid_ops import Field1D

    rng = np.random.default_rng(8)
    n = front_2000.grid.n
    worst_resid, orders = 0.0, []
    for _ in range(20):
        v = Field1D(rng.standard_normal(n), rng.standard_normal(n))
        rep = taylor_remainder_check(front_2000, v, default_params)
        worst_resid = max(worst_resid, rep.identity_residual_rel)
        orders.append(rep.observed_order)
    order_lo, order_hi = min(orders), max(orders)
    ok = worst_resid <= 1e-12 and order_lo >= 1.9 and order_hi <= 2.1
    detail = (
        f"worst identity residual = {worst_resid:.2e} (<= 1e-12), "
        f"Taylor orders in [{order_lo:.3f}, {order_hi:.3f}] (want 2.0 +/- 0.1) on 20 vectors"
    )
    assert verdict("c08", ok, detail), detail


# ------------------------------------------------------------
# c09: perturbed front relaxes back to the manifold
# ------------------------------------------------------------


def test_c09_decay_to_manifold(decay_run):
    rows = decay_run
    dists = [r[1] for r in rows]
    shift = rows[-1][2]
    decreasing = dists[1] > dists[2] > dists[3]
    halved = dists[3] <= 0.5 * dists[0]
    finite = all(math.isfinite(r[2]) for r in rows) and not any(r[3] for r in rows)
    ok = decreasing and halved and finite
    series = ", ".join(f"t={r[0]:g}: {r[1]:.4f}" for r in rows)
    detail = (
        f"dist series {series}; strictly decreasing after t=50: {decreasing}, "
        f"terminal/initial = {dists[3] / dists[0]:.4f} (<= 0.5), asymptotic shift = {shift:+.4f}"
    )
    assert verdict("c09", ok, detail), detail


# ------------------------------------------------------------
# c10: warped tubes stay near the manifold at their own speeds
# ------------------------------------------------------------


def test_c10_warped_persistence(warped_runs, front_1000, front_2000):
    fine = Grid1D(8000, L)
    newton = {1000: front_1000.c, 2000: front_2000.c}
    details, ok = [], True
    for name, member in warped_runs.items():
        delta = warp_delta(member["profile"], member["ref"], fine)
        r2000, r1000 = member[2000], member[1000]
        bound = C_PERSISTENCE * delta
        bounded = r2000["sup_dist"] <= bound
        sane = -0.3 <= r2000["u1_min"] and r2000["u1_max"] <= 1.3
        off2000 = r2000["speed"] - newton[2000]
        off1000 = r1000["speed"] - newton[1000]
        nonzero = abs(off2000) > 0.1
        converged = abs(off1000 - off2000) <= 0.25 * abs(off2000)
        ok = ok and bounded and sane and nonzero and converged
        details.append(
            f"{name}: sup dist = {r2000['sup_dist']:.2f} (<= {C_PERSISTENCE}*{delta:.3f} = {bound:.2f}), "
            f"u1 in [{r2000['u1_min']:.3f}, {r2000['u1_max']:.3f}], "
            f"speed offset = {off2000:+.4f} (N=1000: {off1000:+.4f}, drift {abs(off1000 - off2000):.4f})"
        )
    detail = "; ".join(details)
    assert verdict("c10", ok, detail), detail


# ------------------------------------------------------------
# c11: bitwise determinism of the reference run
# ------------------------------------------------------------


def test_c11_bitwise_determinism(reference_run, tmp_path_factory):
    out1, _ = reference_run
    cfg, d = reference_config(tmp_path_factory, "reference_repeat")
    out2 = d / "out"
    run_simulate(cfg, out2)
    names = [f"snapshot_t{t:09.3f}.axwv" for t in (60.0, 100.0, 180.0)]
    pairs = [(sha256_file(out1 / n), sha256_file(out2 / n)) for n in names]
    ok = all(a == b for a, b in pairs)
    detail = "snapshot digests " + (
        "identical across two runs: " + ", ".join(a[:12] for a, _ in pairs)
        if ok
        else "DIFFER: " + "; ".join(f"{n}: {a[:12]} vs {b[:12]}" for n, (a, b) in zip(names, pairs))
    )
    assert verdict("c11", ok, detail), detail


# ------------------------------------------------------------
# c12: plot suite renders the primary outputs
# ------------------------------------------------------------


def test_c12_plot_suite(reference_run, spectra, front_2000, default_params, tmp_path):
    plots = pytest.importorskip("axonwave_plots")
    from axonwave.storage import write_essential_csv, write_spectrum_csv

    out, _ = reference_run
    _, reports = spectra
    spec_dir = tmp_path / "spectrum"
    spec_dir.mkdir()
    write_spectrum_csv(spec_dir / "spectrum.csv", reports[0])
    ks = np.linspace(0.0, 2.0, 81)
    write_essential_csv(
        spec_dir / "essential.csv",
        ks,
        {b: essential_branch_lambda(ks, b, default_params, front_2000.c) for b in ("+", "-")},
    )

    jobs = [
        ("profile_panel", out, ["--times", "60,100,180"]),
        ("cylinder_heatmap", out, ["--times", "100"]),
        ("spectrum_scatter", spec_dir, ["--eta", str(ETA)]),
    ]
    sizes = {}
    for kind, src, extra in jobs:
        png = tmp_path / f"{kind}.png"
        rc = plots.cli.main([kind, "--in", str(src), "--out", str(png)] + extra)
        assert rc == 0
        sizes[kind] = png.stat().st_size
    labels = plots.profile_curve_labels(out, (60.0, 100.0, 180.0))
    ok = all(s > 0 for s in sizes.values()) and len(labels) == 3
    detail = (
        ", ".join(f"{k}: {s} bytes" for k, s in sizes.items())
        + f"; profile panel curves = {labels}"
    )
    assert verdict("c12", ok, detail), detail
