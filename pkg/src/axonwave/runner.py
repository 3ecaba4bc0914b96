"""Experiment drivers: each takes a RunConfig, fills an output
directory, and returns the manifest that records what was produced.

Runs are self-contained: anything a command needs (such as the
reference front for spectra or distances) is computed inside the run
unless the caller passes a precomputed one. Sweeps fan out over the
three standard geometries, reusing one reference front per distinct
reference radius, and aggregate a comparison table; individual run
failures are recorded without aborting the sweep.
"""

from __future__ import annotations

import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config_data
from .errors import ConfigError, FrontNotFoundError
from .front import (
    FrontProfile,
    axisymmetric_extension,
    compute_front,
    dist_to_manifold,
    measure_speed,
)
from .geometry import warp_delta
from .grid_ops import Grid1D, Grid2D, make_norm_ops, shift_field
from .model import (
    DerivedConstants,
    decay_rate_eta_prime,
    effective_diffusivity,
    rest_state_upper,
)
from .spectral import (
    adjoint_zero_mode,
    alignment_angle,
    assemble_ln,
    block_weights,
    dissipativity_probe,
    essential_branch_lambda,
    spectrum_block,
    tangent_vector,
)
from .storage import (
    grid_hash,
    nan_to_none,
    read_snapshot,
    snapshot_nbytes,
    write_comparison_csv,
    write_diagnostics_csv,
    write_distance_csv,
    write_essential_csv,
    write_front_csv,
    write_manifest,
    write_snapshot,
    write_spectrum_csv,
)
from .timestepper import (
    front_position,
    initial_front_state,
    resample_field,
    simulate,
)


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot_name(t: float) -> str:
    return f"snapshot_t{t:09.3f}.axwv"


def build_initial_state(cfg: RunConfig, front: FrontProfile | None = None):
    """Initial 2-d state per the [initial] section.

    ``snapshot`` resamples a stored state onto the run grid (the domain
    length is taken from the config; the format does not store it);
    ``front`` places the reference front profile at the requested
    center.
    """
    if cfg.initial_kind == "snapshot":
        field, _ = read_snapshot(cfg.initial_path)
        n, m = field.u1.shape
        src = Grid2D(Grid1D(n, cfg.grid.axial.length), m)
        return resample_field(field, src, cfg.grid)
    if cfg.initial_kind == "front":
        if front is None:
            front = compute_front(cfg.grid.axial, cfg.params, cfg.front_opts)
        ext = axisymmetric_extension(front.phi, cfg.grid)
        h = cfg.initial_center - front_position(front.phi, cfg.grid.axial)
        return shift_field(ext, h, cfg.grid)
    return initial_front_state(
        cfg.grid, cfg.initial_center, cfg.initial_width, cfg.initial_kind
    )


def _speed_from_diags(diags):
    try:
        fit = measure_speed(
            [r.t for r in diags], [r.front_position for r in diags]
        )
        return fit.speed
    except (FrontNotFoundError, ValueError):
        return math.nan


def run_simulate(cfg: RunConfig, out_dir=None, front: FrontProfile | None = None) -> dict:
    """Lab-frame run: snapshots at the requested times plus diagnostics."""
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir or cfg.out_dir)
    init = build_initial_state(cfg, front)
    traj = simulate(
        cfg.profile,
        cfg.grid,
        cfg.params,
        cfg.imex,
        cfg.t_end,
        init,
        snapshot_times=cfg.snapshot_times,
    )
    files = []
    for t, state in zip(traj.times, traj.states):
        name = _snapshot_name(t)
        write_snapshot(state, t, out / name)
        if name not in files:
            files.append(name)
    write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
    files.append("diagnostics.csv")
    results = {
        "final_time": traj.final_time,
        "final_front_position": nan_to_none(
            front_position(traj.final_state, cfg.grid)
        ),
        "speed": nan_to_none(_speed_from_diags(traj.diagnostics)),
        "u1_min": float(min(r.u1_min for r in traj.diagnostics)),
        "u1_max": float(max(r.u1_max for r in traj.diagnostics)),
    }
    return write_manifest(
        out,
        cfg.echo,
        files,
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )


def run_front(cfg: RunConfig, out_dir=None) -> dict:
    """Construct the reference front and store it as CSV."""
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir or cfg.out_dir)
    front = compute_front(cfg.grid.axial, cfg.params, cfg.front_opts)
    write_front_csv(out / "front.csv", front.grid, front.phi)
    results = {
        "c": front.c,
        "anchor": front.anchor,
        "stage1_converged": front.stage1_converged,
        "refined": front.refined,
        "residual": front.residual,
        "residual_rel": front.residual_rel,
        "phi1_left": float(front.phi.u1[0]),
        "phi1_right": float(front.phi.u1[-1]),
    }
    return write_manifest(
        out,
        cfg.echo,
        ["front.csv"],
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )


def run_spectrum(
    cfg: RunConfig,
    out_dir=None,
    modes=None,
    seed: int | None = None,
    front: FrontProfile | None = None,
) -> dict:
    """Per-mode dense spectra, probes, and the closed-form branch export."""
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir or cfg.out_dir)
    modes = tuple(modes) if modes is not None else cfg.spectrum_modes
    seed = cfg.seed if seed is None else seed
    p = cfg.params
    if front is None:
        front = compute_front(cfg.grid.axial, p, cfg.front_opts)

    files = []
    lines = [
        f"front speed c = {front.c!r}",
        f"eta = {DerivedConstants.from_params(p).eta!r}",
    ]
    results = {"c": front.c, "modes": list(modes)}
    for n in modes:
        block = assemble_ln(front, n, p)
        report = spectrum_block(block, cfg.spectrum_sigma)
        name = f"spectrum_n{n}.csv"
        write_spectrum_csv(out / name, report)
        files.append(name)
        lines.append(
            f"n={n}: max Re = {report.summary['max_re']!r}, gap = {report.gap!r}, "
            f"windowed modes = {report.summary['window_count']}"
        )
        if n == 0:
            tau = tangent_vector(front)
            tau_vec = np.concatenate([tau.u1, tau.u2])
            weights = block_weights(block)
            tau_star = adjoint_zero_mode(block, tau)
            lam0, vec0 = report.zero_mode
            angle = alignment_angle(vec0, tau_vec, weights)
            beta = report.beta_localized
            results.update(
                {
                    "lambda0": [lam0.real, lam0.imag],
                    "gap_n0": report.gap,
                    "alignment_angle": angle,
                    "localized_in_disk": report.localized_in_disk,
                    "disk_radius": report.disk_radius,
                    "beta_localized": beta,
                }
            )
            lines.append(
                f"n=0 zero mode: lambda0 = {lam0!r}, |lambda0| = {abs(lam0)!r}, "
                f"alignment angle = {angle!r} rad"
            )
            lines.append(
                f"n=0 kernel disk: radius {report.disk_radius!r}, "
                f"localized modes inside = {report.localized_in_disk}"
            )
            if beta is not None:
                # A non-positive gap is reported as data: the block has
                # near-zero or growing localized modes besides the kernel.
                if beta > 0.0:
                    eta_p = decay_rate_eta_prime(p, beta)
                else:
                    eta_p = math.nan
                results["eta_prime"] = eta_p
                results["beta_over_eps"] = beta / p.eps
                lines.append(
                    f"n=0 localized gap beta = {beta!r}, eta' = min(eta, beta) = "
                    f"{eta_p!r}, beta/eps = {beta / p.eps!r}"
                )
                if beta <= 0.0:
                    lines.append(
                        "n=0 gap is not positive: localized spectrum reaches "
                        "the closed right half plane"
                    )
            adj_resid = float(
                np.linalg.norm(block.matrix.T @ (weights * tau_star))
                / np.linalg.norm(weights * tau_star)
            )
            lines.append(f"n=0 adjoint kernel residual = {adj_resid!r}")
        else:
            probe = dissipativity_probe(
                block, cfg.spectrum_samples, p, front.phi.u1, seed=seed
            )
            results[f"probe_n{n}"] = {
                "max_rayleigh": probe.max_rayleigh,
                "threshold": probe.threshold,
                "tol_disc": probe.tol_disc,
                "violations": probe.violations,
                "samples": probe.samples,
            }
            lines.append(
                f"n={n} probe: {probe.samples} samples, max Rayleigh = "
                f"{probe.max_rayleigh!r}, threshold (-eta + tol_disc) = "
                f"{probe.threshold!r}, tol_disc = {probe.tol_disc!r}, "
                f"violations = {probe.violations}"
            )

    ks = np.linspace(-10.0, 10.0, 401)
    branches = {
        "+": essential_branch_lambda(ks, "+", p, front.c),
        "-": essential_branch_lambda(ks, "-", p, front.c),
    }
    write_essential_csv(out / "essential_branches.csv", ks, branches)
    files.append("essential_branches.csv")

    (out / "spectrum_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    files.append("spectrum_summary.txt")
    return write_manifest(
        out,
        cfg.echo,
        files,
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )


def _distance_series(cfg: RunConfig, front: FrontProfile):
    """Simulate and measure dist-to-manifold at the configured times."""
    init = build_initial_state(cfg, front)
    traj = simulate(
        cfg.profile,
        cfg.grid,
        cfg.params,
        cfg.imex,
        cfg.t_end,
        init,
        snapshot_times=cfg.distance_times,
    )
    norm_ops = make_norm_ops(cfg.grid, cfg.params.radius)
    rows = []
    for t, state in zip(traj.times, traj.states):
        res = dist_to_manifold(
            state,
            front,
            cfg.grid,
            cfg.params,
            half_width=cfg.distance_half_width,
            norm=cfg.distance_norm,
            norm_ops=norm_ops,
        )
        rows.append((t, res.dist, res.h_star))
    return traj, rows


def run_distance(cfg: RunConfig, out_dir=None, front: FrontProfile | None = None) -> dict:
    """Distance-to-manifold series along a lab-frame trajectory."""
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir or cfg.out_dir)
    if front is None:
        front = compute_front(cfg.grid.axial, cfg.params, cfg.front_opts)
    traj, rows = _distance_series(cfg, front)
    write_distance_csv(out / "distance.csv", rows)
    write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
    files = ["distance.csv", "diagnostics.csv"]
    delta = (
        0.0
        if cfg.profile.kind == "constant"
        else warp_delta(cfg.profile, cfg.params.radius, cfg.grid.axial.nodes)
    )
    dists = [r[1] for r in rows]
    results = {
        "c": front.c,
        "delta": delta,
        "max_dist": max(dists),
        "final_dist": dists[-1],
        "final_shift": rows[-1][2],
        "dist_over_delta": (max(dists) / delta) if delta > 0 else None,
    }
    return write_manifest(
        out,
        cfg.echo,
        files,
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )


# ============================================================
# sweep
# ============================================================

STANDARD_GEOMETRIES = ("constant", "pearls", "swelling")


def _variant_data(cfg: RunConfig, geometry: dict) -> dict:
    """Config data for one sweep member: base run with geometry swapped."""
    initial = {k: v for k, v in cfg.echo["initial"].items() if v is not None}
    return {
        "experiment": "simulate2d",
        "model": {
            k: cfg.echo["model"][k] for k in ("alpha", "eps", "gamma", "cm", "r_int")
        },
        "geometry": geometry,
        "grid": dict(cfg.echo["grid"]),
        "time": dict(cfg.echo["time"]),
        "initial": initial,
        "front": dict(cfg.echo["front"]),
        "distance": dict(cfg.echo["distance"]),
    }


def standard_sweep_members(cfg: RunConfig):
    """The three stock geometries at the base config's length."""
    length = cfg.grid.axial.length
    geometries = {
        "constant": {"kind": "constant", "length": length, "radius": 0.8},
        "pearls": {"kind": "pearls", "length": length},
        "swelling": {"kind": "swelling", "length": length},
    }
    return [
        (name, parse_config_data(_variant_data(cfg, geo), Path(".")))
        for name, geo in geometries.items()
    ]


def _measure_member(cfg: RunConfig, out_dir: Path, front: FrontProfile) -> dict:
    """One sweep member: simulate, measure speed and distance, manifest."""
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir)
    traj, rows = _distance_series(cfg, front)
    files = []
    for t, state in zip(traj.times, traj.states):
        name = _snapshot_name(t)
        write_snapshot(state, t, out / name)
        if name not in files:
            files.append(name)
    write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
    write_distance_csv(out / "distance.csv", rows)
    files += ["diagnostics.csv", "distance.csv"]
    speed = _speed_from_diags(traj.diagnostics)
    final_pos = front_position(traj.final_state, cfg.grid)
    max_dist = max(r[1] for r in rows)
    results = {
        "speed": nan_to_none(speed),
        "final_front_position": nan_to_none(final_pos),
        "max_dist_to_manifold": max_dist,
        "u1_min": float(min(r.u1_min for r in traj.diagnostics)),
        "u1_max": float(max(r.u1_max for r in traj.diagnostics)),
    }
    write_manifest(
        out,
        cfg.echo,
        files,
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )
    return results


def _sweep_worker(args):
    name, cfg, out_dir, front = args
    results = _measure_member(cfg, Path(out_dir), front)
    return name, results


def run_sweep(cfg: RunConfig, out_dir=None, parallelism: int = 1) -> dict:
    """Run the standard geometry comparison and aggregate the results.

    Member failures are recorded in the sweep manifest and do not stop
    the other members; the comparison CSV contains the successful rows.
    """
    t0 = time.perf_counter()
    out = _ensure_dir(out_dir or cfg.out_dir)
    members = standard_sweep_members(cfg)

    dirs = [out / name for name, _ in members]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("sweep members must use distinct output directories")

    fronts = {}
    for _, member_cfg in members:
        radius = member_cfg.params.radius
        if radius not in fronts:
            fronts[radius] = compute_front(
                member_cfg.grid.axial, member_cfg.params, member_cfg.front_opts
            )

    jobs = [
        (name, member_cfg, str(out / name), fronts[member_cfg.params.radius])
        for name, member_cfg in members
    ]
    rows = []
    failures = {}
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(_sweep_worker, job): job[0] for job in jobs}
            for future, name in futures.items():
                try:
                    _, results = future.result()
                    rows.append((name, results))
                except Exception as exc:  # recorded, sweep continues
                    failures[name] = f"{type(exc).__name__}: {exc}"
    else:
        for job in jobs:
            try:
                _, results = _sweep_worker(job)
                rows.append((job[0], results))
            except Exception as exc:
                failures[job[0]] = f"{type(exc).__name__}: {exc}"
                traceback.print_exc()

    order = {name: i for i, (name, _) in enumerate(members)}
    rows.sort(key=lambda item: order[item[0]])
    comparison = [
        {
            "geometry": name,
            "speed": results["speed"],
            "final_front_position": results["final_front_position"],
            "max_dist_to_manifold": results["max_dist_to_manifold"],
        }
        for name, results in rows
    ]
    write_comparison_csv(out / "comparison.csv", comparison)
    results = {
        "members": {name: res for name, res in rows},
        "failures": failures,
        "fronts": {repr(radius): fr.c for radius, fr in fronts.items()},
    }
    return write_manifest(
        out,
        cfg.echo,
        ["comparison.csv"],
        time.perf_counter() - t0,
        cfg.profile.digest(),
        grid_hash(cfg.grid),
        results,
    )


def run_info(cfg: RunConfig) -> str:
    """Human-readable summary of the resolved config and derived scales."""
    p = cfg.params
    derived = DerivedConstants.from_params(p)
    g1 = cfg.grid.axial
    lines = [
        f"experiment: {cfg.kind}",
        f"geometry: {cfg.profile.kind} (length {g1.length}, digest {cfg.profile.digest()})",
        f"reference radius R = {p.radius}",
        f"grid: n = {g1.n}, m = {cfg.grid.m}, dx = {g1.dx!r}",
        f"time: dt = {cfg.imex.dt}, t_end = {cfg.t_end}, scheme = {cfg.imex.scheme.value}",
        f"conductance G = {derived.conductance!r}",
        f"diffusivity D = {derived.diffusivity!r}",
        f"eta = {derived.eta!r}",
        f"sharp-interface speed estimate = "
        f"{math.sqrt(2.0 * effective_diffusivity(p)) * (0.5 - p.alpha)!r}",
        f"snapshot bytes at this grid = {snapshot_nbytes(g1.n, cfg.grid.m)}",
    ]
    try:
        upper = rest_state_upper(p)
        lines.append(f"excited rest state = ({upper[0]!r}, {upper[1]!r})")
    except ValueError as exc:
        lines.append(f"excited rest state: {exc}")
    if cfg.profile.kind != "constant":
        delta = warp_delta(cfg.profile, p.radius, g1.nodes)
        lines.append(f"warp delta vs R = {p.radius}: {delta!r}")
    return "\n".join(lines)
