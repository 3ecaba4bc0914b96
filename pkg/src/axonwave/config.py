"""Run configuration: strict TOML parsing with explicit defaults.

Sections: [model], [geometry], [grid], [time], [output], plus the
optional experiment sections [initial], [front], [spectrum],
[distance] and a top-level ``experiment`` key. Unknown sections or
keys fail loudly; every resolved value (defaults included) lands in
``RunConfig.echo`` so the manifest can record the exact run recipe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib as _toml
except ImportError:  # python < 3.11
    import tomli as _toml

from .errors import ConfigError
from .front import FrontOptions
from .geometry import (
    SurfaceProfile,
    load_tabulated,
    make_constant,
    make_pearls,
    make_swelling,
)
from .grid_ops import Grid1D, Grid2D
from .model import ModelParams
from .timestepper import ImexConfig, Scheme

EXPERIMENT_KINDS = ("simulate2d", "front1d", "spectrum", "distance", "sweep")

MAX_AXIAL_NODES = 8192
MAX_ANGULAR_NODES = 256


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run recipe."""

    kind: str
    params: ModelParams
    profile: SurfaceProfile
    grid: Grid2D
    imex: ImexConfig
    t_end: float
    snapshot_times: tuple
    out_dir: str
    initial_kind: str
    initial_center: float
    initial_width: float
    initial_path: str | None
    front_opts: FrontOptions
    spectrum_modes: tuple
    spectrum_sigma: float
    spectrum_samples: int
    distance_times: tuple
    distance_half_width: float
    distance_norm: str
    seed: int
    echo: dict


class _Section:
    """One section's raw keys with strict, typed extraction."""

    def __init__(self, name: str, data: dict):
        self.name = name
        self.data = dict(data)
        self.seen = set()

    def _fetch(self, key, default, required):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"missing required key {self.name}.{key}")
            return default
        return self.data[key]

    def number(self, key, default=None, required=False, positive=False):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.name}.{key} must be a number, got {v!r}")
        v = float(v)
        if positive and v <= 0.0:
            raise ConfigError(f"{self.name}.{key} must be positive, got {v}")
        if not math.isfinite(v):
            raise ConfigError(f"{self.name}.{key} must be finite")
        return v

    def integer(self, key, default=None, required=False, positive=False):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.name}.{key} must be an integer, got {v!r}")
        if positive and v <= 0:
            raise ConfigError(f"{self.name}.{key} must be positive, got {v}")
        return int(v)

    def text(self, key, default=None, required=False, choices=None):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigError(f"{self.name}.{key} must be a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(
                f"{self.name}.{key} must be one of {sorted(choices)}, got {v!r}"
            )
        return v

    def flag(self, key, default=None, required=False):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if not isinstance(v, bool):
            raise ConfigError(f"{self.name}.{key} must be a boolean, got {v!r}")
        return v

    def number_list(self, key, default=None, required=False):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"{self.name}.{key} must be an array of numbers")
        out = []
        for item in v:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{self.name}.{key} must contain only numbers")
            out.append(float(item))
        return out

    def integer_list(self, key, default=None, required=False):
        v = self._fetch(key, default, required)
        if v is None:
            return None
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"{self.name}.{key} must be an array of integers")
        out = []
        for item in v:
            if isinstance(item, bool) or not isinstance(item, int):
                raise ConfigError(f"{self.name}.{key} must contain only integers")
            out.append(int(item))
        return out

    def finish(self):
        extra = set(self.data) - self.seen
        if extra:
            raise ConfigError(
                f"unknown key {self.name}.{sorted(extra)[0]} (strict parsing)"
            )


def _section(data: dict, name: str) -> _Section:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a section")
    return _Section(name, raw)


def _build_geometry(sec: _Section, base_dir: Path):
    kind = sec.text("kind", default="constant", choices=(
        "constant", "pearls", "swelling", "tabulated"))
    if kind == "constant":
        length = sec.number("length", default=1000.0, positive=True)
        radius = sec.number("radius", default=0.8, positive=True)
        ref = sec.number("reference_radius", default=radius, positive=True)
        profile = make_constant(radius, length)
        geo_echo = {"kind": kind, "length": length, "radius": radius}
    elif kind == "pearls":
        length = sec.number("length", default=1000.0, positive=True)
        base = sec.number("base", default=0.8, positive=True)
        amp = sec.number("amp", default=0.1)
        lobes = sec.integer("lobes", default=3, positive=True)
        ref = sec.number("reference_radius", default=0.9, positive=True)
        profile = make_pearls(base=base, amp=amp, length=length, lobes=lobes)
        geo_echo = {"kind": kind, "length": length, "base": base, "amp": amp,
                    "lobes": lobes}
    elif kind == "swelling":
        length = sec.number("length", default=1000.0, positive=True)
        base = sec.number("base", default=0.8, positive=True)
        slope = sec.number("slope", default=0.3)
        amp = sec.number("amp", default=0.4)
        center = sec.number("center", default=530.0)
        width = sec.number("width", default=120.0, positive=True)
        ref = sec.number("reference_radius", default=0.8, positive=True)
        profile = make_swelling(
            base=base, slope=slope, amp=amp, center=center, width=width, length=length
        )
        geo_echo = {"kind": kind, "length": length, "base": base, "slope": slope,
                    "amp": amp, "center": center, "width": width}
    else:
        path = sec.text("path", required=True)
        resolved = str((base_dir / path).resolve())
        if not Path(resolved).is_file():
            raise ConfigError(f"geometry.path does not exist: {path}")
        profile = load_tabulated(resolved)
        stated = sec.number("length", default=profile.length, positive=True)
        if abs(stated - profile.length) > 1e-9 * profile.length:
            raise ConfigError(
                f"geometry.length {stated} disagrees with the table length "
                f"{profile.length}"
            )
        ref = sec.number(
            "reference_radius",
            default=float(np.mean(profile.tables[1])),
            positive=True,
        )
        geo_echo = {"kind": kind, "length": profile.length, "path": resolved}
    geo_echo["reference_radius"] = ref
    sec.finish()
    return profile, ref, geo_echo


def parse_config_data(data: dict, base_dir: Path, kind: str | None = None) -> RunConfig:
    """Build a RunConfig from parsed TOML data (strict)."""
    known = {"model", "geometry", "grid", "time", "output", "initial",
             "front", "spectrum", "distance", "experiment"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown section or key [{sorted(extra)[0]}]")

    experiment = data.get("experiment", "simulate2d")
    if not isinstance(experiment, str) or experiment not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"experiment must be one of {EXPERIMENT_KINDS}, got {experiment!r}"
        )
    if kind is not None:
        experiment = kind

    model = _section(data, "model")
    alpha = model.number("alpha", required=True)
    eps = model.number("eps", required=True, positive=True)
    gamma = model.number("gamma", required=True, positive=True)
    cm = model.number("cm", default=1.0, positive=True)
    r_int = model.number("r_int", default=0.1, positive=True)
    model.finish()
    if not 0.0 < alpha < 0.5:
        raise ConfigError(f"model.alpha must lie in (0, 1/2), got {alpha}")

    geometry = _section(data, "geometry")
    profile, ref_radius, geo_echo = _build_geometry(geometry, base_dir)

    params = ModelParams(
        alpha=alpha, eps=eps, gamma=gamma, cm=cm, r_int=r_int, radius=ref_radius
    )

    grid_sec = _section(data, "grid")
    n = grid_sec.integer("n", default=2000, positive=True)
    m = grid_sec.integer("m", default=32, positive=True)
    grid_sec.finish()
    if n > MAX_AXIAL_NODES:
        raise ConfigError(f"grid.n above the cap {MAX_AXIAL_NODES}: {n}")
    if m > MAX_ANGULAR_NODES:
        raise ConfigError(f"grid.m above the cap {MAX_ANGULAR_NODES}: {m}")
    try:
        grid = Grid2D(Grid1D(n, profile.length), m)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    time_sec = _section(data, "time")
    dt = time_sec.number("dt", default=0.05)
    t_end = time_sec.number("t_end", default=180.0)
    if dt <= 0.0:
        raise ConfigError(f"time.dt must be positive, got {dt}")
    if t_end <= 0.0:
        raise ConfigError(f"time.t_end must be positive, got {t_end}")
    # Defaults adapt to the window; explicit lists are validated as given.
    default_snaps = [t for t in (60.0, 100.0, 180.0) if t <= t_end] or [t_end]
    snaps = time_sec.number_list("snapshot_times", default=default_snaps)
    scheme_name = time_sec.text("scheme", default="cnab2",
                                choices=("cnab2", "imex_euler"))
    time_sec.finish()
    if any(b < a for a, b in zip(snaps, snaps[1:])):
        raise ConfigError("time.snapshot_times must be sorted ascending")
    if snaps and (snaps[0] < 0.0 or snaps[-1] > t_end):
        raise ConfigError("time.snapshot_times must lie within [0, t_end]")
    imex = ImexConfig(dt=dt, scheme=Scheme(scheme_name))

    output = _section(data, "output")
    out_dir = output.text("dir", default="out")
    output.finish()

    initial = _section(data, "initial")
    init_kind = initial.text("kind", default="tanh",
                             choices=("tanh", "step", "snapshot", "front"))
    init_center = initial.number("center", default=50.0)
    init_width = initial.number("width", default=6.0, positive=True)
    init_path = initial.text("path")
    initial.finish()
    if init_kind == "snapshot":
        if init_path is None:
            raise ConfigError("initial.path is required when initial.kind = 'snapshot'")
        init_path = str((base_dir / init_path).resolve())
    elif init_path is not None:
        raise ConfigError("initial.path only applies to initial.kind = 'snapshot'")
    if init_kind != "snapshot" and not 0.0 <= init_center <= profile.length:
        raise ConfigError(f"initial.center outside the domain: {init_center}")

    front_sec = _section(data, "front")
    front_opts = FrontOptions(
        anchor_frac=front_sec.number("anchor_frac", default=0.6),
        dt=front_sec.number("dt", default=0.2, positive=True),
        t_max=front_sec.number("t_max", default=4000.0, positive=True),
        refine=front_sec.flag("refine", default=True),
    )
    front_sec.finish()
    if not 0.0 < front_opts.anchor_frac < 1.0:
        raise ConfigError(
            f"front.anchor_frac must lie in (0, 1), got {front_opts.anchor_frac}"
        )

    spectrum = _section(data, "spectrum")
    modes = spectrum.integer_list("modes", default=[0, 1, 2, 4])
    sigma = spectrum.number("sigma", default=1.0, positive=True)
    samples = spectrum.integer("samples", default=200, positive=True)
    spectrum.finish()
    if any(mode < 0 for mode in modes):
        raise ConfigError("spectrum.modes must be non-negative")

    distance = _section(data, "distance")
    default_dist = [t for t in np.arange(0.0, 181.0, 20.0) if t <= t_end]
    dist_times = distance.number_list("times", default=default_dist)
    half_width = distance.number("half_width", default=60.0, positive=True)
    dist_norm = distance.text("norm", default="h21", choices=("h21", "l2"))
    distance.finish()
    if any(b < a for a, b in zip(dist_times, dist_times[1:])):
        raise ConfigError("distance.times must be sorted ascending")
    if dist_times and (dist_times[0] < 0.0 or dist_times[-1] > t_end):
        raise ConfigError("distance.times must lie within [0, t_end]")

    echo = {
        "experiment": experiment,
        "model": {"alpha": alpha, "eps": eps, "gamma": gamma, "cm": cm,
                  "r_int": r_int, "reference_radius": ref_radius},
        "geometry": geo_echo,
        "grid": {"n": n, "m": m},
        "time": {"dt": dt, "t_end": t_end, "snapshot_times": list(snaps),
                 "scheme": scheme_name},
        "output": {"dir": out_dir},
        "initial": {"kind": init_kind, "center": init_center,
                    "width": init_width, "path": init_path},
        "front": {"anchor_frac": front_opts.anchor_frac, "dt": front_opts.dt,
                  "t_max": front_opts.t_max, "refine": front_opts.refine},
        "spectrum": {"modes": list(modes), "sigma": sigma, "samples": samples},
        "distance": {"times": list(dist_times), "half_width": half_width,
                     "norm": dist_norm},
    }
    return RunConfig(
        kind=experiment,
        params=params,
        profile=profile,
        grid=grid,
        imex=imex,
        t_end=t_end,
        snapshot_times=tuple(snaps),
        out_dir=out_dir,
        initial_kind=init_kind,
        initial_center=init_center,
        initial_width=init_width,
        initial_path=init_path,
        front_opts=front_opts,
        spectrum_modes=tuple(modes),
        spectrum_sigma=sigma,
        spectrum_samples=samples,
        distance_times=tuple(dist_times),
        distance_half_width=half_width,
        distance_norm=dist_norm,
        seed=0,
        echo=echo,
    )


def parse_config(path, kind: str | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            data = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error in {path}: {exc}") from exc
    return parse_config_data(data, p.parent, kind=kind)
