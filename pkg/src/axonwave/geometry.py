"""Surfaces of revolution and their metric weights.

A tube of length ``length`` around the x axis is described by a radius
profile ``rho(x) > 0``. The induced metric of the surface

    (x, theta) -> (x, rho(x) cos theta, rho(x) sin theta)

is ``ds^2 = (1 + rho'^2) dx^2 + rho^2 dtheta^2`` with determinant
``g = rho^2 (1 + rho'^2)``. Diffusion on the tube is assembled in
divergence form from the two weight functions

    w1 = rho * sqrt(1 + rho'^2)          (area weight, equals sqrt(g))
    w2 = rho^3 / sqrt(1 + rho'^2)        (axial flux weight)

which satisfy ``g = w1**2`` and ``w1 * w2 = rho**4`` identically.

Profile families
================
constant   rho = R
pearls     rho = base + amp * exp(sin(2*pi*lobes*x/length))
swelling   rho = base + slope*x/length + amp * exp(-(x-center)^2/(2*width^2))
tabulated  samples (x_i, rho_i) from a two-column CSV; derivatives by
           second-order centered differences, one-sided at the endpoints
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParameterError

_PROBE_SAMPLES = 4096  # positivity check resolution at construction


@dataclass(frozen=True)
class MetricSample:
    """Pointwise profile values and derived metric weights."""

    rho: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    g: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class SurfaceProfile:
    """Radius profile of a tube, with analytic or tabulated derivatives.

    Use the ``make_*`` factories instead of constructing directly; they
    validate parameters and positivity on a fine probe grid.
    """

    kind: str
    length: float
    params: dict = field(default_factory=dict)
    tables: tuple = ()  # (x, rho, rho1, rho2) for tabulated profiles

    def rho(self, x):
        x = self._check_domain(x)
        k = self.kind
        p = self.params
        if k == "constant":
            return np.full_like(x, p["radius"])
        if k == "pearls":
            w = 2.0 * np.pi * p["lobes"] / self.length
            return p["base"] + p["amp"] * np.exp(np.sin(w * x))
        if k == "swelling":
            s = (x - p["center"]) / p["width"]
            return p["base"] + p["slope"] * x / self.length + p["amp"] * np.exp(-0.5 * s * s)
        return np.interp(x, self.tables[0], self.tables[1])

    def rho1(self, x):
        """First derivative d rho / dx."""
        x = self._check_domain(x)
        k = self.kind
        p = self.params
        if k == "constant":
            return np.zeros_like(x)
        if k == "pearls":
            w = 2.0 * np.pi * p["lobes"] / self.length
            return p["amp"] * w * np.cos(w * x) * np.exp(np.sin(w * x))
        if k == "swelling":
            s = (x - p["center"]) / p["width"]
            gauss = p["amp"] * np.exp(-0.5 * s * s)
            return p["slope"] / self.length - gauss * s / p["width"]
        return np.interp(x, self.tables[0], self.tables[2])

    def rho2(self, x):
        """Second derivative d^2 rho / dx^2."""
        x = self._check_domain(x)
        k = self.kind
        p = self.params
        if k == "constant":
            return np.zeros_like(x)
        if k == "pearls":
            w = 2.0 * np.pi * p["lobes"] / self.length
            c, s = np.cos(w * x), np.sin(w * x)
            return p["amp"] * w * w * np.exp(s) * (c * c - s)
        if k == "swelling":
            s = (x - p["center"]) / p["width"]
            gauss = p["amp"] * np.exp(-0.5 * s * s)
            return gauss * (s * s - 1.0) / p["width"] ** 2
        return np.interp(x, self.tables[0], self.tables[3])

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-9 * self.length
        if np.any(x < -tol) or np.any(x > self.length + tol):
            raise DomainError(
                f"coordinate outside [0, {self.length}]: "
                f"range [{x.min()}, {x.max()}]"
            )
        return x

    def digest(self) -> str:
        """Stable short hash of the profile identity."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(repr(self.length).encode())
        for key in sorted(self.params):
            h.update(f"{key}={self.params[key]!r}".encode())
        for arr in self.tables:
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def _validate_positive(profile: SurfaceProfile) -> SurfaceProfile:
    x = np.linspace(0.0, profile.length, _PROBE_SAMPLES)
    r = profile.rho(x)
    if not np.all(np.isfinite(r)):
        raise InvalidParameterError(f"{profile.kind} profile is not finite")
    if np.min(r) <= 0.0:
        raise InvalidParameterError(
            f"{profile.kind} profile reaches rho = {np.min(r):g} <= 0"
        )
    return profile


def make_constant(radius: float, length: float) -> SurfaceProfile:
    if radius <= 0.0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    if length <= 0.0:
        raise InvalidParameterError(f"length must be positive, got {length}")
    return SurfaceProfile("constant", float(length), {"radius": float(radius)})


def make_pearls(base: float, amp: float, length: float, lobes: int = 3) -> SurfaceProfile:
    """Periodically bulging tube; ``lobes`` full periods over the length."""
    if length <= 0.0:
        raise InvalidParameterError(f"length must be positive, got {length}")
    if amp < 0.0:
        raise InvalidParameterError(f"amp must be non-negative, got {amp}")
    if lobes < 1 or int(lobes) != lobes:
        raise InvalidParameterError(f"lobes must be a positive integer, got {lobes}")
    prof = SurfaceProfile(
        "pearls",
        float(length),
        {"base": float(base), "amp": float(amp), "lobes": int(lobes)},
    )
    return _validate_positive(prof)


def make_swelling(
    base: float,
    slope: float,
    amp: float,
    center: float,
    width: float,
    length: float,
) -> SurfaceProfile:
    """Linear taper plus a Gaussian bulge centered at ``center``."""
    if length <= 0.0:
        raise InvalidParameterError(f"length must be positive, got {length}")
    if width <= 0.0:
        raise InvalidParameterError(f"width must be positive, got {width}")
    prof = SurfaceProfile(
        "swelling",
        float(length),
        {
            "base": float(base),
            "slope": float(slope),
            "amp": float(amp),
            "center": float(center),
            "width": float(width),
        },
    )
    return _validate_positive(prof)


def make_tabulated(x, rho) -> SurfaceProfile:
    """Profile from samples on a uniform ascending grid starting at 0.

    Derivative tables use second-order centered differences inside and
    one-sided second-order stencils at the endpoints; queries between
    nodes interpolate the tables linearly.
    """
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if x.ndim != 1 or x.shape != rho.shape:
        raise InvalidParameterError("x and rho must be 1-d arrays of equal length")
    if x.size < 4:
        raise InvalidParameterError(f"need at least 4 samples, got {x.size}")
    h = np.diff(x)
    if np.any(h <= 0.0):
        raise InvalidParameterError("x must be strictly ascending")
    if abs(x[0]) > 1e-9 * x[-1]:
        raise InvalidParameterError(f"x must start at 0, got {x[0]}")
    if np.max(np.abs(h - h[0])) > 1e-9 * h[0]:
        raise InvalidParameterError("x must be uniformly spaced")
    dx = h[0]

    r1 = np.empty_like(rho)
    r1[1:-1] = (rho[2:] - rho[:-2]) / (2.0 * dx)
    r1[0] = (-3.0 * rho[0] + 4.0 * rho[1] - rho[2]) / (2.0 * dx)
    r1[-1] = (3.0 * rho[-1] - 4.0 * rho[-2] + rho[-3]) / (2.0 * dx)

    r2 = np.empty_like(rho)
    r2[1:-1] = (rho[2:] - 2.0 * rho[1:-1] + rho[:-2]) / dx**2
    r2[0] = (2.0 * rho[0] - 5.0 * rho[1] + 4.0 * rho[2] - rho[3]) / dx**2
    r2[-1] = (2.0 * rho[-1] - 5.0 * rho[-2] + 4.0 * rho[-3] - rho[-4]) / dx**2

    prof = SurfaceProfile(
        "tabulated",
        float(x[-1]),
        {"samples": int(x.size)},
        tables=(x.copy(), rho.copy(), r1, r2),
    )
    return _validate_positive(prof)


def load_tabulated(path) -> SurfaceProfile:
    """Read a two-column (x, rho) CSV file; a header row is permitted."""
    xs, rs = [], []
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                xs.append(float(row[0]))
                rs.append(float(row[1]))
            except (ValueError, IndexError):
                if not xs:  # header row
                    continue
                raise InvalidParameterError(f"malformed CSV row: {row!r}")
    return make_tabulated(np.array(xs), np.array(rs))


def eval_metric(profile: SurfaceProfile, x) -> MetricSample:
    """Profile values and metric weights at the points ``x``."""
    r = profile.rho(x)
    r1 = profile.rho1(x)
    r2 = profile.rho2(x)
    slope = np.sqrt(1.0 + r1 * r1)
    w1 = r * slope
    w2 = r**3 / slope
    return MetricSample(rho=r, rho1=r1, rho2=r2, g=w1 * w1, w1=w1, w2=w2)


def warp_delta(profile: SurfaceProfile, radius: float, x) -> float:
    """Relative deviation of the tube from the straight cylinder ``radius``.

    Returns ``max(sup|rho - radius|, sup|rho'|, sup|rho''|) / radius``
    with the suprema taken over the sample points ``x`` (a grid object
    exposing ``nodes`` is also accepted).
    """
    if radius <= 0.0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    pts = getattr(x, "nodes", x)
    dev = np.max(np.abs(profile.rho(pts) - radius))
    d1 = np.max(np.abs(profile.rho1(pts)))
    d2 = np.max(np.abs(profile.rho2(pts)))
    return float(max(dev, d1, d2) / radius)
