"""Readers for the axonwave on-disk formats.

Implemented from the published layout, independently of the simulation
package; the file system is the only interface between the two.

Snapshot binary (48-byte header, then payload):

    bytes 0-3    magic "AXWV"
    bytes 4-7    format version, u32 little-endian, currently 1
    bytes 8-15   N (axial nodes), u64
    bytes 16-23  M (angular nodes), u64
    bytes 24-31  time t, f64
    bytes 32-47  reserved
    then u1, then u2: N*M f64 little-endian each, axial-major (C order)

CSV series are UTF-8 with LF endings and a single header row; floats are
repr-formatted, booleans written as 0/1. The run manifest is JSON with a
"config" echo of the run recipe; its geometry section is what the
heatmap needs to rebuild the tube radius. Axial nodes sit at
x_i = i * length / N.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"AXWV"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQQd16s")
MANIFEST_NAME = "manifest.json"

_MAX_NODES = 2**28


class PlotInputError(Exception):
    """An input file is missing, malformed, or inconsistent."""


def read_snapshot(path):
    """Read one snapshot; returns (u1, u2, t) with (N, M) arrays."""
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"snapshot not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise PlotInputError(f"{path}: too short for a snapshot header")
    magic, version, n, m, t, _ = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise PlotInputError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise PlotInputError(f"{path}: unsupported snapshot version {version}")
    if n == 0 or m == 0 or n * m > _MAX_NODES:
        raise PlotInputError(f"{path}: implausible shape ({n}, {m})")
    want = _HEADER.size + 2 * n * m * 8
    if len(raw) != want:
        raise PlotInputError(f"{path}: expected {want} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", count=2 * n * m, offset=_HEADER.size)
    u1 = flat[: n * m].reshape(n, m)
    u2 = flat[n * m :].reshape(n, m)
    return u1, u2, float(t)


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:09.3f}.axwv"


def list_snapshots(in_dir):
    """Snapshot paths in a run directory, sorted by recorded time."""
    found = []
    for p in Path(in_dir).glob("snapshot_t*.axwv"):
        _, _, t = read_snapshot(p)
        found.append((t, p))
    found.sort()
    return found


def snapshot_for_time(in_dir, t: float) -> Path:
    """The snapshot file for a requested time, by its canonical name."""
    p = Path(in_dir) / snapshot_name(t)
    if not p.is_file():
        have = ", ".join(q.name for _, q in list_snapshots(in_dir)) or "none"
        raise PlotInputError(f"no snapshot for t={t:g} in {in_dir} (have: {have})")
    return p


def read_series_csv(path):
    """(header, columns) of a series CSV; columns keyed by header name.

    Numeric cells become float arrays; non-numeric columns stay lists of
    strings (the essential-spectrum table carries branch labels).
    """
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"CSV not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").split("\n") if ln]
    if not lines:
        raise PlotInputError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(lines) == 1:
        raise PlotInputError(f"{path}: no data rows")
    cells = [ln.split(",") for ln in lines[1:]]
    if any(len(row) != len(header) for row in cells):
        raise PlotInputError(f"{path}: ragged rows")
    columns = {}
    for j, name in enumerate(header):
        col = [row[j] for row in cells]
        try:
            columns[name] = np.array([float(c) for c in col])
        except ValueError:
            columns[name] = col
    return header, columns


def read_manifest(in_dir) -> dict:
    p = Path(in_dir) / MANIFEST_NAME
    if not p.is_file():
        raise PlotInputError(f"no {MANIFEST_NAME} in {in_dir}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlotInputError(f"{p}: invalid JSON: {exc}") from exc
    if doc.get("format") != "axonwave-manifest":
        raise PlotInputError(f"{p}: not a run manifest")
    return doc


def radius_profile(geometry: dict, x: np.ndarray) -> np.ndarray:
    """Tube radius at the points x from a manifest geometry echo."""
    kind = geometry.get("kind")
    if kind == "constant":
        return np.full_like(x, float(geometry["radius"]))
    if kind == "pearls":
        w = 2.0 * np.pi * float(geometry["lobes"]) / float(geometry["length"])
        return float(geometry["base"]) + float(geometry["amp"]) * np.exp(np.sin(w * x))
    if kind == "swelling":
        s = (x - float(geometry["center"])) / float(geometry["width"])
        return (
            float(geometry["base"])
            + float(geometry["slope"]) * x / float(geometry["length"])
            + float(geometry["amp"]) * np.exp(-0.5 * s * s)
        )
    if kind == "tabulated":
        table = Path(geometry["path"])
        if not table.is_file():
            raise PlotInputError(f"tabulated geometry file missing: {table}")
        xs, rs = [], []
        for ln in table.read_text(encoding="utf-8").splitlines():
            parts = ln.replace(",", " ").split()
            if len(parts) < 2:
                continue
            try:
                a, b = float(parts[0]), float(parts[1])
            except ValueError:
                continue
            xs.append(a)
            rs.append(b)
        if len(xs) < 2:
            raise PlotInputError(f"{table}: no usable samples")
        return np.interp(x, np.asarray(xs), np.asarray(rs))
    raise PlotInputError(f"unknown geometry kind {kind!r} in manifest")


def run_geometry(in_dir) -> tuple[dict, float, int]:
    """(geometry echo, length, axial n) for a run directory."""
    doc = read_manifest(in_dir)
    cfg = doc.get("config", {})
    geo = cfg.get("geometry")
    grid = cfg.get("grid", {})
    if not geo or "n" not in grid:
        raise PlotInputError(f"manifest in {in_dir} lacks geometry or grid echo")
    return geo, float(geo["length"]), int(grid["n"])
