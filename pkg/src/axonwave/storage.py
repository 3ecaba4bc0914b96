"""On-disk formats: snapshot binary, CSV series, and the run manifest.

Snapshot layout (48-byte header, then payload):

    bytes 0-3    magic "AXWV"
    bytes 4-7    format version, u32 little-endian, currently 1
    bytes 8-15   N (axial nodes), u64
    bytes 16-23  M (angular nodes), u64
    bytes 24-31  time t, f64
    bytes 32-47  reserved, zero
    then u1, then u2: N*M f64 little-endian each, axial-major (C order)

All writes are atomic (write to a sibling temp file, then rename), so a
crashed run never leaves a half-written artifact behind. CSV files are
UTF-8 with LF line endings and repr-formatted floats, which round-trip
exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError, InvalidParameterError
from .grid_ops import Field2D, Grid2D

SNAPSHOT_MAGIC = b"AXWV"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQQd16s")
MANIFEST_NAME = "manifest.json"

_MAX_NODES = 2**28  # sanity bound on N*M when reading


def snapshot_nbytes(n: int, m: int) -> int:
    """Exact file size of a snapshot: header plus two f64 fields."""
    return _HEADER.size + 2 * n * m * 8


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_snapshot(field: Field2D, t: float, path) -> None:
    """Serialize a 2-d state; bit-exact on round trip."""
    u1 = np.ascontiguousarray(field.u1, dtype="<f8")
    u2 = np.ascontiguousarray(field.u2, dtype="<f8")
    if u1.ndim != 2 or u1.shape != u2.shape:
        raise InvalidParameterError(
            f"snapshot needs matching 2-d fields, got {u1.shape} and {u2.shape}"
        )
    n, m = u1.shape
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, m, float(t), b"\0" * 16)
    _atomic_write(path, header + u1.tobytes() + u2.tobytes())


def read_snapshot(path):
    """Read a snapshot file; returns (Field2D, t). Raises FormatError on
    bad magic, version, or truncation."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: too short for a snapshot header")
    magic, version, n, m, t, _ = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported snapshot version {version}")
    if n == 0 or m == 0 or n * m > _MAX_NODES:
        raise FormatError(f"{path}: implausible shape ({n}, {m})")
    if len(raw) != snapshot_nbytes(n, m):
        raise FormatError(
            f"{path}: size {len(raw)} does not match shape "
            f"({n}, {m}); expected {snapshot_nbytes(n, m)}"
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    u1 = body[: n * m].reshape(n, m).copy()
    u2 = body[n * m :].reshape(n, m).copy()
    return Field2D(u1, u2), float(t)


# ============================================================
# CSV series
# ============================================================


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_csv(path):
    """Read a CSV written by write_csv: (header, rows) with floats where
    the cell parses as one."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise FormatError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        cells = []
        for cell in ln.split(","):
            try:
                cells.append(float(cell))
            except ValueError:
                cells.append(cell)
        rows.append(cells)
    return header, rows


DIAGNOSTICS_HEADER = ["t", "front_position", "u1_min", "u1_max", "norm_h21", "c_frozen"]
FRONT_HEADER = ["z", "phi1", "phi2"]
SPECTRUM_HEADER = ["re", "im", "mode_n", "localized_flag"]
ESSENTIAL_HEADER = ["k", "branch", "root", "re", "im"]
DISTANCE_HEADER = ["t", "dist", "h_star"]
COMPARISON_HEADER = ["geometry", "speed", "final_front_position", "max_dist_to_manifold"]


def write_diagnostics_csv(path, rows) -> None:
    write_csv(
        path,
        DIAGNOSTICS_HEADER,
        (
            (r.t, r.front_position, r.u1_min, r.u1_max, r.norm_h21, r.c_frozen)
            for r in rows
        ),
    )


def write_front_csv(path, grid, phi) -> None:
    write_csv(path, FRONT_HEADER, zip(grid.nodes, phi.u1, phi.u2))


def read_front_csv(path):
    header, rows = read_csv(path)
    if header != FRONT_HEADER:
        raise FormatError(f"{path}: unexpected front CSV header {header}")
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def write_spectrum_csv(path, report) -> None:
    write_csv(
        path,
        SPECTRUM_HEADER,
        (
            (lam.real, lam.imag, report.n, bool(loc))
            for lam, loc in zip(report.eigenvalues, report.localized)
        ),
    )


def write_essential_csv(path, k_values, branches) -> None:
    """Closed-form branch samples; ``branches`` maps '+'/'-' to the
    (2, len(k)) arrays from the closed form."""
    rows = []
    for branch, lam in branches.items():
        for root, series in zip(("slow", "fast"), lam):
            for k, val in zip(k_values, series):
                rows.append((k, branch, root, val.real, val.imag))
    write_csv(path, ESSENTIAL_HEADER, rows)


def write_distance_csv(path, rows) -> None:
    write_csv(path, DISTANCE_HEADER, rows)


def write_comparison_csv(path, rows) -> None:
    write_csv(
        path,
        COMPARISON_HEADER,
        (
            (r["geometry"], r["speed"], r["final_front_position"], r["max_dist_to_manifold"])
            for r in rows
        ),
    )


# ============================================================
# manifest
# ============================================================


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def grid_hash(grid: Grid2D) -> str:
    text = f"{grid.n},{grid.m},{grid.axial.length!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_manifest(
    out_dir,
    config_echo: dict,
    files,
    wall_time_s: float,
    geometry_digest: str,
    grid_digest: str,
    results: dict | None = None,
) -> dict:
    """Record every produced file with its checksum; atomic write."""
    out = Path(out_dir)
    entries = []
    for name in sorted(files):
        p = out / name
        entries.append(
            {"path": name, "sha256": sha256_file(p), "bytes": p.stat().st_size}
        )
    doc = {
        "format": "axonwave-manifest",
        "version": 1,
        "code_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "wall_time_s": float(wall_time_s),
        "geometry_hash": geometry_digest,
        "grid_hash": grid_digest,
        "config": config_echo,
        "results": results or {},
        "files": entries,
    }
    payload = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)
    _atomic_write(out / MANIFEST_NAME, payload.encode("utf-8"))
    return doc


def read_manifest(out_dir) -> dict:
    p = Path(out_dir) / MANIFEST_NAME
    if not p.is_file():
        raise FormatError(f"no manifest in {out_dir}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON: {exc}") from exc
    if doc.get("format") != "axonwave-manifest":
        raise FormatError(f"{p}: not a manifest")
    return doc


def verify_manifest(out_dir) -> list:
    """Re-hash every listed file; returns the list of mismatch messages."""
    doc = read_manifest(out_dir)
    out = Path(out_dir)
    problems = []
    for entry in doc["files"]:
        p = out / entry["path"]
        if not p.is_file():
            problems.append(f"missing file: {entry['path']}")
            continue
        if p.stat().st_size != entry["bytes"]:
            problems.append(f"size mismatch: {entry['path']}")
            continue
        if sha256_file(p) != entry["sha256"]:
            problems.append(f"checksum mismatch: {entry['path']}")
    return problems


def nan_to_none(x: float):
    """JSON-friendly float (manifests avoid bare NaN in results)."""
    return None if isinstance(x, float) and math.isnan(x) else x
