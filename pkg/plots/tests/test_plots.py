"""Renderer tests on synthesized run directories.

Fixtures are written byte-for-byte per the published formats, without
the simulation package, so this suite exercises the same file boundary
the real consumers cross.
"""

import json
import struct

import numpy as np
import pytest

from axonwave_plots import cli
from axonwave_plots.formats import (
    PlotInputError,
    list_snapshots,
    read_series_csv,
    read_snapshot,
    radius_profile,
)
from axonwave_plots.render import (
    profile_curve_labels,
    render_cylinder_heatmap,
    render_distance_series,
    render_profile_panel,
    render_spectrum_scatter,
)

HEADER = struct.Struct("<4sIQQd16s")


def write_snapshot(path, u1, u2, t):
    n, m = u1.shape
    head = HEADER.pack(b"AXWV", 1, n, m, float(t), b"\0" * 16)
    payload = u1.astype("<f8").tobytes() + u2.astype("<f8").tobytes()
    path.write_bytes(head + payload)


def front_state(n, m, length, center, width=20.0):
    x = (length / n) * np.arange(n)
    u1 = np.tile(0.5 * (1.0 - np.tanh((x - center) / width))[:, None], (1, m))
    return u1, 0.05 * u1


def make_run_dir(tmp_path, geometry, n=80, m=8, times=(10.0, 20.0, 30.0)):
    """A plausible run directory: snapshots + manifest + distance CSV."""
    length = geometry["length"]
    for i, t in enumerate(times):
        u1, u2 = front_state(n, m, length, center=0.2 * length + 8.0 * i)
        write_snapshot(tmp_path / f"snapshot_t{t:09.3f}.axwv", u1, u2, t)
    manifest = {
        "format": "axonwave-manifest",
        "version": 1,
        "config": {
            "model": {"alpha": 0.01, "eps": 1e-4, "gamma": 7.0},
            "geometry": geometry,
            "grid": {"n": n, "m": m},
        },
        "files": [],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    (tmp_path / "distance.csv").write_text(
        "t,dist,h_star\n0.0,0.5,0.0\n10.0,0.2,1.5\n20.0,0.08,2.5\n"
    )
    return tmp_path


def constant_geo(length=200.0, radius=0.8):
    return {"kind": "constant", "length": length, "radius": radius,
            "reference_radius": radius}


def pearls_geo(length=200.0):
    return {"kind": "pearls", "length": length, "base": 0.8, "amp": 0.1,
            "lobes": 3, "reference_radius": 0.9}


def write_spectrum_dir(tmp_path, with_essential=True):
    rows = ["re,im,mode_n,localized_flag"]
    rng = np.random.default_rng(3)
    for _ in range(40):
        rows.append(f"{-0.01 * rng.random()},{0.02 * rng.standard_normal()},0,0")
    rows.append("1e-06,0.0,0,1")
    (tmp_path / "spectrum.csv").write_text("\n".join(rows) + "\n")
    if with_essential:
        erows = ["k,branch,root,re,im"]
        for k in np.linspace(0.0, 1.0, 11):
            erows.append(f"{k},+,slow,{-7e-4 - 0.1 * k * k},{3.1 * k}")
            erows.append(f"{k},+,fast,{-0.05 - k * k},{3.1 * k}")
        (tmp_path / "essential.csv").write_text("\n".join(erows) + "\n")
    return tmp_path


# ------------------------------------------------------------
# format readers
# ------------------------------------------------------------


def test_snapshot_reader_round_trip(tmp_path):
    u1, u2 = front_state(40, 6, 100.0, 30.0)
    write_snapshot(tmp_path / "snapshot_t00010.000.axwv", u1, u2, 10.0)
    r1, r2, t = read_snapshot(tmp_path / "snapshot_t00010.000.axwv")
    assert t == 10.0
    assert np.array_equal(r1, u1)
    assert np.array_equal(r2, u2)


def test_snapshot_reader_rejects_bad_magic(tmp_path):
    p = tmp_path / "snapshot_t00010.000.axwv"
    u1, u2 = front_state(40, 6, 100.0, 30.0)
    write_snapshot(p, u1, u2, 10.0)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"JUNK"
    p.write_bytes(bytes(raw))
    with pytest.raises(PlotInputError, match="magic"):
        read_snapshot(p)


def test_snapshot_reader_rejects_truncation(tmp_path):
    p = tmp_path / "snap.axwv"
    u1, u2 = front_state(40, 6, 100.0, 30.0)
    write_snapshot(p, u1, u2, 10.0)
    p.write_bytes(p.read_bytes()[:-17])
    with pytest.raises(PlotInputError, match="bytes"):
        read_snapshot(p)


def test_list_snapshots_sorts_by_time(tmp_path):
    make_run_dir(tmp_path, constant_geo(), times=(30.0, 10.0, 20.0))
    assert [t for t, _ in list_snapshots(tmp_path)] == [10.0, 20.0, 30.0]


def test_series_csv_mixed_columns(tmp_path):
    p = tmp_path / "mixed.csv"
    p.write_text("k,branch,re\n0.0,+,-0.1\n0.5,-,-0.2\n")
    _, cols = read_series_csv(p)
    assert cols["branch"] == ["+", "-"]
    assert np.allclose(cols["re"], [-0.1, -0.2])


def test_series_csv_rejects_empty_and_ragged(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(PlotInputError):
        read_series_csv(empty)
    headed = tmp_path / "headed.csv"
    headed.write_text("t,dist\n")
    with pytest.raises(PlotInputError, match="no data"):
        read_series_csv(headed)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("t,dist\n1.0\n")
    with pytest.raises(PlotInputError, match="ragged"):
        read_series_csv(ragged)


def test_radius_profile_kinds():
    x = np.linspace(0.0, 200.0, 101)
    flat = radius_profile(constant_geo(), x)
    assert np.all(flat == 0.8)
    bumpy = radius_profile(pearls_geo(), x)
    assert bumpy.min() > 0.8 and bumpy.max() > 1.0
    with pytest.raises(PlotInputError, match="unknown geometry"):
        radius_profile({"kind": "mystery"}, x)


# ------------------------------------------------------------
# renderers
# ------------------------------------------------------------


def test_profile_panel_three_curves(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    out = tmp_path / "panel.png"
    render_profile_panel(run, out, times=[10.0, 20.0, 30.0])
    assert out.stat().st_size > 0
    assert profile_curve_labels(run, [10.0, 20.0, 30.0]) == [
        "t = 10", "t = 20", "t = 30",
    ]


def test_profile_panel_defaults_to_all_snapshots(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    assert len(profile_curve_labels(run)) == 3


def test_profile_panel_missing_time_fails(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    with pytest.raises(PlotInputError, match="no snapshot for t=99"):
        render_profile_panel(run, tmp_path / "x.png", times=[99.0])


def test_heatmap_writes_and_leaves_inputs_alone(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    before = sorted(p.name for p in run.iterdir())
    out = tmp_path / "surf.png"
    render_cylinder_heatmap(run, out, time=20.0)
    assert out.stat().st_size > 10_000
    after = sorted(p.name for p in run.iterdir() if p.name != "surf.png")
    assert after == before


def test_heatmap_silhouettes_differ_between_geometries(tmp_path):
    for name in ("flat", "pearl"):
        (tmp_path / name).mkdir()
    flat_dir = make_run_dir(tmp_path / "flat", constant_geo())
    pearl_dir = make_run_dir(tmp_path / "pearl", pearls_geo())
    a = render_cylinder_heatmap(flat_dir, tmp_path / "a.png", time=20.0)
    b = render_cylinder_heatmap(pearl_dir, tmp_path / "b.png", time=20.0)
    assert a.read_bytes() != b.read_bytes()


def test_heatmap_needs_manifest(tmp_path):
    u1, u2 = front_state(40, 6, 100.0, 30.0)
    write_snapshot(tmp_path / "snapshot_t00010.000.axwv", u1, u2, 10.0)
    with pytest.raises(PlotInputError, match="manifest"):
        render_cylinder_heatmap(tmp_path, tmp_path / "x.png")


def test_spectrum_scatter_with_overlay(tmp_path):
    write_spectrum_dir(tmp_path)
    out = tmp_path / "spec.png"
    render_spectrum_scatter(tmp_path, out, eta=7e-4)
    assert out.stat().st_size > 0


def test_spectrum_scatter_eta_from_manifest(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    write_spectrum_dir(run)
    out = tmp_path / "spec.png"
    render_spectrum_scatter(run, out)
    assert out.stat().st_size > 0


def test_spectrum_scatter_rejects_empty_csv(tmp_path):
    (tmp_path / "spectrum.csv").write_text("")
    with pytest.raises(PlotInputError):
        render_spectrum_scatter(tmp_path, tmp_path / "x.png", eta=7e-4)


def test_distance_series(tmp_path):
    run = make_run_dir(tmp_path, constant_geo())
    out = tmp_path / "dist.png"
    render_distance_series(run, out)
    assert out.stat().st_size > 0


# ------------------------------------------------------------
# CLI
# ------------------------------------------------------------


def test_cli_renders_each_kind(tmp_path):
    run = make_run_dir(tmp_path, pearls_geo())
    write_spectrum_dir(run)
    jobs = [
        ("profile_panel", ["--times", "10,20,30"]),
        ("cylinder_heatmap", ["--times", "20"]),
        ("spectrum_scatter", []),
        ("distance_series", []),
    ]
    for kind, extra in jobs:
        out = tmp_path / f"{kind}.png"
        rc = cli.main([kind, "--in", str(run), "--out", str(out)] + extra)
        assert rc == 0, kind
        assert out.stat().st_size > 0


def test_cli_malformed_snapshot_exits_nonzero(tmp_path, capsys):
    run = make_run_dir(tmp_path, constant_geo())
    victim = run / "snapshot_t00020.000.axwv"
    victim.write_bytes(victim.read_bytes()[:40])
    rc = cli.main(["profile_panel", "--in", str(run), "--out",
                   str(tmp_path / "x.png"), "--times", "20"])
    assert rc == 1
    assert "plot:" in capsys.readouterr().err


def test_cli_missing_input_exits_nonzero(tmp_path, capsys):
    rc = cli.main(["distance_series", "--in", str(tmp_path), "--out",
                   str(tmp_path / "x.png")])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_cli_heatmap_wants_one_time(tmp_path, capsys):
    run = make_run_dir(tmp_path, constant_geo())
    rc = cli.main(["cylinder_heatmap", "--in", str(run), "--out",
                   str(tmp_path / "x.png"), "--times", "10,20"])
    assert rc == 1
    assert "exactly one" in capsys.readouterr().err


def test_cli_rejects_unknown_kind():
    with pytest.raises(SystemExit) as err:
        cli.main(["pie_chart", "--in", "a", "--out", "b.png"])
    assert err.value.code == 2
