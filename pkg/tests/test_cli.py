import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from qdcircuit import cli, io
from qdcircuit.types import AlignmentRecord, CLMap, FitResult, Spectrum

from conftest import gaussian_map

HBT_CONFIG = """\
[sim]
topology = hbt
duration_s = 2.0
seed = 5

[emitter]
lifetime_ns = 1.0
coherence_ns = 0.4
multiphoton_prob = 0.03
brightness = 300000
"""


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _pipeline(workdir):
    """simulate -> correlate -> fit-hbt -> report inside ``workdir``."""
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "hbt.ini").write_text(HBT_CONFIG)
    f = {name: workdir / name for name in
         ("hbt.ini", "tags.ttg", "sim.json", "g2.csv", "fit.json", "report.csv")}
    assert _run("simulate", "--config", f["hbt.ini"], "--out", f["tags.ttg"],
                "--result", f["sim.json"]) == 0
    assert _run("correlate", "--tags", f["tags.ttg"], "--out", f["g2.csv"], "--bin-ps", 100,
                "--max-tau-ps", 20000, "--normalize", "cw") == 0
    assert _run("fit-hbt", "--hist", f["g2.csv"], "--out", f["fit.json"]) == 0
    assert _run("report", "--hist", f["g2.csv"], "--result", f["fit.json"], "--out",
                f["report.csv"]) == 0
    return f


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return _pipeline(tmp_path_factory.mktemp("pipe") / "run")


def test_pipeline_result_contents(pipeline):
    fit = json.loads(pipeline["fit.json"].read_text())
    assert fit["analysis"] == "fit-hbt-cw"
    assert fit["converged"] is True
    assert abs(fit["params"]["tau1"]["value"] - 1.0) < 0.1
    assert fit["params"]["A"]["stderr"] > 0
    # provenance: config hash and seed travel from simulate through the histogram
    cfg = io.load_config(pipeline["hbt.ini"])
    assert fit["config_sha256"] == io.config_hash(cfg)
    assert fit["seed"] == "5"
    assert fit["inputs"]["hist"] == {"file": "g2.csv",
                                     "sha256": io.file_sha256(pipeline["g2.csv"])}
    sim = json.loads(pipeline["sim.json"].read_text())
    assert sim["detected"]["1"] > 0 and sim["detected"]["2"] > 0
    meta = io.read_meta(pipeline["g2.csv"])
    assert meta["normalization"] == "cw-poisson"
    assert meta["config_sha256"] == fit["config_sha256"]


def test_report_contains_data_and_fit_columns(pipeline):
    lines = pipeline["report.csv"].read_text().splitlines()
    assert lines[0] == "# qdcircuit-report 1"
    assert "tau_ns,value" in lines
    i = lines.index("grid_tau_ns,fit")
    grid = np.array([[float(v) for v in row.split(",")] for row in lines[i + 1:]])
    assert grid.shape == (1001, 2)
    fit = json.loads(pipeline["fit.json"].read_text())
    p = fit["params"]
    expected = 1 - (1 - p["A"]["value"]) * np.exp(-np.abs(grid[:, 0]) / p["tau1"]["value"])
    np.testing.assert_allclose(grid[:, 1], expected, rtol=1e-12)


def test_pipeline_byte_identical(tmp_path, pipeline):
    again = _pipeline(tmp_path / "run")
    for name, path in pipeline.items():
        assert path.read_bytes() == again[name].read_bytes(), name


def test_seed_override_changes_tags(tmp_path, pipeline):
    out = tmp_path / "other.ttg"
    assert _run("simulate", "--config", pipeline["hbt.ini"], "--out", out, "--result",
                tmp_path / "s.json", "--seed", 6) == 0
    assert out.read_bytes() != pipeline["tags.ttg"].read_bytes()
    assert io.read_meta(out)["seed"] == "6"


def test_usage_exit_codes(capsys):
    assert cli.main([]) == 2
    err = capsys.readouterr().err
    assert "usage" in err.lower()
    assert cli.main(["transmogrify"]) == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "unknown-subcommand"
    assert rec["subcommand"] == "transmogrify"
    assert cli.main(["fit-hbt"]) == 2      # missing required option
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "usage"


def test_input_error_exit_codes(tmp_path, capsys):
    assert _run("fit-hbt", "--hist", tmp_path / "missing.csv") == 3
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "missing-input"
    bad = tmp_path / "bad.ini"
    bad.write_text(HBT_CONFIG.replace("seed = 5", "seed = 5\nflux = 9"))
    assert _run("simulate", "--config", bad, "--out", tmp_path / "t.ttg") == 3
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "config-invalid"
    assert "flux" in rec["message"]
    assert not (tmp_path / "t.ttg").exists()
    garbled = tmp_path / "g.csv"
    garbled.write_text("# qdcircuit-histogram 1\n# units tau=ps\n# bin_width_ps 100\n1,x\n")
    assert _run("fit-hbt", "--hist", garbled) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "parse-error"


def test_fit_dop_prints_dop(tmp_path, capsys):
    th = np.arange(0, 360, 10.0)
    amp, off = 86.0, 7.0          # DOP = 86 / (86 + 14) = 0.86
    y = off + amp * np.cos(np.deg2rad(th - 30.0)) ** 2
    data = tmp_path / "dop.csv"
    data.write_text("angle_deg,intensity\n" + "".join(f"{float(a)!r},{float(b)!r}\n"
                                                      for a, b in zip(th, y)))
    assert _run("fit-dop", "--data", data, "--out", tmp_path / "dop.json") == 0
    assert "DOP=0.860" in capsys.readouterr().out
    rec = json.loads((tmp_path / "dop.json").read_text())
    assert abs(rec["DOP"]["value"] - 0.86) < 1e-9
    assert abs(rec["params"]["theta0"]["value"] - 30.0) < 1e-6


def test_not_converged_exit_code(tmp_path, monkeypatch):
    real = cli.analyses.fit_powerlaw

    def stalled(p, i):
        r = real(p, i)
        return FitResult(names=r.names, values=r.values, stderr=r.stderr,
                         covariance=r.covariance, redchi2=r.redchi2, converged=False,
                         iterations=r.iterations, gradient_norm=r.gradient_norm, flags=r.flags,
                         extras=r.extras)

    monkeypatch.setattr(cli.analyses, "fit_powerlaw", stalled)
    data = tmp_path / "pow.csv"
    data.write_text("".join(f"{p},{2 * p ** 2}\n" for p in (1.0, 2.0, 4.0, 8.0)))
    out = tmp_path / "pow.json"
    assert _run("fit-powerlaw", "--data", data, "--out", out) == 4
    rec = json.loads(out.read_text())
    assert rec["converged"] is False
    assert abs(rec["slope"]["value"] - 2.0) < 1e-9


def test_powerlaw_with_reference(tmp_path):
    data = tmp_path / "pow.csv"
    data.write_text("".join(f"{p},{3 * p ** 1.9}\n" for p in (1.0, 2.0, 4.0, 8.0)))
    out = tmp_path / "pow.json"
    assert _run("fit-powerlaw", "--data", data, "--reference-slope", "0.95,0.01",
                "--out", out) == 0
    rec = json.loads(out.read_text())
    assert abs(rec["slope_ratio"]["value"] - 2.0) < 1e-9


def test_splitting_ratio_and_alignment(tmp_path):
    wl = np.linspace(900, 940, 81)
    s1 = io.write_spectrum(tmp_path / "p1.csv", Spectrum(wl, np.full(81, 3.0)))
    s2 = io.write_spectrum(tmp_path / "p2.csv", Spectrum(wl, np.full(81, 1.0)))
    out = tmp_path / "ratio.json"
    assert _run("splitting-ratio", "--spec1", s1, "--spec2", s2, "--window-nm", "910,930",
                "--out", out) == 0
    assert abs(json.loads(out.read_text())["ratio"]["value"] - 0.75) < 1e-12

    recs = io.write_alignment(tmp_path / "a.csv", [
        AlignmentRecord("a", 10.0, 0.0, 0.0, 0.0), AlignmentRecord("b", 0.0, 20.0, 0.0, 0.0),
        AlignmentRecord("c", -30.0, 0.0, 0.0, 0.0)])
    markers = tmp_path / "m.csv"
    nominal = np.array([[0, 0], [1e5, 0], [1e5, 1e5], [0, 1e5]], float)
    measured = nominal + [50.0, -20.0]
    np.savetxt(markers, np.column_stack([measured, nominal]), delimiter=",")
    out = tmp_path / "align.json"
    assert _run("align-eval", "--records", recs, "--markers", markers, "--out", out) == 0
    rec = json.loads(out.read_text())
    assert rec["inputs"]["markers"]["file"] == "m.csv"
    np.testing.assert_allclose(rec["field_transform"]["translation"], [-50.0, 20.0], atol=1e-6)
    assert rec["field_transform"]["max_residual_nm"] < 1e-6


def test_localize_subcommand(tmp_path, rng):
    cmap = gaussian_map(rng=rng)
    path = io.write_clmap(tmp_path / "map.npz", cmap)
    out = tmp_path / "loc.json"
    assert _run("localize", "--map", path, "--out", out) == 0
    c = json.loads(out.read_text())["center_nm"]
    assert abs(c["x"] - 1000) < 30 and abs(c["y"] - 750) < 30


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("qdcircuit")
    cmd = [exe] if exe else [sys.executable, "-m", "qdcircuit.cli"]
    proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("qdcircuit ")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 2
