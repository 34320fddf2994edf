import json
import shutil
import subprocess
import sys

import pytest

from hitchlab import cli


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path), "--refine", "1", "--serial"])


def report(tmp_path, name):
    return json.loads((tmp_path / f"{name}-report.json").read_text())


def test_surface_build(tmp_path):
    assert run(tmp_path, "surface", "build") == 0
    rep = report(tmp_path, "surface-build")
    assert rep["counts"] == {"V": 30, "E": 96, "F": 64}
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["schema"] == "manifest/v1"


def test_rep_pipeline(tmp_path):
    assert run(tmp_path, "rep", "fuchsian") == 0
    assert run(tmp_path, "rep", "euler") == 0
    assert report(tmp_path, "rep-euler")["euler_class"] == 2


def test_cohomology_prints_tuple(tmp_path, capsys):
    assert run(tmp_path, "dec", "cohomology") == 0
    assert "(0, 6, 0, 6)" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["surface", "build", "--genus", "1"],
        ["spacetime", "assemble", "--t0", "2", "--t1", "1"],
        ["surface", "build", "--tol", "nonsense=1"],
        ["surface", "build", "--tol", "relator"],
        ["spacetime", "assemble", "--coeffs", "1", "2"],
        ["spacetime", "assemble", "--profile", "samples"],
        ["surface", "explode"],
    ],
)
def test_usage_errors(tmp_path, argv):
    assert run(tmp_path, *argv) == cli.EXIT_USAGE


def test_missing_inputs(tmp_path):
    assert run(tmp_path, "hitchin", "extract") == cli.EXIT_MISSING
    assert run(tmp_path, "rep", "euler", "--rep", str(tmp_path / "none.json")) == cli.EXIT_MISSING


def test_corrupt_input_is_invariant_failure(tmp_path):
    assert run(tmp_path, "rep", "fuchsian") == 0
    doc = json.loads((tmp_path / "rep.json").read_text())
    doc["payload"]["generators"][0][0][1] += 0.01
    (tmp_path / "rep.json").write_text(json.dumps(doc))
    assert run(tmp_path, "rep", "euler") == cli.EXIT_INVARIANT


def test_tolerance_failure_exit(tmp_path):
    assert run(tmp_path, "dec", "kernel", "--tol", "gap_ratio=1e30") == cli.EXIT_TOLERANCE


def test_hitchin_solve_then_extract(tmp_path):
    assert run(tmp_path, "hitchin", "solve") == 0
    assert report(tmp_path, "hitchin-solve")["checks"][0]["pass"]
    # the pair residuals stay above 1e-3 at this resolution
    assert run(tmp_path, "hitchin", "extract") == cli.EXIT_TOLERANCE
    names = {c["name"]: c["pass"] for c in report(tmp_path, "hitchin-extract")["checks"]}
    assert not names["r1"] and not names["r2"]
    assert (tmp_path / "pair.json").exists()


def test_spacetime_assemble_and_verify(tmp_path):
    assert run(tmp_path, "spacetime", "assemble") == 0
    assert (tmp_path / "cone_entries.csv").exists()
    code = run(tmp_path, "spacetime", "verify")
    checks = {c["name"]: c for c in report(tmp_path, "spacetime-verify")["checks"]}
    assert checks["cone entries vs closed form"]["pass"]
    # literal -dt^2 + t^2 gamma has no cross term; the assembled cone does
    assert not checks["cone cross term g_ti"]["pass"]
    assert code == cli.EXIT_TOLERANCE


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"genus": 3, "refine": 0}))
    assert cli.main(["surface", "build", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert report(tmp_path, "surface-build")["counts"]["F"] == 24
    assert cli.main(["surface", "build", "--config", str(cfg), "--genus", "2", "--out", str(tmp_path)]) == 0
    assert report(tmp_path, "surface-build")["counts"]["F"] == 16


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HITCHLAB_OUT", str(tmp_path / "envout"))
    assert cli.main(["rep", "fuchsian"]) == 0
    assert (tmp_path / "envout" / "rep.json").exists()


def test_roundtrip_serial_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "roundtrip") == 0
    assert run(b, "roundtrip") == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rep = report(a, "roundtrip")
    assert all(c["pass"] for c in rep["checks"])
    assert rep["kernel_dim"] == 6 and rep["euler_class"] == 2


@pytest.mark.skipif(shutil.which("hitchlab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    out = subprocess.run(["hitchlab", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "exit codes" in out.stdout
    out = subprocess.run([sys.executable, "-m", "hitchlab.cli", "rep", "fuchsian", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
