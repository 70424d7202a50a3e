import json
import math

import numpy as np
import pytest

import coagdrift as cd
from coagdrift.cli import main
from coagdrift.profile_io import ProfileRecord, read_profile, write_profile

FAST_SOLVE = ["--nodes", "1025", "--zmax", "1e5"]


def solve_args(out, v="0.5", m0="0.005", extra=()):
    return ["solve", "--v", v, "--m0", m0, *FAST_SOLVE, "--out", str(out), *extra]


@pytest.fixture(scope="module")
def solved_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "p.csv"
    code = main(solve_args(out))
    assert code == 0
    return out


def test_threshold_command(capsys):
    assert main(["threshold", "--v", "0.5"]) == 0
    text = capsys.readouterr().out
    assert "m0_bar = 0.016585557" in text

    assert main(["threshold", "--v", "0.5", "--m0", "0.01"]) == 0
    text = capsys.readouterr().out
    assert "tau_star   = 3.4315901994" in text

    assert main(["threshold", "--v", "0.5", "--m0", "0.02"]) == 0
    text = capsys.readouterr().out
    assert "inadmissible" in text

    assert main(["threshold", "--v", "1.5"]) == 2


def test_solve_writes_profile_and_metadata(solved_file):
    meta = solved_file.with_suffix(".json")
    assert solved_file.exists() and meta.exists()
    payload = json.loads(meta.read_text())
    assert payload["report"]["certified"] is True
    assert payload["report"]["F0"] == pytest.approx(0.004975, rel=1e-6)
    record = read_profile(str(solved_file))
    assert record.certified
    assert record.z[0] == 0.0 and record.z.size == 1025
    with open(solved_file) as handle:
        lines = handle.read().splitlines()
    assert "z,F,tau" in lines


def test_profile_roundtrip_bit_exact(solved_file, tmp_path):
    record = read_profile(str(solved_file))
    copy = tmp_path / "copy.csv"
    write_profile(str(copy), record)
    assert copy.read_text() == solved_file.read_text()
    again = read_profile(str(copy))
    assert np.array_equal(again.z, record.z)
    assert np.array_equal(again.F, record.F)
    assert np.array_equal(again.tau, record.tau)


def test_verify_solved_profile(solved_file, capsys):
    assert main(["verify", str(solved_file)]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == 5


def test_verify_detects_scaled_profile(solved_file, tmp_path, capsys):
    record = read_profile(str(solved_file))
    record.F = 2.0 * record.F
    bad = tmp_path / "scaled.csv"
    write_profile(str(bad), record)
    assert main(["verify", str(bad)]) == 1
    text = capsys.readouterr().out
    assert "M0       : FAIL" in text


def test_verify_exponential_profile(tmp_path, capsys):
    # a closed-form solution: residual and moments pass, the tail check
    # reports non-power-law decay instead of an exponent
    v = 0.5
    grid = cd.build_grid(50.0, 1025, v)
    F = cd.exponential_grid_function(v, grid)
    record = ProfileRecord(
        v=v, m0=1.0 - v, alpha=(2 - v - 2 * (1 - v)) / (1 - v), tau_star=math.nan,
        tau_inf=(2 - v) / (1 - v), tail_exponent=math.inf,
        tol_inner=1e-10, tol_outer=1e-9, tol_residual=1e-5, certified=False,
        z=grid.nodes, F=F.values, tau=v * grid.nodes,
    )
    path = tmp_path / "exp.csv"
    write_profile(str(path), record)
    assert main(["verify", str(path)]) == 0
    text = capsys.readouterr().out
    assert "non-power-law" in text
    assert "residual : PASS" in text


def test_verify_malformed_file(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("z,F,tau\n0,1,0\n")
    assert main(["verify", str(path)]) == 2
    assert main(["verify", str(tmp_path / "missing.csv")]) == 2


def test_solve_threshold_gate(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(solve_args(out, m0="0.02"))
    assert code == 2
    assert "0.016585557" in capsys.readouterr().err
    assert not out.exists()


def test_solve_force_above_threshold(tmp_path):
    out = tmp_path / "forced.csv"
    with pytest.warns(RuntimeWarning):
        code = main(solve_args(out, m0="0.02", extra=["--force"]))
    assert code in (0, 4)
    payload = json.loads(out.with_suffix(".json").read_text())
    assert payload["report"]["certified"] == (code == 0)
    # the identity F(0) = m0 (1 - m0) still holds on this exploratory run
    assert payload["report"]["F0"] == pytest.approx(0.02 * 0.98, rel=1e-4)


def test_solve_force_far_above_threshold(tmp_path):
    # near the conjectured edge the capped iteration need not converge; the
    # contract is only that certification is never claimed
    out = tmp_path / "wild.csv"
    code = main(["solve", "--v", "0.5", "--m0", "0.4999", "--nodes", "257",
                 "--zmax", "1e4", "--force", "--out", str(out)])
    assert code in (3, 4)


def test_solve_nonconvergence_writes_best_iterate(tmp_path, capsys):
    out = tmp_path / "partial.csv"
    code = main(solve_args(out, extra=["--max-iter", "1"]))
    assert code == 3
    assert "did not converge" in capsys.readouterr().err
    record = read_profile(str(out))
    assert not record.certified
    payload = json.loads(out.with_suffix(".json").read_text())
    assert payload["report"]["certified"] is False


def test_solve_gnuplot_flag(tmp_path):
    out = tmp_path / "g.csv"
    code = main(solve_args(out, extra=["--gnuplot"]))
    assert code == 0
    script = out.with_suffix(".gnuplot").read_text()
    assert str(out) in script


def test_outdir_environment_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("COAGDRIFT_OUTDIR", str(tmp_path))
    code = main(["solve", "--v", "0.5", "--m0", "0.005", *FAST_SOLVE])
    assert code == 0
    assert (tmp_path / "profile_v0.5_m00.005.csv").exists()


def test_simulate_command(solved_file, tmp_path, capsys):
    outdir = tmp_path / "sim"
    code = main([
        "simulate", "--profile", str(solved_file), "--t0", "1", "--t1", "1.1",
        "--cells", "512", "--xmax", "50", "--cfl", "0.5", "--convolution", "fft",
        "--allow-truncation", "--snapshots", "1.05", "--out", str(outdir),
        "--record-every", "10",
    ])
    assert code == 0
    diag_path = outdir / "diagnostics.csv"
    assert diag_path.exists()
    rows = diag_path.read_text().splitlines()
    assert rows[0] == "t,m0,m1,u,self_similar_error"
    data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
    assert np.all(np.isfinite(data))
    # volume stays constant at scheme accuracy
    assert np.max(np.abs(data[:, 2] - data[0, 2])) / data[0, 2] < 1e-2
    assert (outdir / "snapshot_t1.05.csv").exists()
    assert (outdir / "snapshot_t1.1.csv").exists()


def test_simulate_rejects_bad_times(solved_file, tmp_path):
    code = main([
        "simulate", "--profile", str(solved_file), "--t0", "2", "--t1", "1",
        "--out", str(tmp_path),
    ])
    assert code == 2


def test_sweep_command(tmp_path):
    outdir = tmp_path / "swp"
    code = main([
        "sweep", "--v", "0.5", "--m0-list", "0.004,0.008", *FAST_SOLVE,
        "--out-dir", str(outdir), "--jobs", "2",
    ])
    assert code == 0
    for m0 in ("0.004", "0.008"):
        assert (outdir / f"profile_v0.5_m0{m0}.csv").exists()
        assert (outdir / f"profile_v0.5_m0{m0}.json").exists()
