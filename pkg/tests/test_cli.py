"""End-to-end checks of the experiment driver.

Ensemble runs here use tiny W and a handful of samples; the point is
exit-code semantics, config handling, determinism across worker
counts, and exact merge behavior, not statistical power.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from blockband import cli
from blockband.cli import (
    RunConfig,
    UsageError,
    config_hash,
    parse_config_text,
    validate_config,
)


def _write(path, text):
    path.write_text(text, encoding="ascii")
    return str(path)


def _run(argv):
    return cli.main([str(a) for a in argv])


# ---------------------------------------------------------------------------
# config parsing


def test_parse_config_types_and_comments():
    got = parse_config_text(
        "seed = 7   # rng stream\n"
        "\n"
        "alpha=0.1\n"
        "eps = 0.5, 1.0, 2.0\n"
        "cache = false\n"
        "functional = radial\n"
    )
    assert got == {
        "seed": 7,
        "alpha": 0.1,
        "eps": (0.5, 1.0, 2.0),
        "cache": False,
        "functional": "radial",
    }


@pytest.mark.parametrize(
    "line,match",
    [
        ("no_such_key = 1", "unknown config key"),
        ("seed", "expected key=value"),
        ("seed = abc", "bad value"),
        ("eps = 0.5;1.0", "comma-separated"),
        ("cache = maybe", "true/false"),
    ],
)
def test_parse_config_rejects(line, match):
    with pytest.raises(UsageError, match=match):
        parse_config_text(line)


@pytest.mark.parametrize(
    "overrides,match",
    [
        (dict(alpha=0.25), "alpha"),
        (dict(alpha=-0.1), "alpha"),
        (dict(W=0), "W"),
        (dict(samples=0), "samples"),
        (dict(workers=0), "workers"),
        (dict(seed=-1), "seed"),
        (dict(kind="r2", lam0=1.5), "sqrt"),
        (dict(kind="r2", window=0.0), "window"),
        (dict(kind="r2", window=1e9), "window"),
        (dict(kind="r2", smax=50.0), "diameter|window"),
        (dict(kind="saddle-scan", lam0=2.0), "lam0"),
        (dict(kind="saddle-scan", functional="bogus"), "functional"),
        (dict(eps=(0.5, -1.0)), "eps"),
        (dict(kind="g2", eps=(0.0,)), "eps"),
        (dict(h=0.0), "h"),
        (dict(bins=0), "bins"),
    ],
)
def test_validate_config_rejects(overrides, match):
    kind = overrides.pop("kind", "dos")
    with pytest.raises(UsageError, match=match):
        validate_config(RunConfig(kind=kind, **overrides))


def test_config_hash_separates_physics_from_partition():
    a = RunConfig(kind="dos", seed=3, samples=10, workers=1)
    b = RunConfig(kind="dos", seed=3, samples=4, workers=8, index_offset=6, out="x")
    c = RunConfig(kind="dos", seed=4, samples=10, workers=1)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a, physics_only=True) == config_hash(b, physics_only=True)
    assert config_hash(a, physics_only=True) != config_hash(c, physics_only=True)


# ---------------------------------------------------------------------------
# exit codes


def test_usage_errors_exit_1(tmp_path, capsys):
    assert _run([]) == 1
    assert _run(["dos", "--bogus-flag"]) == 1
    bad = _write(tmp_path / "bad.cfg", "alpha = 0.9\n")
    assert _run(["dos", "--config", bad]) == 1
    assert _run(["dos", "--config", str(tmp_path / "missing.cfg")]) == 1
    mismatched = _write(tmp_path / "kind.cfg", "kind = r2\n")
    assert _run(["dos", "--config", mismatched]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err


def test_io_error_exits_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = _run(["closure", "--out", blocker / "sub"])
    assert code == 3
    assert "i/o error" in capsys.readouterr().err


def test_verification_failure_exits_2(tmp_path, monkeypatch, capsys):
    def failing(cfg):
        return {"closure.csv": "s,value,prediction\n"}, False

    monkeypatch.setattr(cli, "_run_closure", failing)
    code = _run(["closure", "--out", tmp_path / "o"])
    assert code == 2
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "fail"
    assert "status: fail" in capsys.readouterr().out


def test_console_entry_point_exists():
    r = subprocess.run(
        [sys.executable, "-m", "blockband.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0
    assert "closure" in r.stdout


# ---------------------------------------------------------------------------
# runs and manifests

ENSEMBLE_CFG = "W = 20\nsamples = 4\nseed = 9\n"


def _read_manifest(out_dir):
    with open(os.path.join(str(out_dir), "manifest.json")) as fh:
        return json.load(fh)


def test_dos_run_writes_outputs_and_manifest(tmp_path):
    cfg = _write(tmp_path / "run.cfg", ENSEMBLE_CFG)
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "o"]) == 0
    man = _read_manifest(tmp_path / "o")
    assert man["status"] == "pass"
    assert man["config"]["W"] == 20
    assert man["batches"] == [4]
    assert set(man["outputs"]) == {"dos.csv", "dos_summary.csv", "spectra.csv"}
    rows = np.loadtxt(tmp_path / "o" / "dos.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 5
    assert rows[:, 2].sum() == 4 * 40  # every eigenvalue lands in some bin
    header = (tmp_path / "o" / "dos.csv").read_text().splitlines()[0]
    assert header == "lambda_lo,lambda_hi,count,density,semicircle"


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = _write(tmp_path / "run.cfg", "W = 20\nsamples = 70\nseed = 11\n")
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "w1", "--workers", 1]) == 0
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "w2", "--workers", 2]) == 0
    man1, man2 = _read_manifest(tmp_path / "w1"), _read_manifest(tmp_path / "w2")
    assert man1["outputs"] == man2["outputs"]
    assert man1["batches"] == [32, 32, 6]
    for name in man1["outputs"]:
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w2" / name).read_bytes()
        assert a == b


def test_spectra_cache_reused_when_hash_matches(tmp_path):
    cfg = _write(tmp_path / "run.cfg", ENSEMBLE_CFG)
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "o"]) == 0
    first = (tmp_path / "o" / "dos.csv").read_bytes()
    # poison the cache; a rerun must consume it rather than resample
    spath = tmp_path / "o" / "spectra.csv"
    lines = spath.read_text().splitlines()
    parts = lines[0].split(",")
    parts[3] = "1.25"
    lines[0] = ",".join(parts)
    spath.write_text("\n".join(lines) + "\n")
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "o"]) == 0
    assert (tmp_path / "o" / "dos.csv").read_bytes() != first


def test_stale_cache_ignored_on_config_change(tmp_path):
    cfg = _write(tmp_path / "run.cfg", ENSEMBLE_CFG)
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "o"]) == 0
    poisoned = tmp_path / "o" / "spectra.csv"
    poisoned.write_text(poisoned.read_text().replace("9,0", "9,7", 1))
    cfg2 = _write(tmp_path / "run.cfg", "W = 20\nsamples = 4\nseed = 10\n")
    assert _run(["dos", "--config", cfg2, "--out", tmp_path / "o"]) == 0
    man = _read_manifest(tmp_path / "o")
    assert man["config"]["seed"] == 10  # fresh run, poisoned cache not trusted


def test_flag_overrides_beat_config_file(tmp_path):
    cfg = _write(tmp_path / "run.cfg", ENSEMBLE_CFG)
    assert _run(["dos", "--config", cfg, "--out", tmp_path / "o", "--seed", 12]) == 0
    assert _read_manifest(tmp_path / "o")["config"]["seed"] == 12


def test_env_var_supplies_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOCKBAND_OUT", str(tmp_path / "envroot"))
    assert _run(["closure"]) == 0
    assert (tmp_path / "envroot" / "closure" / "closure.csv").exists()


def test_closure_prediction_column(tmp_path):
    cfg = _write(tmp_path / "c.cfg", "lam0 = 0.5\n")
    assert _run(["closure", "--config", cfg, "--out", tmp_path / "o"]) == 0
    rows = np.loadtxt(tmp_path / "o" / "closure.csv", delimiter=",", skiprows=1)
    s = rows[:, 0]
    assert np.array_equal(rows[:, 2], 1.0 - np.sinc(s) ** 2)
    assert np.max(np.abs(rows[:, 1] - rows[:, 2])) <= 1e-6


def test_g2_run_reports_exact_coincidence(tmp_path):
    cfg = _write(tmp_path / "run.cfg", ENSEMBLE_CFG)
    assert _run(["g2", "--config", cfg, "--out", tmp_path / "o"]) == 0
    text = (tmp_path / "o" / "g2.csv").read_text().splitlines()
    row = dict(line.split(",", 2)[:2] for line in text[1:])
    assert row["coincidence_max_dev"] == "0"


def test_grassmann_verify_passes(tmp_path):
    assert _run(["grassmann-verify", "--out", tmp_path / "o"]) == 0
    text = (tmp_path / "o" / "grassmann_verify.csv").read_text()
    assert "FAIL" not in text
    assert text.count("PASS") == 3


def test_saddle_scan_flags_negative_minimum(tmp_path):
    cfg = _write(tmp_path / "s.cfg", "n_points = 2000\nfunctional = radial\n")
    assert _run(["saddle-scan", "--config", cfg, "--out", tmp_path / "o"]) == 0
    rows = (tmp_path / "o" / "saddle_scan.csv").read_text().splitlines()
    assert rows[0] == "functional,n_points,min_real,mean_real"
    name, n_points, min_real, _ = rows[1].split(",")
    assert (name, n_points) == ("radial", "2000")
    assert float(min_real) >= -1e-10


# ---------------------------------------------------------------------------
# merge


def _partial_cfg(tmp_path, name, samples, offset):
    return _write(
        tmp_path / name,
        f"W = 20\nseed = 13\nsamples = {samples}\nindex_offset = {offset}\n",
    )


def test_merge_equals_single_pass_run(tmp_path):
    a = _partial_cfg(tmp_path, "a.cfg", 6, 0)
    b = _partial_cfg(tmp_path, "b.cfg", 6, 6)
    full = _partial_cfg(tmp_path, "full.cfg", 12, 0)
    for cfg, out in ((a, "A"), (b, "B"), (full, "F")):
        assert _run(["dos", "--config", cfg, "--out", tmp_path / out]) == 0
    assert (
        _run(
            [
                "merge",
                tmp_path / "A" / "manifest.json",
                tmp_path / "B" / "manifest.json",
                "--out",
                tmp_path / "AB",
            ]
        )
        == 0
    )
    for name in ("dos.csv", "dos_summary.csv", "spectra.csv"):
        merged = (tmp_path / "AB" / name).read_bytes()
        single = (tmp_path / "F" / name).read_bytes()
        assert merged == single


def test_merge_is_commutative_and_idempotent_on_one(tmp_path):
    a = _partial_cfg(tmp_path, "a.cfg", 5, 0)
    b = _partial_cfg(tmp_path, "b.cfg", 3, 5)
    for cfg, out in ((a, "A"), (b, "B")):
        assert _run(["dos", "--config", cfg, "--out", tmp_path / out]) == 0
    ma = tmp_path / "A" / "manifest.json"
    mb = tmp_path / "B" / "manifest.json"
    assert _run(["merge", ma, mb, "--out", tmp_path / "AB"]) == 0
    assert _run(["merge", mb, ma, "--out", tmp_path / "BA"]) == 0
    assert (tmp_path / "AB" / "dos.csv").read_bytes() == (
        tmp_path / "BA" / "dos.csv"
    ).read_bytes()
    assert _run(["merge", ma, "--out", tmp_path / "AA"]) == 0
    assert (tmp_path / "AA" / "dos.csv").read_bytes() == (
        tmp_path / "A" / "dos.csv"
    ).read_bytes()


def test_merge_rejects_incompatible_manifests(tmp_path, capsys):
    a = _partial_cfg(tmp_path, "a.cfg", 4, 0)
    other = _write(tmp_path / "o.cfg", "W = 21\nseed = 13\nsamples = 4\n")
    assert _run(["dos", "--config", a, "--out", tmp_path / "A"]) == 0
    assert _run(["dos", "--config", other, "--out", tmp_path / "O"]) == 0
    code = _run(
        [
            "merge",
            tmp_path / "A" / "manifest.json",
            tmp_path / "O" / "manifest.json",
            "--out",
            tmp_path / "AO",
        ]
    )
    assert code == 1
    assert "physics hash differs" in capsys.readouterr().err


def test_merge_rejects_non_manifest_input(tmp_path, capsys):
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert _run(["merge", junk, "--out", tmp_path / "J"]) == 1
    assert "not a run manifest" in capsys.readouterr().err
