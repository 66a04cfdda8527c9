import csv
import json
import shutil

import numpy as np
import pytest

from transhock import cli
from transhock.config import Config, from_dict, loads, parse_config
from transhock.errors import CompatibilityViolation, ConfigError
from transhock.io import read_checkpoint, read_csv, write_checkpoint, write_csv, write_field_csv

SMALL_RUN = {
    "perturbation": {"eps": 1e-3,
                     "u10": [{"amp": 1.0, "y2": ["cos", 1], "y3": ["cos", 0]}],
                     "Phi0": [{"amp": 1.0, "y2": ["cos", 1], "y3": ["cos", 1]}],
                     "Pex": [{"amp": 1.0, "y2": ["cos", 1], "y3": ["cos", 0]}]},
    "grid": {"N1": 17, "N2": 9, "N3": 9},
}
ARTIFACTS = ("fields.csv", "shock.csv", "history.csv", "report.json")


def write_cfg(path, raw):
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = write_cfg(d / "cfg.json", SMALL_RUN)
    assert cli.main(["solve", "--config", cfg, "--out", str(d / "a")]) == 0
    return d


# --- checkpoints and tables ------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"v": rng.standard_normal((4, 5, 3, 3)), "v5": rng.standard_normal((3, 3)), "s": np.array(2.5)}
    meta = {"iteration": 7, "note": "x"}
    write_checkpoint(tmp_path / "c.ckpt", arrays, meta)
    back, m = read_checkpoint(tmp_path / "c.ckpt")
    assert m == meta
    for k, a in arrays.items():
        assert np.array_equal(back[k], a)
    assert not (tmp_path / "c.ckpt.tmp").exists()


def test_checkpoint_rejects_foreign_and_truncated_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"hello world\n")
    with pytest.raises(ValueError):
        read_checkpoint(tmp_path / "bad")
    write_checkpoint(tmp_path / "c", {"a": np.ones(10)})
    raw = (tmp_path / "c").read_bytes()
    (tmp_path / "c").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_checkpoint(tmp_path / "c")


def test_csv_is_rfc4180(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b,c", 'd"e'], [[0.1, 1.0 / 3.0, 2]])
    raw = (tmp_path / "t.csv").read_bytes()
    assert raw.startswith(b'a,"b,c","d""e"\r\n')
    assert raw.endswith(b"\r\n")
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["a", "b,c", 'd"e']
    # repr keeps every bit
    assert float(rows[1][1]) == 1.0 / 3.0


def test_field_csv_layout(tmp_path, rng):
    F = rng.standard_normal((3, 2, 2))
    write_field_csv(tmp_path / "f.csv", {"x": np.arange(3.0)[:, None, None]}, {"F": F})
    header, data = read_csv(tmp_path / "f.csv")
    assert header == ["i1", "i2", "i3", "x", "F"]
    assert data.shape == (12, 5)
    assert np.array_equal(data[:, 4], F.ravel())
    assert np.array_equal(data[:, 3], data[:, 0])


# --- configuration ------------------------------------------------------------------------------------


def test_default_config_round_trips(tmp_path):
    cfg = Config()
    again = loads(cfg.dumps())
    assert again.to_dict() == cfg.to_dict()
    cfg.save(tmp_path / "c.json")
    assert parse_config(tmp_path / "c.json").dumps() == cfg.dumps()


def test_full_config_round_trips():
    cfg = from_dict(SMALL_RUN)
    assert cfg.eps == 1e-3 and cfg.N1 == 17
    assert loads(cfg.dumps()).to_dict() == cfg.to_dict()


def test_incompatible_u20_mode_names_the_mode():
    raw = {"perturbation": {"eps": 1e-3, "u20": [{"amp": 1.0, "y2": ["cos", 1], "y3": ["cos", 0]}]}}
    with pytest.raises(CompatibilityViolation) as e:
        from_dict(raw)
    assert "u20" in str(e.value)


@pytest.mark.parametrize("raw,key", [
    ({"gass": {}}, "gass"),
    ({"grid": {"N1": 17, "N4": 9}}, "N4"),
    ({"solver": {"fp_tol": 1e-9, "tolerance": 1}}, "tolerance"),
    ({"perturbation": {"u10": [{"amp": 1.0, "phase": 0.0}]}}, "phase"),
])
def test_unknown_key_is_named(raw, key):
    with pytest.raises(ConfigError) as e:
        from_dict(raw)
    assert key in str(e.value)


@pytest.mark.parametrize("raw", [
    {"gas": {"gamma": 1.0}},
    {"inflow": {"u0": 1.0}},
    {"force": {"constant": -0.1}},
    {"grid": {"N1": 16}},
    {"grid": {"N2": 7}},
    {"solver": {"relax": 1.5}},
    {"solver": {"upstream": "lbm"}},
    {"perturbation": {"eps": -1.0}},
    {"nozzle": {"L0": 2.0, "L1": 1.0}},
])
def test_invalid_values_rejected(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.json")


# --- subcommands ---------------------------------------------------------------------------------------


def test_background_command(tmp_path, capsys):
    assert cli.main(["background", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "background.csv")
    assert data.shape[0] > 10
    side = json.loads((tmp_path / "background.json").read_text())
    assert side["Ls"] == pytest.approx(1.520322574436636, abs=1e-9)
    assert "Ls =" in capsys.readouterr().out


def test_sweep_command(tmp_path):
    assert cli.main(["sweep", "--pe-steps", "5", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "sweep.csv")
    assert header == ["Pe", "Ls"] and data.shape == (5, 2)
    assert np.all(np.diff(data[:, 0]) > 0) and np.all(np.diff(data[:, 1]) < 0)


def test_solve_at_zero_eps_gives_flat_shock(tmp_path):
    assert cli.main(["solve", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "shock.csv")
    xi = data[:, header.index("xi")]
    Ls = json.loads((tmp_path / "report.json").read_text())["Ls"]
    assert np.max(np.abs(xi - Ls)) <= 1e-12


def test_solve_artifacts(solved):
    a = solved / "a"
    for name in ARTIFACTS + ("config.json", "solution.ckpt", "checkpoint.ckpt"):
        assert (a / name).is_file(), name
    rep = json.loads((a / "report.json").read_text())
    assert rep["status"] == "converged" and rep["eps"] == 1e-3
    header, hist = read_csv(a / "history.csv")
    assert header[:5] == ["iteration", "dv", "dv5", "ratio", "pi_norm"]
    assert len(hist) == len(rep["history"])


def test_verify_reproduces_report(solved, capsys):
    out = solved / "verify"
    assert cli.main(["verify", "--solution", str(solved / "a"), "--out", str(out)]) == 0
    v = json.loads((out / "verify.json").read_text())
    assert v["report_deviation"] <= 1e-12
    assert v["field_deviation"] <= 1e-12


def test_verify_flags_tampered_report(solved, tmp_path):
    d = tmp_path / "copy"
    shutil.copytree(solved / "a", d)
    rep = json.loads((d / "report.json").read_text())
    rep["entropy_margin"] += 1e-6
    (d / "report.json").write_text(json.dumps(rep))
    assert cli.main(["verify", "--solution", str(d), "--out", str(tmp_path / "v")]) == 3


def test_reruns_are_bit_identical(solved):
    cfg = str(solved / "cfg.json")
    assert cli.main(["solve", "--config", cfg, "--out", str(solved / "b")]) == 0
    for name in ARTIFACTS:
        assert (solved / "a" / name).read_bytes() == (solved / "b" / name).read_bytes(), name


def test_resume_from_checkpoint(solved, tmp_path):
    # interrupt after three iterations, then resume with the original settings
    raw = dict(SMALL_RUN, solver={"max_outer": 3})
    short = write_cfg(tmp_path / "short.json", raw)
    assert cli.main(["solve", "--config", short, "--out", str(tmp_path / "k")]) == 2
    ck = tmp_path / "k" / "checkpoint.ckpt"
    assert read_checkpoint(ck)[1]["iteration"] == 3
    cfg = str(solved / "cfg.json")
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "c"), "--resume", str(ck)]) == 0
    _, fa = read_csv(solved / "a" / "fields.csv")
    _, fc = read_csv(tmp_path / "c" / "fields.csv")
    assert np.max(np.abs(fa - fc)) <= 1e-12


def test_overrides(tmp_path):
    assert cli.main(["solve", "--grid", "17x9x11", "--eps", "0", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["grid"] == [17, 9, 11]


@pytest.mark.parametrize("argv", [
    ["solve", "--grid", "16x9x9"],
    ["solve", "--eps", "-1"],
    ["verify", "--solution", "/nonexistent/dir"],
    ["sweep", "--pe-steps", "1"],
])
def test_failures_exit_nonzero_with_stage(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "in stage" in err


def test_bad_config_file_exits_nonzero(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"grid": {"N1": 17, "N9": 1}})
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "N9" in err and "config" in err


def test_not_converged_exits_nonzero(tmp_path, capsys):
    raw = dict(SMALL_RUN, solver={"max_outer": 2})
    cfg = write_cfg(tmp_path / "c.json", raw)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "NotConverged" in capsys.readouterr().err
    assert (tmp_path / "history.csv").is_file()


def test_threads_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("TRANSHOCK_THREADS", "1")
    assert cli.main(["background", "--out", str(tmp_path)]) == 0
    assert cli.main(["background", "--threads", "1", "--out", str(tmp_path)]) == 0
