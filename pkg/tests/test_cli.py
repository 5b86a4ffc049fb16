"""End-to-end command-line checks: exit codes, CSV schemas, determinism."""

import json

import numpy as np
import pytest

from encmpc.cli import main, parse_sweep, BENCH_COLUMNS
from encmpc.config import ConfigError
from encmpc.mpqp import PwaController
from encmpc.simulation import benchmark_scenario, scenario_to_dict


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One synthesized benchmark controller shared by the read-only tests."""
    out = tmp_path_factory.mktemp("cli")
    assert main(["synthesize", "--out", str(out)]) == 0
    return out


def read_csv(path):
    lines = path.read_bytes().decode().split("\r\n")
    assert lines[-1] == ""
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:-1]]
    return header, rows


def column(header, rows, name, cast=float):
    idx = header.index(name)
    return [cast(row[idx]) for row in rows]


def test_synthesize_writes_controller(workdir, capsys):
    ctrl = PwaController.load(workdir / "controller.json")
    assert ctrl.nregions >= 3
    # resave must reproduce the file byte for byte
    text = (workdir / "controller.json").read_text()
    ctrl.save(workdir / "resaved.json")
    assert (workdir / "resaved.json").read_text() == text


def test_synthesize_unconstrained_single_region(tmp_path, capsys):
    d = scenario_to_dict(benchmark_scenario())
    d["name"] = "unconstrained"
    d["u_lo"] = [-1e999]
    d["u_hi"] = [1e999]
    d["x_lo"] = [-1e999, -1e999]
    d["x_hi"] = [1e999, 1e999]
    (tmp_path / "uncon.json").write_text(json.dumps(d))
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"scenario_path": str(tmp_path / "uncon.json")}))
    rc = main(["synthesize", "--config", str(tmp_path / "cfg.json"),
               "--out", str(tmp_path / "out")])
    assert rc == 0
    ctrl = PwaController.load(tmp_path / "out" / "controller.json")
    assert ctrl.nregions == 1


def test_malformed_config_exits_2_with_location(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"backend": "qe",}')
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "line 1 column 18" in err


def test_malformed_scenario_exits_2_with_location(tmp_path, capsys):
    (tmp_path / "sc.json").write_text("{\n  broken\n}")
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"scenario_path": str(tmp_path / "sc.json")}))
    rc = main(["synthesize", "--config", str(tmp_path / "cfg.json"),
               "--out", str(tmp_path)])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_backend_and_field_exit_2(tmp_path, capsys):
    assert main(["run", "--backend", "rot13", "--out", str(tmp_path)]) == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"keybits": 512}))
    assert main(["run", "--config", str(tmp_path / "cfg.json"),
                 "--out", str(tmp_path)]) == 2
    assert "keybits" in capsys.readouterr().err


def test_run_requires_controller(tmp_path, capsys):
    rc = main(["run", "--backend", "qe", "--out", str(tmp_path / "empty")])
    assert rc == 2
    assert "synthesize" in capsys.readouterr().err


def test_run_qe_mismatch_and_determinism(workdir, capsys):
    assert main(["run", "--backend", "qe", "--out", str(workdir)]) == 0
    path = workdir / "trajectory_qe.csv"
    first = path.read_bytes()
    header, rows = read_csv(path)
    u = np.array(column(header, rows, "u0"))
    u_plain = np.array(column(header, rows, "u_plain0"))
    assert np.max(np.abs(u - u_plain)) <= 1e-9
    assert len(rows) == 60
    assert main(["run", "--backend", "qe", "--out", str(workdir)]) == 0
    assert path.read_bytes() == first


def test_run_paillier_small_delta_within_budget(workdir, tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"backend": "paillier", "delta": 6, "out_dir": str(workdir)}))
    assert main(["run", "--config", str(tmp_path / "cfg.json")]) == 0
    header, rows = read_csv(workdir / "trajectory_paillier.csv")
    u = np.array(column(header, rows, "u0"))
    u_plain = np.array(column(header, rows, "u_plain0"))
    ctrl = PwaController.load(workdir / "controller.json")
    K, _ = ctrl.gain_table()
    budget = (2 * 2**4 * np.max(np.abs(K)) + 2) * 2.0**-6
    assert np.max(np.abs(u - u_plain)) <= budget


def test_run_fault_exits_1_with_fault_row(tmp_path, capsys):
    d = scenario_to_dict(benchmark_scenario())
    d["x0"] = [40.0, 40.0]
    (tmp_path / "sc.json").write_text(json.dumps(d))
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"scenario_path": str(tmp_path / "sc.json")}))
    out = tmp_path / "out"
    assert main(["synthesize", "--config", str(tmp_path / "cfg.json"),
                 "--out", str(out)]) == 0
    rc = main(["run", "--config", str(tmp_path / "cfg.json"),
               "--backend", "qe", "--out", str(out)])
    assert rc == 1
    text = (out / "trajectory_qe.csv").read_text()
    assert "StateNotCovered" in text


def test_flag_overrides_config_file(workdir, tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"backend": "plaintext"}))
    assert main(["run", "--config", str(tmp_path / "cfg.json"),
                 "--backend", "qe", "--out", str(workdir)]) == 0
    assert "backend qe" in capsys.readouterr().out


def test_epsilon_q_conflict_exits_2(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"w": 4, "epsilon_q": 2**-10}))
    rc = main(["run", "--config", str(tmp_path / "cfg.json"),
               "--out", str(tmp_path)])
    assert rc == 2


def test_parse_sweep():
    assert parse_sweep("") == [{}]
    pts = parse_sweep("key_bits=512,1024;w=8")
    assert pts == [{"key_bits": 512, "w": 8}, {"key_bits": 1024, "w": 8}]
    with pytest.raises(ConfigError):
        parse_sweep("nonsense")
    with pytest.raises(ConfigError):
        parse_sweep("notafield=1")
    with pytest.raises(ConfigError):
        parse_sweep("w=")


def test_bench_schema_counts_and_determinism(workdir, capsys):
    argv = ["bench", "--out", str(workdir),
            "--sweep", "backend=qe,paillier"]
    assert main(argv) == 0
    path = workdir / "bench.csv"
    first = path.read_bytes()
    header, rows = read_csv(path)
    assert header == list(BENCH_COLUMNS)
    assert [r[0] for r in rows] == ["qe", "paillier"]
    qe = dict(zip(header, rows[0]))
    pl = dict(zip(header, rows[1]))
    # n=2, m=1: payload and count closed forms
    assert int(qe["payload_total"]) == 32 + 3 * 64 + 2 * 64 + 64
    assert (int(qe["enc"]), int(qe["con"]), int(qe["dec"]),
            int(qe["sums"])) == (3, 2, 3, 2)
    L = int(pl["key_bits"])
    assert int(pl["payload_s_to_c"]) == 32 + 3 * 2 * L
    assert int(pl["payload_c_to_a"]) == 2 * L
    assert (int(pl["he_enc"]), int(pl["he_mul"]), int(pl["he_add"]),
            int(pl["he_dec"])) == (3, 2, 2, 1)
    # wall times live on stdout, never in the CSV
    assert "timing" in capsys.readouterr().out
    assert main(argv) == 0
    assert path.read_bytes() == first


def test_attack_csv_deterministic(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"attack_trials": 20, "key_bits": 256}))
    argv = ["attack", "--config", str(tmp_path / "cfg.json"),
            "--out", str(tmp_path / "out")]
    assert main(argv) == 0
    path = tmp_path / "out" / "attack.csv"
    first = path.read_bytes()
    header, rows = read_csv(path)
    assert header == ["noise", "plaintext", "paillier", "qe", "qe_quantized"]
    assert [r[0] for r in rows] == ["none", "gaussian", "uniform", "impulse"]
    plain_none = float(rows[0][1])
    assert plain_none < 1e-3
    assert main(argv) == 0
    assert path.read_bytes() == first
