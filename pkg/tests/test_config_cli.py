import json
import warnings
from pathlib import Path

import pytest

from spamsplit import cli
from spamsplit.config import DEFAULTS, ConfigError, load_config
from spamsplit.fitting import FitError
from spamsplit.sim.device import DEFAULT_DEVICE

SMALL = """\
rabief:
  n_angles: 8
  shots: 4
  reset_modes: [slow_qutrit]
mcb:
  depths: [0, 1, 2]
  randomizations: 4
  shots: 32
mitigation:
  n_qubits: [4]
pec:
  n_thetas: 2
  pool: 40
  sets: 5
  per_set: 16
  shots: 20
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return str(path)


@pytest.fixture(autouse=True)
def pinned_time(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_defaults():
    cfg = load_config()
    assert cfg["mcb"]["randomizations"] == 256 and cfg["pec"]["sets"] == 300
    assert cfg.device() == DEFAULT_DEVICE
    assert set(cfg.to_dict()) == set(DEFAULTS)


def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("mcb:\n  shots: 10\n  bogus: 1\n")
    with pytest.raises(ConfigError, match=r"bad.yaml:3: unknown key 'bogus' in section 'mcb'"):
        load_config(path)
    path.write_text("nonsense: {}\n")
    with pytest.raises(ConfigError, match="bad.yaml:1: unknown section"):
        load_config(path)


def test_invalid_values(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("mcb:\n  reset_mode: medium\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("device:\n  t1_us: -5\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_device_keys_and_empty_file(tmp_path):
    path = tmp_path / "dev.yaml"
    path.write_text("device:\n  t1_us: 150\n")
    assert load_config(path).device().t1 == pytest.approx(150e-6)
    path.write_text("")
    assert load_config(path).device() == DEFAULT_DEVICE


def test_exit_code_for_config_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("mcb:\n  bogus: 1\n")
    assert run("mcb", "--config", path, "--out", tmp_path) == 2
    assert "bad.yaml:2" in capsys.readouterr().err
    assert run("mcb", "--threads", 0, "--out", tmp_path) == 2
    assert run("mitigate-ghz", "--model", tmp_path / "missing.json", "--out", tmp_path) == 2


def test_exit_code_for_numerical_error(tmp_path, monkeypatch):
    def boom(args, cfg, run_dir):
        raise FitError("no convergence")

    monkeypatch.setitem(cli.COMMANDS, "mcb", boom)
    assert run("mcb", "--out", tmp_path) == 3


def _files(run_dir: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(run_dir.iterdir())}


def test_mcb_run_is_byte_identical(small, tmp_path, capsys):
    assert run("mcb", "--config", small, "--out", tmp_path, "--seed", 4) == 0
    run_dir = Path(capsys.readouterr().out.strip())
    assert run_dir == tmp_path / "mcb" / "20231114T221320Z-4"
    first = _files(run_dir)
    assert set(first) == {"expectations.csv", "fits.json", "records.json", "manifest.json"}
    assert run("mcb", "--config", small, "--out", tmp_path, "--seed", 4) == 0
    assert _files(run_dir) == first
    manifest = json.loads(first["manifest.json"])
    assert manifest["seed"] == 4 and set(manifest["artifacts"]) == set(first) - {"manifest.json"}
    header = first["expectations.csv"].decode().splitlines()[0]
    assert header == "k,IZ,IZ_stderr,ZI,ZI_stderr,ZZ,ZZ_stderr"


def test_threads_do_not_change_results(small, tmp_path, capsys):
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"t{threads}"
        assert run("mitigate-ghz", "--config", small, "--out", out, "--n", 4, 6, "--threads", threads) == 0
        outs.append((Path(capsys.readouterr().out.strip()) / "ghz.csv").read_bytes())
    assert outs[0] == outs[1]


def test_blue_workflow_model_lacks_slow_fidelity(small, tmp_path, capsys):
    assert run("workflow", "--config", small, "--out", tmp_path, "--path", "blue", "--exact") == 0
    model_path = Path(capsys.readouterr().out.strip()) / "model.json"
    model = json.loads(model_path.read_text())
    assert model["path"] == "blue" and model["f_sp_slow"] is None and model["f_sp_fast"] is not None
    # GHZ mitigation uses slow resets, which a blue-path model cannot supply
    assert run("mitigate-ghz", "--config", small, "--out", tmp_path, "--model", model_path) == 2


def test_rabief_and_pec_commands(small, tmp_path, capsys):
    assert run("rabief", "--config", small, "--out", tmp_path, "--exact") == 0
    table = json.loads((Path(capsys.readouterr().out.strip()) / "summary.json").read_text())
    assert set(table) == {"slow_qutrit"}
    assert run("pec-teleport", "--config", small, "--out", tmp_path) == 0
    rows = json.loads((Path(capsys.readouterr().out.strip()) / "fidelity.json").read_text())
    assert len(rows) == 2 and all(r["q25"] <= r["median"] <= r["q75"] for r in rows)


def test_ideal_device_workflow(tmp_path, capsys):
    path = tmp_path / "ideal.yaml"
    ideal = SMALL.replace("mcb:\n", "mcb:\n  f_a: 1.0\n  f_s: 1.0\n  f_c: 1.0\n  p_sp_slow: 0.0\n  p_sp_fast: 0.0\n")
    path.write_text(ideal + """\
device:
  t_eff_mK: 0.1
  p_leak: 0.0
  assignment: [1, 0, 0, 0, 1, 0, 0, 0, 1]
""")
    # flat decays fall back to f = 1, and a zero RabiEF amplitude may round to a tiny negative
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert run("workflow", "--config", path, "--out", tmp_path, "--exact") == 0
    model = json.loads((Path(capsys.readouterr().out.strip()) / "model.json").read_text())
    for key in ("f_a", "f_s", "f_c", "f_sp_fast"):
        assert model[key] == pytest.approx(1.0, abs=1e-6)
