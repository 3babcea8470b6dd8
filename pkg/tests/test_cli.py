import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ticem import io as tio
from ticem.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, main
from ticem.interference import SinusoidPair, analytic_envelope

ROOT = Path(__file__).resolve().parents[1]


def _toml(tmp_path, edge=2.0, extra="", max_iter=20000, pattern="[-1.0, 1.0, -1.0, 1.0]"):
    text = (ROOT / "configs" / "desk_sphere.toml").read_text()
    text = text.replace("edge_mm = 1.5", f"edge_mm = {edge}")
    text = text.replace("max_iter = 20000", f"max_iter = {max_iter}")
    text = text.replace("[-1.0, 1.0, -1.0, 1.0]", pattern, 1)
    p = tmp_path / "cfg.toml"
    p.write_text(text + extra)
    return p


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for name in ("mesh", "assemble", "solve", "leadfield", "linearize", "interfere",
                 "compare", "run", "envelope-demo"):
        assert name in out


def test_mesh_generate_and_inspect(tmp_path, capsys):
    cfg = _toml(tmp_path)
    assert main(["mesh", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert main(["mesh", "--inspect", str(tmp_path / "o" / "mesh.txt")]) == 0
    out = capsys.readouterr().out
    assert '"patches"' in out and '"TP9"' in out


def test_stage_chain_reuses_stored_products(tmp_path):
    cfg = _toml(tmp_path)
    out = tmp_path / "o"
    base = ["--config", str(cfg), "--out", str(out), "--verbosity", "0"]
    for cmd in ("assemble", "solve", "leadfield"):
        assert main([cmd] + base) == 0
    for name in ("A", "B", "C", "R", "T", "S"):
        assert (out / "f1000" / f"{name}.coo").is_file()
    lf = out / "f1000" / "lead_field.csv"
    h = tio.file_sha256(lf)
    lf.unlink()
    assert main(["leadfield"] + base) == 0
    assert tio.file_sha256(lf) == h
    assert main(["solve", "--frequency", "1010"] + base) == 0
    assert main(["interfere"] + base) == 0
    _, rows = tio.read_csv(out / "interference" / "steering.csv")
    assert len(rows) == 3
    assert main(["linearize"] + base) == 0
    _, rows = tio.read_csv(out / "f1000" / "lin_vs_ref.csv")
    assert [r[0] for r in rows] == ["TP9", "TP9"]


def test_run_and_compare(tmp_path, capsys):
    cfg = _toml(tmp_path, extra="")
    text = cfg.read_text().replace('dRc_ohm = 5000.0', 'dRc_ohm = 2000.0')
    cfg.write_text(text)
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--verbosity", "0"]) == 0
    assert (out / "manifest.json").is_file()
    capsys.readouterr()
    assert main(["compare", str(out), str(out), "--db", "-18",
                 "--field", "perturb_TP9_1000/lin/f1000/lead_field,"
                            "perturb_TP9_1000/ref/f1000/lead_field",
                 "--out", str(tmp_path / "cmp")]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1].split(",")
    assert line[0] == "perturb_TP9_1000/lin/f1000/lead_field vs perturb_TP9_1000/ref/f1000/lead_field"
    assert float(line[2]) > 0
    assert (tmp_path / "cmp" / "compare.csv").is_file()


def test_exit_code_config(tmp_path):
    assert main(["run", "--out", str(tmp_path)]) == EXIT_CONFIG  # no --config
    bad = _toml(tmp_path, pattern="[1.0, 1.0, -1.0, 1.0]")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["mesh", "--config", str(_toml(tmp_path, edge=5.0)),
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["solve", "--config", str(_toml(tmp_path)), "--out", str(tmp_path),
                 "--threads", "-1"]) == EXIT_CONFIG


def test_exit_code_numeric(tmp_path):
    cfg = _toml(tmp_path, max_iter=1)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC


def test_exit_code_io(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", str(_toml(tmp_path)), "--out", str(blocker / "o")]) == EXIT_IO
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == EXIT_IO


def test_env_overrides(tmp_path, monkeypatch):
    cfg = _toml(tmp_path)
    monkeypatch.setenv("TICEM_OUT", str(tmp_path / "env"))
    assert main(["mesh", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "mesh.txt").is_file()
    assert main(["mesh", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "mesh.txt").is_file()
    monkeypatch.setenv("TICEM_THREADS", "many")
    assert main(["mesh", "--config", str(cfg)]) == EXIT_CONFIG


def test_envelope_demo(tmp_path):
    assert main(["envelope-demo", "--A1", "1.5", "--A2", "0.5", "--duration", "0.1",
                 "--rate", "20000", "--out", str(tmp_path)]) == 0
    header, rows = tio.read_csv(tmp_path / "envelope_demo.csv")
    data = np.array(rows, dtype=float)
    assert header[0] == "t" and len(rows) == 2000
    p = SinusoidPair(1.5, 0.5, 1000.0, 1010.0)
    assert np.array_equal(data[:, header.index("env_sum")], analytic_envelope(p, data[:, 0]))
    assert main(["envelope-demo", "--random-phases", "--seed", "4", "--duration", "0.01",
                 "--out", str(tmp_path / "r")]) == 0


def test_console_script_exit_status(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ticem.cli", "run", "--config",
                        str(tmp_path / "missing.toml")], capture_output=True, text=True)
    assert r.returncode == EXIT_IO
    assert "missing.toml" in r.stderr
