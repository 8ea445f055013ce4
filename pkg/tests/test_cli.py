import json

import numpy as np
import pytest

from rydline.cli import main
from rydline.model import ChainParams, basis_state, save_state


def test_spectrum_default_and_power(tmp_path, capsys):
    out = tmp_path / "s.txt"
    assert main(["spectrum", "default", "--out", str(out)]) == 0
    assert main(["spectrum", "power", "--in", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["total_power"] > 0 and info["bins"] == 1600


def test_spectrum_convert_roundtrip(tmp_path):
    src = tmp_path / "nu.txt"
    src.write_text("1 4\n2 4\n3 9\n")
    mid = tmp_path / "phi.txt"
    back = tmp_path / "nu2.txt"
    assert main(["spectrum", "convert", "--in", str(src), "--kind", "frequency", "--out", str(mid)]) == 0
    assert main(["spectrum", "convert", "--in", str(mid), "--kind", "phase", "--out", str(back)]) == 0
    np.testing.assert_allclose(np.loadtxt(back), np.loadtxt(src))


def test_gen_noise(tmp_path):
    assert main(["gen-noise", "--seed", "3", "--realizations", "2", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["realization_seeds"]) == 2
    data = np.loadtxt(tmp_path / "phase_0001.csv", delimiter=",", skiprows=1)
    assert data.shape == (manifest["N"], 2)


def test_gap_sweep_and_matrix_elements(tmp_path):
    gaps = tmp_path / "g.csv"
    assert main(["gap-sweep", "--n", "5", "--omega", "0.1:1.0:4", "--delta", "1.1", "--out", str(gaps)]) == 0
    assert len(gaps.read_text().splitlines()) == 5
    me = tmp_path / "m.csv"
    assert main(["matrix-elements", "--n", "5", "--omega", "1.0", "--delta", "1.1", "--out", str(me)]) == 0
    rows = np.loadtxt(me, delimiter=",", skiprows=1)
    assert rows.shape == (32, 6)


def test_thermo_verb(tmp_path, capsys):
    path = tmp_path / "psi.bin"
    save_state(path, basis_state([1, 0, 1, 0, 1]))
    assert main(["thermo", "--state", str(path), "--eig", "0.1,1.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"hint", "z2"}
    assert out["z2"]["lt"] > 0.5


def test_campaign_verb(tmp_path):
    cfg = tmp_path / "ramp.yaml"
    cfg.write_text("kind: ramp\nn_sites: [5]\nt3: [10]\nrealizations: 2\nfast_realizations: 1\n"
                   "spectrum: {height: 0.05}\n")
    out = tmp_path / "out"
    assert main(["ramp", "--config", str(cfg), "--fast", "--out", str(out)]) == 0
    assert (out / "results.csv").exists()
    assert main(["quench", "--config", str(cfg)]) == 2


def test_errors_return_code(tmp_path, capsys):
    assert main(["spectrum", "power", "--in", str(tmp_path / "missing.txt")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["no-such-verb"])
