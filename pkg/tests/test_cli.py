import numpy as np
import pytest

from vpcasimir.cli import main
from vpcasimir.io import read_grid, read_snapshot, read_steady, read_table


def write_cfg(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL_MIN = """
[model]
kind = "polytrope"
mu = 1.0
[minimize]
max_iters = 300
[grid]
shape = [32, 32, 32]
"""


def test_steady_writes_profile(tmp_path, capsys, state1):
    assert main(["steady", "--out", str(tmp_path)]) == 0
    st = read_steady(tmp_path / "steady.txt")
    assert st.D_value == state1.D_value
    assert "virial_residual" in capsys.readouterr().out


def test_steady_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, '[model]\nkind = "polytrope"\nmu = 0.5\n[steady]\nM = 2.0\n')
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["steady", "--config", cfg, "--out", str(a)]) == 0
    assert main(["steady", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "steady.txt").read_bytes() == (b / "steady.txt").read_bytes()


@pytest.mark.parametrize("text", [
    '[model]\nkind = "polytrope"\nmu = 2.0\n',
    '[steady]\nM = 1.0\nmass = 2.0\n',
    'colour = "red"\n',
    '[steady]\nM = -1.0\n',
])
def test_invalid_configuration_exits_2(tmp_path, capsys, text):
    cfg = write_cfg(tmp_path, text)
    assert main(["steady", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "invalid input" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    assert main(["steady", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2
    assert main(["verify", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--input", str(tmp_path / "none.txt"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "junk.txt"
    bad.write_text("hello\n")
    assert main(["verify", "--input", str(bad), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    # an 8**3 grid is too coarse for the discrete steady state to exist
    cfg = write_cfg(tmp_path, SMALL_MIN.replace("[32, 32, 32]", "[8, 8, 8]"))
    assert main(["minimize", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["verify", "--input", str(tmp_path / "density.txt"), "--out",
                 str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "numerical failure in verify" in err


def test_minimize_then_verify(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_MIN)
    assert main(["minimize", "--config", cfg, "--out", str(tmp_path)]) == 0
    g, meta = read_grid(tmp_path / "density.txt")
    assert g.mass == pytest.approx(1.0, rel=1e-10)
    _, cols, rows = read_table(tmp_path / "trace.csv")
    assert cols[0] == "iter" and len(rows) >= 2
    D = [float(r[cols.index("D")]) for r in rows]
    assert np.all(np.diff(D) <= 1e-12 * abs(D[0]))
    assert main(["verify", "--input", str(tmp_path / "density.txt"), "--out",
                 str(tmp_path)]) == 0
    _, cols, rows = read_table(tmp_path / "verify.csv")
    assert {r[0] for r in rows} >= {"interpolation", "lower_bound", "scaling", "splitting",
                                    "R0", "support_in_R0", "negativity"}
    assert all(r[-1] == "PASS" for r in rows)


def test_verify_steady_file(tmp_path):
    assert main(["steady", "--out", str(tmp_path)]) == 0
    cfg = write_cfg(tmp_path, "[grid]\nshape = [32, 32, 32]\n")
    assert main(["verify", "--config", cfg, "--input", str(tmp_path / "steady.txt"),
                 "--out", str(tmp_path)]) == 0


def test_scan_table(tmp_path):
    cfg = write_cfg(tmp_path, "[scan]\nmasses = [2.0, 0.5, 1.0]\n")
    assert main(["scan", "--config", cfg, "--out", str(tmp_path)]) == 0
    head, cols, rows = read_table(tmp_path / "scan.csv")
    assert cols == ["M", "D_M", "R0", "scaling"]
    assert [float(r[0]) for r in rows] == [0.5, 1.0, 2.0]
    assert float(head["alpha"]) == 2.0
    assert all(float(r[1]) < 0 and r[3] == "PASS" for r in rows)


def test_evolve_unperturbed_short_run(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[evolve]\nN = 5000\nT_end = 0.5\ncadence = 50\n")
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, cols, rows = read_table(tmp_path / "diagnostics.csv")
    D = np.array([float(r[cols.index("D")]) for r in rows])
    assert np.max(np.abs(D - D[0])) / abs(D[0]) <= 5e-3
    fin = read_snapshot(tmp_path / "snapshot_final.csv")
    ini = read_snapshot(tmp_path / "snapshot_initial.csv")
    assert fin.N == ini.N and np.array_equal(fin.f_val, ini.f_val)
    assert "casimir_spread=0.0e+00" in capsys.readouterr().out
