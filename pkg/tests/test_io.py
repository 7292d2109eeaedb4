import numpy as np
import pytest

from vpcasimir.dynamics import sample_steady
from vpcasimir.errors import DomainError
from vpcasimir.io import (config_hash, read_grid, read_snapshot, read_steady, read_table,
                          write_grid, write_snapshot, write_steady, write_table)


def test_steady_round_trip_is_exact(tmp_path, state1):
    p = write_steady(tmp_path / "s.txt", state1, "abc")
    back = read_steady(p)
    for name in ("kappa", "E0", "M", "R", "D_value", "casimir", "kinetic", "field_energy"):
        assert getattr(back, name) == getattr(state1, name)
    assert np.array_equal(back.y_profile, state1.y_profile)
    assert np.array_equal(back.m_profile, state1.m_profile)
    assert back.model == state1.model
    x = np.linspace(0, 1.5 * state1.R, 37)
    assert np.array_equal(back.rho(x), state1.rho(x))


def test_grid_round_trip_is_exact(tmp_path, poly1, ref24):
    p = write_grid(tmp_path / "g.txt", ref24.density, poly1, 1.0)
    g, meta = read_grid(p)
    assert np.array_equal(g.values, ref24.density.values)
    assert np.array_equal(g.r_edges, ref24.density.r_edges)
    assert np.array_equal(g.L_edges, ref24.density.L_edges)
    assert meta["model"] == poly1 and meta["M"] == 1.0


def test_negative_cell_is_rejected(tmp_path, ref24):
    p = write_grid(tmp_path / "g.txt", ref24.density)
    lines = p.read_text().splitlines()
    i = lines.index("[values]") + 1
    cells = lines[i].split(",")
    cells[0] = "-1"
    lines[i] = ",".join(cells)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DomainError):
        read_grid(p)


def test_snapshot_round_trip_is_exact(tmp_path, state1):
    ens = sample_steady(state1, 2000)
    back = read_snapshot(write_snapshot(tmp_path / "p.csv", ens))
    for name in ("r", "vr", "L", "w", "f_val"):
        assert np.array_equal(getattr(back, name), getattr(ens, name))
    assert np.allclose(back.vol, ens.vol, rtol=1e-15)


def test_table_and_wrong_format(tmp_path):
    p = write_table(tmp_path / "t.csv", ["a", "b", "ok"], [[1, 0.1, True]], "h",
                    header=[("alpha", "2")])
    head, cols, rows = read_table(p)
    assert cols == ["a", "b", "ok"] and rows == [["1", "0.10000000000000001", "True"]]
    assert head["config_hash"] == "h" and head["alpha"] == "2"
    with pytest.raises(DomainError):
        read_grid(p)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
