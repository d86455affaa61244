import json

import pytest

from sigshape.cli import main
from sigshape.io import default_config_path, read_history_csv, read_mesh


def run(capsys, *argv):
    code = main(list(argv))
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]
    return code, lines


@pytest.fixture
def quick_config(tmp_path):
    text = default_config_path().read_text().replace("max_iters = 400", "max_iters = 4")
    text = text.replace("snapshot_period = 20", "snapshot_period = 2")
    path = tmp_path / "quick.cfg"
    path.write_text(text)
    return path


def test_mesh_gen(capsys, tmp_path):
    code, lines = run(capsys, "mesh-gen", "--n-boundary", "48", "--out", str(tmp_path))
    assert code == 0
    assert lines[-1]["command"] == "mesh-gen"
    mesh = read_mesh(tmp_path / "mesh.txt")
    assert mesh.n_vertices == lines[-1]["vertices"]
    assert (tmp_path / "mesh.vtk").exists()


def test_solve_reports_energy(capsys, tmp_path):
    code, lines = run(capsys, "solve", "--out", str(tmp_path), "--solver", "qp")
    assert code == 0
    rec = lines[-1]
    assert rec["solver"] == "qp"
    assert rec["energy"] == pytest.approx(-0.17666779818987557, rel=1e-8)
    assert rec["max_comp_product"] < 1e-10
    assert "CELL_DATA" in (tmp_path / "solution.vtk").read_text()


def test_optimize_writes_outputs(capsys, tmp_path, quick_config):
    code, lines = run(capsys, "optimize", "--config", str(quick_config), "--out", str(tmp_path))
    assert code == 0
    rec = lines[-1]
    assert rec["stopped_by"] == "max_iters"
    assert rec["iterations"] == 4
    assert rec["J_final"] < rec["J_initial"]
    assert len(rec["arc_normal_shifts"]) == 2
    assert sorted(p.name for p in tmp_path.glob("shape_*.vtk")) == ["shape_0000.vtk", "shape_0002.vtk", "shape_0003.vtk"]
    assert len(read_history_csv(tmp_path / "history.csv")) == 4
    assert read_mesh(tmp_path / "final_mesh.txt").n_vertices == 769


def test_verify_shape_gradient(capsys, tmp_path):
    code, lines = run(capsys, "verify-shape-gradient", "--out", str(tmp_path), "--t", "1e-3")
    assert code == 0
    assert {r["direction"] for r in lines} == {"radial_right", "radial_left", "mixed"}
    assert all(r["rel_error"] < 0.1 for r in lines)
    assert len((tmp_path / "shape_gradient.csv").read_text().splitlines()) == 4


def test_verify_material(capsys, tmp_path):
    code, lines = run(capsys, "verify-material", "--out", str(tmp_path), "--t", "1e-3", "1e-4")
    assert code == 0
    summary = lines[-1]
    assert summary["min_error"] < 0.2
    assert summary["weak_set_nonempty"] is False
    assert (tmp_path / "material.csv").exists()


def test_oracle_check(capsys):
    code, lines = run(capsys, "oracle-check", "--count", "2", "--seed", "3")
    assert code == 0
    assert lines[-1]["cases"] == 2
    assert lines[-1]["max_energy_gap"] <= 1e-12


def test_missing_seed_mesh_is_reported(capsys, tmp_path):
    code, lines = run(capsys, "solve", "--seed-mesh", str(tmp_path / "nope.txt"), "--out", str(tmp_path))
    assert code == 1
    assert lines[-1]["error"] == "FileNotFoundError"


def test_bad_config_gives_error_record(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[material]\nmu = 0\n")
    code, lines = run(capsys, "solve", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert lines[-1]["error"] == "CONFIG_ERROR"
    assert lines[-1]["line"] == 2


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as err:
        main(["polish"])
    assert err.value.code == 2
