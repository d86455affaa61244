import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sigshape.exceptions import ConfigError, InvalidMeshError, MeshFormatError, UnknownLabelError
from sigshape.fem import DEFAULT_PARAMS
from sigshape.io import (
    default_config_path,
    parse_config,
    read_history_csv,
    read_mesh,
    write_history_csv,
    write_mesh,
    write_vtk,
)
from sigshape.mesh import generate_rect_mesh, jittered_rect_mesh
from sigshape.optim import IterationRecord, OptimConfig, OptimHistory

SQUARE = """sigshape-mesh 1
vertices 4
0 0
1 0
0 1
1 1
triangles 2
0 1 3
0 3 2
boundary_edges 4
0 1 1
1 3 1
3 2 1
2 0 1
"""


def write(tmp_path, text, name="m.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_mesh_round_trip_is_exact(disk1, tmp_path):
    path = tmp_path / "disk.txt"
    write_mesh(disk1, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, disk1.vertices)
    assert np.array_equal(back.triangles, disk1.triangles)
    assert np.array_equal(back.boundary_edges, disk1.boundary_edges)
    assert np.array_equal(back.edge_labels, disk1.edge_labels)


@given(st.integers(0, 10**6))
def test_jittered_mesh_round_trip(tmp_path_factory, seed):
    m = jittered_rect_mesh(3, 2, seed=seed)
    path = tmp_path_factory.mktemp("rt") / "m.txt"
    write_mesh(m, path)
    assert np.array_equal(read_mesh(path).vertices, m.vertices)


def test_comments_and_blank_lines_allowed(tmp_path):
    text = "# made by hand\n" + SQUARE.replace("vertices 4\n", "vertices 4\n\n# corners\n")
    assert read_mesh(write(tmp_path, text)).n_vertices == 4


def test_zero_area_triangle_rejected_with_index(tmp_path):
    text = SQUARE.replace("0 3 2\n", "0 3 3\n")
    with pytest.raises(InvalidMeshError) as err:
        read_mesh(write(tmp_path, text))
    assert err.value.details["index"] == 1


def test_unknown_label_code(tmp_path):
    with pytest.raises(UnknownLabelError) as err:
        read_mesh(write(tmp_path, SQUARE.replace("3 2 1\n", "3 2 3\n")))
    assert err.value.to_record()["error"] == "UNKNOWN_LABEL"


@pytest.mark.parametrize(
    "broken, line",
    [
        (SQUARE.replace("sigshape-mesh 1", "mesh v2"), 1),
        (SQUARE.replace("1 0\n0 1", "1 zero\n0 1", 1), 4),
        (SQUARE.replace("triangles 2", "triangles two"), 7),
        (SQUARE.replace("0 1 3\n", "0 1\n"), 8),
        (SQUARE + "extra\n", 15),
        ("\n".join(SQUARE.splitlines()[:9]) + "\n", 10),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, broken, line):
    with pytest.raises(MeshFormatError) as err:
        read_mesh(write(tmp_path, broken))
    assert err.value.details["line"] == line
    assert err.value.code == "PARSE_ERROR"


def test_vtk_geometry_only_and_deterministic(tmp_path):
    m = generate_rect_mesh(2, 1)
    a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_vtk(m, {}, a)
    write_vtk(m, {}, b)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "POINTS 6 double" in text
    assert "CELLS 4 16" in text
    assert "POINT_DATA" not in text and "CELL_DATA" not in text


def test_vtk_point_and_cell_data(tmp_path):
    m = generate_rect_mesh(2, 1)
    u = np.arange(12.0).reshape(6, 2)
    density = np.linspace(0, 1, 4)
    path = tmp_path / "s.vtk"
    write_vtk(m, {"displacement": u, "speed": u[:, 0]}, path, cell_fields={"energy_density": density})
    lines = path.read_text().splitlines()
    assert "POINT_DATA 6" in lines
    assert "VECTORS displacement double" in lines
    assert "CELL_DATA 4" in lines
    k = lines.index("SCALARS energy_density double 1")
    assert lines[k + 1] == "LOOKUP_TABLE default"
    np.testing.assert_allclose([float(v) for v in lines[k + 2 : k + 6]], density)
    k = lines.index("VECTORS displacement double")
    assert lines[k + 2].split() == ["2", "3", "0"]


@pytest.mark.parametrize(
    "fields",
    [{"u": np.zeros((5, 2))}, {"u": np.full((6, 2), np.nan)}, {"u": np.zeros((6, 3))}],
)
def test_vtk_rejects_bad_fields(tmp_path, fields):
    with pytest.raises(ValueError):
        write_vtk(generate_rect_mesh(2, 1), fields, tmp_path / "x.vtk")


def test_history_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    h = OptimHistory(stopped_by="stop_rule")
    for k in range(5):
        h.append(IterationRecord(k, *rng.standard_normal(3), 0.005 / 2**k, 30.0 + rng.random(), np.int64(k + 1)))
    path = tmp_path / "h.csv"
    write_history_csv(h, path)
    back = read_history_csv(path)
    assert len(back) == 5
    for a, b in zip(h.records, back.records):
        for name in ("J", "volume", "ell", "step", "min_angle"):
            assert abs(getattr(a, name) - getattr(b, name)) <= 1e-15 * max(1.0, abs(getattr(a, name)))
        assert (a.iter, a.active_count) == (b.iter, b.active_count)


def test_history_bad_header_and_row(tmp_path):
    with pytest.raises(MeshFormatError) as err:
        read_history_csv(write(tmp_path, "iter,J\n0,1\n", "h.csv"))
    assert err.value.details["line"] == 1
    good = tmp_path / "g.csv"
    write_history_csv(OptimHistory([IterationRecord(0, -1.0, 3.1, 0.0, 0.005, 36.0, 15)]), good)
    broken = good.read_text() + "1,oops,3,0,0,0,0\n"
    with pytest.raises(MeshFormatError) as err:
        read_history_csv(write(tmp_path, broken, "b.csv"))
    assert err.value.details["line"] == 3


def test_default_config_values():
    cfg = parse_config(default_config_path())
    assert cfg.params == DEFAULT_PARAMS
    assert cfg.optim == OptimConfig()
    assert cfg.optim.target_volume == math.pi
    assert (cfg.n_boundary, cfg.n_refine, cfg.snapshot_period) == (96, 0, 20)
    mesh = cfg.build_mesh()
    assert mesh.n_vertices == 769
    assert cfg.build_load()(np.array([[1.0, 0.0]]))[0, 0] == pytest.approx(0.5 * math.e)


def _config_with(tmp_path, old, new):
    text = default_config_path().read_text().replace(old, new)
    return write(tmp_path, text, "run.cfg")


def _line_of(path, needle):
    return next(i for i, line in enumerate(path.read_text().splitlines(), 1) if needle in line)


def test_negative_lambda_rejected_with_line(tmp_path):
    path = _config_with(tmp_path, "lambda = 0.5769", "lambda = -1")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert err.value.details["line"] == _line_of(path, "lambda = -1")


def test_unknown_key_rejected_with_line(tmp_path):
    path = _config_with(tmp_path, "stop_tol = 5e-3", "stop_tol = 5e-3\nstop_tolerance = 1")
    with pytest.raises(ConfigError, match="unknown key") as err:
        parse_config(path)
    assert err.value.details["line"] == _line_of(path, "stop_tolerance")


@pytest.mark.parametrize(
    "old, new, message",
    [
        ("[output]", "[plot]", "unknown section"),
        ("max_iters = 400", "max_iters = many", "max_iters"),
        ("solver = nitsche", "solver = gauss", "solver"),
        ("name = exp", "name = gravity", "unknown load"),
        ("snapshot_period = 20", "snapshot_period = 0", "snapshot_period"),
        ("source = disk", "source = file", "requires mesh.path"),
    ],
)
def test_config_errors(tmp_path, old, new, message):
    with pytest.raises(ConfigError, match=message) as err:
        parse_config(_config_with(tmp_path, old, new))
    assert err.value.details.get("line") is not None


def test_optim_error_points_at_offending_key(tmp_path):
    path = _config_with(tmp_path, "stop_tol = 5e-3", "stop_tol = -1")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert err.value.details["line"] == _line_of(path, "stop_tol = -1")
