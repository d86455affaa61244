"""File formats: mesh text files, legacy VTK, history CSV and run configuration.

Every writer is byte-deterministic: floats are printed with 17 significant
digits, which round-trips IEEE doubles exactly.

Mesh file layout::

    sigshape-mesh 1
    vertices <n>
    <x> <y>                 (n lines)
    triangles <m>
    <a> <b> <c>             (m lines)
    boundary_edges <k>
    <a> <b> <label>         (k lines)

Blank lines and ``#`` comments are ignored.
"""

import configparser
import csv
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, MeshFormatError
from .fem import NAMED_LOADS, ElasticityParams, make_load
from .mesh import Mesh2D, generate_disk_mesh
from .optim import HISTORY_COLUMNS, IterationRecord, OptimConfig, OptimHistory

MESH_MAGIC = "sigshape-mesh 1"


def _num(x):
    return format(float(x), ".17g")


# -- mesh ---------------------------------------------------------------------


def write_mesh(mesh, path):
    lines = [MESH_MAGIC, f"vertices {mesh.n_vertices}"]
    lines += [f"{_num(x)} {_num(y)}" for x, y in mesh.vertices]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [" ".join(map(str, t)) for t in mesh.triangles.tolist()]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [
        f"{a} {b} {lab}" for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.edge_labels.tolist())
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def _content_lines(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def read_mesh(path):
    """Parse a mesh file; format problems raise :class:`MeshFormatError` with the line number."""
    lines = list(_content_lines(Path(path).read_text()))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshFormatError("unexpected end of file", line=last + 1)
        pos += 1
        return lines[pos - 1]

    number, line = take()
    if line != MESH_MAGIC:
        raise MeshFormatError(f"line {number}: expected header {MESH_MAGIC!r}", line=number)

    def block(name, width, kind):
        number, line = take()
        words = line.split()
        if len(words) != 2 or words[0] != name or not words[1].isdigit():
            raise MeshFormatError(f"line {number}: expected '{name} <count>'", line=number)
        rows = []
        for _ in range(int(words[1])):
            number, line = take()
            words = line.split()
            if len(words) != width:
                raise MeshFormatError(
                    f"line {number}: expected {width} values, got {len(words)}", line=number
                )
            try:
                rows.append([kind(w) for w in words])
            except ValueError:
                raise MeshFormatError(f"line {number}: cannot parse {line!r}", line=number) from None
        return np.array(rows, dtype=kind).reshape(-1, width)

    vertices = block("vertices", 2, float)
    triangles = block("triangles", 3, int)
    edges = block("boundary_edges", 3, int)
    if pos != len(lines):
        number = lines[pos][0]
        raise MeshFormatError(f"line {number}: trailing content", line=number)
    return Mesh2D(vertices, triangles, edges[:, :2], edges[:, 2])


# -- VTK ----------------------------------------------------------------------


def _vtk_name(name):
    return re.sub(r"\s+", "_", str(name))


def _data_section(lines, fields_, count, where):
    for name, values in fields_.items():
        arr = np.asarray(values, dtype=float)
        if arr.shape[0] != count:
            raise ValueError(f"field {name!r} has {arr.shape[0]} rows, expected {count} ({where})")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"field {name!r} has non-finite values")
        if arr.ndim == 1:
            lines.append(f"SCALARS {_vtk_name(name)} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_num(v) for v in arr]
        elif arr.ndim == 2 and arr.shape[1] == 2:
            lines.append(f"VECTORS {_vtk_name(name)} double")
            lines += [f"{_num(a)} {_num(b)} 0" for a, b in arr]
        else:
            raise ValueError(f"field {name!r} must be scalar (count,) or vector (count, 2)")


def write_vtk(mesh, fields, path, cell_fields=None, title="sigshape"):
    """Legacy ASCII unstructured grid.

    ``fields`` holds vertex data (scalars ``(n,)`` or 2D vectors ``(n, 2)``),
    ``cell_fields`` holds per-triangle data such as the energy density.
    """
    fields = dict(fields or {})
    cell_fields = dict(cell_fields or {})
    n, m = mesh.n_vertices, len(mesh.triangles)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {m} {4 * m}")
    lines += ["3 " + " ".join(map(str, t)) for t in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    if fields:
        lines.append(f"POINT_DATA {n}")
        _data_section(lines, fields, n, "point data")
    if cell_fields:
        lines.append(f"CELL_DATA {m}")
        _data_section(lines, cell_fields, m, "cell data")
    Path(path).write_text("\n".join(lines) + "\n")


# -- history ------------------------------------------------------------------


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for rec in history.records:
            row = [getattr(rec, c) for c in HISTORY_COLUMNS]
            writer.writerow([str(int(v)) if isinstance(v, (int, np.integer)) else _num(v) for v in row])


def read_history_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != HISTORY_COLUMNS:
            raise MeshFormatError(f"line 1: history header must be {','.join(HISTORY_COLUMNS)}", line=1)
        history = OptimHistory()
        kinds = {f.name: f.type for f in fields(IterationRecord)}
        for number, row in enumerate(reader, start=2):
            if len(row) != len(HISTORY_COLUMNS):
                raise MeshFormatError(f"line {number}: expected {len(HISTORY_COLUMNS)} columns", line=number)
            try:
                values = {
                    c: int(v) if kinds[c] in (int, "int") else float(v) for c, v in zip(HISTORY_COLUMNS, row)
                }
            except ValueError:
                raise MeshFormatError(f"line {number}: cannot parse row", line=number) from None
            history.append(IterationRecord(**values))
    return history


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a CLI run needs. Exactly one mesh source: disk generator or ``mesh_path``."""

    n_boundary: int = 96
    n_refine: int = 0
    mesh_path: str = None
    params: ElasticityParams = field(default_factory=lambda: ElasticityParams(mu=0.3846, lam=0.5769))
    load: str = "exp"
    load_args: tuple = ()
    optim: OptimConfig = field(default_factory=OptimConfig)
    out_dir: str = "out"
    snapshot_period: int = 20

    def build_mesh(self):
        if self.mesh_path is not None:
            return read_mesh(self.mesh_path)
        return generate_disk_mesh(self.n_boundary, self.n_refine)

    def build_load(self):
        return make_load(self.load, *self.load_args)


def _auto_float(text):
    return None if text.strip().lower() in ("auto", "none") else float(text)


# section -> key -> (attribute path, parser)
_SCHEMA = {
    "mesh": {
        "source": ("source", str),
        "n_boundary": ("n_boundary", int),
        "n_refine": ("n_refine", int),
        "path": ("mesh_path", str),
    },
    "material": {"mu": ("mu", float), "lambda": ("lam", float)},
    "load": {"name": ("load", str), "args": ("load_args", lambda s: tuple(float(w) for w in s.split()))},
    "optim": {
        "step_size": ("step_size", float),
        "rho_uzawa": ("rho_uzawa", _auto_float),
        "target_volume": ("target_volume", lambda s: math.pi if s.strip() == "pi" else float(s)),
        "max_iters": ("max_iters", int),
        "check_period": ("check_period", int),
        "stop_tol": ("stop_tol", float),
        "solver": ("solver", str),
        "solver_tol": ("solver_tol", float),
        "nitsche_gamma0": ("nitsche_gamma0", _auto_float),
        "min_angle": ("min_angle", float),
        "max_halvings": ("max_halvings", int),
    },
    "output": {"dir": ("out_dir", str), "snapshot_period": ("snapshot_period", int)},
}


def _line_index(text):
    """Map ``(section, key)`` and ``section`` to 1-based line numbers."""
    index, section = {}, None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        head = re.fullmatch(r"\[([^\]]+)\]", line)
        if head:
            section = head.group(1).strip()
            index.setdefault(section, number)
        elif section is not None:
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            index.setdefault((section, key), number)
    return index


def parse_config(path):
    """Read a ``[section] key = value`` file into a :class:`RunConfig`.

    Unknown sections or keys, unparsable values and invariant violations raise
    :class:`ConfigError` carrying the offending line number.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}", line=getattr(exc, "lineno", None)) from None
    where = _line_index(text)

    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"line {where[section]}: unknown section [{section}]", line=where[section])
        for key, raw in parser.items(section):
            line = where.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError(f"line {line}: unknown key {key!r} in [{section}]", line=line)
            attr, kind = _SCHEMA[section][key]
            try:
                values[attr] = (kind(raw), line)
            except ValueError:
                raise ConfigError(
                    f"line {line}: {section}.{key} = {raw!r} is not a valid {getattr(kind, '__name__', 'value')}",
                    line=line,
                ) from None

    def pick(attr, default):
        return values[attr][0] if attr in values else default

    def line_of(*attrs):
        return next((values[a][1] for a in attrs if a in values), None)

    def culprit(build, attrs):
        """Line of the first supplied key that fails validation on its own."""
        for a in attrs:
            if a in values:
                try:
                    build({a: values[a][0]})
                except ValueError:
                    return values[a][1]
        return line_of(*attrs)

    cfg = RunConfig()
    source = pick("source", "file" if "mesh_path" in values else "disk")
    if source not in ("disk", "file"):
        raise ConfigError(f"line {line_of('source')}: mesh.source must be 'disk' or 'file'", line=line_of("source"))
    if source == "file":
        if "mesh_path" not in values:
            raise ConfigError("mesh.source = file requires mesh.path", line=line_of("source"))
        if "n_boundary" in values or "n_refine" in values:
            line = line_of("n_boundary", "n_refine")
            raise ConfigError(f"line {line}: give either a mesh file or generator settings, not both", line=line)
        cfg.mesh_path = values["mesh_path"][0]
    elif "mesh_path" in values:
        line = line_of("mesh_path")
        raise ConfigError(f"line {line}: mesh.path given but mesh.source = disk", line=line)
    cfg.n_boundary = pick("n_boundary", cfg.n_boundary)
    cfg.n_refine = pick("n_refine", cfg.n_refine)

    def build_params(given):
        return ElasticityParams(mu=given.get("mu", cfg.params.mu), lam=given.get("lam", cfg.params.lam))

    try:
        cfg.params = build_params({a: pick(a, None) for a in ("mu", "lam") if a in values})
    except ValueError as exc:
        line = culprit(build_params, ("mu", "lam"))
        raise ConfigError(f"line {line}: {exc}", line=line) from None

    cfg.load = pick("load", cfg.load)
    cfg.load_args = pick("load_args", cfg.load_args)
    if cfg.load not in NAMED_LOADS:
        line = line_of("load")
        raise ConfigError(f"line {line}: unknown load {cfg.load!r}", line=line)

    optim_keys = [f.name for f in fields(OptimConfig)]
    try:
        cfg.optim = OptimConfig(**{k: values[k][0] for k in optim_keys if k in values})
    except ValueError as exc:
        line = culprit(lambda given: OptimConfig(**given), optim_keys)
        raise ConfigError(f"line {line}: {exc}", line=line) from None

    cfg.out_dir = pick("out_dir", cfg.out_dir)
    cfg.snapshot_period = pick("snapshot_period", cfg.snapshot_period)
    if cfg.snapshot_period < 1:
        line = line_of("snapshot_period")
        raise ConfigError(f"line {line}: output.snapshot_period must be >= 1", line=line)
    return cfg


def default_config_path():
    return Path(__file__).with_name("default.cfg")
