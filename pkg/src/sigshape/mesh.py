"""Triangular meshes with labelled boundary parts.

A :class:`Mesh2D` is immutable. Boundary edges carry one of two labels:
``DIRICHLET`` (displacement fixed) or ``SIGNORINI`` (unilateral contact).
Vertices touching a Dirichlet edge are Dirichlet vertices, so a vertex at a
junction between the two parts is fixed.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import (
    FixedBoundaryViolation,
    InvalidMeshError,
    TangledMeshError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

DIRICHLET = 1
SIGNORINI = 2
LABELS = (DIRICHLET, SIGNORINI)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_keys(edges, n_vertices):
    e = np.sort(edges, axis=1)
    return e[:, 0].astype(np.int64) * n_vertices + e[:, 1]


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Conforming triangulation.

    Parameters
    ----------
    vertices : (n, 2) array of coordinates.
    triangles : (m, 3) array of vertex indices, counter-clockwise.
    boundary_edges : (k, 2) array of vertex pairs.
    edge_labels : (k,) array with values in ``{DIRICHLET, SIGNORINI}``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64))
        object.__setattr__(self, "edge_labels", _frozen(self.edge_labels, np.int64))
        self._check()

    @classmethod
    def _moved(cls, base, vertices):
        # same connectivity, new coordinates; topology checks are inherited
        mesh = object.__new__(cls)
        object.__setattr__(mesh, "vertices", _frozen(vertices, float))
        for name in ("triangles", "boundary_edges", "edge_labels"):
            object.__setattr__(mesh, name, getattr(base, name))
        for name in ("_edge_triangle", "dirichlet_vertices"):
            if name in base.__dict__:
                mesh.__dict__[name] = base.__dict__[name]
        return mesh

    def _check(self):
        v, tri, be, lab = self.vertices, self.triangles, self.boundary_edges, self.edge_labels
        n = len(v)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidMeshError("vertices must have shape (n, 2)")
        if not np.all(np.isfinite(v)):
            raise InvalidMeshError("non-finite vertex coordinates")
        if tri.ndim != 2 or tri.shape[1] != 3 or len(tri) == 0:
            raise InvalidMeshError("triangles must have shape (m, 3) with m > 0")
        if be.ndim != 2 or be.shape[1] != 2:
            raise InvalidMeshError("boundary_edges must have shape (k, 2)")
        if lab.shape != (len(be),):
            raise InvalidMeshError("one label per boundary edge is required")
        for name, arr in (("triangle", tri), ("boundary edge", be)):
            bad = np.flatnonzero(np.any((arr < 0) | (arr >= n), axis=1))
            if bad.size:
                raise InvalidMeshError(
                    f"{name} {bad[0]} references a vertex out of range", index=int(bad[0])
                )
        bad = np.flatnonzero(~np.isin(lab, LABELS))
        if bad.size:
            raise UnknownLabelError(
                f"boundary edge {bad[0]} has unknown label {lab[bad[0]]}", index=int(bad[0])
            )
        areas = signed_areas(v, tri)
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise InvalidMeshError(
                f"triangle {bad[0]} has non-positive signed area {areas[bad[0]]:.3e}",
                index=int(bad[0]),
            )
        all_edges = tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys, counts = np.unique(_edge_keys(all_edges, n), return_counts=True)
        if np.any(counts > 2):
            raise InvalidMeshError("an edge is shared by more than two triangles")
        topo = keys[counts == 1]
        given = _edge_keys(be, n)
        if len(np.unique(given)) != len(given):
            raise InvalidMeshError("duplicate boundary edges")
        missing = np.setdiff1d(topo, given)
        extra = np.setdiff1d(given, topo)
        if missing.size or extra.size:
            raise InvalidMeshError(
                "boundary edges do not tile the topological boundary "
                f"({missing.size} missing, {extra.size} not on the boundary)"
            )
        if not np.any(lab == DIRICHLET):
            raise InvalidMeshError("the Dirichlet boundary part must be nonempty")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_dofs(self):
        return 2 * len(self.vertices)

    @cached_property
    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    @cached_property
    def _edge_triangle(self):
        n = self.n_vertices
        all_edges = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        owner = np.repeat(np.arange(len(self.triangles)), 3)
        keys = _edge_keys(all_edges, n)
        order = np.argsort(keys)
        pos = np.searchsorted(keys[order], _edge_keys(self.boundary_edges, n))
        return owner[order[pos]]

    @property
    def edge_triangle(self):
        """Index of the unique triangle owning each boundary edge."""
        return self._edge_triangle

    @cached_property
    def dirichlet_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges[self.edge_labels == DIRICHLET].ravel()] = True
        mask.setflags(write=False)
        return mask

    @property
    def signorini_edges(self):
        return np.flatnonzero(self.edge_labels == SIGNORINI)

    @property
    def dirichlet_dofs(self):
        idx = np.flatnonzero(self.dirichlet_vertices)
        return np.sort(np.concatenate([2 * idx, 2 * idx + 1]))

    def edge_lengths(self, edges=None):
        e = self.boundary_edges if edges is None else self.boundary_edges[edges]
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def diameter(self):
        return float(_diameter(self.vertices))


def _diameter(points):
    from scipy.spatial import ConvexHull

    hull = points[ConvexHull(points).vertices]
    d = hull[:, None, :] - hull[None, :, :]
    return np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d)))


@dataclass(frozen=True)
class BoundaryNormals:
    edge_normals: np.ndarray
    vertex_normals: np.ndarray
    contact_vertices: np.ndarray


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    min_signed_area: float
    max_aspect_ratio: float


def volume(mesh):
    """Area of the domain (sum of signed triangle areas)."""
    return float(np.sum(mesh.areas))


def edge_normals(mesh, edges=None):
    """Outward unit normals of boundary edges."""
    e = mesh.boundary_edges if edges is None else mesh.boundary_edges[edges]
    owner = mesh.edge_triangle if edges is None else mesh.edge_triangle[edges]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    d = b - a
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.hypot(n[:, 0], n[:, 1])[:, None]
    centroid = mesh.vertices[mesh.triangles[owner]].mean(axis=1)
    flip = np.einsum("ij,ij->i", n, 0.5 * (a + b) - centroid) < 0
    n[flip] *= -1.0
    return n


def compute_normals(mesh):
    """Edge normals for every boundary edge, and vertex normals on the contact part.

    A vertex normal is the normalised average of the normals of the (one or
    two) Signorini edges touching the vertex. ``contact_vertices`` lists those
    vertices in increasing order; ``vertex_normals`` is aligned with it.
    """
    en = edge_normals(mesh)
    sig = mesh.signorini_edges
    acc = np.zeros((mesh.n_vertices, 2))
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    for k in (0, 1):
        np.add.at(acc, mesh.boundary_edges[sig, k], en[sig])
        touched[mesh.boundary_edges[sig, k]] = True
    verts = np.flatnonzero(touched)
    vn = acc[verts]
    norms = np.hypot(vn[:, 0], vn[:, 1])
    if np.any(norms < 1e-14):
        bad = verts[np.argmin(norms)]
        raise InvalidMeshError(f"vertex {bad} has degenerate adjacent edge normals", index=int(bad))
    return BoundaryNormals(en, vn / norms[:, None], verts)


def deform_mesh(mesh, theta, t, min_angle_warning=5.0):
    """Move every vertex by ``t * theta[vertex]``.

    Raises :class:`FixedBoundaryViolation` if ``theta`` is nonzero on a
    Dirichlet vertex and :class:`TangledMeshError` if a triangle flips.
    """
    theta = np.asarray(theta, dtype=float).reshape(mesh.n_vertices, 2)
    fixed = np.abs(theta[mesh.dirichlet_vertices])
    if fixed.size and fixed.max() > 1e-14:
        bad = np.flatnonzero(mesh.dirichlet_vertices)[np.argmax(fixed.max(axis=1))]
        raise FixedBoundaryViolation(
            f"theta does not vanish at Dirichlet vertex {bad}", vertex=int(bad)
        )
    if t == 0:
        return mesh
    moved = mesh.vertices + t * theta
    areas = signed_areas(moved, mesh.triangles)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise TangledMeshError(
            f"triangle {bad} inverted (signed area {areas[bad]:.3e})", triangle=bad, t=float(t)
        )
    new = Mesh2D._moved(mesh, moved)
    q = mesh_quality(new)
    if q.min_angle < min_angle_warning:
        logger.warning("deformed mesh has min angle %.2f deg", q.min_angle)
    return new


def triangle_angles(vertices, triangles):
    p = vertices[triangles]
    out = np.empty((len(triangles), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        w = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def mesh_quality(mesh):
    """Minimum angle (degrees), minimum signed area and maximum aspect ratio.

    The aspect ratio of a triangle is its longest edge divided by
    ``2 * sqrt(3)`` times its inradius, so an equilateral triangle scores 1.
    """
    v, tri = mesh.vertices, mesh.triangles
    areas = signed_areas(v, tri)
    p = v[tri]
    lengths = np.stack(
        [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], axis=1
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        inradius = 2.0 * np.abs(areas) / lengths.sum(axis=1)
        aspect = lengths.max(axis=1) / (2.0 * math.sqrt(3.0) * inradius)
    return MeshQuality(
        min_angle=float(triangle_angles(v, tri).min()),
        min_signed_area=float(areas.min()),
        max_aspect_ratio=float(np.max(aspect)),
    )


def _in_dirichlet_arcs(angle):
    a = np.mod(angle, 2 * np.pi)
    tol = 1e-12
    first = (a >= np.pi / 6 - tol) & (a <= 5 * np.pi / 6 + tol)
    second = (a >= 7 * np.pi / 6 - tol) & (a <= 11 * np.pi / 6 + tol)
    return first | second


def _stitch_rings(inner, inner_angles, outer, outer_angles):
    """Triangulate the annulus between two closed rings by an angular sweep."""
    p, q = len(inner), len(outer)
    a = np.append(inner_angles, inner_angles[0] + 2 * np.pi)
    b = np.append(outer_angles, outer_angles[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < p or j < q:
        if i < p and (j == q or a[i + 1] < b[j + 1]):
            tris.append((inner[i], outer[j % q], inner[(i + 1) % p]))
            i += 1
        else:
            tris.append((inner[i % p], outer[j], outer[(j + 1) % q]))
            j += 1
    return tris


def generate_disk_mesh(n_boundary=96, n_refine=0):
    """Structured polar triangulation of the unit disk.

    The boundary polygon has ``n_boundary * 2**n_refine`` vertices, the first
    at angle 0. Rings are spaced by the boundary edge length and carry a
    vertex count proportional to their radius, so triangles are close to
    equilateral; the innermost ring is fanned to the centre.

    Boundary edges whose midpoint angle lies in [pi/6, 5pi/6] or
    [7pi/6, 11pi/6] are Dirichlet, the two remaining arcs are Signorini.
    """
    if n_boundary < 16 or n_boundary % 12:
        raise ValueError("n_boundary must be >= 16 and divisible by 12")
    if n_refine < 0:
        raise ValueError("n_refine must be >= 0")
    nb = n_boundary * 2**n_refine
    n_rings = max(2, int(round(nb / (2 * np.pi))))
    vertices = [(0.0, 0.0)]
    rings = [np.array([0])]
    ring_angles = [None]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        count = nb if k == n_rings else max(6, int(round(k * nb / n_rings)))
        offset = 0.0 if k == n_rings else (0.5 * (k % 2)) * 2 * np.pi / count
        ang = offset + 2 * np.pi * np.arange(count) / count
        start = len(vertices)
        if k == n_rings:
            vertices.extend(zip(np.cos(ang), np.sin(ang)))
        else:
            vertices.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        rings.append(np.arange(start, start + count))
        ring_angles.append(ang)
    vertices = np.array(vertices)
    tris = []
    first = rings[1]
    for j in range(len(first)):
        tris.append((0, first[j], first[(j + 1) % len(first)]))
    for k in range(1, n_rings):
        tris.extend(_stitch_rings(rings[k], ring_angles[k], rings[k + 1], ring_angles[k + 1]))
    outer = rings[-1]
    edges = np.column_stack([outer, np.roll(outer, -1)])
    mid_angle = (np.arange(nb) + 0.5) * 2 * np.pi / nb
    labels = np.where(_in_dirichlet_arcs(mid_angle), DIRICHLET, SIGNORINI)
    return Mesh2D(vertices, np.array(tris), edges, labels)


def generate_rect_mesh(nx, ny, width=1.0, height=1.0, labels=None, origin=(0.0, 0.0)):
    """Structured right-triangle mesh of a rectangle.

    ``labels`` maps side names ``"bottom"``, ``"right"``, ``"top"`` and
    ``"left"`` to boundary labels; unspecified sides are Dirichlet.
    """
    labels = {} if labels is None else dict(labels)
    unknown = set(labels) - {"bottom", "right", "top", "left"}
    if unknown:
        raise ValueError(f"unknown sides {sorted(unknown)}")
    xs = origin[0] + np.linspace(0.0, width, nx + 1)
    ys = origin[1] + np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    edges, labs = [], []
    sides = {
        "bottom": [(vid(i, 0), vid(i + 1, 0)) for i in range(nx)],
        "right": [(vid(nx, j), vid(nx, j + 1)) for j in range(ny)],
        "top": [(vid(i + 1, ny), vid(i, ny)) for i in range(nx)],
        "left": [(vid(0, j + 1), vid(0, j)) for j in range(ny)],
    }
    for side, side_edges in sides.items():
        edges.extend(side_edges)
        labs.extend([labels.get(side, DIRICHLET)] * len(side_edges))
    return Mesh2D(vertices, np.array(tris), np.array(edges), np.array(labs))


def jittered_rect_mesh(nx, ny, jitter=0.25, seed=None, labels=None, width=1.0, height=1.0):
    """Rectangle mesh with interior vertices moved randomly by up to ``jitter`` cells."""
    base = generate_rect_mesh(nx, ny, width, height, labels)
    rng = np.random.default_rng(seed)
    boundary = np.zeros(base.n_vertices, dtype=bool)
    boundary[base.boundary_edges.ravel()] = True
    shift = rng.uniform(-jitter, jitter, size=(base.n_vertices, 2)) * [width / nx, height / ny]
    shift[boundary] = 0.0
    return Mesh2D(base.vertices + shift, base.triangles, base.boundary_edges, base.edge_labels)


def signorini_arcs(mesh):
    """Connected components of the Signorini boundary, as ordered vertex chains."""
    sig = mesh.boundary_edges[mesh.signorini_edges]
    nxt = {int(a): int(b) for a, b in sig}
    prev = {int(b): int(a) for a, b in sig}
    starts = [a for a in nxt if a not in prev]
    chains = []
    seen = set()
    for s in starts:
        chain = [s]
        while chain[-1] in nxt:
            chain.append(nxt[chain[-1]])
        seen.update(chain)
        chains.append(np.array(chain))
    # closed loops without a start vertex
    for a in nxt:
        if a not in seen:
            chain = [a]
            while nxt[chain[-1]] != a:
                chain.append(nxt[chain[-1]])
            seen.update(chain)
            chains.append(np.array(chain))
    return chains
