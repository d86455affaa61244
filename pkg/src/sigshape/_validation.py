"""Small input-checking helpers shared by the public functions."""

import numpy as np

from .exceptions import InvalidMeshError


def check_field(values, mesh, name="field"):
    """Return a finite ``(n_vertices, 2)`` float array.

    Accepts either the nodal layout or the flat interleaved dof layout.
    """
    a = np.asarray(values, dtype=float)
    n = mesh.n_vertices
    if a.shape == (2 * n,):
        a = a.reshape(n, 2)
    if a.shape != (n, 2):
        raise ValueError(f"{name} must have shape ({n}, 2) or ({2 * n},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def check_dofs(values, size, name="vector"):
    a = np.asarray(values, dtype=float).ravel()
    if a.shape != (size,):
        raise ValueError(f"{name} must have {size} entries, got {a.size}")
    return a


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_mesh(mesh):
    from .mesh import Mesh2D

    if not isinstance(mesh, Mesh2D):
        raise InvalidMeshError(f"expected a Mesh2D, got {type(mesh).__name__}")
    return mesh
