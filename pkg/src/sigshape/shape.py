"""Energy functional, shape gradients and the descent direction.

The production gradient is the boundary integral over the contact part::

    J'(theta) = int_{Gamma_S} theta.n (1/2 sigma:e - f.u) + sigma n . (grad(theta) u - grad(u) theta)

assembled as a linear form on nodal ``theta``. The volume form is kept as a
cross-check.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_field
from .contact import solve_signorini
from .fem import (
    ElasticSystem,
    assemble_load,
    basis_gradients,
    displacement_gradients,
    element_stress,
    midpoint_rule,
    strain,
    vertex_average,
)
from .mesh import deform_mesh, edge_normals


@dataclass(frozen=True)
class ShapeGradientForm:
    """Linear functional ``theta -> coefficients . theta`` on nodal fields."""

    coefficients: np.ndarray

    def __call__(self, theta):
        return float(self.coefficients @ np.ravel(np.asarray(theta, dtype=float)))

    def __add__(self, other):
        return ShapeGradientForm(self.coefficients + other.coefficients)

    def __mul__(self, scalar):
        return ShapeGradientForm(float(scalar) * self.coefficients)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DescentDirection:
    theta0: np.ndarray
    gradient_value: float
    norm_squared: float

    @property
    def riesz_residual(self):
        """``|J'(theta0) + ||theta0||^2|``; zero up to solver round-off."""
        return abs(self.gradient_value + self.norm_squared)


def _mask_dirichlet(mesh, coeffs):
    coeffs = coeffs.copy()
    coeffs[mesh.dirichlet_dofs] = 0.0
    return coeffs


def energy(mesh, params, f, u, system=None):
    """``J = 1/2 a(u, u) - (f, u)``."""
    system = ElasticSystem(mesh, params) if system is None else system
    x = check_field(u, mesh, "u").ravel()
    return 0.5 * system.inner(x, x) - float(assemble_load(mesh, f) @ x)


def energy_density(mesh, params, f, u):
    """Element means of ``1/2 A e(u):e(u) - f.u`` (midpoint rule for ``f.u``)."""
    u = check_field(u, mesh, "u")
    sigma = element_stress(mesh, params, u)
    e = strain(displacement_gradients(mesh, u))
    points, values = midpoint_rule(mesh)
    fq = f(points.reshape(-1, 2)).reshape(len(points), 3, 2)
    uq = np.einsum("qa,tai->tqi", values, u[mesh.triangles])
    work = np.einsum("tqi,tqi->t", fq, uq) / 3.0
    return 0.5 * np.einsum("tij,tij->t", sigma, e) - work


def _edge_data(mesh, params, f, u0):
    u0 = check_field(u0, mesh, "u0")
    edges = mesh.signorini_edges
    tri = mesh.edge_triangle[edges]
    ends = mesh.boundary_edges[edges]
    n = edge_normals(mesh, edges)
    length = mesh.edge_lengths(edges)
    grad_u = displacement_gradients(mesh, u0)[tri]
    sigma = element_stress(mesh, params, u0)[tri]
    mid = 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])
    u_mid = 0.5 * (u0[ends[:, 0]] + u0[ends[:, 1]])
    return edges, tri, ends, n, length, grad_u, sigma, f(mid), u_mid


def shape_gradient_boundary(mesh, params, f, u0):
    """Boundary-integral shape gradient on the Signorini part (one point per edge)."""
    _, tri, ends, n, length, grad_u, sigma, f_mid, u_mid = _edge_data(mesh, params, f, u0)
    traction = np.einsum("eij,ej->ei", sigma, n)
    density = 0.5 * np.einsum("eij,eij->e", sigma, strain(grad_u)) - np.einsum(
        "ei,ei->e", f_mid, u_mid
    )
    # coefficient of theta at the edge midpoint
    mid_coeff = length[:, None] * (density[:, None] * n - np.einsum("eij,ei->ej", grad_u, traction))
    coeffs = np.zeros((mesh.n_vertices, 2))
    for k in (0, 1):
        np.add.at(coeffs, ends[:, k], 0.5 * mid_coeff)
    # sigma n . grad(theta) u = sum_a (g_a . u) traction . theta_a
    g = basis_gradients(mesh)[tri]
    weight = length[:, None] * np.einsum("eai,ei->ea", g, u_mid)
    np.add.at(
        coeffs, mesh.triangles[tri].ravel(), (weight[:, :, None] * traction[:, None, :]).reshape(-1, 2)
    )
    return ShapeGradientForm(_mask_dirichlet(mesh, coeffs.ravel()))


def shape_gradient_volume_form(mesh, params, f, u0, theta):
    """Domain-integral shape gradient evaluated at one direction ``theta``.

    The term with ``div(sigma)`` is evaluated in the distributional sense
    against the P1 interpolant ``w`` of ``grad(u0) theta`` (vertex-averaged
    gradient): ``-<div sigma, w> = int sigma : grad(w) - int_{Gamma_S} sigma n . w``.
    """
    u0 = check_field(u0, mesh, "u0")
    theta = check_field(theta, mesh, "theta")
    grad_u = displacement_gradients(mesh, u0)
    grad_t = displacement_gradients(mesh, theta)
    sigma = element_stress(mesh, params, u0)
    area = mesh.areas
    div_t = np.trace(grad_t, axis1=1, axis2=2)
    sed = 0.5 * np.einsum("tij,tij->t", sigma, strain(grad_u))
    value = np.sum(area * div_t * sed)
    value -= np.sum(area * np.einsum("tij,tik,tkj->t", sigma, grad_u, grad_t))

    w = np.einsum("vij,vj->vi", vertex_average(mesh, grad_u), theta)
    value += np.sum(area * np.einsum("tij,tij->t", sigma, displacement_gradients(mesh, w)))

    _, tri, ends, n, length, _, s_edge, f_mid, u_mid = _edge_data(mesh, params, f, u0)
    traction = np.einsum("eij,ej->ei", s_edge, n)
    w_mid = 0.5 * (w[ends[:, 0]] + w[ends[:, 1]])
    theta_mid = 0.5 * (theta[ends[:, 0]] + theta[ends[:, 1]])
    value -= np.sum(length * np.einsum("ei,ei->e", traction, w_mid))
    value -= np.sum(length * np.einsum("ei,ei->e", theta_mid, n) * np.einsum("ei,ei->e", f_mid, u_mid))
    gt_u = np.einsum("eij,ej->ei", grad_t[tri], u_mid)
    value += np.sum(length * np.einsum("ei,ei->e", traction, gt_u))
    return float(value)


def volume_gradient_form(mesh):
    """Coefficients of ``theta -> int_Gamma theta . n`` (exact for P1 ``theta``)."""
    n = edge_normals(mesh)
    length = mesh.edge_lengths()
    coeffs = np.zeros((mesh.n_vertices, 2))
    for k in (0, 1):
        np.add.at(coeffs, mesh.boundary_edges[:, k], 0.5 * length[:, None] * n)
    return ShapeGradientForm(coeffs.ravel())


def volume_gradient(mesh, theta):
    """First variation of the area along ``theta``."""
    return volume_gradient_form(mesh)(check_field(theta, mesh, "theta"))


def descent_direction(mesh, params, grad_form, ell=0.0, system=None):
    """Riesz representative: ``<theta0, theta> = -(J' + ell vol')(theta)`` for all ``theta``."""
    system = ElasticSystem(mesh, params) if system is None else system
    total = grad_form.coefficients
    if ell:
        total = total + ell * volume_gradient_form(mesh).coefficients
    theta0 = system.solve(-total)
    return DescentDirection(
        theta0=theta0.reshape(-1, 2),
        gradient_value=float(total @ theta0),
        norm_squared=system.inner(theta0, theta0),
    )


def bump_direction(mesh, center, radius=0.45, vector=None):
    """Smooth compactly supported field ``(1 - |x - c|^2 / r^2)_+^3 * v``.

    ``vector`` defaults to the position itself (a radial push). Values on
    Dirichlet vertices are zeroed so the field is admissible.
    """
    x = mesh.vertices
    d2 = np.sum((x - np.asarray(center, dtype=float)) ** 2, axis=1)
    weight = np.clip(1.0 - d2 / radius**2, 0.0, None) ** 3
    v = x if vector is None else np.broadcast_to(np.asarray(vector, dtype=float), x.shape)
    field = weight[:, None] * v
    field[mesh.dirichlet_vertices] = 0.0
    return field


def solve_energy(mesh, params, f, solver="qp", **solver_kwargs):
    """Solve the contact problem on ``mesh`` and return ``(J, solution)``."""
    system = ElasticSystem(mesh, params)
    sol = solve_signorini(mesh, params, f, solver=solver, system=system, **solver_kwargs)
    return energy(mesh, params, f, sol.u, system=system), sol


def fd_shape_gradient(mesh, params, f, theta, t, solver="qp", ell=0.0, **solver_kwargs):
    """Central difference ``(L(t) - L(-t)) / 2t`` of ``L = J + ell |Omega|`` along ``theta``."""
    from .mesh import volume

    values = []
    for s in (t, -t):
        moved = deform_mesh(mesh, theta, s) if s > 0 else deform_mesh(mesh, -np.asarray(theta), t)
        J, _ = solve_energy(moved, params, f, solver=solver, **solver_kwargs)
        values.append(J + ell * volume(moved))
    return (values[0] - values[1]) / (2.0 * t)
