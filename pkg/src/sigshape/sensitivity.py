"""Material and shape derivatives of the contact solution.

The material derivative along ``theta`` is the energy-norm projection of the
derivative ``E'`` of the transported Dirichlet-Neumann data onto a cone,
shifted by ``grad(theta) u0``. The cone fixes ``w_n = 0`` on strongly active
contact vertices and ``w_n <= 0`` on weakly active ones.

``grad(theta)`` is represented by the recovered (vertex-averaged, then P1)
tensor field, so the second derivatives of ``theta`` that enter
``grad(grad(theta) phi)`` are kept consistently in every term.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_field, check_positive
from .contact import build_contact_dofs, solve_contact_qp, solve_signorini_uzawa
from .fem import (
    ElasticSystem,
    apply_law,
    assemble_load,
    basis_gradients,
    displacement_gradients,
    element_stress,
    midpoint_rule,
    scatter_vector,
    strain,
    vertex_average,
)
from .mesh import deform_mesh


@dataclass(frozen=True)
class ActiveSetPartition:
    """Three-way split of the contact vertices (masks aligned with ``vertices``)."""

    vertices: np.ndarray
    gamma_N: np.ndarray
    gamma_D: np.ndarray
    gamma_S: np.ndarray
    eps_u: float
    eps_sigma: float

    def counts(self):
        return {
            "inactive": int(self.gamma_N.sum()),
            "strong": int(self.gamma_D.sum()),
            "weak": int(self.gamma_S.sum()),
        }


@dataclass(frozen=True)
class DerivativeProblemData:
    E0: np.ndarray
    Eprime0_rhs: np.ndarray
    partition: ActiveSetPartition
    theta: np.ndarray
    u0: np.ndarray


@dataclass
class MaterialReport:
    rows: list
    weak_set_nonempty: bool
    identity_error: float
    partition_counts: dict
    extras: dict = field(default_factory=dict)

    @property
    def min_error(self):
        return min(r["h1_error_material"] for r in self.rows)


def recovered_gradient(mesh, theta):
    """Vertex-averaged ``grad(theta)``, shape ``(n, 2, 2)``."""
    return vertex_average(mesh, displacement_gradients(mesh, theta))


def _tensor_field(mesh, nodal):
    """Midpoint values ``(m, 3, 2, 2)`` and element gradients ``(m, 2, 2, 2)`` of a P1 tensor field."""
    _, values = midpoint_rule(mesh)
    local = nodal[mesh.triangles]
    at_q = np.einsum("qa,taij->tqij", values, local)
    grad = np.einsum("taij,tak->tijk", local, basis_gradients(mesh))
    return at_q, grad


def _quadrature(mesh):
    points, values = midpoint_rule(mesh)
    weights = mesh.areas / 3.0
    return points, values, weights, basis_gradients(mesh)


def _form_from_pieces(mesh, vec_q, mat_q, values, weights, g):
    """Assemble ``sum_q w (vec_q . phi(q) + mat_q : grad(phi))`` on P1 basis functions.

    ``vec_q`` is ``(m, 3, 2)`` and ``mat_q`` ``(m, 3, 2, 2)``.
    """
    local = np.einsum("qa,tqi->tai", values, vec_q * weights[:, None, None])
    local += np.einsum("tqik,tak->tai", mat_q * weights[:, None, None, None], g)
    return scatter_vector(mesh, local)


def _grad_of_product(G_q, dG, grad_phi, phi_q):
    """``grad(G phi)`` at quadrature points for P1 tensor ``G`` and P1 vector ``phi``."""
    return np.einsum("tqij,tjk->tqik", G_q, grad_phi) + np.einsum("tijk,tqj->tqik", dG, phi_q)


def _adjoint_product(G_q, dG, S):
    """Split ``S : grad(G phi)`` into ``vec . phi + mat : grad(phi)``.

    ``mat = G^T S`` and ``vec_j = sum_ik S_ik dG_ijk``.
    """
    mat = np.einsum("tqij,tqik->tqjk", G_q, S)
    vec = np.einsum("tqik,tijk->tqj", S, dG)
    return vec, mat


def assemble_eprime0(mesh, params, f, u0, theta):
    """Right-hand side of the derivative of the transported Dirichlet-Neumann data.

    Returns the dof vector ``r`` with ``r . phi`` equal to::

        int (f div(theta) + grad(f) theta + grad(theta)^T f) . phi
      + int (sigma grad(theta)^T + A(grad(u0) grad(theta)) - div(theta) sigma) : grad(phi)
      - int sigma : e(grad(theta) phi) - int A e(grad(theta) u0) : e(phi)

    where ``sigma = A e(u0)``.
    """
    u0 = check_field(u0, mesh, "u0")
    theta = check_field(theta, mesh, "theta")
    points, values, weights, g = _quadrature(mesh)
    G_q, dG = _tensor_field(mesh, recovered_gradient(mesh, theta))
    pts = points.reshape(-1, 2)
    f_q = f(pts).reshape(len(points), 3, 2)
    df_q = f.gradient(pts).reshape(len(points), 3, 2, 2)
    theta_q = np.einsum("qa,tai->tqi", values, theta[mesh.triangles])
    u_q = np.einsum("qa,tai->tqi", values, u0[mesh.triangles])
    grad_u = displacement_gradients(mesh, u0)
    sigma = element_stress(mesh, params, u0)[:, None]
    div_t = np.trace(G_q, axis1=2, axis2=3)

    vec = (
        f_q * div_t[..., None]
        + np.einsum("tqij,tqj->tqi", df_q, theta_q)
        + np.einsum("tqji,tqj->tqi", G_q, f_q)
    )
    mat = (
        np.einsum("tqij,tqkj->tqik", np.broadcast_to(sigma, G_q.shape), G_q)
        + apply_law(params, np.einsum("tij,tqjk->tqik", grad_u, G_q))
        - div_t[..., None, None] * sigma
    )
    # - int sigma : grad(G phi)
    sv, sm = _adjoint_product(G_q, dG, np.broadcast_to(sigma, G_q.shape))
    vec -= sv
    mat -= sm
    # - int A grad(G u0) : grad(phi)
    mat -= apply_law(params, _grad_of_product(G_q, dG, grad_u, u_q))
    return _form_from_pieces(mesh, vec, mat, values, weights, g)


def assemble_et(mesh, params, f, theta, t, u_bb, system=None):
    """Transported Dirichlet-Neumann data ``E_t`` (solution vector, ``(n, 2)``).

    ``u_bb`` is the doubly transported contact solution
    ``(I + t grad(theta))^-1 (u_t o (id + t theta))``. Used as an independent
    finite-difference oracle for :func:`assemble_eprime0`.
    """
    theta = check_field(theta, mesh, "theta")
    u_bb = check_field(u_bb, mesh, "u_bb")
    system = ElasticSystem(mesh, params) if system is None else system
    points, values, weights, g = _quadrature(mesh)
    G_q, dG = _tensor_field(mesh, recovered_gradient(mesh, theta))
    eye = np.eye(2)
    F = eye + t * G_q
    M = np.linalg.inv(F)
    Mt = np.swapaxes(M, -1, -2)
    Jt = np.linalg.det(F)
    theta_q = np.einsum("qa,tai->tqi", values, theta[mesh.triangles])
    f_t = f((points + t * theta_q).reshape(-1, 2)).reshape(points.shape)
    u_q = np.einsum("qa,tai->tqi", values, u_bb[mesh.triangles])
    grad_u = np.broadcast_to(displacement_gradients(mesh, u_bb)[:, None], G_q.shape)
    grad_Gu = _grad_of_product(G_q, dG, displacement_gradients(mesh, u_bb), u_q)

    def pulled(X):
        return Jt[..., None, None] * apply_law(params, X @ M) @ Mt

    S1 = pulled(grad_u)
    S2 = pulled(grad_Gu)
    vec = Jt[..., None] * np.einsum("tqij,tqj->tqi", eye + t * np.swapaxes(G_q, -1, -2), f_t)
    mat = -(S1 - apply_law(params, grad_u)) - t * S2
    sv, sm = _adjoint_product(G_q, dG, t * S1 + t * t * S2)
    vec -= sv
    mat -= sm
    rhs = _form_from_pieces(mesh, vec, mat, values, weights, g)
    return system.solve(rhs).reshape(-1, 2)


def _vertex_sigma_n(mesh, sol, contact):
    if sol.method != "nitsche":
        return np.asarray(sol.sigma_n, dtype=float)
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for k in (0, 1):
        np.add.at(acc, mesh.boundary_edges[mesh.signorini_edges, k], sol.sigma_n)
        np.add.at(cnt, mesh.boundary_edges[mesh.signorini_edges, k], 1.0)
    return (acc / np.maximum(cnt, 1.0))[contact.contact_vertices]


def classify_active_set(mesh, params, sol, eps_u=None, eps_sigma=None):
    """Split contact vertices into inactive, strongly active and weakly active.

    Defaults: ``eps_u = 1e-8 diam``, ``eps_sigma = 1e-8 (2 mu + lam)``.
    """
    eps_u = 1e-8 * mesh.diameter if eps_u is None else check_positive(eps_u, "eps_u")
    eps_sigma = 1e-8 * params.modulus if eps_sigma is None else check_positive(eps_sigma, "eps_sigma")
    contact = sol.contact if sol.contact is not None else build_contact_dofs(mesh)
    un = contact.N @ check_field(sol.u, mesh, "u").ravel()
    sn = _vertex_sigma_n(mesh, sol, contact)
    inactive = np.abs(un) > eps_u
    strong = ~inactive & (sn < -eps_sigma)
    weak = ~inactive & ~strong
    return ActiveSetPartition(contact.contact_vertices, inactive, strong, weak, eps_u, eps_sigma)


def derivative_problem(mesh, params, f, sol, theta, partition=None, system=None):
    system = ElasticSystem(mesh, params) if system is None else system
    partition = classify_active_set(mesh, params, sol) if partition is None else partition
    E0 = system.solve(assemble_load(mesh, f)).reshape(-1, 2)
    rhs = assemble_eprime0(mesh, params, f, sol.u, theta)
    return DerivativeProblemData(E0, rhs, partition, check_field(theta, mesh, "theta"), sol.u)


def cone_projection(mesh, params, data, system=None, tol=1e-12):
    """Energy projection ``w`` of ``E'`` onto the cone of the active-set partition."""
    system = ElasticSystem(mesh, params) if system is None else system
    contact = build_contact_dofs(mesh)
    p = data.partition
    rows = np.flatnonzero(p.gamma_D | p.gamma_S)
    N = contact.N[rows]
    equality = p.gamma_D[rows]
    w, _, _ = solve_contact_qp(system, data.Eprime0_rhs, N, equality=equality, tol=tol)
    return w.reshape(-1, 2)


def solve_material_derivative(mesh, params, data, system=None):
    """``u_bar' = w + grad(theta) u0`` with ``w`` from :func:`cone_projection`."""
    w = cone_projection(mesh, params, data, system=system)
    G = recovered_gradient(mesh, data.theta)
    shift = np.einsum("vij,vj->vi", G, data.u0)
    shift[mesh.dirichlet_vertices] = 0.0
    return w + shift


def shape_derivative_field(mesh, u_bar_prime, u0, theta):
    """Eulerian derivative ``u' = u_bar' - grad(u0) theta`` (vertex-averaged gradient)."""
    u0 = check_field(u0, mesh, "u0")
    theta = check_field(theta, mesh, "theta")
    grad_u = vertex_average(mesh, displacement_gradients(mesh, u0))
    return check_field(u_bar_prime, mesh, "u_bar_prime") - np.einsum("vij,vj->vi", grad_u, theta)


def fd_material_derivative(mesh, params, f, theta, t, tol=1e-12):
    """Central difference of nodal QP solutions on the meshes moved by ``+-t theta``."""
    t = check_positive(t, "t")
    theta = check_field(theta, mesh, "theta")
    plus = solve_signorini_uzawa(deform_mesh(mesh, theta, t), params, f, tol=tol).u
    minus = solve_signorini_uzawa(deform_mesh(mesh, -theta, t), params, f, tol=tol).u
    return (plus - minus) / (2.0 * t)


def energy_identity(mesh, params, u0, theta, u_bar_prime, system=None):
    """Shape gradient rebuilt from the material derivative::

    -1/2 int div(theta) sigma:e + int sigma : grad(u0) grad(theta) - <u_bar', u0>
    """
    system = ElasticSystem(mesh, params) if system is None else system
    u0 = check_field(u0, mesh, "u0")
    theta = check_field(theta, mesh, "theta")
    grad_u = displacement_gradients(mesh, u0)
    grad_t = displacement_gradients(mesh, theta)
    sigma = apply_law(params, grad_u)
    div_t = np.trace(grad_t, axis1=1, axis2=2)
    sed = np.einsum("tij,tij->t", sigma, strain(grad_u))
    vol = -0.5 * np.sum(mesh.areas * div_t * sed)
    vol += np.sum(mesh.areas * np.einsum("tij,tik,tkj->t", sigma, grad_u, grad_t))
    return float(vol - system.inner(u_bar_prime, u0))


def verify_material_theorem(mesh, params, f, theta, t_list, csv_path=None, tol=1e-12):
    """Compare the projected material derivative with central differences.

    Each row holds ``t``, the relative energy-norm error of the material
    derivative, the relative error of the shape gradient rebuilt from the
    difference quotient, and the partition counts.
    """
    from .shape import shape_gradient_boundary

    theta = check_field(theta, mesh, "theta")
    system = ElasticSystem(mesh, params)
    sol = solve_signorini_uzawa(mesh, params, f, tol=tol, system=system)
    data = derivative_problem(mesh, params, f, sol, theta, system=system)
    ubp = solve_material_derivative(mesh, params, data, system=system)
    ref_norm = system.norm(ubp)
    grad_value = shape_gradient_boundary(mesh, params, f, sol.u)(theta)
    identity = energy_identity(mesh, params, sol.u, theta, ubp, system=system)
    scale = abs(grad_value) if grad_value else 1.0
    counts = data.partition.counts()
    rows = []
    for t in t_list:
        fd = fd_material_derivative(mesh, params, f, theta, t, tol=tol)
        err = system.norm(ubp - fd) / ref_norm if ref_norm > 0 else system.norm(fd)
        id_fd = energy_identity(mesh, params, sol.u, theta, fd, system=system)
        rows.append(
            {
                "t": float(t),
                "h1_error_material": float(err),
                "h1_error_energy_identity": float(abs(id_fd - grad_value) / scale),
                "active_counts": f"{counts['inactive']}/{counts['strong']}/{counts['weak']}",
            }
        )
    report = MaterialReport(
        rows=rows,
        weak_set_nonempty=counts["weak"] > 0,
        identity_error=float(abs(identity - grad_value) / scale),
        partition_counts=counts,
        extras={"shape_gradient": grad_value, "identity_value": identity},
    )
    if csv_path is not None:
        write_material_csv(report, csv_path)
    return report


def write_material_csv(report, path):
    fields = ["t", "h1_error_material", "h1_error_energy_identity", "active_counts"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
