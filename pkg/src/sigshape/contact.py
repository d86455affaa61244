"""Signorini contact solvers.

Three routes to the same unilateral problem:

* a nodal-constraint convex QP ``min 1/2 u'Ku - b'u  s.t.  N u <= 0`` solved
  by Uzawa iterations on the condensed dual (with an exact active-set polish),
* brute-force enumeration of active sets (a test oracle for tiny problems),
* Nitsche's method with a semismooth Newton loop.

The unconstrained Dirichlet-Neumann solve lives here too because it is the
argument of the contact projection.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import check_field, check_positive
from .exceptions import ConvergenceError, NoFeasibleKKTError, TooManyConstraintsError
from .fem import ElasticSystem, assemble_load, basis_gradients, boundary_stress, element_dofs
from .mesh import compute_normals, edge_normals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContactDofs:
    """Nodal normal-displacement constraints on the free contact vertices."""

    contact_vertices: np.ndarray
    normals: np.ndarray
    N: sp.csr_matrix
    lumped_length: np.ndarray

    @property
    def n_constraints(self):
        return len(self.contact_vertices)


@dataclass
class ContactSolution:
    """Displacement plus contact diagnostics.

    ``sigma_n`` is per contact vertex for the QP solvers and per Signorini
    edge for Nitsche (see ``method``).
    """

    u: np.ndarray
    active_set: np.ndarray
    sigma_n: np.ndarray
    method: str
    multipliers: np.ndarray = None
    contact: ContactDofs = None
    edge_active: np.ndarray = None
    element_sigma_n: np.ndarray = None
    stats: dict = field(default_factory=dict)

    @property
    def active_count(self):
        return int(np.count_nonzero(self.active_set))


@dataclass(frozen=True)
class ComplementarityReport:
    max_penetration: float
    max_tension: float
    max_comp_product: float

    def as_dict(self):
        return {
            "max_penetration": self.max_penetration,
            "max_tension": self.max_tension,
            "max_comp_product": self.max_comp_product,
        }


@dataclass(frozen=True)
class EnergyValues:
    """``J1 = 1/2 u'Ku - b'u`` and ``J2 = -1/2 u'Ku``; they agree at a solution."""

    J1: float
    J2: float

    @property
    def gap(self):
        return abs(self.J1 - self.J2)


def build_contact_dofs(mesh):
    """One row of ``N`` per Signorini vertex that is not a Dirichlet vertex."""
    normals = compute_normals(mesh)
    keep = ~mesh.dirichlet_vertices[normals.contact_vertices]
    verts = normals.contact_vertices[keep]
    vn = normals.vertex_normals[keep]
    m = len(verts)
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([2 * verts, 2 * verts + 1]).ravel()
    N = sp.csr_matrix((vn.ravel(), (rows, cols)), shape=(m, mesh.n_dofs))
    half = np.zeros(mesh.n_vertices)
    sig = mesh.signorini_edges
    lengths = mesh.edge_lengths(sig)
    for k in (0, 1):
        np.add.at(half, mesh.boundary_edges[sig, k], 0.5 * lengths)
    return ContactDofs(verts, vn, N, half[verts])


def solve_dirichlet_neumann(mesh, params, f, system=None):
    """Unconstrained solve: ``K F = b`` with ``F = 0`` on Dirichlet vertices."""
    system = ElasticSystem(mesh, params) if system is None else system
    return system.solve(assemble_load(mesh, f)).reshape(-1, 2)


def energy_value(mesh, params, f, u, system=None, load=None):
    system = ElasticSystem(mesh, params) if system is None else system
    b = assemble_load(mesh, f) if load is None else load
    x = check_field(u, mesh, "u").ravel()
    quad = system.inner(x, x)
    return EnergyValues(0.5 * quad - float(b @ x), -0.5 * quad)


# -- QP by Uzawa on the condensed dual ---------------------------------------


def _dual_operator(system, N):
    """``S = N K^-1 N'`` (dense) and the primal map ``lam -> K^-1 N' lam``."""
    Nt = N.T.toarray()
    KinvNt = system.solve(Nt)
    S = N @ KinvNt
    return 0.5 * (S + S.T), KinvNt


def _try_active_set(S, g, active, equality, tol):
    lam = np.zeros(len(g))
    idx = np.flatnonzero(active | equality)
    if idx.size:
        try:
            lam[idx] = sla.solve(S[np.ix_(idx, idx)], g[idx], assume_a="pos")
        except (sla.LinAlgError, ValueError):
            return None
    gap = g - S @ lam  # = N u
    ok_dual = np.all(lam[~equality] >= -tol)
    ok_primal = np.all(gap[~(active | equality)] <= tol)
    if ok_dual and ok_primal:
        lam[~equality] = np.maximum(lam[~equality], 0.0)
        return lam
    return None


def uzawa_dual(S, g, equality=None, rho=None, tol=1e-10, max_iter=200000, polish_every=25):
    """Projected dual ascent ``lam <- P(lam + rho (g - S lam))``.

    Rows flagged in ``equality`` are not projected. Every ``polish_every``
    iterations the current positive set is solved exactly and accepted if
    it satisfies the KKT conditions. Returns ``(lam, iterations)``.
    """
    m = len(g)
    equality = np.zeros(m, dtype=bool) if equality is None else np.asarray(equality, bool)
    if m == 0:
        return np.zeros(0), 0
    if rho is None:
        rho = 1.0 / max(np.linalg.eigvalsh(S)[-1], np.finfo(float).tiny)
    scale = max(1.0, np.max(np.abs(g)))
    lam = np.zeros(m)
    for it in range(1, max_iter + 1):
        lam = lam + rho * (g - S @ lam)
        lam[~equality] = np.maximum(lam[~equality], 0.0)
        if it % polish_every == 0 or it == max_iter:
            cand = _try_active_set(S, g, lam > 0, equality, tol * scale)
            if cand is not None:
                return cand, it
            gap = g - S @ lam
            viol = max(
                np.max(gap[~equality], initial=0.0),
                np.max(np.abs(gap[equality]), initial=0.0),
                abs(float(lam[~equality] @ gap[~equality])),
            )
            if viol <= tol * scale:
                return lam, it
    raise ConvergenceError(
        f"Uzawa did not converge in {max_iter} iterations (rho={rho:.3e})",
        iterations=max_iter,
        rho=rho,
    )


def default_uzawa_rate(system, contact):
    """Mean stiffness diagonal over the contact dofs."""
    if contact.n_constraints == 0:
        return 1.0
    dofs = contact.N.indices
    return float(np.mean(system.K.diagonal()[dofs]))


def solve_contact_qp(system, b, N, equality=None, rho=None, tol=1e-10, max_iter=200000):
    """Solve ``min 1/2 u'Ku - b'u`` subject to ``N u <= 0`` (``= 0`` on equality rows).

    Returns ``(u, lam, stats)`` with ``u`` a flat dof vector.
    """
    u_free = system.solve(b)
    m = N.shape[0]
    if m == 0:
        return u_free, np.zeros(0), {"iterations": 0, "rho": None}
    S, KinvNt = _dual_operator(system, N)
    g = N @ u_free
    lam_max = float(np.linalg.eigvalsh(S)[-1])
    if rho is None:
        rho = 1.0 / lam_max
    lam, iters = uzawa_dual(S, g, equality, rho, tol, max_iter)
    u = u_free - KinvNt @ lam
    gap = N @ u
    residual = system.K @ u + N.T @ lam - b
    residual[system.fixed] = 0.0
    stats = {
        "iterations": iters,
        "rho": float(rho),
        "rho_bound": 2.0 / lam_max,
        "stationarity": float(np.linalg.norm(residual)),
        "max_gap": float(np.max(gap, initial=0.0)),
        "complementarity": float(abs(lam @ gap)),
    }
    return u, lam, stats


def solve_signorini_uzawa(mesh, params, f, rho=None, tol=1e-10, max_iter=200000, system=None):
    """Nodal-constraint Signorini solve.

    ``rho=None`` picks ``1 / lambda_max(N K^-1 N')``, which is always a
    convergent dual step; pass ``rho="stiffness"`` for the mean contact-dof
    stiffness diagonal instead.
    """
    system = ElasticSystem(mesh, params) if system is None else system
    contact = build_contact_dofs(mesh)
    if isinstance(rho, str):
        if rho != "stiffness":
            raise ValueError(f"unknown rho rule {rho!r}")
        rho = default_uzawa_rate(system, contact)
    elif rho is not None:
        rho = check_positive(rho, "rho")
    b = assemble_load(mesh, f)
    u, lam, stats = solve_contact_qp(system, b, contact.N, rho=rho, tol=tol, max_iter=max_iter)
    return ContactSolution(
        u=u.reshape(-1, 2),
        active_set=lam > 0,
        sigma_n=-lam / contact.lumped_length if lam.size else lam,
        method="qp",
        multipliers=lam,
        contact=contact,
        stats=stats,
    )


def project_onto_contact_cone(system, contact, F, equality=None, tol=1e-12):
    """Energy-norm projection of ``F`` onto ``{N u <= 0}`` (the discrete prox)."""
    x = np.ravel(np.asarray(F, dtype=float)).copy()
    x[system.fixed] = 0.0
    u, _, _ = solve_contact_qp(system, system.K @ x, contact.N, equality=equality, tol=tol)
    return u


# -- brute-force oracle ------------------------------------------------------


def active_set_oracle(K, b, N, max_constraints=12, tol=1e-10):
    """Exact QP solution by trying every active set with a dense KKT solve.

    ``K`` must be SPD (Dirichlet rows eliminated). ``sigma_n`` of the result
    holds the raw multipliers with a minus sign.
    """
    K = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    N = N.toarray() if sp.issparse(N) else np.atleast_2d(np.asarray(N, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m, n = N.shape if N.size else (0, len(b))
    if m > max_constraints:
        raise TooManyConstraintsError(
            f"{m} constraints exceed the enumeration limit {max_constraints}", m=m
        )
    scale = max(1.0, float(np.max(np.abs(np.linalg.solve(K, b)), initial=0.0)))
    best = None
    for k in range(m + 1):
        for subset in itertools.combinations(range(m), k):
            A = N[list(subset)]
            kkt = np.block([[K, A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([b, np.zeros(k)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            u, lam_a = sol[:n], sol[n:]
            if np.any(lam_a < -tol * scale) or np.any(N @ u > tol * scale):
                continue
            energy = 0.5 * u @ K @ u - b @ u
            if best is None or energy < best[0] - 1e-14 * max(1.0, abs(energy)):
                lam = np.zeros(m)
                lam[list(subset)] = np.maximum(lam_a, 0.0)
                best = (energy, u, lam)
    if best is None:
        raise NoFeasibleKKTError("no active set satisfies the KKT conditions", m=m)
    _, u, lam = best
    return ContactSolution(
        u=u.reshape(-1, 2) if n % 2 == 0 else u,
        active_set=lam > 0,
        sigma_n=-lam,
        method="oracle",
        multipliers=lam,
        stats={"candidates": 2**m},
    )


def compare_with_oracle(mesh, params, f, tol=1e-12):
    """Solve by dual Uzawa and by enumeration; returns the absolute gaps.

    Keys: ``energy_gap`` (difference of discrete energies), ``h1_gap``
    (energy norm of the displacement difference), ``n_constraints``.
    """
    system = ElasticSystem(mesh, params)
    b = assemble_load(mesh, f)
    qp = solve_signorini_uzawa(mesh, params, f, tol=tol, system=system)
    N = qp.contact.N[:, system.free]
    oracle = active_set_oracle(system.K_free, b[system.free], N, tol=1e-10)
    u_oracle = np.zeros(mesh.n_dofs)
    u_oracle[system.free] = np.ravel(oracle.u)
    u_qp = qp.u.ravel()
    e_qp = energy_value(mesh, params, f, u_qp, system=system, load=b).J1
    e_or = energy_value(mesh, params, f, u_oracle, system=system, load=b).J1
    return {
        "n_constraints": int(qp.contact.n_constraints),
        "energy_qp": e_qp,
        "energy_oracle": e_or,
        "energy_gap": abs(e_qp - e_or),
        "h1_gap": system.norm(u_qp - u_oracle),
        "active_qp": int(qp.active_count),
        "active_oracle": int(np.count_nonzero(oracle.active_set)),
    }


# -- Nitsche -----------------------------------------------------------------


@dataclass(frozen=True)
class NitscheOperators:
    """Per-edge local vectors on the dofs of each edge's owner triangle.

    ``stress[e] . u_loc`` is the element normal stress, ``trace[e] . u_loc``
    the normal displacement at the edge midpoint.
    """

    edges: np.ndarray
    dofs: np.ndarray
    stress: np.ndarray
    trace: np.ndarray
    length: np.ndarray
    gamma: np.ndarray


def nitsche_operators(mesh, params, gamma0):
    edges = mesh.signorini_edges
    tri = mesh.edge_triangle[edges]
    n = edge_normals(mesh, edges)
    g = basis_gradients(mesh)[tri]
    gn = np.einsum("eai,ei->ea", g, n)
    stress = 2 * params.mu * gn[:, :, None] * n[:, None, :] + params.lam * g
    local = mesh.triangles[tri]
    ends = mesh.boundary_edges[edges]
    on_edge = (local[:, :, None] == ends[:, None, :]).any(axis=2)
    trace = 0.5 * on_edge[:, :, None] * n[:, None, :]
    length = mesh.edge_lengths(edges)
    return NitscheOperators(
        edges=edges,
        dofs=element_dofs(mesh)[tri],
        stress=stress.reshape(-1, 6),
        trace=trace.reshape(-1, 6),
        length=length,
        gamma=length / gamma0,
    )


def _rank_one_sum(dofs, vecs, weights, n):
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    vals = (weights[:, None, None] * vecs[:, :, None] * vecs[:, None, :]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def solve_signorini_nitsche(
    mesh, params, f, gamma0=None, tol=1e-10, max_iter=50, system=None
):
    """Symmetric Nitsche contact solved by semismooth Newton.

    Per Signorini edge ``E`` (midpoint rule, ``gamma_E = h_E / gamma0``)::

        a(u, v) - sum gamma_E |E| s(u) s(v)
                + sum |E| / gamma_E [P(u)]_+ (c(v) - gamma_E s(v)) = (f, v)

    with ``s`` the element normal stress, ``c`` the midpoint normal
    displacement and ``P = c - gamma_E s``. An edge is active when
    ``P > 0`` (ties are inactive). ``gamma0`` defaults to ``100 (2 mu + lam)``.
    """
    gamma0 = 100.0 * params.modulus if gamma0 is None else check_positive(gamma0, "gamma0")
    system = ElasticSystem(mesh, params) if system is None else system
    ops = nitsche_operators(mesh, params, gamma0)
    b = assemble_load(mesh, f)
    n = mesh.n_dofs
    free = system.free
    d = ops.trace - ops.gamma[:, None] * ops.stress
    base = (system.K - _rank_one_sum(ops.dofs, ops.stress, ops.gamma * ops.length, n)).tocsr()

    def probe(x):
        xl = x[ops.dofs]
        return np.einsum("ea,ea->e", d, xl), np.einsum("ea,ea->e", ops.stress, xl)

    def residual(x):
        p, s = probe(x)
        r = base @ x - b
        w = ops.length / ops.gamma * np.maximum(p, 0.0)
        np.add.at(r, ops.dofs.ravel(), (w[:, None] * d).ravel())
        r[system.fixed] = 0.0
        return r

    x = np.zeros(n)
    active = np.zeros(len(ops.edges), dtype=bool)
    bnorm = max(np.linalg.norm(b), 1e-300)
    flips = []
    for it in range(1, max_iter + 1):
        A = base + _rank_one_sum(
            ops.dofs[active], d[active], (ops.length / ops.gamma)[active], n
        )
        A = A.tocsr()[free][:, free].tocsc()
        x = np.zeros(n)
        x[free] = spla.spsolve(A, b[free])
        p, _ = probe(x)
        new_active = p > 0
        flips.append(int(np.count_nonzero(new_active != active)))
        res = float(np.linalg.norm(residual(x)) / bnorm)
        if flips[-1] == 0 and res <= tol:
            break
        active = new_active
    else:
        raise ConvergenceError(
            f"Nitsche Newton did not converge in {max_iter} iterations "
            f"(last active-set flips: {flips[-1]})",
            flips=flips[-1],
            residual=res,
        )
    p, s_elem = probe(x)
    pressure = -np.maximum(p, 0.0) / ops.gamma
    contact = build_contact_dofs(mesh)
    vert_active = np.zeros(mesh.n_vertices, dtype=bool)
    for k in (0, 1):
        vert_active[mesh.boundary_edges[ops.edges[active], k]] = True
    return ContactSolution(
        u=x.reshape(-1, 2),
        active_set=vert_active[contact.contact_vertices],
        sigma_n=pressure,
        method="nitsche",
        contact=contact,
        edge_active=active,
        element_sigma_n=s_elem,
        stats={"iterations": it, "residual": res, "flips": flips, "gamma0": gamma0},
    )


def solve_signorini(mesh, params, f, solver="nitsche", system=None, **kwargs):
    """Dispatch to :func:`solve_signorini_nitsche` or :func:`solve_signorini_uzawa`."""
    if solver == "nitsche":
        return solve_signorini_nitsche(mesh, params, f, system=system, **kwargs)
    if solver == "qp":
        return solve_signorini_uzawa(mesh, params, f, system=system, **kwargs)
    raise ValueError(f"unknown solver {solver!r}; expected 'nitsche' or 'qp'")


def normal_displacement(mesh, sol):
    """Normal displacement where the solver imposes contact.

    Contact vertices with vertex normals for the QP solvers; edge midpoints
    with edge normals for Nitsche.
    """
    u = check_field(sol.u, mesh, "u")
    if sol.method == "nitsche":
        edges = mesh.signorini_edges
        ends = mesh.boundary_edges[edges]
        mid = 0.5 * (u[ends[:, 0]] + u[ends[:, 1]])
        return np.einsum("ei,ei->e", mid, edge_normals(mesh, edges))
    contact = sol.contact if sol.contact is not None else build_contact_dofs(mesh)
    return contact.N @ u.ravel()


def complementarity_report(mesh, params, sol):
    """Largest violations of ``u_n <= 0``, ``sigma_n <= 0`` and ``u_n sigma_n = 0``.

    The QP product uses the nodal multipliers (``lam_i * (N u)_i``).
    """
    un = normal_displacement(mesh, sol)
    if sol.method == "nitsche":
        sn = sol.sigma_n
        product = un * sn
    else:
        sn = sol.sigma_n
        lam = sol.multipliers if sol.multipliers is not None else -sn
        product = lam * un
    return ComplementarityReport(
        max_penetration=float(np.max(un, initial=0.0)),
        max_tension=float(np.max(sn, initial=0.0)),
        max_comp_product=float(np.max(np.abs(product), initial=0.0)),
    )


def element_normal_stress(mesh, params, u):
    """Raw element-constant ``sigma_n`` on each Signorini edge."""
    return boundary_stress(mesh, params, u).sigma_n
