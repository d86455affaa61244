"""P1 finite elements for plane-strain isotropic linear elasticity.

Displacement dofs are interleaved: dof ``2*i + c`` is component ``c`` of
vertex ``i``. Nodal fields are ``(n_vertices, 2)`` arrays; linear forms and
flat solution vectors have length ``2 * n_vertices``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import check_field, check_positive
from .exceptions import ConvergenceError


@dataclass(frozen=True)
class ElasticityParams:
    """Lamé coefficients of the isotropic law ``sigma = 2 mu e + lam tr(e) I``."""

    mu: float
    lam: float

    def __post_init__(self):
        check_positive(self.mu, "mu")
        check_positive(self.lam, "lambda", strict=False)

    @property
    def modulus(self):
        """``2 mu + lam``, the stiffness scale used for tolerances."""
        return 2.0 * self.mu + self.lam

    @classmethod
    def from_young(cls, young, poisson):
        mu = young / (2.0 * (1.0 + poisson))
        lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
        return cls(mu, lam)


# E = 1, nu = 0.3 rounded to four digits
DEFAULT_PARAMS = ElasticityParams(mu=0.3846, lam=0.5769)


class VectorLoad:
    """Analytic body force ``f(points) -> (N, 2)`` with an optional Jacobian.

    ``gradient(points)`` returns ``(N, 2, 2)`` with ``[:, i, j] = d f_i / d x_j``.
    """

    def __init__(self, value, gradient=None, name="custom"):
        self._value = value
        self._gradient = gradient
        self.name = name

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self._value(points), dtype=float).reshape(len(points), 2)
        if not np.all(np.isfinite(out)):
            raise ValueError(f"load {self.name!r} is not finite at some quadrature points")
        return out

    @property
    def has_gradient(self):
        return self._gradient is not None

    def gradient(self, points):
        if self._gradient is None:
            raise ValueError(f"load {self.name!r} has no analytic gradient")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self._gradient(points), dtype=float).reshape(len(points), 2, 2)
        if not np.all(np.isfinite(out)):
            raise ValueError(f"gradient of load {self.name!r} is not finite")
        return out

    def __repr__(self):
        return f"VectorLoad({self.name!r})"


def exp_load():
    """``f = (exp(x^2) / 2, 0)``; the smooth cut-off equals 1 on the domains used."""

    def value(p):
        return np.column_stack([0.5 * np.exp(p[:, 0] ** 2), np.zeros(len(p))])

    def gradient(p):
        g = np.zeros((len(p), 2, 2))
        g[:, 0, 0] = p[:, 0] * np.exp(p[:, 0] ** 2)
        return g

    return VectorLoad(value, gradient, name="exp")


def constant_load(fx=0.0, fy=0.0):
    c = np.array([fx, fy], dtype=float)
    return VectorLoad(
        lambda p: np.tile(c, (len(p), 1)),
        lambda p: np.zeros((len(p), 2, 2)),
        name=f"constant({fx:g},{fy:g})",
    )


def zero_load():
    load = constant_load(0.0, 0.0)
    load.name = "zero"
    return load


def radial_load(strength=1.0):
    """``f = -strength * x``: pulls the body towards the origin."""
    return VectorLoad(
        lambda p: -strength * p,
        lambda p: np.tile(-strength * np.eye(2), (len(p), 1, 1)),
        name=f"radial({strength:g})",
    )


NAMED_LOADS = {
    "exp": exp_load,
    "zero": zero_load,
    "radial": radial_load,
    "constant": constant_load,
}


def make_load(name, *args):
    try:
        factory = NAMED_LOADS[name]
    except KeyError:
        raise ValueError(f"unknown load {name!r}; choose from {sorted(NAMED_LOADS)}") from None
    return factory(*args)


# -- element geometry -------------------------------------------------------


def basis_gradients(mesh):
    """Gradients of the three barycentric basis functions, shape ``(m, 3, 2)``."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    two_area = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty((len(p), 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        g[:, a, 0] = (y[:, b] - y[:, c]) / two_area
        g[:, a, 1] = (x[:, c] - x[:, b]) / two_area
    return g


def element_dofs(mesh):
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=-1).reshape(len(t), 6)


def midpoint_rule(mesh):
    """Edge-midpoint quadrature: points ``(m, 3, 2)``, basis values ``(3, 3)``.

    ``values[q, a]`` is basis ``a`` at point ``q``; each point has weight
    ``area / 3``. Exact for quadratics.
    """
    p = mesh.vertices[mesh.triangles]
    points = 0.5 * (p + np.roll(p, -1, axis=1))
    values = 0.5 * (np.eye(3) + np.roll(np.eye(3), -1, axis=0))
    return points, values


def displacement_gradients(mesh, u):
    """Element-constant ``grad u`` with ``[:, i, j] = d u_i / d x_j``."""
    u = check_field(u, mesh, "u")
    return np.einsum("tai,taj->tij", u[mesh.triangles], basis_gradients(mesh))


def strain(grad):
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def apply_law(params, tensor):
    """``A X = 2 mu sym(X) + lam tr(X) I`` applied to a stack of 2x2 tensors."""
    e = strain(tensor)
    tr = np.trace(e, axis1=-2, axis2=-1)
    return 2.0 * params.mu * e + params.lam * tr[..., None, None] * np.eye(2)


def element_stress(mesh, params, u):
    return apply_law(params, displacement_gradients(mesh, u))


def vertex_average(mesh, element_values):
    """Area-weighted average of element quantities at the vertices."""
    vals = np.asarray(element_values, dtype=float)
    w = mesh.areas
    flat = vals.reshape(len(vals), -1)
    acc = np.zeros((mesh.n_vertices, flat.shape[1]))
    wsum = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], w[:, None] * flat)
        np.add.at(wsum, mesh.triangles[:, k], w)
    return (acc / wsum[:, None]).reshape((mesh.n_vertices,) + vals.shape[1:])


# -- assembly ----------------------------------------------------------------


def element_stiffness(mesh, params):
    """Element matrices ``(m, 6, 6)`` in interleaved local dof order."""
    g = basis_gradients(mesh)
    gg = np.einsum("tai,tbi->tab", g, g)
    eye = np.eye(2)
    ke = params.mu * np.einsum("tab,ik->taibk", gg, eye)
    ke += params.mu * np.einsum("tak,tbi->taibk", g, g)
    ke += params.lam * np.einsum("tai,tbk->taibk", g, g)
    return (ke * mesh.areas[:, None, None, None, None]).reshape(-1, 6, 6)


def scatter_matrix(mesh, local):
    """Sum element matrices ``(m, 6, 6)`` into a global CSR matrix."""
    dofs = element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = mesh.n_dofs
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def scatter_vector(mesh, local):
    """Sum element vectors ``(m, 3, 2)`` or ``(m, 6)`` into a global dof vector."""
    out = np.zeros(mesh.n_dofs)
    np.add.at(out, element_dofs(mesh).ravel(), np.asarray(local).ravel())
    return out


def assemble_stiffness(mesh, params):
    """Stiffness matrix of ``int A e(u) : e(v)`` (before Dirichlet elimination)."""
    return scatter_matrix(mesh, element_stiffness(mesh, params))


def assemble_load(mesh, f):
    """Load vector ``int f . v`` with the 3-point edge-midpoint rule."""
    points, values = midpoint_rule(mesh)
    fq = f(points.reshape(-1, 2)).reshape(len(points), 3, 2)
    local = np.einsum("qa,tqi->tai", values, fq) * (mesh.areas / 3.0)[:, None, None]
    return scatter_vector(mesh, local)


def apply_dirichlet(K, b, mesh):
    """Replace the rows and columns of Dirichlet dofs by identity, zero the RHS."""
    n = K.shape[0]
    fixed = np.zeros(n, dtype=bool)
    fixed[mesh.dirichlet_dofs] = True
    keep = sp.diags((~fixed).astype(float))
    Kd = (keep @ K @ keep + sp.diags(fixed.astype(float))).tocsr()
    Kd.eliminate_zeros()
    bd = np.array(b, dtype=float, copy=True)
    bd[fixed] = 0.0
    return Kd, bd


def solve_spd(K, b, tol=1e-10, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, residual)`` where ``residual = ||K x - b|| / ||b||``.
    Raises :class:`ConvergenceError` after ``maxiter`` (default ``20 * n``)
    iterations.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0
    diag = K.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix has a non-positive diagonal entry; is it SPD?")
    precond = sp.diags(1.0 / diag)
    maxiter = 20 * n if maxiter is None else maxiter
    x, info = spla.cg(K, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
    residual = float(np.linalg.norm(K @ x - b) / bnorm)
    if info != 0:
        raise ConvergenceError(
            f"CG did not converge in {maxiter} iterations", residual=residual, iterations=maxiter
        )
    return x, residual


def h1d_inner(K, u, v):
    """Energy inner product ``u^T K v``."""
    u = np.ravel(np.asarray(u, dtype=float))
    v = np.ravel(np.asarray(v, dtype=float))
    if u.size != K.shape[0] or v.size != K.shape[0]:
        raise ValueError(f"dimension mismatch: K is {K.shape}, got {u.size} and {v.size}")
    return float(u @ (K @ v))


def energy_norm(K, u):
    return float(np.sqrt(max(h1d_inner(K, u, u), 0.0)))


class ElasticSystem:
    """Stiffness, Dirichlet elimination and a cached sparse factorisation.

    ``solve`` returns exact (direct) solutions restricted to free dofs, which
    is what the contact solvers and verification sweeps need when they solve
    the same operator many times.
    """

    def __init__(self, mesh, params):
        self.mesh = mesh
        self.params = params
        self.K = assemble_stiffness(mesh, params)
        fixed = np.zeros(mesh.n_dofs, dtype=bool)
        fixed[mesh.dirichlet_dofs] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.K_free = self.K[self.free][:, self.free].tocsc()
        self._lu = None

    @property
    def eliminated(self):
        return apply_dirichlet(self.K, np.zeros(self.mesh.n_dofs), self.mesh)[0]

    def _factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.K_free)
        return self._lu

    def solve(self, rhs):
        """Solve ``K u = rhs`` with ``u = 0`` on Dirichlet dofs.

        ``rhs`` may be ``(2n,)`` or ``(2n, k)``; Dirichlet rows are ignored.
        """
        rhs = np.asarray(rhs, dtype=float)
        out = np.zeros(rhs.shape)
        out[self.free] = self._factor().solve(np.ascontiguousarray(rhs[self.free]))
        return out

    def inner(self, u, v):
        return h1d_inner(self.K, u, v)

    def norm(self, u):
        return energy_norm(self.K, u)


@dataclass(frozen=True)
class BoundaryStress:
    """Traction of the element stress on each listed boundary edge."""

    edges: np.ndarray
    normals: np.ndarray
    traction: np.ndarray
    sigma_n: np.ndarray
    sigma_tau: np.ndarray


def boundary_stress(mesh, params, u, edges=None):
    """Element-constant traction ``A e(u) n`` on Signorini edges (or ``edges``).

    Returns the traction vectors and their split ``sigma_n n + sigma_tau``.
    """
    from .mesh import edge_normals

    edges = mesh.signorini_edges if edges is None else np.asarray(edges)
    stress = element_stress(mesh, params, u)[mesh.edge_triangle[edges]]
    normals = edge_normals(mesh, edges)
    traction = np.einsum("eij,ej->ei", stress, normals)
    sigma_n = np.einsum("ei,ei->e", traction, normals)
    sigma_tau = traction - sigma_n[:, None] * normals
    return BoundaryStress(edges, normals, traction, sigma_n, sigma_tau)


# -- error measurement -------------------------------------------------------

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY7 = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
_W7 = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def h1_seminorm_error(mesh, u, exact_gradient):
    """``|| grad u_h - grad u ||_{L2}`` with a 7-point rule per triangle.

    ``exact_gradient(points)`` returns ``(N, 2, 2)`` with ``[:, i, j] = d u_i/d x_j``.
    """
    gh = displacement_gradients(mesh, u)
    p = mesh.vertices[mesh.triangles]
    points = np.einsum("qa,tai->tqi", _BARY7, p)
    ge = np.asarray(exact_gradient(points.reshape(-1, 2))).reshape(len(p), len(_W7), 2, 2)
    diff = ge - gh[:, None]
    sq = np.einsum("tqij,tqij->tq", diff, diff)
    return float(np.sqrt(np.sum(sq @ _W7 * mesh.areas)))


def solve_elasticity(mesh, params, f, tol=1e-10):
    """Pure Dirichlet-Neumann solve via :func:`solve_spd`; returns ``(n, 2)`` field."""
    K = assemble_stiffness(mesh, params)
    b = assemble_load(mesh, f)
    Kd, bd = apply_dirichlet(K, b, mesh)
    x, _ = solve_spd(Kd, bd, tol=tol)
    return x.reshape(-1, 2)

