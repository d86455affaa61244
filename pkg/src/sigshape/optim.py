"""Volume-constrained shape optimization driver.

Plain gradient descent on the Lagrangian ``J(Omega) + ell (|Omega| - V0)``:
each iteration solves the contact problem, builds the Riesz representative
of the Lagrangian gradient, moves the mesh, and updates ``ell`` by Uzawa.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .contact import solve_signorini
from .exceptions import SigshapeError, StepCollapseError, TangledMeshError
from .fem import ElasticSystem
from .mesh import compute_normals, deform_mesh, mesh_quality, signorini_arcs, volume
from .shape import descent_direction, energy, shape_gradient_boundary, volume_gradient_form

logger = logging.getLogger(__name__)

SOLVERS = ("nitsche", "qp")


@dataclass
class OptimConfig:
    step_size: float = 0.005
    rho_uzawa: float = None
    target_volume: float = math.pi
    max_iters: int = 400
    check_period: int = 20
    stop_tol: float = 5e-3
    solver: str = "nitsche"
    solver_tol: float = 1e-10
    nitsche_gamma0: float = None
    min_angle: float = 5.0
    max_halvings: int = 10

    def __post_init__(self):
        for name in ("step_size", "target_volume", "stop_tol", "solver_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.rho_uzawa is not None and not self.rho_uzawa > 0:
            raise ValueError("rho_uzawa must be > 0")
        if self.nitsche_gamma0 is not None and not self.nitsche_gamma0 > 0:
            raise ValueError("nitsche_gamma0 must be > 0")
        if int(self.check_period) < 1 or int(self.max_iters) < 1:
            raise ValueError("check_period and max_iters must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.min_angle < 0 or self.max_halvings < 0:
            raise ValueError("min_angle and max_halvings must be >= 0")

    def solver_kwargs(self):
        kw = {"tol": self.solver_tol}
        if self.solver == "nitsche" and self.nitsche_gamma0 is not None:
            kw["gamma0"] = self.nitsche_gamma0
        return kw


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    J: float
    volume: float
    ell: float
    step: float
    min_angle: float
    active_count: int


HISTORY_COLUMNS = tuple(f.name for f in fields(IterationRecord))


@dataclass
class OptimHistory:
    records: list = field(default_factory=list)
    stopped_by: str = None
    final_direction_norm: float = None

    def append(self, record):
        self.records.append(record)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)

    def as_rows(self):
        return [asdict(r) for r in self.records]


def uzawa_update(ell, vol, target, rho):
    """Multiplier step for the equality constraint ``|Omega| = target``."""
    return float(ell + rho * (vol - target))


def lagrangian_gradient_form(mesh, params, f, u0, ell):
    """``theta -> J'(theta) + ell * int theta . n`` as one assembled form."""
    form = shape_gradient_boundary(mesh, params, f, u0)
    if ell:
        vol = volume_gradient_form(mesh).coefficients.copy()
        vol[mesh.dirichlet_dofs] = 0.0
        form = type(form)(form.coefficients + ell * vol)
    return form


def _stop_rule(J, period, tol):
    k = len(J) - 1
    if k == 0 or k % period:
        return False
    prev = J[k - period]
    return abs(J[k] - prev) <= tol * abs(prev)


def _trial_step(mesh, theta0, step, config):
    for _ in range(config.max_halvings + 1):
        try:
            moved = deform_mesh(mesh, theta0, step, min_angle_warning=0.0)
            quality = mesh_quality(moved)
            if quality.min_angle >= config.min_angle:
                return moved, step, quality
            logger.info("min angle %.2f below floor, halving step", quality.min_angle)
        except TangledMeshError:
            logger.info("step %.3e tangles the mesh, halving", step)
        step *= 0.5
    raise StepCollapseError(f"no acceptable step after {config.max_halvings} halvings", step=step)


def optimize(mesh0, params, f, config=None, callback=None):
    """Run the descent loop; returns ``(final_mesh, history)``.

    ``callback(iteration, mesh, solution)`` is invoked once per solved
    iterate (including the final one). The loop stops when
    ``|J_{pk} - J_{p(k-1)}| <= stop_tol |J_{p(k-1)}|`` for the check period
    ``p``, or after ``max_iters`` iterations.
    """
    config = OptimConfig() if config is None else config
    mesh = mesh0
    ell = 0.0
    rho = config.rho_uzawa
    history = OptimHistory()
    J_values = []
    for it in range(config.max_iters):
        system = ElasticSystem(mesh, params)
        try:
            sol = solve_signorini(mesh, params, f, config.solver, system=system, **config.solver_kwargs())
        except SigshapeError as exc:
            exc.details.setdefault("iteration", it)
            raise
        J = energy(mesh, params, f, sol.u, system=system)
        vol = volume(mesh)
        if rho is None:
            # the area moves by O(step) per iteration, hence the 1/step scaling
            rho = 0.5 * abs(J) / (config.target_volume * config.step_size) if J else 1.0
        J_values.append(J)
        if callback is not None:
            callback(it, mesh, sol)
        form = lagrangian_gradient_form(mesh, params, f, sol.u, ell)
        direction = descent_direction(mesh, params, form, system=system)
        stop = _stop_rule(J_values, config.check_period, config.stop_tol)
        if stop or it == config.max_iters - 1:
            history.append(IterationRecord(it, J, vol, ell, 0.0, mesh_quality(mesh).min_angle, sol.active_count))
            history.stopped_by = "stop_rule" if stop else "max_iters"
            history.final_direction_norm = math.sqrt(max(direction.norm_squared, 0.0))
            return mesh, history
        new_mesh, used, _ = _trial_step(mesh, direction.theta0, config.step_size, config)
        history.append(
            IterationRecord(it, J, vol, ell, used, mesh_quality(mesh).min_angle, sol.active_count)
        )
        mesh = new_mesh
        ell = uzawa_update(ell, volume(mesh), config.target_volume, rho)


def arc_centroid_shifts(mesh0, mesh):
    """Signed normal displacement of each contact arc's vertex centroid.

    Returns ``(centroids0, shifts)`` in :func:`~sigshape.mesh.signorini_arcs`
    order; a positive shift means the arc moved outward.
    """
    bn = compute_normals(mesh0)
    normals = np.zeros((mesh0.n_vertices, 2))
    normals[bn.contact_vertices] = bn.vertex_normals
    centroids, shifts = [], []
    for arc in signorini_arcs(mesh0):
        n = normals[arc].mean(axis=0)
        n /= np.linalg.norm(n)
        c0 = mesh0.vertices[arc].mean(axis=0)
        centroids.append(c0)
        shifts.append(float((mesh.vertices[arc].mean(axis=0) - c0) @ n))
    return np.array(centroids), np.array(shifts)
