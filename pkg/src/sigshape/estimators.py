"""scikit-learn style wrappers around the contact solver and the optimizer.

The "data" passed to ``fit`` is a :class:`~sigshape.mesh.Mesh2D` rather than
an ``(X, y)`` pair; hyper-parameters follow the usual ``get_params`` /
``set_params`` conventions so runs can be cloned and compared.
"""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .contact import complementarity_report, solve_signorini
from .fem import ElasticityParams, ElasticSystem, make_load
from .optim import OptimConfig, optimize
from .shape import energy


def _load(load):
    if callable(load):
        return load
    if isinstance(load, str):
        return make_load(load)
    name, *args = load
    return make_load(name, *args)


class SignoriniSolver(BaseEstimator):
    """Solve the contact problem on a mesh.

    ``load`` is a load name (``"exp"``), a ``(name, *args)`` tuple or a
    :class:`~sigshape.fem.VectorLoad`.
    """

    def __init__(self, mu=0.3846, lam=0.5769, load="exp", solver="nitsche", gamma0=None, tol=1e-10):
        self.mu = mu
        self.lam = lam
        self.load = load
        self.solver = solver
        self.gamma0 = gamma0
        self.tol = tol

    def _solver_kwargs(self):
        kw = {"tol": self.tol}
        if self.solver == "nitsche" and self.gamma0 is not None:
            kw["gamma0"] = self.gamma0
        return kw

    def fit(self, mesh, y=None):
        params = ElasticityParams(self.mu, self.lam)
        f = _load(self.load)
        system = ElasticSystem(mesh, params)
        self.solution_ = solve_signorini(mesh, params, f, self.solver, system=system, **self._solver_kwargs())
        self.mesh_ = mesh
        self.u_ = self.solution_.u
        self.energy_ = energy(mesh, params, f, self.u_, system=system)
        self.report_ = complementarity_report(mesh, params, self.solution_)
        return self

    def predict(self, mesh=None):
        """Nodal displacement ``(n, 2)``; refits when a different mesh is given."""
        if mesh is not None and mesh is not getattr(self, "mesh_", None):
            self.fit(mesh)
        check_is_fitted(self, "u_")
        return self.u_

    def score(self, mesh, y=None):
        """Negative energy, so that higher is better."""
        return -self.fit(mesh).energy_


class ShapeOptimizer(BaseEstimator):
    """Volume-constrained descent on the contact energy.

    Every :class:`~sigshape.optim.OptimConfig` field is a constructor
    argument; ``transform`` returns the optimized mesh.
    """

    def __init__(
        self,
        mu=0.3846,
        lam=0.5769,
        load="exp",
        step_size=0.005,
        rho_uzawa=None,
        target_volume=None,
        max_iters=400,
        check_period=20,
        stop_tol=5e-3,
        solver="nitsche",
        solver_tol=1e-10,
        nitsche_gamma0=None,
        min_angle=5.0,
        max_halvings=10,
    ):
        self.mu = mu
        self.lam = lam
        self.load = load
        self.step_size = step_size
        self.rho_uzawa = rho_uzawa
        self.target_volume = target_volume
        self.max_iters = max_iters
        self.check_period = check_period
        self.stop_tol = stop_tol
        self.solver = solver
        self.solver_tol = solver_tol
        self.nitsche_gamma0 = nitsche_gamma0
        self.min_angle = min_angle
        self.max_halvings = max_halvings

    def _config(self, mesh):
        from .mesh import volume

        target = volume(mesh) if self.target_volume is None else self.target_volume
        return OptimConfig(
            step_size=self.step_size,
            rho_uzawa=self.rho_uzawa,
            target_volume=target,
            max_iters=self.max_iters,
            check_period=self.check_period,
            stop_tol=self.stop_tol,
            solver=self.solver,
            solver_tol=self.solver_tol,
            nitsche_gamma0=self.nitsche_gamma0,
            min_angle=self.min_angle,
            max_halvings=self.max_halvings,
        )

    def fit(self, mesh, y=None, callback=None):
        params = ElasticityParams(self.mu, self.lam)
        self.config_ = self._config(mesh)
        self.mesh_, self.history_ = optimize(mesh, params, _load(self.load), self.config_, callback=callback)
        self.stopped_by_ = self.history_.stopped_by
        self.n_iter_ = len(self.history_)
        return self

    def transform(self, mesh=None):
        if mesh is not None:
            self.fit(mesh)
        check_is_fitted(self, "mesh_")
        return self.mesh_

    def fit_transform(self, mesh, y=None, **fit_params):
        return self.fit(mesh, **fit_params).mesh_
