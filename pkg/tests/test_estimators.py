import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sigshape.contact import solve_signorini
from sigshape.estimators import ShapeOptimizer, SignoriniSolver
from sigshape.fem import constant_load
from sigshape.mesh import volume


def test_solver_params_and_clone():
    est = SignoriniSolver(solver="qp", tol=1e-12)
    params = est.get_params()
    assert params["solver"] == "qp" and params["mu"] == 0.3846
    twin = clone(est).set_params(load=("constant", 1.0, 0.0))
    assert twin.load == ("constant", 1.0, 0.0)
    assert est.load == "exp"


def test_solver_fit_predict_score(disk0, params, load):
    est = SignoriniSolver(solver="qp", tol=1e-12)
    with pytest.raises(NotFittedError):
        est.predict()
    u = est.fit(disk0).predict()
    np.testing.assert_allclose(u, solve_signorini(disk0, params, load, "qp", tol=1e-12).u, atol=1e-14)
    assert est.score(disk0) == pytest.approx(-est.energy_)
    assert est.report_.max_comp_product < 1e-10


def test_solver_accepts_callable_load(disk0):
    est = SignoriniSolver(load=constant_load(0.0, 0.0)).fit(disk0)
    assert not est.u_.any()


def test_optimizer_fit_transform(disk0):
    opt = ShapeOptimizer(max_iters=3)
    mesh = opt.fit_transform(disk0)
    assert opt.n_iter_ == 3
    assert opt.stopped_by_ == "max_iters"
    assert opt.config_.target_volume == pytest.approx(volume(disk0))
    assert opt.transform() is mesh
    assert clone(opt).get_params() == opt.get_params()
