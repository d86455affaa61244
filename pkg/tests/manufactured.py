"""Manufactured displacement on the unit square, differentiated with sympy."""

import numpy as np
import sympy as sp

from sigshape.fem import VectorLoad

x, y = sp.symbols("x y")
EXACT = (sp.sin(sp.pi * x) * sp.sin(sp.pi * y), x * y * (1 - x) * (1 - y))


def _stress(mu, lam):
    grad = sp.Matrix([[sp.diff(c, v) for v in (x, y)] for c in EXACT])
    eps = (grad + grad.T) / 2
    return 2 * mu * eps + lam * eps.trace() * sp.eye(2)


def manufactured_problem(mu, lam):
    """``(load, exact_gradient)`` for the displacement ``EXACT`` vanishing on the square's edges."""
    sigma = _stress(sp.Rational(str(mu)), sp.Rational(str(lam)))
    body = [-(sp.diff(sigma[i, 0], x) + sp.diff(sigma[i, 1], y)) for i in range(2)]
    fx, fy = (sp.lambdify((x, y), sp.simplify(c), "numpy") for c in body)
    grads = [[sp.lambdify((x, y), sp.diff(c, v), "numpy") for v in (x, y)] for c in EXACT]

    def load(p):
        out = np.empty_like(p)
        out[:, 0] = fx(p[:, 0], p[:, 1])
        out[:, 1] = fy(p[:, 0], p[:, 1])
        return out

    def exact_gradient(p):
        g = np.empty((len(p), 2, 2))
        for i in range(2):
            for j in range(2):
                g[:, i, j] = grads[i][j](p[:, 0], p[:, 1])
        return g

    return VectorLoad(load, name="manufactured"), exact_gradient
