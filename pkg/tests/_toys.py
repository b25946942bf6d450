"""Small analytic problems shared across the test modules.

Everything here has a closed-form posterior or an exact Jacobian, so tests
can compare the sampler machinery against independent references.
"""

import numpy as np

from rtokit.whitening import MisfitEvaluator, WhitenedProblem


def linear_problem(n=6, m=10, seed=11, scale=1.0):
    """Whitened linear-Gaussian problem f(v) = Av - b with known posterior."""
    rng = np.random.default_rng(seed)
    A = scale * rng.standard_normal((m, n)) / np.sqrt(n)
    b = rng.standard_normal(m)
    wp = WhitenedProblem.standard(LinearToy(A, b), n, m)
    return wp, A, b


class LinearToy(MisfitEvaluator):
    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def f(self, v):
        return self.A @ v - self.b

    def jac(self, v):
        return self.A


def analytic_posterior(A, b):
    """Mean and covariance of the Gaussian with density exp(-0.5(|v|^2+|Av-b|^2))."""
    n = A.shape[1]
    cov = np.linalg.inv(A.T @ A + np.eye(n))
    return cov @ (A.T @ b), cov


class ZeroMisfit(MisfitEvaluator):
    """f identically zero; the target is the standard-normal prior."""

    def __init__(self, n, m):
        self.n = n
        self.m = m

    def f(self, v):
        return np.zeros(self.m)

    def jac(self, v):
        return np.zeros((self.m, self.n))


class CubicMisfit(MisfitEvaluator):
    """One-dimensional f(v) = v^3/3 - d with exact derivative v^2."""

    def __init__(self, d=1.0):
        self.d = float(d)

    def f(self, v):
        v = np.atleast_1d(v)
        return np.array([v[0] ** 3 / 3.0 - self.d])

    def jac(self, v):
        v = np.atleast_1d(v)
        return np.array([[v[0] ** 2]])


class QuarticToy(MisfitEvaluator):
    """f(v) = Av + alpha (v.v) c - b: mildly nonlinear with exact Jacobian."""

    def __init__(self, n=4, m=6, alpha=0.1, seed=5):
        rng = np.random.default_rng(seed)
        self.A = rng.standard_normal((m, n)) / np.sqrt(n)
        self.c = rng.standard_normal(m)
        self.b = rng.standard_normal(m)
        self.alpha = float(alpha)

    def f(self, v):
        v = np.asarray(v, dtype=float)
        return self.A @ v + self.alpha * (v @ v) * self.c - self.b

    def jac(self, v):
        v = np.asarray(v, dtype=float)
        return self.A + 2.0 * self.alpha * np.outer(self.c, v)


def quartic_problem(n=4, m=6, alpha=0.1, seed=5):
    toy = QuarticToy(n=n, m=m, alpha=alpha, seed=seed)
    return WhitenedProblem.standard(toy, n, m), toy
