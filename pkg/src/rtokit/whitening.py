"""Whitened Bayesian formulation shared by the samplers.

Given Gaussian prior N(u_pr, G_pr) and noise N(0, G_obs) with lower Cholesky
factors S_pr and S_obs, the whitened unknown is v = S_pr^-1 (u - u_pr) and
the scaled misfit is f(v) = S_obs^-1 (F(S_pr v + u_pr) - d).  The posterior
is proportional to exp(-0.5 |H(v)|^2) with the stacked map H(v) = [v; f(v)].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import forward_model as fwd


class MisfitEvaluator:
    """Interface for the whitened misfit f(v) and its Jacobian.

    Subclasses override ``f`` and ``jac``; the combined and directional
    variants default to compositions but may be overridden when a cheaper
    shared computation exists.
    """

    def f(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def f_jac(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.f(v), self.jac(v)

    def jac_dot(self, v: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return self.jac(v) @ directions

    def f_jac_dot(self, v: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f, J = self.f_jac(v)
        return f, J @ directions


class LinearMisfit(MisfitEvaluator):
    """f(v) = A v - b, already in whitened coordinates."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ValueError("A must be (m, n) and b must be (m,)")

    def f(self, v):
        return self.A @ v - self.b

    def jac(self, v):
        return self.A

    def jac_dot(self, v, directions):
        return self.A @ directions


class FemMisfit(MisfitEvaluator):
    """Whitened misfit backed by the finite-element forward map."""

    def __init__(self, problem: fwd.ForwardProblem, s_pr, u_pr, s_obs, data):
        self.problem = problem
        self.s_pr = np.asarray(s_pr, dtype=float)
        self.u_pr = np.asarray(u_pr, dtype=float)
        self.s_obs = np.asarray(s_obs, dtype=float)
        self.data = np.asarray(data, dtype=float)

    def _to_u(self, v):
        return self.u_pr + self.s_pr @ np.asarray(v, dtype=float)

    def _scale_obs(self, residual):
        return solve_triangular(self.s_obs, residual, lower=True)

    def f(self, v):
        return self._scale_obs(fwd.forward(self.problem, self._to_u(v)) - self.data)

    def jac(self, v):
        J = fwd.jacobian(self.problem, self._to_u(v))
        return self._scale_obs(J @ self.s_pr)

    def f_jac(self, v):
        y, J = fwd.forward_with_jacobian(self.problem, self._to_u(v))
        return self._scale_obs(y - self.data), self._scale_obs(J @ self.s_pr)

    def jac_dot(self, v, directions):
        JT = fwd.jacobian_dot(self.problem, self._to_u(v), self.s_pr @ directions)
        return self._scale_obs(JT)

    def f_jac_dot(self, v, directions):
        y, JT = fwd.forward_with_jacobian_dot(self.problem, self._to_u(v), self.s_pr @ directions)
        return self._scale_obs(y - self.data), self._scale_obs(JT)


class SurrogateMisfit(MisfitEvaluator):
    """Whitened misfit evaluated by a trained network instead of the solver.

    The network maps v directly to f(v); gradients come from its exact
    input Jacobian.
    """

    def __init__(self, net):
        self.net = net

    def f(self, v):
        return self.net.forward(np.asarray(v, dtype=float))

    def jac(self, v):
        return self.net.input_jacobian(np.asarray(v, dtype=float))

    def f_jac(self, v):
        return self.net.forward_with_input_jacobian(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class WhitenedProblem:
    evaluator: MisfitEvaluator
    s_pr: np.ndarray
    u_pr: np.ndarray
    s_obs: np.ndarray
    data: np.ndarray

    @classmethod
    def from_forward(cls, problem: fwd.ForwardProblem, data: np.ndarray) -> "WhitenedProblem":
        data = np.asarray(data, dtype=float)
        if data.shape != (problem.n_observations,):
            raise ValueError("data length does not match the observation operator")
        noise_std = np.asarray(problem.noise_std, dtype=float)
        if noise_std.shape == ():
            noise_std = np.full(problem.n_observations, float(noise_std))
        if np.any(noise_std <= 0.0):
            raise ValueError("noise standard deviations must be positive")
        s_pr = np.linalg.cholesky(np.asarray(problem.prior_cov, dtype=float))
        s_obs = np.diag(noise_std)
        evaluator = FemMisfit(problem, s_pr, problem.prior_mean, s_obs, data)
        return cls(evaluator=evaluator, s_pr=s_pr, u_pr=np.asarray(problem.prior_mean, float), s_obs=s_obs, data=data)

    @classmethod
    def standard(cls, evaluator: MisfitEvaluator, n: int, m: int) -> "WhitenedProblem":
        """Identity prior/noise covariances; u and v coincide."""
        return cls(
            evaluator=evaluator,
            s_pr=np.eye(n),
            u_pr=np.zeros(n),
            s_obs=np.eye(m),
            data=np.zeros(m),
        )

    def with_evaluator(self, evaluator: MisfitEvaluator) -> "WhitenedProblem":
        return replace(self, evaluator=evaluator)

    @property
    def n_params(self) -> int:
        return self.u_pr.shape[0]

    @property
    def n_observations(self) -> int:
        return self.data.shape[0]

    def whiten(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return solve_triangular(self.s_pr, u - self.u_pr, lower=True)

    def unwhiten(self, v: np.ndarray) -> np.ndarray:
        return self.u_pr + self.s_pr @ np.asarray(v, dtype=float)

    def misfit(self, v: np.ndarray) -> np.ndarray:
        return self.evaluator.f(v)

    def misfit_jac(self, v: np.ndarray) -> np.ndarray:
        return self.evaluator.jac(v)

    def misfit_f_jac(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.evaluator.f_jac(v)

    def misfit_jac_dot(self, v: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return self.evaluator.jac_dot(v, directions)

    def misfit_f_jac_dot(self, v: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.evaluator.f_jac_dot(v, directions)

    def log_target(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        f = self.misfit(v)
        return -0.5 * (v @ v + f @ f)

    def stacked(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.concatenate([v, self.misfit(v)])

    def stacked_jac(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.vstack([np.eye(v.shape[0]), self.misfit_jac(v)])

    def stacked_f_jac(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        f, J = self.misfit_f_jac(v)
        return np.concatenate([v, f]), np.vstack([np.eye(v.shape[0]), J])
