"""Damped Gauss-Newton (Levenberg-Marquardt) solver for nonlinear least squares.

Minimizes 0.5 |r(z)|^2 with multiplicative damping: the regularized normal
equations (J'J + mu I) d = -J'r are solved each iteration; mu shrinks by 10
on accepted steps and grows by 10 on rejected ones, constrained to
[1e-12, 1e12].  Accepted steps strictly decrease the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

_MU_MIN = 1e-12
_MU_MAX = 1e12

FLAG_GRADIENT = "gradient"
FLAG_STEP = "step"
FLAG_MAX_ITER = "max_iter"


@dataclass
class NlsSpec:
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    gtol: float = 1e-8
    steptol: float = 1e-10
    max_iter: int = 500
    damping0: float = 1e-8
    # optional combined evaluation; used at trial points when provided
    residual_and_jacobian: Optional[Callable] = None


@dataclass
class NlsResult:
    x: np.ndarray
    resid_norm: float
    iterations: int
    flag: str
    cost_history: np.ndarray = field(default_factory=lambda: np.array([]))

    @property
    def converged(self) -> bool:
        return self.flag in (FLAG_GRADIENT, FLAG_STEP)


def _eval(spec: NlsSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if spec.residual_and_jacobian is not None:
        r, J = spec.residual_and_jacobian(x)
    else:
        r = spec.residual(x)
        J = spec.jacobian(x)
    return np.atleast_1d(np.asarray(r, float)), np.atleast_2d(np.asarray(J, float))


def solve_nls(spec: NlsSpec) -> NlsResult:
    x = np.atleast_1d(np.asarray(spec.x0, dtype=float)).copy()
    r, J = _eval(spec, x)
    if not np.all(np.isfinite(r)):
        raise ValueError("residual is not finite at the starting point")
    if not np.all(np.isfinite(J)):
        raise ValueError("jacobian is not finite at the starting point")
    cost = 0.5 * (r @ r)
    costs = [cost]
    mu = spec.damping0
    flag = FLAG_MAX_ITER
    iterations = 0
    eye = np.eye(x.shape[0])

    for iterations in range(1, spec.max_iter + 1):
        g = J.T @ r
        if np.max(np.abs(g)) <= spec.gtol:
            flag = FLAG_GRADIENT
            break
        JtJ = J.T @ J
        try:
            c = scipy.linalg.cho_factor(JtJ + mu * eye, lower=True)
            delta = scipy.linalg.cho_solve(c, -g)
        except scipy.linalg.LinAlgError:
            mu *= 10.0
            if mu > _MU_MAX:
                flag = FLAG_MAX_ITER
                break
            continue
        if np.linalg.norm(delta) <= spec.steptol * (np.linalg.norm(x) + spec.steptol):
            flag = FLAG_STEP
            break
        x_try = x + delta
        if spec.residual_and_jacobian is not None:
            r_try, J_try = _eval(spec, x_try)
        else:
            r_try = np.atleast_1d(np.asarray(spec.residual(x_try), float))
            J_try = None
        finite = np.all(np.isfinite(r_try))
        cost_try = 0.5 * (r_try @ r_try) if finite else np.inf
        if finite and cost_try < cost:
            x = x_try
            r = r_try
            cost = cost_try
            costs.append(cost)
            J = J_try if J_try is not None else np.atleast_2d(np.asarray(spec.jacobian(x), float))
            if not np.all(np.isfinite(J)):
                raise ValueError("jacobian is not finite at an accepted iterate")
            mu = max(mu / 10.0, _MU_MIN)
        else:
            mu *= 10.0
            if mu > _MU_MAX:
                flag = FLAG_MAX_ITER
                break

    return NlsResult(
        x=x,
        resid_norm=float(np.linalg.norm(r)),
        iterations=iterations,
        flag=flag,
        cost_history=np.array(costs),
    )
