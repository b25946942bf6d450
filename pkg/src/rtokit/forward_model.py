"""Parametric forward map u -> observed pressures, with exact sensitivities.

The Jacobian is computed by direct differentiation of the discrete system:
for each parameter, solve K dp = -(dK/du_i) p with the already-factorized
stiffness, then apply the observation operator.  The boundary loads do not
depend on the coefficient (the flux data is prescribed as the co-normal
flux itself), so no right-hand-side sensitivity term appears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import BoundaryConditions, Mesh, ObservationOperator, _K_REF


@dataclass(frozen=True)
class ForwardProblem:
    mesh: Mesh
    parameterization: object
    source: np.ndarray
    bcs: BoundaryConditions
    obs: ObservationOperator
    noise_std: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    @property
    def n_params(self) -> int:
        return self.parameterization.n_params

    @property
    def n_observations(self) -> int:
        return self.obs.n_observations


def _check_u(problem: ForwardProblem, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (problem.n_params,):
        raise ValueError(f"expected parameter vector of length {problem.n_params}")
    if not np.all(np.isfinite(u)):
        raise ValueError("parameter vector must be finite")
    return u


def solve_pressure(problem: ForwardProblem, u: np.ndarray) -> np.ndarray:
    u = _check_u(problem, u)
    system = fem.factorize(problem.mesh, problem.parameterization.cell_kappa(u), problem.bcs)
    return system.solve_load(fem.load_vector(problem.mesh, problem.source, problem.bcs))


def forward(problem: ForwardProblem, u: np.ndarray) -> np.ndarray:
    return problem.obs.matrix @ solve_pressure(problem, u)


def _stiffness_action_grad(mesh: Mesh, p: np.ndarray, coeff_grads: np.ndarray) -> np.ndarray:
    """Columns (dK/du_i) p given per-cell coefficient derivatives (C, k)."""
    q = p[mesh.cells] @ _K_REF  # (C, 4), K_REF is symmetric
    contrib = q[:, :, None] * coeff_grads[:, None, :]
    out = np.zeros((mesh.n_nodes, coeff_grads.shape[1]))
    np.add.at(out, mesh.cells.ravel(), contrib.reshape(-1, coeff_grads.shape[1]))
    return out


def forward_with_jacobian(problem: ForwardProblem, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = _check_u(problem, u)
    param = problem.parameterization
    system = fem.factorize(problem.mesh, param.cell_kappa(u), problem.bcs)
    p = system.solve_load(fem.load_vector(problem.mesh, problem.source, problem.bcs))
    sens_rhs = _stiffness_action_grad(problem.mesh, p, param.cell_kappa_grad(u))
    dp = system.solve_rhs(-sens_rhs)
    return problem.obs.matrix @ p, problem.obs.matrix @ dp


def jacobian(problem: ForwardProblem, u: np.ndarray) -> np.ndarray:
    return forward_with_jacobian(problem, u)[1]


def forward_with_jacobian_dot(
    problem: ForwardProblem, u: np.ndarray, directions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Forward value and Jacobian-times-directions, sharing one factorization."""
    u = _check_u(problem, u)
    directions = np.asarray(directions, dtype=float)
    if directions.ndim != 2 or directions.shape[0] != problem.n_params:
        raise ValueError("directions must have shape (n_params, k)")
    param = problem.parameterization
    system = fem.factorize(problem.mesh, param.cell_kappa(u), problem.bcs)
    p = system.solve_load(fem.load_vector(problem.mesh, problem.source, problem.bcs))
    sens_rhs = _stiffness_action_grad(problem.mesh, p, param.cell_kappa_grad_dot(u, directions))
    dp = system.solve_rhs(-sens_rhs)
    return problem.obs.matrix @ p, problem.obs.matrix @ dp


def jacobian_dot(problem: ForwardProblem, u: np.ndarray, directions: np.ndarray) -> np.ndarray:
    return forward_with_jacobian_dot(problem, u, directions)[1]
