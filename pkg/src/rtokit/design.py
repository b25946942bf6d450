"""Training-point design for the surrogate: local Gaussian vs prior draws.

The goal-oriented design linearizes the whitened misfit at the reference
point, f(v) ~ A v - b, and samples the Gaussian that this linear model
induces: covariance (A'A + I)^{-1}, expressed through the SVD of A so no
dense inverse is ever formed.  The baseline design draws from the standard
normal prior instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mlp import TrainingSet
from .rto import RtoSubspace, build_subspace
from .whitening import WhitenedProblem

logger = logging.getLogger(__name__)


def linearize(problem: WhitenedProblem, v_ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First-order model f(v) ~ A v - b around v_ref: A = grad f, b = A v_ref - f(v_ref)."""
    v_ref = np.asarray(v_ref, dtype=float)
    f, A = problem.misfit_f_jac(v_ref)
    return A, A @ v_ref - f


@dataclass(frozen=True)
class LocalGaussian:
    """Gaussian with covariance Phi (1+Lambda^2)^{-1} Phi' + (I - Phi Phi')."""

    center: np.ndarray
    right: np.ndarray       # Phi, (n, r)
    singvals: np.ndarray    # Lambda, (r,)

    @classmethod
    def from_jacobian(
        cls, A: np.ndarray, center: np.ndarray, rank_threshold: float = 1e-10
    ) -> "LocalGaussian":
        A = np.asarray(A, dtype=float)
        _, S, Vt = np.linalg.svd(A, full_matrices=False)
        if S.size and S[0] > 0.0:
            r = int(np.sum(S > rank_threshold * S[0]))
        else:
            r = 0
        return cls(center=np.asarray(center, dtype=float), right=Vt[:r].T, singvals=S[:r])

    @classmethod
    def from_subspace(cls, subspace: RtoSubspace) -> "LocalGaussian":
        return cls(center=subspace.v_ref, right=subspace.right, singvals=subspace.singvals)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def rank(self) -> int:
        return self.singvals.shape[0]

    @cached_property
    def _informed_std(self) -> np.ndarray:
        return 1.0 / np.sqrt(1.0 + self.singvals ** 2)

    def covariance(self) -> np.ndarray:
        """Dense covariance, for verification at small dimension."""
        eye = np.eye(self.dim)
        phi = self.right
        return phi @ np.diag(self._informed_std ** 2) @ phi.T + (eye - phi @ phi.T)


def covariance_identity_check(A: np.ndarray, rank_threshold: float = 0.0) -> float:
    """Max-abs deviation between the SVD form of (A'A + I)^{-1} and a dense inverse."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    lg = LocalGaussian.from_jacobian(A, np.zeros(n), rank_threshold)
    dense = np.linalg.inv(A.T @ A + np.eye(n))
    return float(np.max(np.abs(lg.covariance() - dense)))


def sample_local(lg: LocalGaussian, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Draws centered at lg.center with the reduced-rank posterior covariance."""
    if n_points < 1:
        raise ValueError("n_points must be positive")
    z_full = rng.standard_normal((n_points, lg.dim))
    out = lg.center[None, :] + z_full - (z_full @ lg.right) @ lg.right.T
    if lg.rank:
        z_r = rng.standard_normal((n_points, lg.rank))
        out += (z_r * lg._informed_std) @ lg.right.T
    return out


def sample_prior(n_points: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n_points < 1 or dim < 1:
        raise ValueError("n_points and dim must be positive")
    return rng.standard_normal((n_points, dim))


def build_training_set(problem: WhitenedProblem, inputs: np.ndarray) -> TrainingSet:
    """Evaluate the true whitened misfit at each input; failures are dropped."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    kept_inputs = []
    targets = []
    failures = 0
    for v in inputs:
        try:
            y = problem.misfit(v)
        except Exception:
            failures += 1
            continue
        if not np.all(np.isfinite(y)):
            failures += 1
            continue
        kept_inputs.append(v)
        targets.append(y)
    if failures:
        logger.warning("dropped %d of %d training points (forward-model failures)", failures, inputs.shape[0])
    if not kept_inputs:
        raise RuntimeError("all training-point evaluations failed")
    return TrainingSet(
        inputs=np.array(kept_inputs),
        targets=np.array(targets),
        n_forward_evals=len(kept_inputs),
    )


def save_training_set(ts: TrainingSet, path) -> None:
    n_in = ts.inputs.shape[1]
    n_out = ts.targets.shape[1]
    header = ",".join([f"in{i+1}" for i in range(n_in)] + [f"out{j+1}" for j in range(n_out)])
    table = np.hstack([ts.inputs, ts.targets])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def load_training_set(path) -> TrainingSet:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    n_in = sum(1 for name in header if name.startswith("in"))
    n_out = len(header) - n_in
    if n_in < 1 or n_out < 1:
        raise ValueError("training-set file header must list in* and out* columns")
    table = np.array(rows)
    if table.shape[1] != len(header):
        raise ValueError("training-set file rows do not match the header")
    return TrainingSet(inputs=table[:, :n_in], targets=table[:, n_in:], n_forward_evals=table.shape[0])


def design_points(
    problem: WhitenedProblem,
    v_ref: np.ndarray,
    n_points: int,
    rng: np.random.Generator,
    goal_oriented: bool = True,
    rank_threshold: float = 1e-10,
) -> np.ndarray:
    """Convenience entry: goal-oriented local-Gaussian or prior design."""
    if goal_oriented:
        subspace = build_subspace(problem, v_ref, rank_threshold)
        return sample_local(LocalGaussian.from_subspace(subspace), n_points, rng)
    return sample_prior(n_points, problem.n_params, rng)
