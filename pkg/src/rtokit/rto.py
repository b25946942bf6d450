"""Randomize-then-optimize proposals with independence Metropolis correction.

Proposals are optimization solutions of randomly perturbed least-squares
problems built around a reference point v_ref (the regularized misfit
minimizer).  Two constructions are provided:

* a full-space form using the orthonormal factor Q of the stacked Jacobian
  [I; grad f(v_ref)], solving argmin 0.5 |Q' H(v) - xi|^2, and
* a subspace form that splits v along the leading right singular vectors of
  grad f(v_ref): the complement of the data-informed subspace is filled with
  the prior draw directly and only an r-dimensional problem is solved.

In the subspace form, with D = diag(1 + lambda_i^2), the r-dimensional
residual is D^(-1/2) (z + Lambda Psi' f(v_perp + Phi z)) - Phi' xi.  Keeping
the standard-normal perturbation Phi' xi outside the D^(-1/2) scaling is
what makes the proposal exact for affine misfits (the chain then accepts
every draw); the importance weight below is the matching density ratio.

All weights are handled in log space.  Non-converged optimization runs and
singular Jacobian determinants yield log-weight -inf and are never accepted.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import seeding
from .leastsq import NlsSpec, solve_nls
from .whitening import WhitenedProblem


@dataclass
class SolverOptions:
    gtol: float = 1e-8
    steptol: float = 1e-10
    max_iter: int = 500


@dataclass(frozen=True)
class RtoSubspace:
    """Reduced SVD factors of the misfit Jacobian at the reference point."""

    v_ref: np.ndarray
    left: np.ndarray        # Psi, (m, r)
    singvals: np.ndarray    # Lambda, (r,), non-increasing
    right: np.ndarray       # Phi, (n, r)

    @property
    def rank(self) -> int:
        return self.singvals.shape[0]

    @cached_property
    def inv_sqrt_gram(self) -> np.ndarray:
        """(1 + lambda_i^2)^(-1/2), the whitening of the reduced Gauss-Newton Hessian."""
        return 1.0 / np.sqrt(1.0 + self.singvals ** 2)


@dataclass(frozen=True)
class FullspaceRto:
    """Thin-QR factor of the stacked Jacobian at the reference point."""

    v_ref: np.ndarray
    q_top: np.ndarray       # (n, n) block of Q acting on v
    q_bottom: np.ndarray    # (m, n) block of Q acting on f(v)


@dataclass
class ProposalRecord:
    xi: np.ndarray
    v: np.ndarray
    log_weight: float
    converged: bool


@dataclass
class ChainResult:
    states: np.ndarray          # (n_samples + 1, n) including the initial state
    accepted: np.ndarray        # (n_samples,) bool
    log_weights: np.ndarray     # (n_samples,) proposal log-weights
    acceptance_rate: float
    seconds: dict = field(default_factory=dict)

    @property
    def samples(self) -> np.ndarray:
        """Chain states after the initial point, one row per step."""
        return self.states[1:]


def find_reference(
    problem: WhitenedProblem,
    start: np.ndarray | None = None,
    options: SolverOptions | None = None,
) -> np.ndarray:
    """Minimize 0.5 |H(v)|^2 for the stacked map H(v) = [v; f(v)]."""
    opts = options or SolverOptions()
    if start is None:
        start = np.zeros(problem.n_params)
    spec = NlsSpec(
        residual=problem.stacked,
        jacobian=problem.stacked_jac,
        residual_and_jacobian=problem.stacked_f_jac,
        x0=np.asarray(start, dtype=float),
        gtol=opts.gtol,
        steptol=opts.steptol,
        max_iter=opts.max_iter,
    )
    result = solve_nls(spec)
    if not result.converged:
        raise RuntimeError("reference-point optimization hit the iteration limit")
    return result.x


def build_subspace(
    problem: WhitenedProblem, v_ref: np.ndarray, rank_threshold: float = 1e-10
) -> RtoSubspace:
    """Truncate the SVD of grad f(v_ref) at relative threshold on singular values."""
    if not 0.0 <= rank_threshold < 1.0:
        raise ValueError("rank_threshold must lie in [0, 1)")
    v_ref = np.asarray(v_ref, dtype=float)
    J = problem.misfit_jac(v_ref)
    U, S, Vt = np.linalg.svd(J, full_matrices=False)
    if S.size and S[0] > 0.0:
        r = int(np.sum(S > rank_threshold * S[0]))
    else:
        r = 0
    return RtoSubspace(v_ref=v_ref, left=U[:, :r], singvals=S[:r], right=Vt[:r].T)


def subspace_logabsdet(subspace: RtoSubspace, jac_phi: np.ndarray) -> float:
    """log |det(Q~' grad H(v))| through the rank-r reduction.

    Q~ is the orthonormal basis of the stacked Jacobian at v_ref implied by
    the subspace factors; the determinant collapses to the r x r matrix
    I_r + Lambda Psi' (grad f(v) Phi) scaled by det(Lambda^2+I)^{-1/2}.
    Returns -inf when the reduced matrix is singular.
    """
    if subspace.rank == 0:
        return 0.0
    lam = subspace.singvals
    reduced = np.eye(subspace.rank) + lam[:, None] * (subspace.left.T @ jac_phi)
    sign, logdet_reduced = np.linalg.slogdet(reduced)
    if sign == 0 or not np.isfinite(logdet_reduced):
        return -np.inf
    return float(np.sum(np.log(subspace.inv_sqrt_gram)) + logdet_reduced)


def _weight_from_parts(
    subspace: RtoSubspace, v: np.ndarray, f: np.ndarray, jac_phi: np.ndarray
) -> float:
    """log w from f(v) and grad f(v) Phi, using the rank-r determinant identity."""
    if subspace.rank == 0:
        return float(-0.5 * (f @ f))
    logdet = subspace_logabsdet(subspace, jac_phi)
    if not np.isfinite(logdet):
        return -np.inf
    scale = subspace.inv_sqrt_gram
    phi_v = subspace.right.T @ v
    t = scale * (phi_v + subspace.singvals * (subspace.left.T @ f))
    return float(-logdet - 0.5 * (f @ f + phi_v @ phi_v - t @ t))


def weight_log(subspace: RtoSubspace, problem: WhitenedProblem, v: np.ndarray) -> float:
    """Importance weight (log) of the subspace proposal density against the target."""
    v = np.asarray(v, dtype=float)
    if subspace.rank == 0:
        return float(-0.5 * (problem.misfit(v) @ problem.misfit(v)))
    f, jac_phi = problem.misfit_f_jac_dot(v, subspace.right)
    return _weight_from_parts(subspace, v, f, jac_phi)


def propose(
    subspace: RtoSubspace,
    problem: WhitenedProblem,
    xi: np.ndarray,
    options: SolverOptions | None = None,
) -> ProposalRecord:
    """Solve the perturbed subspace problem for one standard-normal draw xi."""
    opts = options or SolverOptions()
    xi = np.asarray(xi, dtype=float)
    n = problem.n_params
    if xi.shape != (n,):
        raise ValueError(f"xi must have shape ({n},)")
    if subspace.rank == 0:
        v = xi.copy()
        f = problem.misfit(v)
        return ProposalRecord(xi=xi, v=v, log_weight=float(-0.5 * (f @ f)), converged=True)

    phi = subspace.right
    lam = subspace.singvals
    scale = subspace.inv_sqrt_gram
    xi_r = phi.T @ xi
    v_perp = xi - phi @ xi_r

    def to_v(z):
        return v_perp + phi @ z

    def residual(z):
        f = problem.misfit(to_v(z))
        return scale * (z + lam * (subspace.left.T @ f)) - xi_r

    def jacobian(z):
        jac_phi = problem.misfit_jac_dot(to_v(z), phi)
        return scale[:, None] * (np.eye(subspace.rank) + lam[:, None] * (subspace.left.T @ jac_phi))

    def residual_and_jacobian(z):
        f, jac_phi = problem.misfit_f_jac_dot(to_v(z), phi)
        r = scale * (z + lam * (subspace.left.T @ f)) - xi_r
        J = scale[:, None] * (np.eye(subspace.rank) + lam[:, None] * (subspace.left.T @ jac_phi))
        return r, J

    spec = NlsSpec(
        residual=residual,
        jacobian=jacobian,
        residual_and_jacobian=residual_and_jacobian,
        x0=phi.T @ subspace.v_ref,
        gtol=opts.gtol,
        steptol=opts.steptol,
        max_iter=opts.max_iter,
    )
    result = solve_nls(spec)
    v = to_v(result.x)
    if not result.converged:
        return ProposalRecord(xi=xi, v=v, log_weight=-np.inf, converged=False)
    return ProposalRecord(xi=xi, v=v, log_weight=weight_log(subspace, problem, v), converged=True)


def build_fullspace(problem: WhitenedProblem, v_ref: np.ndarray) -> FullspaceRto:
    v_ref = np.asarray(v_ref, dtype=float)
    Q, _ = np.linalg.qr(problem.stacked_jac(v_ref))
    n = v_ref.shape[0]
    return FullspaceRto(v_ref=v_ref, q_top=Q[:n], q_bottom=Q[n:])


def weight_log_fullspace(fs: FullspaceRto, problem: WhitenedProblem, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    f, J = problem.misfit_f_jac(v)
    A = fs.q_top.T + fs.q_bottom.T @ J
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or not np.isfinite(logdet):
        return -np.inf
    qh = fs.q_top.T @ v + fs.q_bottom.T @ f
    return float(-logdet - 0.5 * (v @ v + f @ f) + 0.5 * (qh @ qh))


def propose_fullspace(
    fs: FullspaceRto,
    problem: WhitenedProblem,
    xi: np.ndarray,
    options: SolverOptions | None = None,
) -> ProposalRecord:
    """Solve the full-space perturbed problem argmin 0.5 |Q' H(v) - xi|^2."""
    opts = options or SolverOptions()
    xi = np.asarray(xi, dtype=float)
    n = problem.n_params
    if xi.shape != (n,):
        raise ValueError(f"xi must have shape ({n},)")

    def residual(v):
        return fs.q_top.T @ v + fs.q_bottom.T @ problem.misfit(v) - xi

    def jacobian(v):
        return fs.q_top.T + fs.q_bottom.T @ problem.misfit_jac(v)

    def residual_and_jacobian(v):
        f, J = problem.misfit_f_jac(v)
        return fs.q_top.T @ v + fs.q_bottom.T @ f - xi, fs.q_top.T + fs.q_bottom.T @ J

    spec = NlsSpec(
        residual=residual,
        jacobian=jacobian,
        residual_and_jacobian=residual_and_jacobian,
        x0=fs.v_ref.copy(),
        gtol=opts.gtol,
        steptol=opts.steptol,
        max_iter=opts.max_iter,
    )
    result = solve_nls(spec)
    if not result.converged:
        return ProposalRecord(xi=xi, v=result.x, log_weight=-np.inf, converged=False)
    return ProposalRecord(
        xi=xi, v=result.x, log_weight=weight_log_fullspace(fs, problem, result.x), converged=True
    )


def _propose_index_range(args):
    subspace, problem, master_seed, start, stop, options = args
    records = []
    for i in range(start, stop):
        xi = seeding.stream_rng(master_seed, "proposals", i).standard_normal(problem.n_params)
        records.append(propose(subspace, problem, xi, options))
    return records


def generate_proposals(
    problem: WhitenedProblem,
    subspace: RtoSubspace,
    n_proposals: int,
    master_seed: int,
    options: SolverOptions | None = None,
    workers: int = 1,
) -> list[ProposalRecord]:
    """Independent proposals, one per counter-based random stream.

    Results do not depend on ``workers``; the per-proposal streams are
    keyed by proposal index alone.
    """
    if n_proposals < 1:
        raise ValueError("n_proposals must be positive")
    if workers <= 1:
        return _propose_index_range((subspace, problem, master_seed, 0, n_proposals, options))
    bounds = np.linspace(0, n_proposals, workers + 1).astype(int)
    jobs = [
        (subspace, problem, master_seed, int(a), int(b), options)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    records: list[ProposalRecord] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk in pool.map(_propose_index_range, jobs):
            records.extend(chunk)
    return records


def mh_correct(
    proposals: list[ProposalRecord],
    v_ref: np.ndarray,
    logw_ref: float,
    rng: np.random.Generator,
) -> ChainResult:
    """Independence Metropolis-Hastings over precomputed proposals.

    The chain starts at v_ref with its log-weight; proposal i is accepted
    when u_i < w(prop_i) / w(state_{i-1}).  Non-converged proposals and
    -inf log-weights are always rejected.
    """
    if not proposals:
        raise ValueError("proposal list is empty")
    v_ref = np.asarray(v_ref, dtype=float)
    n = len(proposals)
    states = np.empty((n + 1, v_ref.shape[0]))
    states[0] = v_ref
    accepted = np.zeros(n, dtype=bool)
    log_weights = np.empty(n)
    uniforms = rng.random(n)
    current = v_ref
    current_logw = float(logw_ref)
    for i, rec in enumerate(proposals):
        log_weights[i] = rec.log_weight
        take = False
        if rec.converged and np.isfinite(rec.log_weight):
            delta = rec.log_weight - current_logw
            take = delta >= 0.0 or uniforms[i] < np.exp(delta)
        if take:
            current = rec.v
            current_logw = rec.log_weight
            accepted[i] = True
        states[i + 1] = current
    return ChainResult(
        states=states,
        accepted=accepted,
        log_weights=log_weights,
        acceptance_rate=float(accepted.mean()),
    )


def run_chain(
    problem: WhitenedProblem,
    n_samples: int,
    master_seed: int,
    rank_threshold: float = 1e-10,
    options: SolverOptions | None = None,
    workers: int = 1,
    v_ref: np.ndarray | None = None,
) -> tuple[ChainResult, RtoSubspace]:
    """Full sampling pass: reference point, subspace, proposals, correction."""
    t0 = time.perf_counter()
    if v_ref is None:
        v_ref = find_reference(problem, options=options)
    subspace = build_subspace(problem, v_ref, rank_threshold)
    proposals = generate_proposals(problem, subspace, n_samples, master_seed, options, workers)
    logw_ref = weight_log(subspace, problem, v_ref)
    chain = mh_correct(proposals, v_ref, logw_ref, seeding.stream_rng(master_seed, "mh-uniforms"))
    chain.seconds["online"] = time.perf_counter() - t0
    return chain, subspace
