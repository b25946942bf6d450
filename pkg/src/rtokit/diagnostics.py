"""Chain quality and accuracy metrics: ESS, error norms, field summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import forward_model as fwd

DIAGNOSTIC_COLUMNS = (
    "method",
    "N_train",
    "AP",
    "seconds_offline",
    "seconds_online",
    "minESS",
    "medESS",
    "maxESS",
    "minESS_per_s",
    "REM",
    "REC",
)


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation estimates rho(1..max_lag) via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if x.ndim != 1 or n < 10:
        raise ValueError("need a 1-d chain of at least 10 states")
    if not 1 <= max_lag < n:
        raise ValueError("max_lag must lie in [1, n-1]")
    centered = x - x.mean()
    var = centered @ centered
    if var <= 0.0 or not np.isfinite(var):
        raise ValueError("chain is constant; autocorrelation is undefined")
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[: max_lag + 1].real
    return acov[1:] / var


def ess(x: np.ndarray) -> float:
    """Effective sample size with the initial-positive-sequence truncation.

    The integrated autocorrelation sum runs over consecutive lag pairs
    rho(2t) + rho(2t+1) and stops at the first non-positive pair, which
    keeps the estimate stable without a tuned lag window.  The result is
    clamped to (0, n].
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rho = np.concatenate([[1.0], autocorrelation(x, n - 1)])
    pair_sum = 0.0
    t = 0
    while 2 * t + 1 < rho.shape[0]:
        gamma = rho[2 * t] + rho[2 * t + 1]
        if gamma <= 0.0:
            break
        pair_sum += gamma
        t += 1
    tau = max(2.0 * pair_sum - 1.0, 1e-12)
    return float(min(n / tau, float(n)))


@dataclass
class EssReport:
    per_parameter: np.ndarray
    seconds: float

    @property
    def minimum(self) -> float:
        return float(np.min(self.per_parameter))

    @property
    def median(self) -> float:
        return float(np.median(self.per_parameter))

    @property
    def maximum(self) -> float:
        return float(np.max(self.per_parameter))

    @property
    def min_per_second(self) -> float:
        return self.minimum / self.seconds if self.seconds > 0 else np.nan


def ess_report(samples: np.ndarray, seconds: float) -> EssReport:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    return EssReport(
        per_parameter=np.array([ess(samples[:, j]) for j in range(samples.shape[1])]),
        seconds=float(seconds),
    )


@dataclass
class ErrorReport:
    rem: float  # relative max-norm error of the posterior mean
    rec: float  # relative Frobenius error of the posterior covariance


def error_metrics(samples: np.ndarray, reference: np.ndarray) -> ErrorReport:
    """Mean/covariance discrepancies between two sample sets.

    Both sets must be in the same natural (unwhitened) parameter
    coordinates; the reference set defines the normalization.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if samples.shape[1] != reference.shape[1]:
        raise ValueError("sample sets have different parameter dimension")
    if samples.shape[0] < 2 or reference.shape[0] < 2:
        raise ValueError("need at least two samples per set")
    mean_s = samples.mean(axis=0)
    mean_r = reference.mean(axis=0)
    denom_mean = np.max(np.abs(mean_r))
    if denom_mean == 0.0:
        raise ValueError("reference mean is zero; relative error is undefined")
    cov_s = np.cov(samples, rowvar=False)
    cov_r = np.cov(reference, rowvar=False)
    denom_cov = np.linalg.norm(cov_r)
    if denom_cov == 0.0:
        raise ValueError("reference covariance is zero; relative error is undefined")
    return ErrorReport(
        rem=float(np.max(np.abs(mean_s - mean_r)) / denom_mean),
        rec=float(np.linalg.norm(cov_s - cov_r) / denom_cov),
    )


def field_summaries(
    samples: np.ndarray,
    whitened,
    problem: fwd.ForwardProblem,
    quantity: str = "kappa",
) -> tuple[np.ndarray, np.ndarray]:
    """Node-wise mean and standard deviation of the pushed-forward field.

    ``quantity`` selects the permeability ("kappa") or the pressure
    ("pressure"); the latter solves the PDE once per sample.  Two passes:
    the mean is accumulated first, then the centered second moments.
    """
    if quantity not in ("kappa", "pressure"):
        raise ValueError("quantity must be 'kappa' or 'pressure'")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]

    def push(v):
        u = whitened.unwhiten(v)
        if quantity == "kappa":
            return problem.parameterization.nodal_kappa(u)
        return fwd.solve_pressure(problem, u)

    fields = np.array([push(v) for v in samples])
    mean = fields.mean(axis=0)
    if n == 1:
        return mean, np.zeros_like(mean)
    centered = fields - mean[None, :]
    std = np.sqrt(np.sum(centered * centered, axis=0) / (n - 1))
    return mean, std


def diagnostics_row(
    method: str,
    n_train: int,
    acceptance_rate: float,
    seconds_offline: float,
    seconds_online: float,
    ess_rep: EssReport,
    errors: ErrorReport | None = None,
) -> dict:
    return {
        "method": method,
        "N_train": n_train,
        "AP": acceptance_rate,
        "seconds_offline": seconds_offline,
        "seconds_online": seconds_online,
        "minESS": ess_rep.minimum,
        "medESS": ess_rep.median,
        "maxESS": ess_rep.maximum,
        "minESS_per_s": ess_rep.min_per_second,
        "REM": errors.rem if errors is not None else np.nan,
        "REC": errors.rec if errors is not None else np.nan,
    }


def write_diagnostics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(row.get(k)) for k in DIAGNOSTIC_COLUMNS})


def _format_cell(value):
    if value is None:
        return "nan"
    if isinstance(value, float):
        return f"{value:.10g}"
    return value
