"""Plug-in estimates of the nuisance quantities that enter the null moments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MatrixDataset, rescale_trace


@dataclass(frozen=True)
class NuisanceEstimates:
    lambda_bar_hat: float
    sigma2_hat: float
    nu4_hat: float
    mu2_hat: float
    zeta_hat: float
    tau_hat: float
    omega_hat: float

    def mu_hat(self, p: int) -> float:
        """Center of ||S||_F^2 assembled from the plug-ins."""
        return (p + 1) * self.lambda_bar_hat + self.mu2_hat

    def as_dict(self) -> dict:
        return {
            "lambda_bar_hat": self.lambda_bar_hat,
            "sigma2_hat": self.sigma2_hat,
            "nu4_hat": self.nu4_hat,
            "mu2_hat": self.mu2_hat,
            "zeta_hat": self.zeta_hat,
            "tau_hat": self.tau_hat,
            "omega_hat": self.omega_hat,
        }


class EstimationError(ValueError):
    pass


def row_gram(obs: np.ndarray) -> np.ndarray:
    """sum_t Y_t' Y_t for a (T, p, q) array."""
    T, p, q = obs.shape
    w = obs.reshape(T * p, q)
    g = w.T @ w
    return 0.5 * (g + g.T)


def estimate_nuisance(whitened: MatrixDataset, bias_correct: bool = True) -> NuisanceEstimates:
    """Moment estimates of lambda_bar = q^-1 tr Sigma_V^2, the entry kurtosis and the diagonal term.

    ``bias_correct=False`` drops the q/(Tp) correction of lambda_bar; it exists
    only to demonstrate that the correction matters.
    """
    y = whitened.observations
    T, p, q = y.shape
    tp = T * p
    tau = float(np.sum((row_gram(y) / tp) ** 2))
    lam = tau / q - (q / tp if bias_correct else 0.0)
    if not lam > 0:
        raise EstimationError(f"bias-corrected lambda_bar estimate {lam:.3g} is not positive; T*p={tp} is too small")
    traces = np.einsum("tij,tij->t", y, y)
    zeta = float(np.sum((traces - traces.mean()) ** 2) / tp)
    col_var = np.einsum("tij,tij->j", y, y) / tp
    omega = float(np.sum(col_var**2))
    nu4 = max(3.0 + (zeta - 2.0 * tau) / omega, 1.0)
    return NuisanceEstimates(
        lambda_bar_hat=lam,
        sigma2_hat=4.0 * lam * lam,
        nu4_hat=nu4,
        mu2_hat=(zeta - 2.0 * tau) / q,
        zeta_hat=zeta,
        tau_hat=tau,
        omega_hat=omega,
    )


THRESHOLD_GRID = (0.0, 0.5, 1.0, 1.5, 2.0)


def _threshold(rows: np.ndarray, delta: float):
    """Adaptive hard thresholding of the sample covariance of the rows (N x q)."""
    n, q = rows.shape
    s = rows.T @ rows / n
    if delta == 0.0:
        return s
    sq = rows * rows
    theta = np.clip(sq.T @ sq / n - s * s, 0.0, None)
    level = delta * np.sqrt(theta * math.log(max(q, 2)) / n)
    out = np.where(np.abs(s) >= level, s, 0.0)
    np.fill_diagonal(out, np.diag(s))
    return out


def select_threshold(rows_by_t: np.ndarray, grid=THRESHOLD_GRID) -> float:
    """Two-fold cross-validation (folds split by t) on Frobenius risk."""
    T, p, q = rows_by_t.shape
    if T >= 2:
        folds = (rows_by_t[0::2].reshape(-1, q), rows_by_t[1::2].reshape(-1, q))
    else:
        folds = (rows_by_t[0, 0::2], rows_by_t[0, 1::2])
    if min(f.shape[0] for f in folds) == 0:
        return 0.0
    refs = [f.T @ f / f.shape[0] for f in folds]
    risks = []
    for d in grid:
        r = sum(np.sum((_threshold(folds[k], d) - refs[1 - k]) ** 2) for k in (0, 1))
        risks.append(r)
    return float(grid[int(np.argmin(risks))])


def estimate_sigma_v(whitened: MatrixDataset, method: str = "thresholded", delta: float | None = None) -> np.ndarray:
    """Estimate the column covariance from whitened data, rescaled to tr/q = 1.

    ``sample`` returns (Tp)^-1 sum_t Y_t' Y_t.  ``thresholded`` keeps the
    diagonal and zeroes off-diagonal entries below delta * sqrt(theta_ij log q / (Tp)),
    with delta chosen by cross-validation unless given.
    """
    y = whitened.observations
    T, p, q = y.shape
    if method == "sample":
        return rescale_trace(row_gram(y) / (T * p))
    if method != "thresholded":
        raise ValueError(f"unknown method {method!r}")
    if delta is None:
        delta = select_threshold(y)
    return rescale_trace(_threshold(y.reshape(T * p, q), delta))
