"""Testing Sigma_U when observations carry a common shock and individual noise.

Model: Y_t + sigma_alpha phi_t 1 1' + sigma_beta Phi_t.  The common shock is
removed by subtracting each matrix's grand mean, sigma_beta^2 is recovered from
the reshaped entrywise second moments, and the statistic is tr(S^2) for a
covariance renormalized by the exact null expectation E0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MatrixDataset, TestReport, check_symmetric, inv_sqrt, sym_sqrt
from .engine import pvalue_two_sided
from .estimators import row_gram


@dataclass(frozen=True)
class NoiseEstimates:
    sigma_alpha2_hat: float
    sigma_beta2_hat: float
    reshaped_omega: np.ndarray
    singular_pair: tuple

    def __post_init__(self):
        u, v = self.singular_pair
        for vec, name in ((u, "u"), (v, "v")):
            if abs(vec.sum()) > 1e-10 * max(1.0, math.sqrt(vec.size)) or abs(np.linalg.norm(vec) - 1) > 1e-10:
                raise ValueError(f"{name} must be a unit vector orthogonal to the ones vector")


@dataclass(frozen=True)
class NoisedMoments:
    mu_tilde: float
    sigma_tilde2: float
    e0: np.ndarray
    b0: float

    def __post_init__(self):
        if not self.sigma_tilde2 > 0:
            raise ValueError("sigma_tilde2 must be positive")


class IdentifiabilityError(ValueError):
    pass


def remove_common_noise(dataset: MatrixDataset) -> tuple[MatrixDataset, float]:
    """Subtract each observation's grand mean; returns the centered data and mean squared grand mean."""
    y = dataset.observations
    a = y.mean(axis=(1, 2))
    return MatrixDataset(y - a[:, None, None]), float(np.mean(a * a))


def _center(mat: np.ndarray) -> np.ndarray:
    m = mat - mat.mean(axis=0, keepdims=True)
    return m - m.mean(axis=1, keepdims=True)


def sigma_beta_from_omega(omega: np.ndarray, rel_floor: float = 1e-8):
    """Evaluate the individual-noise identity on a reshaped second-moment matrix.

    Returns (sigma_beta^2, u, v).  ``omega`` is p x q with entry (i, j) the
    second moment of entry (i, j).
    """
    p, q = omega.shape
    c = _center(omega)
    u_all, s, vt = np.linalg.svd(c)
    if s[0] < rel_floor * np.linalg.norm(omega):
        raise IdentifiabilityError(
            "doubly centered moment matrix is numerically zero: row or column variances are constant, "
            "so the individual noise is not identifiable"
        )
    u, v = u_all[:, 0], vt[0]
    if u[np.argmax(np.abs(u))] < 0:
        u, v = -u, -v
    # exact orthogonality to the ones vectors (SVD leaves round-off)
    u = u - u.mean()
    v = v - v.mean()
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    one_p, one_q = np.ones(p), np.ones(q)
    total = one_p @ omega @ one_q / (p * q)
    corr = (one_p @ omega @ v) * (u @ omega @ one_q) / (p * q * (u @ omega @ v))
    return float(total - corr), u, v


def estimate_sigma_beta(dataset: MatrixDataset, sigma_alpha2_hat: float = float("nan")) -> NoiseEstimates:
    """Estimate sigma_beta^2 from data whose common noise has been removed."""
    y = dataset.observations
    omega = np.mean(y * y, axis=0)
    sb, u, v = sigma_beta_from_omega(omega)
    return NoiseEstimates(sigma_alpha2_hat, sb, omega, (u, v))


def noise_normalization(sigma_u0, sigma_beta2: float, one_v_quadform: float, p: int, q: int) -> np.ndarray:
    """E0 = q^-1 E(Y Y') for whitened, grand-mean-centered observations under the null."""
    s0 = check_symmetric(sigma_u0, "sigma_u0")
    if s0.shape[0] != p:
        raise ValueError("sigma_u0 has the wrong size")
    w = inv_sqrt(s0)
    r = sym_sqrt(s0)
    one = np.ones(p)
    w1 = w @ one
    r1 = r @ one
    a0 = one @ s0 @ one / p
    e0 = np.eye(p) + sigma_beta2 * (w @ w)
    e0 += (a0 * one_v_quadform - sigma_beta2) / (p * q) * np.outer(w1, w1)
    e0 -= one_v_quadform / (p * q) * (np.outer(r1, w1) + np.outer(w1, r1))
    return 0.5 * (e0 + e0.T)


@dataclass(frozen=True)
class _U0Summary:
    lam1: float  # p^-1 tr Sigma_U0^-1
    lam2: float  # p^-1 tr Sigma_U0^-2
    dinv: float  # p^-1 sum_j (Sigma_U0^-1)_jj^2
    one_inv_one: float  # 1' Sigma_U0^-1 1
    one_s_one: float  # 1' Sigma_U0 1

    @classmethod
    def of(cls, s0: np.ndarray) -> "_U0Summary":
        p = s0.shape[0]
        inv = np.linalg.inv(s0)
        inv = 0.5 * (inv + inv.T)
        return cls(
            float(np.trace(inv) / p),
            float(np.sum(inv * inv) / p),
            float(np.mean(np.diag(inv) ** 2)),
            float(inv.sum()),
            float(s0.sum()),
        )


def noised_mean_variance(p, lam_v, d_v, nu4, sb2, u0: _U0Summary, nu4_noise):
    """Null mean and variance of tr(S^2) under the noised model.

    The sigma_beta^6 variance term is 16 lam1 lam2: a direct second-moment
    calculation with Gaussian entries gives that product (it reduces to lam1^2
    only when Sigma_U0 = I).
    """
    l1, l2 = u0.lam1, u0.lam2
    mu = (
        (nu4 - 3.0) * d_v
        + (p + 1) * lam_v
        + 2 * (p + 1) * sb2 * l1
        + sb2**2 * ((nu4_noise - 3.0) * u0.dinv + l2 + p * l1 * l1)
    )
    var = (
        4 * lam_v**2
        + 4 * sb2**4 * l2**2
        + 8 * sb2**2 * (l1 * l1 + l2 + l1 * l1 * lam_v)
        + 16 * sb2 * (l1 * lam_v + sb2**2 * l1 * l2)
    )
    return mu, var


def noised_moments(sigma_u0, sigma_v, sigma_beta2: float, nu4: float, nu4_noise: float, T: int) -> NoisedMoments:
    """All-known moments, E0 and bias term."""
    s0 = check_symmetric(sigma_u0, "sigma_u0")
    sv = check_symmetric(sigma_v, "sigma_v")
    p, q = s0.shape[0], sv.shape[0]
    u0 = _U0Summary.of(s0)
    lam_v = float(np.sum(sv * sv) / q)
    d_v = float(np.mean(np.diag(sv) ** 2))
    mu, var = noised_mean_variance(p, lam_v, d_v, nu4, sigma_beta2, u0, nu4_noise)
    e0 = noise_normalization(s0, sigma_beta2, float(sv.sum() / q), p, q)
    return NoisedMoments(mu, var, e0, bias_b0(q, T, sigma_beta2, u0))


def bias_b0(q: int, T: int, sb2: float, u0: _U0Summary) -> float:
    return q / T * (sb2**2 * u0.lam2 + 1.0 + 2.0 * sb2 * u0.lam1)


def plugin_moments(whitened_centered: np.ndarray, sigma_u0, sb2: float) -> tuple[NoisedMoments, dict]:
    """Data-driven E0, mean and variance given sigma_beta^2 (known or estimated).

    ``whitened_centered`` holds Sigma_U0^{-1/2} times the grand-mean-centered observations.
    """
    s0 = check_symmetric(sigma_u0, "sigma_u0")
    y = whitened_centered
    T, p, q = y.shape
    u0 = _U0Summary.of(s0)
    m = row_gram(y) / (T * p)
    num = m.sum() / q - sb2 * u0.lam1 + sb2 * u0.one_inv_one / p**2
    den = 1.0 + u0.one_inv_one / p**2 * u0.one_s_one / p - 2.0 / p
    one_v = float(num / den)
    e0 = noise_normalization(s0, sb2, one_v, p, q)
    b0 = bias_b0(q, T, sb2, u0)
    tau = float(np.sum(m * m))
    lam_v = tau / q - b0 / p - (sb2**2 * u0.lam1**2 + 2 * sb2 * u0.lam1)
    traces = np.einsum("tij,tij->t", y, y)
    spread = float(np.sum((traces - traces.mean()) ** 2) / (T * p * q))
    mu = (p - 1) / p * (p / q * tau - b0) + spread + sb2**2 * u0.lam1**2 - sb2**2 * u0.lam2
    _, var = noised_mean_variance(p, lam_v, 0.0, 3.0, sb2, u0, 3.0)
    if not var > 0:
        raise ValueError(f"estimated variance {var:.3g} is not positive")
    diag = {"one_v_quadform_hat": one_v, "b0_hat": b0, "lambda_bar_v_hat": lam_v, "trace_spread": spread}
    return NoisedMoments(mu, var, e0, b0), diag


def noised_statistic(whitened_centered: np.ndarray, e0: np.ndarray) -> float:
    T, p, q = whitened_centered.shape
    n = T * q
    w = np.ascontiguousarray(whitened_centered.transpose(1, 0, 2)).reshape(p, n)
    s = (w @ w.T) / n - e0
    s *= math.sqrt(n / p)
    return float(np.sum(s * s))


MODES = ("FG", "PG", "FE")


def run_noised_test(
    dataset: MatrixDataset,
    sigma_u0,
    mode: str = "FE",
    sigma_beta2: float | None = None,
    sigma_v=None,
    nu4: float = 3.0,
    nu4_noise: float = 3.0,
    alpha=(0.05, 0.10),
    seed: int | None = None,
) -> TestReport:
    """Test Sigma_U = sigma_u0 under the noised model.

    FG: sigma_beta2, sigma_v, nu4 and nu4_noise are all given.
    PG: sigma_beta2 given, everything else estimated.
    FE: everything estimated.
    """
    mode = mode.upper()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode in ("FG", "PG") and sigma_beta2 is None:
        raise ValueError(f"{mode} mode needs sigma_beta2")
    if mode == "FG" and sigma_v is None:
        raise ValueError("FG mode needs sigma_v")
    alpha = tuple(float(a) for a in np.atleast_1d(alpha))
    s0 = check_symmetric(sigma_u0, "sigma_u0")
    centered, sa2 = remove_common_noise(dataset)
    T, p, q = centered.observations.shape
    diag: dict = {"mode": mode, "sigma_alpha2_hat": sa2}
    if mode == "FE":
        est = estimate_sigma_beta(centered, sa2)
        sb2 = est.sigma_beta2_hat
        diag["sigma_beta2_hat"] = sb2
        if sb2 < 0:
            diag["sigma_beta2_clamped"] = 1.0
            sb2 = 0.0
    else:
        sb2 = float(sigma_beta2)
    y = np.matmul(inv_sqrt(s0), centered.observations)
    if mode == "FG":
        mom = noised_moments(s0, sigma_v, sb2, nu4, nu4_noise, T)
    else:
        mom, extra = plugin_moments(y, s0, sb2)
        diag.update(extra)
    stat = noised_statistic(y, mom.e0)
    diag["trace_s2"] = stat
    diag["b0"] = mom.b0
    t = (stat - mom.mu_tilde) / math.sqrt(mom.sigma_tilde2)
    pv = pvalue_two_sided(t)
    return TestReport(
        method="noised",
        statistic=t,
        mu=mom.mu_tilde,
        sigma=math.sqrt(mom.sigma_tilde2),
        alpha=list(alpha),
        reject={a: pv < a for a in alpha},
        p_value=pv,
        diagnostics=diag,
        seed=seed,
        dims={"T": T, "p": p, "q": q},
    )
