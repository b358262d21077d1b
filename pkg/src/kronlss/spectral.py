"""Whitening, renormalized sample covariance, spectral statistics and the
Stieltjes-transform fixed point that describes their limiting law."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import MatrixDataset, check_symmetric, inv_sqrt

# ---------------------------------------------------------------------------
# spectral functions


@dataclass(frozen=True)
class SpectralFunction:
    """A real function applied to eigenvalues.

    ``f`` must accept complex arrays: the mean correction integrates it along a
    contour around the spectrum, so it has to be analytic on and inside that
    contour.  ``analytic_halfwidth`` bounds the real part of the region where
    this holds (``inf`` for entire functions).
    """

    name: str
    f: Callable
    df: Callable
    analytic_halfwidth: float = math.inf
    degree: int | None = None  # polynomial degree, if f is a polynomial

    def __call__(self, x):
        return self.f(x)


def _poly(coefs) -> SpectralFunction:
    c = np.asarray(coefs, dtype=np.float64)
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
    name = "poly:" + ",".join(f"{v:g}" for v in c)
    return SpectralFunction(
        name,
        lambda x: np.polynomial.polynomial.polyval(x, c),
        lambda x: np.polynomial.polynomial.polyval(x, dc),
        degree=c.size - 1,
    )


SQUARE = SpectralFunction("x2", lambda x: x * x, lambda x: 2 * x, degree=2)


def spectral_function(tag: str | SpectralFunction) -> SpectralFunction:
    """Resolve a tag: ``x``, ``x2``, ``x3``, ``exp``, ``log_shift[:s]`` or ``poly:c0,c1,...``."""
    if isinstance(tag, SpectralFunction):
        return tag
    key = tag.strip().lower()
    if key in ("x2", "x^2", "square"):
        return SQUARE
    if key in ("x", "x1", "identity"):
        return SpectralFunction("x", lambda x: x, lambda x: np.ones_like(x), degree=1)
    if key in ("x3", "x^3", "cube"):
        return SpectralFunction("x3", lambda x: x**3, lambda x: 3 * x**2, degree=3)
    if key == "exp":
        return SpectralFunction("exp", np.exp, np.exp)
    if key.startswith("log_shift"):
        shift = float(key.split(":", 1)[1]) if ":" in key else 5.0
        if shift <= 0:
            raise ValueError("log_shift needs a positive shift")
        return SpectralFunction(
            f"log_shift:{shift:g}", lambda x: np.log(shift + x), lambda x: 1.0 / (shift + x), analytic_halfwidth=shift
        )
    if key.startswith("poly:"):
        return _poly([float(v) for v in key[5:].split(",")])
    raise ValueError(f"unknown spectral function tag {tag!r}")


# ---------------------------------------------------------------------------
# matrices built from data


def whiten(dataset: MatrixDataset, sigma_u0) -> MatrixDataset:
    """Left-multiply every observation by sigma_u0^{-1/2}."""
    s = check_symmetric(sigma_u0, "sigma_u0")
    if s.shape[0] != dataset.p:
        raise ValueError(f"sigma_u0 is {s.shape[0]}x{s.shape[0]} but observations have p={dataset.p}")
    try:
        w = inv_sqrt(s)
    except ValueError as exc:
        raise ValueError(f"invalid null hypothesis: {exc}") from None
    return MatrixDataset(np.matmul(w, dataset.observations))


def column_gram(obs: np.ndarray) -> np.ndarray:
    """sum_t Y_t Y_t' for a (T, p, q) array."""
    T, p, q = obs.shape
    w = np.ascontiguousarray(obs.transpose(1, 0, 2)).reshape(p, T * q)
    g = w @ w.T
    return 0.5 * (g + g.T)


def renormalized_cov(dataset: MatrixDataset) -> np.ndarray:
    """sqrt(Tq/p) * ((Tq)^{-1} sum_t Y_t Y_t' - I), the identity-centered p x p matrix."""
    T, p, q = dataset.observations.shape
    n = T * q
    s = column_gram(dataset.observations) / n
    s[np.diag_indices(p)] -= 1.0
    return math.sqrt(n / p) * s


def whitened_renormalized_cov(dataset: MatrixDataset, sigma_u0) -> np.ndarray:
    """renormalized_cov(whiten(dataset, sigma_u0)) via the p x p Gram matrix, without whitening each Y_t."""
    s = check_symmetric(sigma_u0, "sigma_u0")
    if s.shape[0] != dataset.p:
        raise ValueError(f"sigma_u0 is {s.shape[0]}x{s.shape[0]} but observations have p={dataset.p}")
    try:
        w = inv_sqrt(s)
    except ValueError as exc:
        raise ValueError(f"invalid null hypothesis: {exc}") from None
    T, p, q = dataset.observations.shape
    n = T * q
    g = w @ column_gram(dataset.observations) @ w / n
    g = 0.5 * (g + g.T)
    g[np.diag_indices(p)] -= 1.0
    return math.sqrt(n / p) * g


def lss(S, f: str | SpectralFunction = SQUARE) -> float:
    """Linear spectral statistic sum_j f(lambda_j(S))."""
    fn = spectral_function(f)
    a = np.asarray(S, dtype=np.float64)
    if fn is SQUARE:
        return float(np.sum(a * a))
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    ev = np.linalg.eigvalsh(check_symmetric(a, "S"))
    return float(np.sum(fn.f(ev)))


# ---------------------------------------------------------------------------
# limiting spectral law


@dataclass(frozen=True)
class SpectralSystem:
    """Inputs of the asymptotic formulas for sqrt(n/p)-renormalized A^{1/2} X B X' A^{1/2}.

    ``b_spectrum`` holds eigenvalues of B_n (or of Sigma_V: the averages over
    B_n = I_T (x) Sigma_V are the same).
    """

    a_spectrum: np.ndarray
    b_spectrum: np.ndarray
    p: int
    n: int
    nu4: float = 3.0
    diag_B2_mean: float | None = None
    _atoms: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.sort(np.asarray(self.a_spectrum, dtype=np.float64))[::-1].copy()
        b = np.asarray(self.b_spectrum, dtype=np.float64).copy()
        if a.size == 0 or not np.all(np.isfinite(a)) or a.min() < 0:
            raise ValueError("a_spectrum must be non-empty, finite and non-negative")
        if b.size == 0 or not np.all(np.isfinite(b)) or not np.mean(b * b) > 0:
            raise ValueError("b_spectrum must be finite with positive second moment")
        if self.p > self.n:
            warnings.warn(f"p={self.p} exceeds n={self.n}; the asymptotics assume p/n -> 0", stacklevel=2)
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a_spectrum", a)
        object.__setattr__(self, "b_spectrum", b)
        if self.diag_B2_mean is None:
            object.__setattr__(self, "diag_B2_mean", float(np.mean(b * b)))
        vals, counts = np.unique(a, return_counts=True)
        object.__setattr__(self, "_atoms", (vals, counts / a.size))

    @classmethod
    def matrix_variate(cls, sigma_v, p: int, T: int, nu4: float = 3.0, sigma_u=None) -> "SpectralSystem":
        """A_p = Sigma_U (identity by default), B_n = I_T (x) Sigma_V, n = Tq."""
        sv = check_symmetric(sigma_v, "sigma_v")
        q = sv.shape[0]
        a = np.ones(p) if sigma_u is None else np.linalg.eigvalsh(check_symmetric(sigma_u, "sigma_u"))
        return cls(
            a_spectrum=a,
            b_spectrum=np.linalg.eigvalsh(sv),
            p=p,
            n=T * q,
            nu4=nu4,
            diag_B2_mean=float(np.mean(np.diag(sv) ** 2)),
        )

    @property
    def lambda_bar_B2(self) -> float:
        return float(np.mean(self.b_spectrum**2))

    @property
    def is_identity_A(self) -> bool:
        return bool(np.all(self.a_spectrum == 1.0))

    @property
    def support_radius(self) -> float:
        """2 a_1 b_1, an upper bound for the spectral norm of the renormalized matrix."""
        return 2.0 * float(self.a_spectrum[0]) * float(np.max(np.abs(self.b_spectrum)))


@dataclass(frozen=True)
class StieltjesPoint:
    z: complex
    m: complex
    s: complex


class ConvergenceError(RuntimeError):
    pass


def _stieltjes_residual(vals, wts, lam, z, m, s):
    den = z[:, None] + vals[None, :] * lam * s[:, None]
    rm = m + np.sum(wts / den, axis=1)
    rs = s + np.sum(wts * vals / den, axis=1)
    return np.maximum(np.abs(rm), np.abs(rs))


def _solve_upper(vals, wts, lam, z, damping=0.5, tol=1e-15, max_iter=100_000):
    s = -1.0 / z
    active = np.arange(z.size)
    for _ in range(max_iter):
        zz, ss = z[active], s[active]
        g = -np.sum(wts * vals / (zz[:, None] + vals[None, :] * lam * ss[:, None]), axis=1)
        new = (1 - damping) * ss + damping * g
        s[active] = new
        done = np.abs(new - ss) <= tol * (1.0 + np.abs(new))
        active = active[~done]
        if active.size == 0:
            break
    for k in active:
        s[k] = _secant(vals, wts, lam, z[k], s[k])
    m = -np.sum(wts / (z[:, None] + vals[None, :] * lam * s[:, None]), axis=1)
    return m, s


def _secant(vals, wts, lam, z, s0):
    def F(s):
        return s + np.sum(wts * vals / (z + vals * lam * s))

    s_prev, s = s0, s0 * (1 + 1e-6) + 1e-9j
    f_prev, f = F(s_prev), F(s)
    for _ in range(200):
        if f == f_prev:
            break
        s_prev, s = s, s - f * (s - s_prev) / (f - f_prev)
        f_prev, f = f, F(s)
        if abs(f) < 1e-14:
            return s
    raise ConvergenceError(f"Stieltjes fixed point did not converge at z={z}; move the contour away from the support")


def stieltjes_many(system: SpectralSystem, z) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized solver: (m_p(z), s_p(z)) for an array of points off the real support."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if np.any(z.imag == 0) and np.any(np.abs(z.real[z.imag == 0]) <= system.support_radius):
        raise ValueError("z must be off the real axis (or real and outside the support)")
    vals, wts = system._atoms
    lam = system.lambda_bar_B2
    lower = z.imag < 0
    zu = np.where(lower, np.conj(z), z)
    m, s = _solve_upper(vals, wts, lam, zu)
    return np.where(lower, np.conj(m), m), np.where(lower, np.conj(s), s)


def solve_stieltjes(system: SpectralSystem, z: complex) -> StieltjesPoint:
    z = complex(z)
    if z.imag == 0:
        raise ValueError("Im z must be non-zero")
    m, s = stieltjes_many(system, [z])
    return StieltjesPoint(z, complex(m[0]), complex(s[0]))


def stieltjes_residual(system: SpectralSystem, point: StieltjesPoint) -> float:
    vals, wts = system._atoms
    return float(
        _stieltjes_residual(
            vals, wts, system.lambda_bar_B2, np.array([point.z]), np.array([point.m]), np.array([point.s])
        )[0]
    )


def semicircle_stieltjes(z, lambda_bar: float):
    """Closed form for A = I: root of lambda m^2 + z m + 1 = 0 that decays like -1/z."""
    z = np.asarray(z, dtype=np.complex128)
    r = np.sqrt(z * z - 4.0 * lambda_bar)
    # pick the branch of the square root that keeps |m| < 1/sqrt(lambda)
    r = np.where((r.real * z.real + r.imag * z.imag) < 0, -r, r)
    return (-z + r) / (2.0 * lambda_bar)


# ---------------------------------------------------------------------------
# semicircle reference law


def semicircle_density(x, lambda_bar: float):
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.clip(4.0 * lambda_bar - x * x, 0.0, None)) / (2.0 * math.pi * lambda_bar)


def semicircle_cdf(x, lambda_bar: float):
    u = np.clip(np.asarray(x, dtype=np.float64) / (2.0 * math.sqrt(lambda_bar)), -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / math.pi


def _cheb2_rule(n: int):
    k = np.arange(1, n + 1)
    theta = k * math.pi / (n + 1)
    return np.cos(theta), math.pi / (n + 1) * np.sin(theta) ** 2


def semicircle_integral(f: str | SpectralFunction, lambda_bar: float, tol: float = 1e-10) -> float:
    """Integral of f against the semicircle density of variance ``lambda_bar``.

    Gauss-Chebyshev (second kind); 33 nodes integrate polynomials up to degree
    65 exactly, other functions are refined by doubling until converged.
    """
    if not lambda_bar > 0:
        raise ValueError("lambda_bar must be positive")
    fn = spectral_function(f)
    r = 2.0 * math.sqrt(lambda_bar)

    def rule(n):
        x, w = _cheb2_rule(n)
        return float(2.0 / math.pi * np.sum(w * np.real(fn.f(r * x))))

    n = 33
    val = rule(n)
    if fn.degree is not None and fn.degree <= 2 * n - 1:
        return val
    for _ in range(12):
        n = 2 * n + 1
        new = rule(n)
        if abs(new - val) <= tol * max(1.0, abs(new)):
            return new
        val = new
    raise ConvergenceError("semicircle quadrature did not converge")
