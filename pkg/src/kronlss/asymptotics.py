"""Asymptotic center and scale of linear spectral statistics.

Two routes are offered for the centering term.  For f(x) = x^2 there is an exact
closed form.  For a general analytic f the center is a semicircle integral
minus a contour integral of the O(1/p) mean correction X_p(z), which in turn
needs the scalar fixed point Y_p(z).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import check_symmetric, rescale_trace
from .spectral import (
    ConvergenceError,
    SpectralFunction,
    SpectralSystem,
    StieltjesPoint,
    semicircle_integral,
    semicircle_stieltjes,
    spectral_function,
    stieltjes_many,
)


@dataclass(frozen=True)
class ContourSpec:
    """Rectangle with vertices (+-u0, +-i v0), traversed counterclockwise."""

    u0: float
    v0: float = 1.0
    nodes_per_edge: int = 64

    def __post_init__(self):
        if not (self.u0 > 0 and self.v0 > 0 and self.nodes_per_edge >= 2):
            raise ValueError("contour needs u0 > 0, v0 > 0 and at least two nodes per edge")

    @classmethod
    def default(cls, system: SpectralSystem, f: SpectralFunction | None = None) -> "ContourSpec":
        edge = system.support_radius
        # at finite p/n the spectrum reaches about a1 b1 (2 + sqrt(p/n)); X_p is singular there
        u0 = edge * (1.0 + 0.5 * math.sqrt(system.p / system.n)) + 0.5
        if f is not None and u0 >= f.analytic_halfwidth:
            if edge >= f.analytic_halfwidth:
                raise ValueError(f"{f.name} is not analytic on a neighborhood of the support [-{edge:g}, {edge:g}]")
            u0 = 0.5 * (edge + f.analytic_halfwidth)
        return cls(u0=u0)

    def check_encloses(self, system: SpectralSystem):
        if not self.u0 > system.support_radius:
            raise ValueError(f"contour half-width {self.u0:g} does not enclose the support radius {system.support_radius:g}")

    def nodes(self, n: int | None = None):
        """Quadrature nodes z_k and complex weights w_k so that sum w_k g(z_k) ~ contour integral of g."""
        n = n or self.nodes_per_edge
        x, w = np.polynomial.legendre.leggauss(n)
        u, v = self.u0, self.v0
        verts = [u - 1j * v, u + 1j * v, -u + 1j * v, -u - 1j * v, u - 1j * v]
        zs, ws = [], []
        for a, b in zip(verts[:-1], verts[1:]):
            zs.append(0.5 * (a + b) + 0.5 * (b - a) * x)
            ws.append(0.5 * (b - a) * w)
        return np.concatenate(zs), np.concatenate(ws)


@dataclass(frozen=True)
class MomentPair:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


# ---------------------------------------------------------------------------
# closed form for f = x^2


def sigma_v_summary(sigma_v, rescale: bool = True) -> tuple[float, float, int]:
    """(lambda_bar = q^-1 tr Sigma_V^2, q^-1 sum_j (Sigma_V)_jj^2, q)."""
    sv = check_symmetric(sigma_v, "sigma_v")
    q = sv.shape[0]
    if rescale and abs(np.trace(sv) / q - 1.0) > 1e-8:
        warnings.warn("sigma_v rescaled so that tr/q = 1", stacklevel=3)
        sv = rescale_trace(sv)
    return float(np.sum(sv * sv) / q), float(np.mean(np.diag(sv) ** 2)), q


def closed_form_moments(p: int, q: int, sigma_v, nu4: float) -> MomentPair:
    """Center and variance of ||S||_F^2 under the null."""
    lam, d, qq = sigma_v_summary(sigma_v)
    if qq != q:
        raise ValueError(f"sigma_v is {qq}x{qq}, expected q={q}")
    return MomentPair(mu=(p + 1) * lam + (nu4 - 3.0) * d, sigma2=4.0 * lam * lam)


def moments_from_summary(p: int, lam: float, d: float, nu4: float) -> MomentPair:
    return MomentPair(mu=(p + 1) * lam + (nu4 - 3.0) * d, sigma2=4.0 * lam * lam)


# ---------------------------------------------------------------------------
# mean correction


class YpError(ConvergenceError):
    pass


def _compress(x):
    vals, counts = np.unique(np.asarray(x, dtype=np.float64), return_counts=True)
    return vals, counts / counts.sum()


def _node_quantities(system: SpectralSystem, z, m, s):
    """eps_k(z) and the A_p(z) factor at each node (rows) and A-atom (columns)."""
    a, wa = system._atoms
    lam = system.lambda_bar_B2
    eps = 1.0 / (z[:, None] + a[None, :] * lam * s[:, None])
    t = np.sum(wa * a * a * lam * eps * eps, axis=1)
    Bp = lam * t / (1.0 - t)
    Ap = (system.nu4 - 3.0) * system.diag_B2_mean + lam + Bp
    return eps, Ap


def _yp_rhs_general(system, eps, Ap, s, x, bvals, bw):
    a, wa = system._atoms
    lam = system.lambda_bar_B2
    r = math.sqrt(system.p / system.n)
    D = np.sum(wa * a * eps / (1.0 - x[:, None] * a * eps), axis=1)
    first = lam * (-Ap / system.p * np.sum(wa * a**3 * eps**3, axis=1) + s)
    second = np.sum(bw * bvals**2 / (1.0 - bvals * r * D[:, None]), axis=1) * D
    return first + second


def _yp_rhs_identity(system, m, Ap, x, bvals, bw):
    lam = system.lambda_bar_B2
    r = math.sqrt(system.p / system.n)
    D = -m / (1.0 + x * m)
    first = lam * (Ap * m**3 / system.p + m)
    return first + np.sum(bw * bvals**2 / (1.0 - bvals * r * D[:, None]), axis=1) * D


def _fixed_point(rhs, size, damping=0.5, tol=1e-15, max_iter=20_000):
    x = np.zeros(size, dtype=np.complex128)
    for _ in range(max_iter):
        new = (1 - damping) * x + damping * rhs(x)
        if np.any(np.abs(new) > 1.0):
            raise YpError("Y_p iteration left the unit disc; the small root is not isolable at these dimensions")
        step = np.max(np.abs(new - x))
        x = new
        if step <= tol:
            break
    resid = np.max(np.abs(x - rhs(x)))
    if resid > 1e-10:
        raise YpError(f"Y_p fixed point residual {resid:.2e} exceeds 1e-10")
    return x


def solve_Yp_many(system: SpectralSystem, z, m, s, path: str = "auto"):
    """Y_p at many nodes; ``path`` is ``general``, ``identity`` or ``auto``."""
    z, m, s = (np.atleast_1d(np.asarray(v, dtype=np.complex128)) for v in (z, m, s))
    bvals, bw = _compress(system.b_spectrum)
    eps, Ap = _node_quantities(system, z, m, s)
    if path == "auto":
        path = "identity" if system.is_identity_A else "general"
    if path == "identity":
        if not system.is_identity_A:
            raise ValueError("identity path requires A = I")
        rhs = lambda x: _yp_rhs_identity(system, m, Ap, x, bvals, bw)  # noqa: E731
    elif path == "general":
        rhs = lambda x: _yp_rhs_general(system, eps, Ap, s, x, bvals, bw)  # noqa: E731
    else:
        raise ValueError(f"unknown path {path!r}")
    return _fixed_point(rhs, z.size), eps, Ap


def solve_Yp(system: SpectralSystem, z: complex, stieltjes: StieltjesPoint, path: str = "auto") -> complex:
    if stieltjes.z != complex(z):
        raise ValueError("stieltjes point was solved at a different z")
    y, _, _ = solve_Yp_many(system, [z], [stieltjes.m], [stieltjes.s], path)
    return complex(y[0])


def Xp_many(system: SpectralSystem, z, path: str = "auto"):
    """Mean-correction function X_p at an array of points."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    m, s = stieltjes_many(system, z)
    y, eps, Ap = solve_Yp_many(system, z, m, s, path)
    a, wa = system._atoms
    p = system.p
    return (
        -Ap / p * np.sum(wa * a * a * eps**3, axis=1)
        - y * np.sum(wa * a * eps * eps / (1.0 - y[:, None] * a * eps), axis=1)
    )


def _contour_value(system, fn, contour, n, integrand):
    z, w = contour.nodes(n)
    vals = fn.f(z) * integrand(z)
    return system.p / (2j * math.pi) * np.sum(w * vals)


def _refined(system, fn, contour, integrand, rtol=1e-6, max_nodes=1024):
    n = contour.nodes_per_edge
    val = _contour_value(system, fn, contour, n, integrand)
    while True:
        if 2 * n > max_nodes:
            raise ConvergenceError("contour quadrature did not converge")
        new = _contour_value(system, fn, contour, 2 * n, integrand)
        if abs(new - val) <= rtol * max(abs(new), 1e-300):
            break
        # tiny corrections can stall on the relative test; accept at absolute round-off level
        if abs(new - val) <= 1e-12 * system.p:
            break
        n, val = 2 * n, new
    if abs(new.imag) > 1e-8 * max(1.0, abs(new.real)):
        raise ConvergenceError(f"contour integral has imaginary part {new.imag:.3e}")
    return float(new.real)


def mean_correction(
    system: SpectralSystem, f: str | SpectralFunction = "x2", contour: ContourSpec | None = None, path: str = "auto"
) -> float:
    """(p / 2 pi i) times the contour integral of f(z) X_p(z); nodes are doubled until stable."""
    fn = spectral_function(f)
    contour = contour or ContourSpec.default(system, fn)
    contour.check_encloses(system)
    return _refined(system, fn, contour, lambda z: Xp_many(system, z, path))


def reference_integral(system: SpectralSystem, f: str | SpectralFunction = "x2", contour: ContourSpec | None = None) -> float:
    """p * integral of f against the finite-p limiting law F_p."""
    fn = spectral_function(f)
    if system.is_identity_A:
        return system.p * semicircle_integral(fn, system.lambda_bar_B2)
    contour = contour or ContourSpec.default(system, fn)
    contour.check_encloses(system)
    # p int f dF = -(p / 2 pi i) * contour integral of f m
    return -_refined(system, fn, contour, lambda z: stieltjes_many(system, z)[0])


def center(system: SpectralSystem, f: str | SpectralFunction = "x2", contour: ContourSpec | None = None) -> float:
    """Asymptotic mean of sum_j f(lambda_j): reference integral minus mean correction."""
    return reference_integral(system, f, contour) - mean_correction(system, f, contour)


# ---------------------------------------------------------------------------
# variance (A = I)


def _cosine_coefficients(g, radius, n):
    """a_j = int_0^pi g(radius cos t) cos(j t) dt for j < n, by the n-point midpoint rule."""
    theta = (np.arange(n) + 0.5) * math.pi / n
    vals = np.real(g(radius * np.cos(theta)))
    j = np.arange(n)
    return (math.pi / n) * (np.cos(np.outer(j, theta)) @ vals)


def variance_general(system: SpectralSystem, f: str | SpectralFunction = "x2", rtol: float = 1e-12) -> float:
    """Limiting variance of sum_j f(lambda_j) when A = I.

    The log kernel has the expansion 8 sum_k sin(k t1) sin(k t2) / k in the
    angle variables, so the double integral collapses to a weighted sum of
    squared sine coefficients of f'.
    """
    if not system.is_identity_A:
        raise ValueError("variance_general covers the A = I case only")
    fn = spectral_function(f)
    lam = system.lambda_bar_B2
    radius = 2.0 * math.sqrt(lam)
    extra = (system.nu4 - 3.0) * system.diag_B2_mean

    def evaluate(n):
        a = _cosine_coefficients(fn.df, radius, n)
        c = 0.5 * (a[:-2] - a[2:])  # c_k for k = 1 .. n-2
        k = np.arange(1, c.size + 1)
        return 8.0 * lam / math.pi**2 * np.sum(c * c / k) + 4.0 / math.pi**2 * extra * c[0] ** 2

    n = 64
    val = evaluate(n)
    for _ in range(10):
        n *= 2
        new = evaluate(n)
        if abs(new - val) <= rtol * max(abs(new), 1e-300):
            return float(new)
        val = new
    raise ConvergenceError("variance series did not converge")


def H_kernel(t1, t2, lam: float, extra: float):
    """Covariance kernel in the eigenvalue variables; ``extra`` is (nu4 - 3) times the mean squared diagonal."""
    r1 = np.sqrt(np.clip(4 * lam - t1 * t1, 0, None))
    r2 = np.sqrt(np.clip(4 * lam - t2 * t2, 0, None))
    num = 4 * lam - t1 * t2 + r1 * r2
    den = 4 * lam - t1 * t2 - r1 * r2
    return extra / lam**2 * r1 * r2 + 2.0 * np.log(num / den)


def variance_quadrature(system: SpectralSystem, f: str | SpectralFunction = "x2", n: int = 200) -> float:
    """Direct double integral of f'(t1) f'(t2) H(t1, t2) / (4 pi^2).

    Tensor Gauss-Legendre in the angle variables, with the inner integral split
    at the diagonal where the log kernel is singular.  Slow and only accurate to
    about 1e-5; kept as an independent check of ``variance_general``.
    """
    if not system.is_identity_A:
        raise ValueError("A = I only")
    fn = spectral_function(f)
    lam = system.lambda_bar_B2
    extra = (system.nu4 - 3.0) * system.diag_B2_mean
    R = 2.0 * math.sqrt(lam)
    x, w = np.polynomial.legendre.leggauss(n)
    th1 = 0.5 * math.pi * (x + 1)
    w1 = 0.5 * math.pi * w
    total = 0.0
    for a, wa in zip(th1, w1):
        t1 = R * math.cos(a)
        g1 = np.real(fn.df(t1)) * R * math.sin(a)
        for lo, hi in ((0.0, a), (a, math.pi)):
            th2 = lo + 0.5 * (hi - lo) * (x + 1)
            w2 = 0.5 * (hi - lo) * w
            t2 = R * np.cos(th2)
            g2 = np.real(fn.df(t2)) * R * np.sin(th2)
            total += wa * g1 * np.sum(w2 * g2 * H_kernel(t1, t2, lam, extra))
    return total / (4 * math.pi**2)


def limiting_moments(system: SpectralSystem, f: str | SpectralFunction = "x2", contour: ContourSpec | None = None) -> MomentPair:
    """(mu, sigma^2) for general f with A = I."""
    return MomentPair(center(system, f, contour), variance_general(system, f))


# ---------------------------------------------------------------------------
# covariance kernel


def _kernel_pieces(system: SpectralSystem, z: complex):
    """e_a(z) = 1 / (z + a lam s(z)) and its z-derivative, per atom a."""
    _, s = stieltjes_many(system, [z])
    a, wa = system._atoms
    lam = system.lambda_bar_B2
    e = 1.0 / (z + a * lam * s[0])
    # implicit differentiation of s = -sum w a e
    ds = np.sum(wa * a * e * e) / (1.0 - lam * np.sum(wa * a * a * e * e))
    return e, -e * e * (1.0 + a * lam * ds)


def kernel_Lambda(system: SpectralSystem, z1: complex, z2: complex, path: str = "general") -> complex:
    """Covariance kernel Lambda(z1, z2) of the Stieltjes-transform process.

    ``general`` is the mixed derivative of kappa C - 2 log(1 - lam C), with
    C = sum_a w a^2 e_a(z1) e_a(z2), taken analytically; ``identity`` uses the
    A = I closed form.
    """
    z1, z2 = complex(z1), complex(z2)
    if z1.imag == 0 or z2.imag == 0:
        raise ValueError("z1 and z2 must be off the real axis")
    lam = system.lambda_bar_B2
    kappa = (system.nu4 - 3.0) * system.diag_B2_mean
    if path == "identity":
        if not system.is_identity_A:
            raise ValueError("identity path requires A = I")
        m1, m2 = semicircle_stieltjes(z1, lam), semicircle_stieltjes(z2, lam)
        d1, d2 = m1 * m1 / (1 - lam * m1 * m1), m2 * m2 / (1 - lam * m2 * m2)
        return complex(d1 * d2 * (kappa + 2 * lam / (1 - lam * m1 * m2) ** 2))
    if path != "general":
        raise ValueError(f"unknown path {path!r}")
    a, wa = system._atoms
    e1, de1 = _kernel_pieces(system, z1)
    e2, de2 = _kernel_pieces(system, z2)
    w = wa * a * a
    C = np.sum(w * e1 * e2)
    C1 = np.sum(w * de1 * e2)
    C2 = np.sum(w * e1 * de2)
    C12 = np.sum(w * de1 * de2)
    g = 1.0 - lam * C
    return complex(kappa * C12 + 2.0 * lam * (C12 / g + lam * C1 * C2 / (g * g)))


# ---------------------------------------------------------------------------
# quadratic consistency check for B = I


def cor2_residual(p: int, n: int, z: complex = 3j, nu4: float = 3.0) -> tuple[float, complex]:
    """|A X^2 + B X + C| at z for B_n = I, A_p = I, together with X_p(z)."""
    system = SpectralSystem(np.ones(p), np.ones(1), p=p, n=n, nu4=nu4, diag_B2_mean=1.0)
    m = complex(semicircle_stieltjes(z, 1.0))
    x = complex(Xp_many(system, [z])[0])
    r = math.sqrt(p / n)
    Ap = nu4 - 2.0 + m * m / (1 - m * m)
    At = m - r * (1 + m * m)
    Bt = m * m - 1 - r * m * (1 + 2 * m * m)
    Ct = m**3 * Ap / p - r * m**4
    return abs(At * x * x + Bt * x + Ct), x
