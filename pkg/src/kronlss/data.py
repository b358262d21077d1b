"""Domain types, simulation designs and file IO for matrix-variate observations."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .laws import EntryLaw
from .rng import ROLE_COMMON_NOISE, ROLE_INDIVIDUAL_NOISE, ROLE_SIGNAL, stream

SYMMETRY_TOL = 1e-10
MVDS_MAGIC = "# mvds 1"


class FormatError(ValueError):
    """Malformed MVDS or matrix file; the message carries the line number."""

    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class MatrixDataset:
    """T independent p x q observations stored as a read-only (T, p, q) array."""

    observations: np.ndarray

    def __post_init__(self):
        obs = np.array(self.observations, dtype=np.float64, copy=True)
        if obs.ndim == 2:
            obs = obs[np.newaxis]
        if obs.ndim != 3 or min(obs.shape) < 1:
            raise ValueError(f"observations must have shape (T, p, q) with T, p, q >= 1, got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("observations contain non-finite entries")
        obs.flags.writeable = False
        object.__setattr__(self, "observations", obs)

    @property
    def T(self) -> int:
        return self.observations.shape[0]

    @property
    def p(self) -> int:
        return self.observations.shape[1]

    @property
    def q(self) -> int:
        return self.observations.shape[2]

    @property
    def dims(self) -> dict:
        return {"T": self.T, "p": self.p, "q": self.q}

    def transpose(self) -> "MatrixDataset":
        """Swap the roles of rows and columns (used to test the column covariance)."""
        return MatrixDataset(np.swapaxes(self.observations, 1, 2))

    def __eq__(self, other):
        if not isinstance(other, MatrixDataset):
            return NotImplemented
        return self.observations.shape == other.observations.shape and bool(
            np.array_equal(self.observations, other.observations)
        )

    __hash__ = None


def check_symmetric(mat, name: str = "matrix", tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate a dense symmetric real matrix and return it symmetrized as float64."""
    a = np.asarray(mat, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > tol:
        raise ValueError(f"{name} is not symmetric (max |A - A'| = {asym:.3g})")
    return 0.5 * (a + a.T)


def rescale_trace(sigma) -> np.ndarray:
    """Scale a covariance so that trace / dimension == 1."""
    s = check_symmetric(sigma, "sigma")
    tr = float(np.trace(s))
    if not tr > 0:
        raise ValueError(f"trace must be positive, got {tr}")
    return s * (s.shape[0] / tr)


def sym_sqrt(sigma) -> np.ndarray:
    s = check_symmetric(sigma, "sigma")
    w, q = np.linalg.eigh(s)
    if w.min() < -1e-10 * max(abs(w.max()), 1.0):
        raise ValueError("matrix is not positive semidefinite")
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T


def inv_sqrt(sigma, rel_floor: float = 1e-10) -> np.ndarray:
    """Symmetric inverse square root; refuses (near) singular input."""
    s = check_symmetric(sigma, "sigma")
    w, q = np.linalg.eigh(s)
    if not w.max() > 0 or w.min() <= rel_floor * w.max():
        raise ValueError(
            f"matrix is not positive definite (eigenvalues in [{w.min():.3g}, {w.max():.3g}])"
        )
    return (q / np.sqrt(w)) @ q.T


# ---------------------------------------------------------------------------
# simulation designs


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed R)."""
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def uniform_spectrum(p: int, rng: np.random.Generator, low: float = 1.0, high: float = 2.0):
    """Haar rotation and Uniform[low, high] eigenvalues; Sigma = G diag(lam) G'."""
    gamma = haar_orthogonal(p, rng)
    lam = rng.uniform(low, high, size=p)
    return gamma, lam


def from_spectrum(gamma: np.ndarray, lam) -> np.ndarray:
    s = (gamma * np.asarray(lam)) @ gamma.T
    return 0.5 * (s + s.T)


def block_sigma_v(q: int, rho: float = 0.5) -> np.ndarray:
    """Unit diagonal with ``rho`` on the (2k-1, 2k) pairs; q^-1 tr = 1."""
    s = np.eye(q)
    for k in range(q // 2):
        s[2 * k, 2 * k + 1] = s[2 * k + 1, 2 * k] = rho
    return s


def two_point_factor(n: int, c: float, rng: np.random.Generator) -> np.ndarray:
    """Factor D @ G with G Haar and D^2 = diag of half (1 - c), half (1 + c).

    The implied covariance (D G)(D G)' = D^2 is diagonal and non-constant, which
    keeps the individual-noise level identifiable.
    """
    if not 0.0 <= c < 1.0:
        raise ValueError("c must lie in [0, 1)")
    d2 = np.where(np.arange(n) % 2 == 0, 1.0 - c, 1.0 + c)
    d2 /= d2.mean()  # odd n cannot split evenly; keep tr / n = 1
    return np.sqrt(d2)[:, None] * haar_orthogonal(n, rng)


@dataclass(frozen=True)
class KroneckerModel:
    """Generative model Y_t = U X_t V' + sigma_alpha phi_t 1 1' + sigma_beta Phi_t."""

    U: np.ndarray
    V: np.ndarray
    entry_law: EntryLaw = field(default_factory=EntryLaw.gaussian)
    sigma_alpha: float = 0.0
    sigma_beta: float = 0.0
    noise_law: EntryLaw = field(default_factory=EntryLaw.gaussian)

    def __post_init__(self):
        u = np.array(self.U, dtype=np.float64)
        v = np.array(self.V, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != u.shape[1] or v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("U and V must be square matrices")
        if self.sigma_alpha < 0 or self.sigma_beta < 0:
            raise ValueError("noise scales must be non-negative")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "V", v)

    @classmethod
    def from_covariances(cls, sigma_u, sigma_v, **kw) -> "KroneckerModel":
        return cls(sym_sqrt(sigma_u), sym_sqrt(sigma_v), **kw)

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def q(self) -> int:
        return self.V.shape[0]

    @property
    def sigma_u(self) -> np.ndarray:
        return self.U @ self.U.T

    @property
    def sigma_v(self) -> np.ndarray:
        return self.V @ self.V.T


def _is_identity(a: np.ndarray) -> bool:
    return bool(np.array_equal(a, np.eye(a.shape[0])))


def generate_dataset(model: KroneckerModel, T: int, seed: int, replication: int = 0) -> MatrixDataset:
    """Draw T observations from ``model``.

    Observation t uses the streams (replication, role, t) for the signal, the
    common noise and the individual noise, so any Y_t can be regenerated alone.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    p, q = model.p, model.q
    x = np.empty((T, p, q))
    for t in range(T):
        x[t] = model.entry_law.sample((p, q), stream(seed, replication, ROLE_SIGNAL, t))
    if not _is_identity(model.U):
        x = np.matmul(model.U, x)
    if not _is_identity(model.V):
        x = np.matmul(x, model.V.T)
    if model.sigma_alpha > 0:
        phi = np.array(
            [model.noise_law.sample(1, stream(seed, replication, ROLE_COMMON_NOISE, t))[0] for t in range(T)]
        )
        x += model.sigma_alpha * phi[:, None, None]
    if model.sigma_beta > 0:
        for t in range(T):
            x[t] += model.sigma_beta * model.noise_law.sample(
                (p, q), stream(seed, replication, ROLE_INDIVIDUAL_NOISE, t)
            )
    return MatrixDataset(x)


# ---------------------------------------------------------------------------
# file IO


def _parse_floats(tokens: Sequence[str], lineno: int) -> list[float]:
    out = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise FormatError(f"not a number: {tok!r}", lineno) from None
        if not math.isfinite(v):
            raise FormatError(f"non-finite entry {tok!r}", lineno)
        out.append(v)
    return out


def parse_dataset(text: str) -> MatrixDataset:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MVDS_MAGIC:
        raise FormatError(f"expected {MVDS_MAGIC!r} header", 1)
    if len(lines) < 2:
        raise FormatError("missing 'T p q' line", 2)
    head = lines[1].split()
    if len(head) != 3 or not all(h.isdigit() for h in head):
        raise FormatError(f"malformed header {lines[1]!r}, expected 'T p q'", 2)
    T, p, q = (int(h) for h in head)
    if min(T, p, q) < 1:
        raise FormatError("T, p and q must be >= 1", 2)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != q:
            raise FormatError(f"expected {q} values, found {len(tokens)}", lineno)
        rows.append((lineno, _parse_floats(tokens, lineno)))
    if len(rows) % p:
        raise FormatError(f"incomplete block: {len(rows) % p} of {p} rows", rows[-1][0])
    if len(rows) != T * p:
        found = len(rows) // p
        last = rows[-1][0] if rows else 2
        raise FormatError(f"expected {T} blocks, found {found}", last)
    obs = np.array([r for _, r in rows], dtype=np.float64).reshape(T, p, q)
    return MatrixDataset(obs)


def load_dataset(path: str | os.PathLike) -> MatrixDataset:
    with open(path, "r", encoding="ascii") as fh:
        return parse_dataset(fh.read())


def format_dataset(dataset: MatrixDataset) -> str:
    out = [MVDS_MAGIC, f"{dataset.T} {dataset.p} {dataset.q}"]
    for t in range(dataset.T):
        if t:
            out.append("")
        for row in dataset.observations[t]:
            out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def write_dataset(dataset: MatrixDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_dataset(dataset))


def parse_matrix(text: str) -> np.ndarray:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise FormatError("empty matrix file", 1)
    lineno, first = lines[0]
    if not first.strip().isdigit():
        raise FormatError(f"expected dimension n, got {first!r}", lineno)
    n = int(first)
    body = lines[1:]
    if len(body) != n:
        raise FormatError(f"expected {n} rows, found {len(body)}", body[-1][0] if body else lineno)
    rows = []
    for lineno, line in body:
        tokens = line.split()
        if len(tokens) != n:
            raise FormatError(f"expected {n} values, found {len(tokens)}", lineno)
        rows.append(_parse_floats(tokens, lineno))
    mat = np.array(rows, dtype=np.float64).reshape(n, n)
    try:
        return check_symmetric(mat, "matrix")
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        return parse_matrix(fh.read())


def write_matrix(mat, path: str | os.PathLike) -> None:
    a = check_symmetric(mat)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{a.shape[0]}\n")
        for row in a:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# reports


@dataclass
class TestReport:
    """Outcome of one covariance test."""

    __test__ = False  # not a pytest class

    method: str
    statistic: float
    mu: float
    sigma: float
    alpha: list
    reject: dict
    p_value: float | None = None
    diagnostics: dict = field(default_factory=dict)
    seed: int | None = None
    dims: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.bool_):
                return bool(v)
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return clean(
            {
                "method": self.method,
                "statistic": self.statistic,
                "mu": self.mu,
                "sigma": self.sigma,
                "p_value": self.p_value,
                "alpha": list(self.alpha),
                "reject": {f"{a:g}": r for a, r in self.reject.items()},
                "diagnostics": self.diagnostics,
                "seed": self.seed,
                "dims": dict(self.dims),
            }
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
