"""Standardized entry laws: mean 0, variance 1, skewness 0, chosen kurtosis.

Kurtosis ``nu4`` selects the member of the symmetric Pearson family:

* ``nu4 == 1``      Rademacher (+-1 with probability 1/2)
* ``1 < nu4 < 3``   Pearson II, a centered symmetric Beta(a, a) rescaled to unit variance
* ``nu4 == 3``      standard Gaussian
* ``nu4 > 3``       Pearson VII, a Student-t rescaled to unit variance
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.stats import sampling


def pearson_ii_shape(nu4: float) -> float:
    # symmetric Beta(a, a) has kurtosis 3(2a + 1) / (2a + 3)
    return 3.0 * (nu4 - 1.0) / (2.0 * (3.0 - nu4))


def pearson_vii_dof(nu4: float) -> float:
    # Student-t has kurtosis 3 + 6 / (dof - 4)
    return 4.0 + 6.0 / (nu4 - 3.0)


@lru_cache(maxsize=32)
def _inverter(kind: str, param: float) -> sampling.NumericalInversePolynomial:
    if kind == "t":
        dist = stats.t(param)
    else:
        dist = stats.beta(param, param)
    return sampling.NumericalInversePolynomial(dist, u_resolution=1e-12)


def pearson_variates(nu4: float, size, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. standardized symmetric Pearson variates with kurtosis ``nu4``."""
    nu4 = float(nu4)
    if not nu4 >= 1.0:
        raise ValueError(f"kurtosis must be >= 1, got {nu4}")
    if nu4 == 1.0:
        return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    if nu4 == 3.0:
        return rng.standard_normal(size)
    if nu4 > 3.0:
        dof = pearson_vii_dof(nu4)
        x = _inverter("t", dof).rvs(size, random_state=rng)
        return np.asarray(x, dtype=np.float64) * np.sqrt((dof - 2.0) / dof)
    a = pearson_ii_shape(nu4)
    if a >= 1.0:
        b = _inverter("beta", a).rvs(size, random_state=rng)
    else:
        # unbounded density at the endpoints; numerical inversion is unreliable there
        b = rng.beta(a, a, size=size)
    return (np.asarray(b, dtype=np.float64) - 0.5) * 2.0 * np.sqrt(2.0 * a + 1.0)


def _random_signs(n: int, rng: np.random.Generator) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(rng.bytes((n + 7) // 8), dtype=np.uint8))[:n]
    return bits.astype(np.float64) * 2.0 - 1.0


def matched_variates(nu4: float, size, rng: np.random.Generator) -> np.ndarray:
    """Cheap standardized symmetric variates with kurtosis ``nu4`` (not Pearson).

    nu4 <= 3: a N + b R with R a random sign and b^4 = (3 - nu4) / 2.
    3 < nu4 <= 6: N * sqrt(1 + d R) with d^2 = nu4 / 3 - 1.
    Larger kurtosis falls back to the Pearson VII law.  Only the first four
    moments are matched, which is all the bootstrap limit depends on.
    """
    nu4 = float(nu4)
    if not nu4 >= 1.0:
        raise ValueError(f"kurtosis must be >= 1, got {nu4}")
    if nu4 == 3.0 or nu4 > 6.0:
        return pearson_variates(nu4, size, rng)
    z = rng.standard_normal(size)
    s = _random_signs(z.size, rng).reshape(z.shape)
    if nu4 < 3.0:
        b2 = np.sqrt((3.0 - nu4) / 2.0)
        z *= np.sqrt(1.0 - b2)
        s *= np.sqrt(b2)
        z += s
        return z
    s *= np.sqrt(nu4 / 3.0 - 1.0)
    s += 1.0
    np.sqrt(s, out=s)
    z *= s
    return z


@dataclass(frozen=True)
class EntryLaw:
    """Distribution of the i.i.d. entries of X_t (and of the noise terms)."""

    name: str
    nu4: float

    def __post_init__(self):
        if not self.nu4 >= 1.0:
            raise ValueError(f"impossible kurtosis {self.nu4}: must be >= 1")

    @classmethod
    def gaussian(cls) -> "EntryLaw":
        return cls("normal", 3.0)

    @classmethod
    def rademacher(cls) -> "EntryLaw":
        return cls("bernoulli", 1.0)

    @classmethod
    def pearson(cls, nu4: float) -> "EntryLaw":
        return cls(f"pearson({nu4:g})", float(nu4))

    @classmethod
    def parse(cls, text: str) -> "EntryLaw":
        key = text.strip().lower()
        if key in ("normal", "gaussian"):
            return cls.gaussian()
        if key in ("bernoulli", "rademacher"):
            return cls.rademacher()
        if key.startswith("pearson"):
            inner = key[len("pearson"):].strip("():= ")
            return cls.pearson(float(inner))
        raise ValueError(f"unknown entry law {text!r}")

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return pearson_variates(self.nu4, size, rng)
