"""Monte Carlo size/power harness driven by flat key=value config files."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bootstrap import run_bootstrap_test
from .data import KroneckerModel, block_sigma_v, generate_dataset, from_spectrum, sym_sqrt, two_point_factor, uniform_spectrum
from .engine import TestConfig, alternative_scenarios, run_test
from .laws import EntryLaw
from .noise import run_noised_test
from .rng import ROLE_DESIGN, label_id, stream

log = logging.getLogger(__name__)

SCENARIOS = ("null", "HA1", "HA2", "noise-null", "noise-HA1", "noise-HA2")
PLAIN_METHODS = ("FO", "FOE", "BG", "BE")
NOISE_METHODS = ("FG", "PG", "FE")
CSV_HEADER = ["family", "p", "q", "T", "method", "alpha", "rate", "se", "reps"]


@dataclass
class SimulationConfig:
    scenario: str = "null"
    dims: list = field(default_factory=lambda: [(100, 100, 100)])  # (T, p, q)
    families: list = field(default_factory=lambda: ["normal"])
    methods: list = field(default_factory=lambda: ["FO"])
    alpha: list = field(default_factory=lambda: [0.05, 0.10])
    replications: int = 1000
    bootstrap_B: int = 200
    beta: float = 0.1
    sigma_alpha: float = 1.0
    sigma_beta: float = 1.0
    c1: float = 0.5
    c2: float = 0.8
    sigma_v: str = "block"
    seed: int = 0
    failure_threshold: float = 0.01

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.dims:
            raise ValueError("dims grid is empty")
        allowed = NOISE_METHODS if self.is_noise else PLAIN_METHODS
        for m in self.methods:
            if m not in allowed:
                raise ValueError(f"method {m} is not available for scenario {self.scenario}")
        for fam in self.families:
            EntryLaw.parse(fam)

    @property
    def is_noise(self) -> bool:
        return self.scenario.startswith("noise")

    @classmethod
    def parse(cls, text: str) -> "SimulationConfig":
        kw: dict = {}
        dims = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.lower()
            try:
                if key == "dims":
                    T, p, q = (int(v) for v in val.split())
                    dims.append((T, p, q))
                elif key in ("family", "families", "entry_law"):
                    kw["families"] = [v.strip() for v in val.split(",") if v.strip()]
                elif key == "methods":
                    kw["methods"] = [v.strip().upper() for v in val.split(",") if v.strip()]
                elif key == "alpha":
                    kw["alpha"] = [float(v) for v in val.split(",")]
                elif key in ("replications", "bootstrap_b", "seed"):
                    kw["bootstrap_B" if key == "bootstrap_b" else key] = int(val)
                elif key in ("beta", "sigma_alpha", "sigma_beta", "c1", "c2", "failure_threshold"):
                    kw[key] = float(val)
                elif key in ("scenario", "sigma_v"):
                    kw[key] = val
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        if dims:
            kw["dims"] = dims
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SimulationConfig":
        with open(path) as fh:
            return cls.parse(fh.read())


@dataclass(frozen=True)
class TableRow:
    family: str
    p: int
    q: int
    T: int
    method: str
    alpha: float
    rate: float
    se: float
    reps: int


@dataclass
class SizePowerTable:
    rows: list
    failures: dict = field(default_factory=dict)

    def lookup(self, family, p, q, T, method, alpha) -> TableRow:
        for r in self.rows:
            if (r.family, r.p, r.q, r.T, r.method) == (family, p, q, T, method) and math.isclose(r.alpha, alpha):
                return r
        raise KeyError((family, p, q, T, method, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.family, r.p, r.q, r.T, r.method, f"{r.alpha:g}", f"{r.rate:.6f}", f"{r.se:.6f}", r.reps])
        return buf.getvalue()

    def to_json(self, config: SimulationConfig | None = None) -> str:
        out = {"rows": [asdict(r) for r in self.rows], "failures": self.failures}
        if config is not None:
            out["config"] = asdict(config)
        return json.dumps(out, indent=2)


# ---------------------------------------------------------------------------
# scenario construction


@dataclass(frozen=True)
class Design:
    model: KroneckerModel  # data-generating model
    sigma_u0: np.ndarray  # hypothesized row covariance
    sigma_v: np.ndarray
    nu4: float


def row_seed(seed: int, *labels) -> int:
    """64-bit seed for one grid row, derived from the master seed and a label."""
    sid = label_id("|".join(str(v) for v in labels))
    return int(np.random.SeedSequence([seed, sid]).generate_state(1, np.uint64)[0] >> 1)


def build_design(cfg: SimulationConfig, family: str, p: int, q: int) -> Design:
    law = EntryLaw.parse(family)
    dkey = label_id(f"{p}x{q}")
    if cfg.is_noise:
        U = two_point_factor(p, cfg.c1, stream(cfg.seed, ROLE_DESIGN, dkey, 1))
        V = two_point_factor(q, cfg.c2, stream(cfg.seed, ROLE_DESIGN, dkey, 2))
        model = KroneckerModel(U, V, law, cfg.sigma_alpha, cfg.sigma_beta, law)
        sigma_u0 = model.sigma_u
        kind = cfg.scenario.split("-", 1)[1]
        if kind == "HA1":
            g = stream(cfg.seed, ROLE_DESIGN, dkey, 3).standard_normal(p)
            model = KroneckerModel(U + cfg.beta * np.outer(g, g) / math.sqrt(p), V, law, cfg.sigma_alpha, cfg.sigma_beta, law)
        elif kind == "HA2":
            d1 = np.sqrt(np.sum(U * U, axis=1))  # U = D1 Gamma1 has row norms D1
            model = KroneckerModel((d1 + cfg.beta)[:, None] * (U / d1[:, None]), V, law, cfg.sigma_alpha, cfg.sigma_beta, law)
        return Design(model, sigma_u0, V @ V.T, law.nu4)
    g, lam = uniform_spectrum(p, stream(cfg.seed, ROLE_DESIGN, dkey, 0))
    sigma_u0 = from_spectrum(g, lam)
    sv = block_sigma_v(q) if cfg.sigma_v == "block" else np.eye(q)
    base = KroneckerModel(sym_sqrt(sigma_u0), sym_sqrt(sv), law)
    if cfg.scenario in ("HA1", "HA2"):
        base = alternative_scenarios(base, cfg.scenario, cfg.beta, seed=row_seed(cfg.seed, "gamma", p))
    return Design(base, sigma_u0, sv, law.nu4)


def _one_replication(cfg: SimulationConfig, design: Design, T: int, seed: int, r: int):
    data = generate_dataset(design.model, T, seed, r)
    out = {}
    alpha = tuple(cfg.alpha)
    for m in cfg.methods:
        if m == "FO":
            rep = run_test(data, design.sigma_u0, TestConfig(alpha=alpha, sigma_v=design.sigma_v, nu4=design.nu4))
        elif m == "FOE":
            rep = run_test(data, design.sigma_u0, TestConfig(alpha=alpha, nuisance="estimated"))
        elif m in ("BG", "BE"):
            tc = TestConfig(
                alpha=alpha,
                nuisance="known" if m == "BG" else "estimated",
                sigma_v=design.sigma_v if m == "BG" else None,
                nu4=design.nu4,
            )
            rep = run_bootstrap_test(data, design.sigma_u0, tc, cfg.bootstrap_B, seed=row_seed(seed, "boot", r))
        else:
            rep = run_noised_test(
                data,
                design.sigma_u0,
                m,
                sigma_beta2=cfg.sigma_beta**2,
                sigma_v=design.sigma_v,
                nu4=design.nu4,
                nu4_noise=design.nu4,
                alpha=alpha,
            )
        out[m] = (rep.statistic, rep.p_value, dict(rep.reject))
    return out


def _safe(cfg, design, T, seed, r):
    try:
        return _one_replication(cfg, design, T, seed, r), None
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_simulation(cfg: SimulationConfig, threads: int = 1, stats_path=None, progress=None) -> SizePowerTable:
    """Run every (family, T, p, q) row of the grid; results are independent of the thread count."""
    rows, failures = [], {}
    stats_fh = open(stats_path, "w", newline="") if stats_path else None
    stats_w = csv.writer(stats_fh, lineterminator="\n") if stats_fh else None
    if stats_w:
        stats_w.writerow(["family", "p", "q", "T", "method", "replication", "statistic", "p_value"])
    try:
        for family in cfg.families:
            for T, p, q in cfg.dims:
                design = build_design(cfg, family, p, q)
                seed = row_seed(cfg.seed, cfg.scenario, family, T, p, q)
                reps = range(cfg.replications)
                if threads > 1:
                    with ThreadPoolExecutor(threads) as ex:
                        results = list(ex.map(lambda r: _safe(cfg, design, T, seed, r), reps))
                else:
                    results = [_safe(cfg, design, T, seed, r) for r in reps]
                bad = [(r, e) for r, (_, e) in enumerate(results) if e is not None]
                key = f"{family},{p},{q},{T}"
                if bad:
                    failures[key] = len(bad)
                    log.warning("%s: %d failed replications, first: %s", key, len(bad), bad[0][1])
                    if len(bad) > cfg.failure_threshold * cfg.replications:
                        raise RuntimeError(f"{key}: {len(bad)} of {cfg.replications} replications failed ({bad[0][1]})")
                good = [res for res, e in results if e is None]
                for m in cfg.methods:
                    for a in cfg.alpha:
                        hits = [res[m][2][a] for res in good]
                        n = len(hits)
                        rate = float(np.mean(hits)) if n else float("nan")
                        se = math.sqrt(rate * (1 - rate) / n) if n else float("nan")
                        rows.append(TableRow(family, p, q, T, m, float(a), rate, se, n))
                    if stats_w:
                        for r, (res, e) in enumerate(results):
                            if e is None:
                                st, pv = res[m][0], res[m][1]
                                stats_w.writerow([family, p, q, T, m, r, repr(float(st)), "" if pv is None else repr(float(pv))])
                if progress:
                    progress(key)
    finally:
        if stats_fh:
            stats_fh.close()
    return SizePowerTable(rows, failures)
