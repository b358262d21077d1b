import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronlss.data import KroneckerModel, block_sigma_v, from_spectrum, generate_dataset, sym_sqrt, uniform_spectrum
from kronlss.engine import TestConfig, alternative_scenarios, pvalue_two_sided, run_test, separation
from kronlss.laws import EntryLaw
from kronlss.spectral import lss, renormalized_cov, whiten


def null_model(p, q, law=EntryLaw.gaussian(), seed=0, sv=None):
    g, lam = uniform_spectrum(p, np.random.default_rng(seed))
    s0 = from_spectrum(g, lam)
    sv = np.eye(q) if sv is None else sv
    return KroneckerModel(sym_sqrt(s0), sym_sqrt(sv), law), s0, sv


def test_pvalue_examples():
    assert pvalue_two_sided(0.0) == 1.0
    assert pvalue_two_sided(1.959964) == pytest.approx(0.05, abs=1e-6)
    assert pvalue_two_sided(-1.959964) == pvalue_two_sided(1.959964)


@settings(max_examples=50)
@given(st.floats(-40, 40))
def test_pvalue_range_and_evenness(t):
    v = pvalue_two_sided(t)
    assert 0.0 <= v <= 1.0
    assert v == pvalue_two_sided(-t)


def test_config_validation():
    with pytest.raises(ValueError):
        TestConfig(alpha=(1.5,), sigma_v=np.eye(2))
    with pytest.raises(ValueError):
        TestConfig(nuisance="known")
    with pytest.raises(ValueError):
        TestConfig(nuisance="estimated", f="bogus")
    c = TestConfig(nuisance="estimated", alpha=0.05)
    assert c.alpha == (0.05,)
    assert c.with_(side="columns").side == "columns"


def test_report_fields_and_sizes():
    model, s0, sv = null_model(30, 20)
    ds = generate_dataset(model, 25, seed=1)
    rep = run_test(ds, s0, TestConfig(sigma_v=sv, alpha=(0.05, 0.1)), seed=1)
    assert rep.method == "formula"
    assert set(rep.reject) == {0.05, 0.1}
    assert rep.reject[0.05] <= rep.reject[0.1]
    assert rep.dims == {"T": 25, "p": 30, "q": 20}
    assert rep.mu == pytest.approx(31.0) and rep.sigma == pytest.approx(2.0)
    assert rep.statistic == pytest.approx((rep.diagnostics["lss"] - 31.0) / 2.0)


def test_known_sigma_v_size_mismatch():
    model, s0, sv = null_model(10, 6)
    ds = generate_dataset(model, 5, seed=1)
    with pytest.raises(ValueError):
        run_test(ds, s0, TestConfig(sigma_v=np.eye(7)))


def test_column_side_uses_transpose():
    model, s0, sv = null_model(12, 12, sv=block_sigma_v(12))
    ds = generate_dataset(model, 30, seed=2)
    # testing the columns against their true covariance, with the rows as nuisance
    rep = run_test(ds, sv, TestConfig(sigma_v=s0 / np.trace(s0) * 12, side="columns"))
    assert rep.dims == {"T": 30, "p": 12, "q": 12}
    assert np.isfinite(rep.statistic)


def test_invariance_under_orthogonal_conjugation(rng):
    model, s0, sv = null_model(15, 10)
    w = whiten(generate_dataset(model, 20, seed=3), s0)
    q, _ = np.linalg.qr(rng.standard_normal((15, 15)))
    S = renormalized_cov(w)
    for f in ("x2", "x3", "exp"):
        assert lss(q @ S @ q.T, f) == pytest.approx(lss(S, f), rel=1e-9)


def test_general_f_estimated_is_flagged():
    model, s0, sv = null_model(20, 20)
    rep = run_test(generate_dataset(model, 20, seed=4), s0, TestConfig(f="x3", nuisance="estimated"))
    assert rep.diagnostics["plugin_general_f"] == 1.0


def test_small_monte_carlo_size_and_moments():
    model, s0, sv = null_model(40, 40, sv=block_sigma_v(40))
    cfg = TestConfig(sigma_v=sv)
    stats = np.array([run_test(generate_dataset(model, 40, 9, r), s0, cfg).statistic for r in range(300)])
    assert abs(stats.mean()) < 0.25
    assert 0.85 < stats.std() < 1.15


def test_power_against_rank_one_perturbation():
    model, s0, sv = null_model(60, 60, sv=block_sigma_v(60))
    alt = alternative_scenarios(model, "HA1", 0.1, seed=1)
    cfg = TestConfig(sigma_v=sv)
    rej = [run_test(generate_dataset(alt, 60, 5, r), s0, cfg).reject[0.05] for r in range(30)]
    assert np.mean(rej) > 0.9


def test_alternatives():
    model, s0, _ = null_model(50, 5)
    assert alternative_scenarios(model, "HA1", 0.0) is model
    with pytest.raises(ValueError):
        alternative_scenarios(model, "HA3", 0.1)
    with pytest.raises(ValueError):
        alternative_scenarios(model, "HA1", -0.1)
    ident = KroneckerModel(np.eye(50), np.eye(5), EntryLaw.gaussian())
    ha2 = alternative_scenarios(ident, "HA2", 0.1)
    np.testing.assert_allclose(ha2.sigma_u, 1.1 * np.eye(50), atol=1e-12)
    assert separation(ha2.sigma_u, np.eye(50)) == pytest.approx(0.01)


def test_ha1_separation_dense_oracle():
    from kronlss.rng import ROLE_DESIGN, stream

    model, s0, _ = null_model(50, 5)
    alt = alternative_scenarios(model, "HA1", 0.1, seed=7)
    g = stream(7, ROLE_DESIGN, 1).standard_normal(50)
    s1 = s0 + 0.1 / math.sqrt(50) * np.outer(g, g)
    w = np.linalg.inv(np.linalg.cholesky(s0))
    d = w @ s1 @ w.T - np.eye(50)
    assert separation(alt.sigma_u, s0) == pytest.approx(np.sum(d * d) / 50, rel=1e-8)
    assert separation(alt.sigma_u, s0) > 0
