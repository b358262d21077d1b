import math

import numpy as np
import pytest
from scipy import stats

from kronlss.bootstrap import (
    BootstrapResult,
    bootstrap_distribution,
    quantile_pairs,
    run_bootstrap_test,
    wishart_bartlett,
)
from kronlss.data import KroneckerModel, block_sigma_v, generate_dataset, sym_sqrt
from kronlss.engine import TestConfig
from kronlss.laws import EntryLaw


def test_identity_replicates_match_limit():
    res = bootstrap_distribution(np.eye(100), 3.0, (100, 100, 100), B=2000, seed=1)
    k = res.replicates
    assert abs(k.mean() - 1.0) < 3 * 2 / math.sqrt(2000)  # K = lss - p * lam, centered at 1
    assert k.std(ddof=1) == pytest.approx(2.0, abs=0.15)
    assert stats.kstest((k - 1.0) / 2.0, "norm").statistic < 0.05


def test_deterministic():
    a = bootstrap_distribution(block_sigma_v(10), 2.0, (10, 10, 10), B=30, seed=5)
    b = bootstrap_distribution(block_sigma_v(10), 2.0, (10, 10, 10), B=30, seed=5)
    np.testing.assert_array_equal(a.replicates, b.replicates)
    c = bootstrap_distribution(block_sigma_v(10), 2.0, (10, 10, 10), B=30, seed=6)
    assert not np.array_equal(a.replicates, c.replicates)


def test_bartlett_and_direct_agree():
    sv = block_sigma_v(10)
    fast = bootstrap_distribution(sv, 3.0, (10, 10, 10), B=4000, seed=2)
    slow = bootstrap_distribution(sv, 3.0, (10, 10, 10), B=4000, seed=3, sampler="direct")
    assert stats.ks_2samp(fast.replicates, slow.replicates).pvalue > 0.001


def test_matched_and_pearson_entries_agree():
    sv = block_sigma_v(20)
    a = bootstrap_distribution(sv, 4.0, (20, 20, 20), B=1500, seed=2, entries="matched")
    b = bootstrap_distribution(sv, 4.0, (20, 20, 20), B=1500, seed=3, entries="pearson")
    assert stats.ks_2samp(a.replicates, b.replicates).pvalue > 0.001


def test_kurtosis_shifts_center():
    sv = np.eye(20)
    lo = bootstrap_distribution(sv, 1.0, (20, 20, 20), B=1500, seed=1).replicates.mean()
    hi = bootstrap_distribution(sv, 5.0, (20, 20, 20), B=1500, seed=1).replicates.mean()
    # center moves by (nu4 - 3) * mean squared diagonal of sigma_v: from -1 to +3
    assert hi - lo == pytest.approx(4.0, abs=0.6)


def test_wishart_mean():
    r = np.random.default_rng(0)
    m = np.mean([wishart_bartlett(4, 9, r) for _ in range(4000)], axis=0)
    np.testing.assert_allclose(m, 9 * np.eye(4), atol=0.35)


def test_quantiles_type7():
    x = np.arange(1.0, 11.0)
    q = quantile_pairs(x, [0.2])
    assert q[0.2] == pytest.approx((1.9, 9.1))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        bootstrap_distribution(np.eye(3), 3.0, (3, 3, 4), B=5)
    with pytest.raises(ValueError):
        bootstrap_distribution(np.eye(3), 3.0, (3, 3, 3), B=0)
    with pytest.raises(ValueError):
        bootstrap_distribution(np.diag([2.0, 2.0, -1.0]), 2.0, (3, 3, 3), B=2)


def test_dump(tmp_path):
    res = bootstrap_distribution(np.eye(5), 3.0, (5, 5, 5), B=7, seed=0)
    path = tmp_path / "k.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "K" and len(lines) == 8
    np.testing.assert_array_equal([float(v) for v in lines[1:]], res.replicates)


@pytest.mark.parametrize("nuisance", ["known", "estimated"])
def test_bootstrap_test_report(nuisance):
    sv = block_sigma_v(20)
    model = KroneckerModel(np.eye(20), sym_sqrt(sv), EntryLaw.gaussian())
    ds = generate_dataset(model, 20, seed=1)
    cfg = TestConfig(nuisance=nuisance, sigma_v=sv if nuisance == "known" else None)
    rep = run_bootstrap_test(ds, np.eye(20), cfg, B=50, seed=3)
    assert rep.method == "bootstrap" and rep.p_value is None
    assert rep.diagnostics["bootstrap_variant"] == ("BG" if nuisance == "known" else "BE")
    lo, hi = rep.diagnostics["c_lo_0.05"], rep.diagnostics["c_hi_0.05"]
    assert rep.reject[0.05] == (not lo <= rep.statistic <= hi)
    assert 0 <= rep.diagnostics["tail_p_value"] <= 1


def test_bootstrap_small_size():
    sv = block_sigma_v(20)
    model = KroneckerModel(np.eye(20), sym_sqrt(sv), EntryLaw.gaussian())
    cfg = TestConfig(sigma_v=sv, alpha=(0.1,))
    rej = [run_bootstrap_test(generate_dataset(model, 20, 4, r), np.eye(20), cfg, B=100, seed=r).reject[0.1] for r in range(150)]
    assert 0.02 < np.mean(rej) < 0.2
