import numpy as np
import pytest

from kronlss.data import KroneckerModel, MatrixDataset, block_sigma_v, generate_dataset, sym_sqrt
from kronlss.estimators import EstimationError, estimate_nuisance, estimate_sigma_v
from kronlss.laws import EntryLaw


def sample(sv, law, T, p, r, seed=1):
    m = KroneckerModel(np.eye(p), sym_sqrt(sv), law)
    return generate_dataset(m, T, seed, r)


@pytest.mark.parametrize("sv_kind,truth", [("identity", 1.0), ("block", 1.25)])
def test_lambda_and_kurtosis_consistent(sv_kind, truth):
    q = 60
    sv = np.eye(q) if sv_kind == "identity" else block_sigma_v(q)
    est = [estimate_nuisance(sample(sv, EntryLaw.gaussian(), 60, 60, r)) for r in range(80)]
    assert np.mean([e.lambda_bar_hat for e in est]) == pytest.approx(truth, abs=0.03)
    assert np.mean([e.nu4_hat for e in est]) == pytest.approx(3.0, abs=0.25)


def test_rademacher_kurtosis_near_clamp():
    est = [estimate_nuisance(sample(np.eye(50), EntryLaw.rademacher(), 50, 50, r)) for r in range(60)]
    nu = np.array([e.nu4_hat for e in est])
    assert np.all(nu >= 1.0)
    # with +-1 entries and identity columns every trace equals pq, so zeta_hat = 0 and the
    # unclamped value is about 1 - 2q/(Tp): the clamp is active essentially always
    assert abs(nu.mean() - 1.0) < 0.05
    assert np.mean(nu == 1.0) > 0.9


def test_bias_correction_removes_offset():
    T, p, q = 50, 50, 200
    raw, fixed = [], []
    for r in range(40):
        ds = sample(np.eye(q), EntryLaw.gaussian(), T, p, r, seed=4)
        raw.append(estimate_nuisance(ds, bias_correct=False).lambda_bar_hat)
        fixed.append(estimate_nuisance(ds).lambda_bar_hat)
    offset = q / (T * p)
    assert np.mean(raw) - 1.0 == pytest.approx(offset, abs=0.01)
    assert abs(np.mean(fixed) - 1.0) < 0.01


def test_plugin_center_tracks_known_moments():
    ds = sample(block_sigma_v(80), EntryLaw.pearson(5.0), 80, 80, 0)
    est = estimate_nuisance(ds)
    assert est.nu4_hat == pytest.approx(5.0, abs=1.2)
    assert est.mu_hat(80) == pytest.approx(81 * 1.25 + 2.0, rel=0.05)


def test_negative_lambda_raises():
    ds = MatrixDataset(np.zeros((1, 1, 3)) + np.array([1e-3, 0, 0]))
    with pytest.raises(EstimationError):
        estimate_nuisance(ds)


def test_sigma_v_operator_error_small():
    errs = [
        np.linalg.norm(estimate_sigma_v(sample(np.eye(20), EntryLaw.gaussian(), 100, 100, r)) - np.eye(20), 2)
        for r in range(5)
    ]
    assert max(errs) < 0.15


def test_sample_method_exact_recovery():
    # rows of the stacked data chosen so (Tp)^-1 sum Y'Y equals a target exactly
    sv = np.array([[1.2, 0.3], [0.3, 0.8]])
    root = sym_sqrt(sv)
    z = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])  # z'z / 4 = I
    y = (z @ root).reshape(2, 2, 2)
    np.testing.assert_allclose(estimate_sigma_v(MatrixDataset(y), "sample"), sv, atol=1e-12)


def test_zero_threshold_equals_sample(rng):
    ds = MatrixDataset(rng.standard_normal((6, 5, 7)))
    np.testing.assert_allclose(estimate_sigma_v(ds, "thresholded", delta=0.0), estimate_sigma_v(ds, "sample"))


def test_thresholding_zeroes_noise_keeps_blocks():
    ds = sample(block_sigma_v(40), EntryLaw.gaussian(), 100, 50, 0)
    est = estimate_sigma_v(ds)
    assert np.trace(est) == pytest.approx(40)
    assert est[0, 1] == pytest.approx(0.5, abs=0.1)
    off = est.copy()
    for k in range(0, 40, 2):
        off[k:k + 2, k:k + 2] = 0
    assert np.mean(off == 0) > 0.9
