import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronlss.asymptotics import (
    ContourSpec,
    closed_form_moments,
    cor2_residual,
    kernel_Lambda,
    limiting_moments,
    mean_correction,
    reference_integral,
    center,
    solve_Yp,
    variance_general,
    variance_quadrature,
)
from kronlss.data import KroneckerModel, block_sigma_v, generate_dataset
from kronlss.laws import EntryLaw
from kronlss.spectral import SpectralSystem, lss, renormalized_cov, solve_stieltjes, stieltjes_residual


def system(p, q, T, nu4=3.0, sv=None):
    return SpectralSystem.matrix_variate(np.eye(q) if sv is None else sv, p, T, nu4)


def test_closed_form_examples():
    m = closed_form_moments(20, 10, np.eye(10), 3.0)
    assert (m.mu, m.sigma2) == (21.0, 4.0)
    m = closed_form_moments(100, 100, block_sigma_v(100), 3.0)
    assert m.mu == pytest.approx(126.25) and m.sigma2 == pytest.approx(6.25)
    m = closed_form_moments(20, 100, block_sigma_v(100), 1.0)
    assert m.mu == pytest.approx(24.25) and m.sigma2 == pytest.approx(6.25)


def test_closed_form_rejects_size_mismatch():
    with pytest.raises(ValueError):
        closed_form_moments(20, 11, np.eye(10), 3.0)


@pytest.mark.parametrize("nu4,sv", [(3.0, None), (1.0, "block")])
def test_contour_center_matches_closed_form_at_100(nu4, sv):
    q = 100
    s = block_sigma_v(q) if sv else np.eye(q)
    sys = system(100, q, 100, nu4, s)
    ref = closed_form_moments(100, q, s, nu4).mu
    assert center(sys, "x2") == pytest.approx(ref, rel=1e-2)


def test_contour_center_grid():
    t0 = time.perf_counter()
    worst = 0.0
    for p in (20, 100):
        for q in (20, 100):
            for T in (20, 100):
                for nu4 in (1.0, 3.0, 5.0):
                    for sv in (np.eye(q), block_sigma_v(q)):
                        mu = center(system(p, q, T, nu4, sv), "x2")
                        ref = closed_form_moments(p, q, sv, nu4).mu
                        worst = max(worst, abs(mu - ref) / abs(ref))
    assert worst < 1e-2
    assert time.perf_counter() - t0 < 60


def test_odd_function_reference_vanishes():
    assert reference_integral(system(50, 50, 50), "x3") == pytest.approx(0.0, abs=1e-12)


def test_contour_must_enclose_support():
    sys = system(20, 20, 20)
    with pytest.raises(ValueError):
        mean_correction(sys, "x2", ContourSpec(u0=1.0))


def test_log_shift_contour_respects_branch_cut():
    sys = system(30, 30, 30)
    spec = ContourSpec.default(sys, __import__("kronlss.spectral", fromlist=["x"]).spectral_function("log_shift:3"))
    assert sys.support_radius < spec.u0 < 3.0


def test_general_a_contour_path_runs_and_is_real():
    sys = SpectralSystem(np.linspace(0.8, 1.2, 40), np.array([0.5, 1.5]), p=40, n=4000)
    mu = center(sys, "x2")
    assert np.isfinite(mu)


def test_yp_paths_agree():
    sys = system(100, 100, 100)
    pt = solve_stieltjes(sys, 3j)
    y_gen = solve_Yp(sys, 3j, pt, path="general")
    y_id = solve_Yp(sys, 3j, pt, path="identity")
    assert abs(y_gen - y_id) < 1e-9


def test_yp_small_in_the_limit():
    vals = []
    for p in (25, 100, 400):
        sys = SpectralSystem(np.ones(p), np.ones(1), p=p, n=p * p, diag_B2_mean=1.0)
        vals.append(abs(solve_Yp(sys, 3j, solve_stieltjes(sys, 3j))))
    assert vals[0] > vals[1] > vals[2]
    assert all(v <= 5 * (1 / p + math.sqrt(p / (p * p))) for v, p in zip(vals, (25, 100, 400)))


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.25, 2.0])
def test_variance_square(lam):
    sys = SpectralSystem(np.ones(10), np.array([math.sqrt(lam)]), p=10, n=10_000)
    assert variance_general(sys, "x2") == pytest.approx(4 * lam * lam, rel=1e-8)


def test_variance_kurtosis_term_vanishes_for_gaussian():
    sv = np.diag(np.linspace(0.2, 1.8, 50))
    sys = SpectralSystem.matrix_variate(sv, 50, 50, 3.0)
    lam = sys.lambda_bar_B2
    assert variance_general(sys, "x") == pytest.approx(variance_general(SpectralSystem(np.ones(50), np.array([math.sqrt(lam)]), 50, 2500), "x"))


@pytest.mark.parametrize("f", ["x2", "x3", "exp"])
def test_variance_series_against_double_integral(f):
    sys = system(50, 50, 50, 3.0, block_sigma_v(50))
    assert variance_general(sys, f) == pytest.approx(variance_quadrature(sys, f, n=200), rel=1e-3)


def test_variance_of_trace_monte_carlo():
    p = q = T = 100
    sys = system(p, q, T, 3.0)
    model = KroneckerModel(np.eye(p), np.eye(q), EntryLaw.gaussian())
    tr = np.array([np.trace(renormalized_cov(generate_dataset(model, T, 21, r))) for r in range(400)])
    var = variance_general(sys, "x")
    # sampling sd of a variance estimate with 400 draws is about 7%
    assert tr.var(ddof=1) == pytest.approx(var, rel=0.25)


def test_limiting_moments_for_square_match_closed_form():
    sv = block_sigma_v(60)
    mp = limiting_moments(system(60, 60, 60, 5.0, sv), "x2")
    ref = closed_form_moments(60, 60, sv, 5.0)
    assert mp.mu == pytest.approx(ref.mu, rel=1e-4)
    assert mp.sigma2 == pytest.approx(ref.sigma2, rel=1e-8)


def test_x3_center_monte_carlo():
    p = q = T = 40
    sys = system(p, q, T)
    mp = limiting_moments(sys, "x3")
    model = KroneckerModel(np.eye(p), np.eye(q), EntryLaw.gaussian())
    vals = np.array([lss(renormalized_cov(generate_dataset(model, T, 31, r)), "x3") for r in range(600)])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - mp.mu) < 4 * se + 0.1 * math.sqrt(mp.sigma2)


def test_kernel_paths_agree():
    sys = system(100, 100, 100, 1.0, block_sigma_v(100))
    a = kernel_Lambda(sys, 3j, 2 + 3j, "general")
    b = kernel_Lambda(sys, 3j, 2 + 3j, "identity")
    assert abs(a - b) < 1e-6 * max(1.0, abs(b))


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(0.5, 3), st.floats(-3, 3), st.floats(0.5, 3))
def test_kernel_symmetry_and_conjugation(x1, y1, x2, y2):
    sys = SpectralSystem(np.linspace(0.5, 1.5, 8), np.array([0.5, 1.5]), p=8, n=800, nu4=2.0)
    z1, z2 = complex(x1, y1), complex(x2, y2)
    k = kernel_Lambda(sys, z1, z2)
    assert kernel_Lambda(sys, z2, z1) == pytest.approx(k, rel=1e-6, abs=1e-8)
    assert kernel_Lambda(sys, z1.conjugate(), z2.conjugate()) == pytest.approx(k.conjugate(), rel=1e-6, abs=1e-8)


def test_quadratic_residual_decreases():
    res = [cor2_residual(p, p * p)[0] for p in (100, 400, 1600)]
    assert all(r <= 10 / p for r, p in zip(res, (100, 400, 1600)))
    assert res[0] > res[1] > res[2]
