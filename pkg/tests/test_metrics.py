import numpy as np
import pytest
from scipy.integrate import quad

from isobeam.errors import NotPD
from isobeam.fixed_point import (
    SolverConfig,
    solve_fading,
    solve_quasi_static,
    solve_variance_profile,
)
from isobeam.metrics import (
    det_mmse_sum_rate,
    det_mutual_info,
    det_sinr,
    det_stieltjes,
    det_vn_variance_profile,
    metric_report,
    to_unit,
)

from conftest import random_psd

TIGHT = SolverConfig(tol=1e-13)


def verdu_square(rho):
    """Capacity and per-stream MMSE SINR of a square i.i.d. channel, per receive dimension."""
    f = (np.sqrt(4.0 * rho + 1.0) - 1.0) ** 2
    cap = 2.0 * np.log(1.0 + rho - f / 4.0) - f / (4.0 * rho)
    return cap, rho - f / 4.0


@pytest.fixture
def qs_case():
    g = np.random.default_rng(1)
    r = [random_psd(g, 6), random_psd(g, 6)]
    p = [np.array([1.0, 0.5]), np.array([2.0, 1.0, 1.0])]
    return r, p, [4, 5]


def test_small_instance_closed_form():
    sol = solve_quasi_static([np.eye(2)], [[1.0]], [2], 1.0, TIGHT)
    assert det_mutual_info(sol, [np.eye(2)], [[1.0]]) == pytest.approx(np.log(2) / 2, abs=1e-12)
    # gamma = p a / (c_bar - a a_bar) = 0.75 / 0.75
    assert det_sinr(sol, 1.0, 0) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("snr_db", [-5.0, 0.0, 10.0, 20.0])
def test_marcenko_pastur_closed_forms(snr_db):
    n = 8
    sigma2 = 10 ** (-snr_db / 10)
    r = [[np.eye(n)] * n]
    p = [np.ones(n)]
    sol = solve_fading(r, p, sigma2)
    cap, sinr = verdu_square(1.0 / sigma2)
    assert det_mutual_info(sol, r, p) == pytest.approx(cap, abs=1e-9)
    assert det_mmse_sum_rate(sol, p) == pytest.approx(np.log1p(sinr), abs=1e-9)


def test_full_stream_quasi_static_is_direct_logdet():
    g = np.random.default_rng(5)
    r = [random_psd(g, 5, rank=3), random_psd(g, 5, rank=4)]
    p = [np.full(3, 0.7), np.full(4, 1.3)]
    sigma2 = 0.4
    sol = solve_quasi_static(r, p, [3, 4], sigma2)
    m = np.eye(5) + (0.7 * r[0] + 1.3 * r[1]) / sigma2
    assert det_mutual_info(sol, r, p) == pytest.approx(np.linalg.slogdet(m)[1] / 5, abs=1e-12)


def test_zero_power_gives_zero(qs_case):
    r, _, na = qs_case
    p = [np.zeros(2), np.zeros(3)]
    sol = solve_quasi_static(r, p, na, 1.0)
    assert det_mutual_info(sol, r, p) == pytest.approx(0.0, abs=1e-14)
    assert det_mmse_sum_rate(sol, p) == 0.0


def test_derivative_identity(qs_case):
    r, p, na = qs_case
    s, h = 0.5, 1e-5

    def mi(x):
        return det_mutual_info(solve_quasi_static(r, p, na, x, TIGHT), r, p)

    fd = (mi(s + h) - mi(s - h)) / (2 * h)
    m = det_stieltjes(solve_quasi_static(r, p, na, s, TIGHT), r)
    assert fd == pytest.approx(m - 1.0 / s, abs=1e-7)


def test_shannon_transform_integral(qs_case):
    r, p, na = qs_case
    s = 0.5

    def integrand(u):
        t = s + u
        return 1.0 / t - det_stieltjes(solve_quasi_static(r, p, na, t, TIGHT), r)

    val, _ = quad(integrand, 0, np.inf, limit=200, epsabs=1e-12)
    mi = det_mutual_info(solve_quasi_static(r, p, na, s, TIGHT), r, p)
    assert val == pytest.approx(mi, abs=1e-8)


def fading_stieltjes(sol, r):
    n = sol.n_rx
    acc = sum(sol.b_bar[k] * np.asarray(rkj) / (1 + sol.b_bar[k] * z)
              for k, rk in enumerate(r) for rkj, z in zip(rk, sol.zeta[k]))
    return np.trace(np.linalg.inv(acc / n + sol.sigma2 * np.eye(n))).real / n


def test_fading_derivative_identity():
    g = np.random.default_rng(8)
    r = [[random_psd(g, 5) for _ in range(4)], [random_psd(g, 5) for _ in range(3)]]
    p = [np.array([1.0, 2.0]), np.array([0.5])]
    s, h = 0.3, 1e-5

    def mi(x):
        return det_mutual_info(solve_fading(r, p, x, TIGHT), r, p)

    fd = (mi(s + h) - mi(s - h)) / (2 * h)
    m = fading_stieltjes(solve_fading(r, p, s, TIGHT), r)
    assert fd == pytest.approx(m - 1.0 / s, abs=1e-7)


def test_monotone_in_snr_and_linear_bound(qs_case):
    r, p, na = qs_case
    grid = 10 ** (-np.arange(-10, 31, 5) / 10)
    mi = [det_mutual_info(solve_quasi_static(r, p, na, s), r, p) for s in grid]
    rate = [det_mmse_sum_rate(solve_quasi_static(r, p, na, s), p) for s in grid]
    assert np.all(np.diff(mi) > 0) and np.all(np.diff(rate) > 0)
    n = 6
    for s, v in zip(grid, mi):
        bound = sum(np.sum(pk) * np.trace(rk).real / m for rk, pk, m in zip(r, p, na)) / (n * s)
        assert 0 < v <= bound


def test_rate_not_above_mutual_info(qs_case):
    r, p, na = qs_case
    for s in (0.01, 0.3, 3.0):
        sol = solve_quasi_static(r, p, na, s)
        assert det_mmse_sum_rate(sol, p) <= det_mutual_info(sol, r, p) + 1e-12


def test_user_subset_rate(qs_case):
    r, p, na = qs_case
    sol = solve_quasi_static(r, p, na, 0.5)
    total = det_mmse_sum_rate(sol, p)
    parts = det_mmse_sum_rate(sol, p, users=[0]) + det_mmse_sum_rate(sol, p, users=[1])
    assert parts == pytest.approx(total, rel=1e-14)


def test_variance_profile_matches_fading_full_stream():
    g = np.random.default_rng(9)
    cols = [random_psd(g, 5) for _ in range(5)]
    f = solve_fading([cols], [np.ones(5)], 0.6, TIGHT)
    v = solve_variance_profile(cols, 0.6, TIGHT)
    assert det_vn_variance_profile(v, cols) == pytest.approx(
        det_mutual_info(f, [cols], [np.ones(5)]), abs=1e-11)


def test_metric_report(qs_case):
    r, p, na = qs_case
    sol = solve_quasi_static(r, p, na, 0.5)
    rep = metric_report(sol, r, p)
    assert rep.mutual_info == det_mutual_info(sol, r, p)
    assert [len(s) for s in rep.sinr] == [2, 3]
    assert rep.stieltjes > 0


def test_precoder_term_guard(qs_case):
    r, p, na = qs_case
    sol = solve_quasi_static(r, p, na, 0.5)
    sol.a_bar[0] = 10.0  # push the pair out of the admissible region
    with pytest.raises(NotPD):
        det_mutual_info(sol, r, p)


def test_units():
    assert to_unit(np.log(2.0), "bits") == pytest.approx(1.0)
    assert to_unit(1.5, "nats") == 1.5
    with pytest.raises(ValueError):
        to_unit(1.0, "dB")
