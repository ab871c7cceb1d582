import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from isobeam.errors import (
    DimensionMismatch,
    InvalidLoadFactor,
    InvalidNoise,
    NonConvergence,
    UnsupportedFullStream,
)
from isobeam.fixed_point import (
    SolverConfig,
    fading_equations,
    solve_fading,
    solve_full_stream,
    solve_quasi_static,
    solve_quasi_static_iid,
    solve_variance_profile,
)

from conftest import random_psd


def mp_zeta(sigma2):
    return (-1.0 + np.sqrt(1.0 + 4.0 / sigma2)) / 2.0


# --- independent oracles ---------------------------------------------------

def oracle_small_instance():
    """N=2, N_1=2, n_1=1, R=I, P=1, sigma2=1.

    a = 1 / (1 + a_bar) and a_bar = (1/2) / (1 - a a_bar + a); eliminate a
    and find the root of the scalar equation in a_bar on (0, 1/2).
    """
    def f(ab):
        a = 1.0 / (1.0 + ab)
        return ab - 0.5 / (1.0 - a * ab + a)

    ab = brentq(f, 1e-9, 0.5, xtol=1e-15)
    return 1.0 / (1.0 + ab), ab


def oracle_qs_residual(r, p, n_ant, sigma2, a, ab):
    """Evaluate both equations with dense inverses, independently of the solver."""
    n = r[0].shape[0]
    m = sum(abk * rk for abk, rk in zip(ab, r)) + sigma2 * np.eye(n)
    inv = np.linalg.inv(m)
    res = 0.0
    for k, rk in enumerate(r):
        a_rhs = np.trace(rk @ inv).real / n
        cb = n_ant[k] / n
        d = np.diag((cb - a[k] * ab[k]) * np.ones(len(p[k])) + a[k] * np.asarray(p[k]))
        ab_rhs = np.trace(np.diag(p[k]) @ np.linalg.inv(d)).real / n
        res = max(res, abs(a[k] - a_rhs), abs(ab[k] - ab_rhs))
    return res


# --- quasi-static ----------------------------------------------------------

def test_small_instance_matches_oracle_and_closed_form():
    sol = solve_quasi_static([np.eye(2)], [[1.0]], [2], 1.0)
    a, ab = oracle_small_instance()
    assert abs(a - 0.75) < 1e-12 and abs(ab - 1 / 3) < 1e-12
    assert abs(sol.a[0] - 0.75) < 1e-10
    assert abs(sol.a_bar[0] - 1 / 3) < 1e-10
    assert sol.residual <= 1e-10


def test_small_instance_grid_search():
    # coarse-to-fine grid over the admissible region a a_bar < c c_bar = 1/2
    best = None
    for _ in range(1):
        a_grid = np.linspace(0.01, 1.0, 2001)
        ab_grid = np.linspace(0.0, 0.5, 2001)
        A, AB = np.meshgrid(a_grid, ab_grid)
        ok = A * AB < 0.5
        err = np.abs(A - 1 / (1 + AB)) + np.abs(AB - 0.5 / (1 - A * AB + A))
        err[~ok] = np.inf
        i = np.unravel_index(np.argmin(err), err.shape)
        best = (A[i], AB[i])
    assert best[0] == pytest.approx(0.75, abs=1e-3)
    assert best[1] == pytest.approx(1 / 3, abs=1e-3)


def test_zero_power_gives_zero_a_bar():
    r = [np.eye(3)]
    sol = solve_quasi_static(r, [[0.0, 0.0]], [3], 0.5)
    assert sol.a_bar[0] == 0.0
    assert sol.a[0] == pytest.approx(1 / 0.5)


def test_full_stream_user_is_fixed_to_power():
    sol = solve_quasi_static([np.eye(3)], [[2.0, 2.0, 2.0]], [3], 1.0)
    assert sol.a_bar[0] == 2.0
    assert sol.full_stream == (True,)
    assert sol.a[0] == pytest.approx(1 / 3)


def test_full_stream_nonuniform_power_rejected():
    with pytest.raises(UnsupportedFullStream):
        solve_quasi_static([np.eye(2)], [[1.0, 2.0]], [2], 1.0)
    with pytest.raises(UnsupportedFullStream):
        solve_full_stream([[1.0, 2.0]], [2])


def test_full_stream_disallowed():
    with pytest.raises(InvalidLoadFactor):
        solve_quasi_static([np.eye(2)], [[1.0, 1.0]], [2], 1.0, allow_full_stream=False)


def test_full_stream_rank_check():
    # a rank-3 R_k cannot come from a 3 x 2 channel
    with pytest.raises(DimensionMismatch):
        solve_quasi_static([np.eye(3)], [[1.0, 1.0]], [2], 1.0)


def test_solve_full_stream_lists_only_full_users():
    assert solve_full_stream([[1.0], [3.0, 3.0]], [2, 2]) == {1: 3.0}


@pytest.mark.parametrize("sigma2", [0.0, -1.0, np.nan])
def test_invalid_noise(sigma2):
    with pytest.raises(InvalidNoise):
        solve_quasi_static([np.eye(2)], [[1.0]], [2], sigma2)


def test_too_many_streams():
    with pytest.raises(InvalidLoadFactor):
        solve_quasi_static([np.eye(2)], [[1.0, 1.0, 1.0]], [2], 1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        solve_quasi_static([np.eye(2), np.eye(3)], [[1.0], [1.0]], [2, 2], 1.0)


def test_iteration_cap_raises():
    with pytest.raises(NonConvergence):
        solve_quasi_static([np.eye(4)], [[1.0]], [4], 0.01, SolverConfig(max_outer=2))


def test_iid_variant_closed_form_and_gap():
    iid = solve_quasi_static_iid([np.eye(2)], [[1.0]], [2], 1.0)
    # a = 1 / (1 + a_bar), a_bar = (1/2) / (a + 1)  =>  a^2 + 0.5 a - 1 = 0 ... solved below
    a_exact = (-0.5 + np.sqrt(0.25 + 4.0)) / 2.0
    assert iid.a[0] == pytest.approx(a_exact, abs=1e-10)
    assert iid.a_bar[0] == pytest.approx(0.5 / (a_exact + 1.0), abs=1e-10)
    haar = solve_quasi_static([np.eye(2)], [[1.0]], [2], 1.0)
    assert abs(haar.a_bar[0] - iid.a_bar[0]) > 1e-3


@st.composite
def qs_scenarios(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    g = np.random.default_rng(seed)
    n = draw(st.integers(2, 10))
    k = draw(st.integers(1, 3))
    n_ant = [draw(st.integers(1, 12)) for _ in range(k)]
    p = []
    for m in n_ant:
        nk = draw(st.integers(1, m))
        if nk == m:
            p.append(np.full(nk, g.uniform(0.1, 2.0)))
        else:
            p.append(g.uniform(0.0, 2.0, nk))
    r = [random_psd(g, n, rank=min(n, m)) for m in n_ant]
    sigma2 = float(10 ** g.uniform(-1.5, 1.0))
    return r, p, n_ant, sigma2


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(qs_scenarios())
def test_quasi_static_invariants(case):
    r, p, n_ant, sigma2 = case
    sol = solve_quasi_static(r, p, n_ant, sigma2)
    assert sol.residual <= 1e-10
    assert np.all(sol.a >= 0) and np.all(sol.a_bar >= 0)
    prod = sol.a * sol.a_bar
    bound = np.where(sol.full_stream, sol.c_bar, sol.c * sol.c_bar)
    assert np.all(prod < bound + 1e-12)
    assert oracle_qs_residual(r, p, n_ant, sigma2, sol.a, sol.a_bar) < 1e-8
    n = sol.n_rx
    for k, pk in enumerate(p):
        u = sol.c_bar[k] - prod[k]
        total = ((n_ant[k] - len(pk)) / u + np.sum(1.0 / (u + sol.a[k] * pk))) / n
        assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=15, deadline=None)
@given(qs_scenarios(), st.integers(0, 1000))
def test_quasi_static_restart_independence(case, seed):
    r, p, n_ant, sigma2 = case
    base = solve_quasi_static(r, p, n_ant, sigma2)
    g = np.random.default_rng(seed)
    init = g.uniform(0, 3.0 / sigma2, len(p))
    other = solve_quasi_static(r, p, n_ant, sigma2, init=init)
    np.testing.assert_allclose(other.a, base.a, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(other.a_bar, base.a_bar, rtol=1e-8, atol=1e-10)


def test_more_noise_means_smaller_a():
    g = np.random.default_rng(3)
    r = [random_psd(g, 6), random_psd(g, 6)]
    p = [np.ones(2), np.ones(3)]
    grid = [0.1, 0.5, 1.0, 5.0]
    a = [solve_quasi_static(r, p, [4, 5], s).a for s in grid]
    assert all(np.all(x > y) for x, y in zip(a, a[1:]))


# --- variance profile ------------------------------------------------------

@pytest.mark.parametrize("sigma2", [0.1, 1.0, 10.0])
def test_variance_profile_marcenko_pastur(sigma2):
    n = 6
    sol = solve_variance_profile([np.eye(n)] * n, sigma2)
    np.testing.assert_allclose(sol.delta, mp_zeta(sigma2), atol=1e-9)


def test_variance_profile_single_column_bisection():
    n, sigma2 = 5, 0.3
    sol = solve_variance_profile([np.eye(n)], sigma2)
    # delta = (1/N) tr T, T = (1/(N(1+delta)) + sigma2)^-1 I
    root = brentq(lambda d: d - 1.0 / (1.0 / (n * (1.0 + d)) + sigma2), 0.0, 1.0 / sigma2,
                  xtol=1e-15)
    assert sol.delta[0] == pytest.approx(root, abs=1e-10)


def test_variance_profile_zero_profile():
    sol = solve_variance_profile([np.zeros((3, 3))] * 2, 1.0)
    np.testing.assert_array_equal(sol.delta, 0.0)


# --- fading -----------------------------------------------------------------

@pytest.mark.parametrize("sigma2", [0.1, 1.0, 10.0])
def test_fading_full_stream_marcenko_pastur(sigma2):
    n = 8
    sol = solve_fading([[np.eye(n)] * n], [np.ones(n)], sigma2)
    assert sol.b_bar[0] == 1.0
    np.testing.assert_allclose(sol.zeta[0], mp_zeta(sigma2), atol=1e-9)


def test_fading_reduces_to_variance_profile_when_full_stream():
    g = np.random.default_rng(4)
    cols = [random_psd(g, 5) for _ in range(5)]
    f = solve_fading([cols], [np.full(5, 2.0)], 0.7)
    v = solve_variance_profile([2.0 * c for c in cols], 0.7)
    np.testing.assert_allclose(2.0 * f.zeta[0], v.delta, rtol=1e-9)


def random_fading(g, n, k):
    n_ant = g.integers(2, 7, k)
    r = [[random_psd(g, n) * g.uniform(0.2, 1.5) for _ in range(m)] for m in n_ant]
    p = [g.uniform(0.1, 2.0, g.integers(1, m)) for m in n_ant]
    return r, p


@pytest.mark.parametrize("seed", range(8))
def test_fading_invariants(seed):
    g = np.random.default_rng(seed)
    r, p = random_fading(g, int(g.integers(3, 9)), int(g.integers(1, 4)))
    sigma2 = float(10 ** g.uniform(-1, 0.5))
    sol = solve_fading(r, p, sigma2)
    assert sol.residual <= 1e-10
    b_rhs, bb_rhs, z_rhs = fading_equations(r, p, sol.b, sol.b_bar, sol.zeta, sigma2)
    np.testing.assert_allclose(b_rhs, sol.b, rtol=1e-9)
    np.testing.assert_allclose(bb_rhs, sol.b_bar, rtol=1e-9)
    assert np.all(sol.b * sol.b_bar < sol.c * sol.c_bar)
    n = sol.n_rx
    for k, pk in enumerate(p):
        u = sol.c_bar[k] - sol.b[k] * sol.b_bar[k]
        total = ((len(r[k]) - len(pk)) / u + np.sum(1.0 / (u + sol.b[k] * pk))) / n
        assert total == pytest.approx(1.0, abs=1e-8)


def test_fading_restart_and_literal_schedule_agree():
    g = np.random.default_rng(21)
    r, p = random_fading(g, 6, 2)
    base = solve_fading(r, p, 0.2)
    literal = solve_fading(r, p, 0.2, SolverConfig(warm_start=False))
    other = solve_fading(r, p, 0.2, init=[3.0, 0.1], init_bar=[0.5, 1.0])
    for sol in (literal, other):
        np.testing.assert_allclose(sol.b, base.b, rtol=1e-8)
        np.testing.assert_allclose(sol.b_bar, base.b_bar, rtol=1e-8)
        for z1, z2 in zip(sol.zeta, base.zeta):
            np.testing.assert_allclose(z1, z2, rtol=1e-8)


def test_fading_zero_correlation_columns():
    sol = solve_fading([[np.zeros((3, 3))] * 3], [np.ones(2)], 1.0)
    np.testing.assert_array_equal(sol.zeta[0], 0.0)
    assert sol.b[0] == 0.0


def test_fading_iid_matches_quasi_static_large_system_limit():
    # with R_kj = I the fading system and the quasi-static one with R = (N_k/N) I coincide
    n, m, nk, sigma2 = 6, 4, 2, 0.5
    f = solve_fading([[np.eye(n)] * m], [np.ones(nk)], sigma2)
    z = f.zeta[0][0]
    assert np.allclose(f.zeta[0], z)
    assert f.b[0] == pytest.approx(m / n * z / (1 + f.b_bar[0] * z))
