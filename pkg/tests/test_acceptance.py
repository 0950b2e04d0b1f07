"""End-to-end statistical batteries for the assembled pipeline.

The expensive whole-package checks live here: Monte Carlo size and
power of the hybrid test, the component-versus-hybrid comparison, the
grid-coarseness trends, spectral identities of the eigen-system, and
the hand-computable oracles the individual statistics must reproduce
exactly.  Everything is seeded, so reruns give the same tables; bands
are sized to Monte Carlo noise at the configured replicate counts.
"""

import math

import numpy as np
import pytest
from scipy import stats

from flmcheck import (
    ProcessKind,
    TestConfig,
    build_eigensystem,
    calibrate_noise,
    chi2_upper_tail,
    component_study_dataset,
    covariance_estimate,
    estimate_slope,
    generate_dataset,
    hybrid_test,
    indicative_operator,
    make_uniform_grid,
    null_reference_ridge,
    operator_spectrum,
    estimate_dimension,
    sample_paths,
    scenario,
    smooth_paths,
    sobolev_kernel,
    v0,
    v1,
)
from flmcheck.rkhs import DEFAULT_LAMBDA_GRID, build_slope_design


# ---------------------------------------------------------------------------
# battery: size and null law (S1, n=100, M=30, 1000 replicates)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def null_battery():
    spec = scenario("S1")
    g = make_uniform_grid(30)
    sigma2 = calibrate_noise(spec, g, np.random.default_rng(404))
    T, P, tv0 = [], [], []
    q0 = 0
    for rep in range(1000):
        ds = generate_dataset(spec, 0, 100, 30, seed=rep, sigma2=sigma2)
        r = hybrid_test(ds, TestConfig(ridge_seed=rep))
        T.append(r.T_n)
        P.append(r.p_value)
        tv0.append(r.diagnostics["t_v0"])
        q0 += r.q_hat == 0
    return {
        "T": np.array(T),
        "P": np.array(P),
        "tv0": np.array(tv0),
        "q0_pct": 100.0 * q0 / 1000,
        "sigma2": sigma2,
    }


def test_null_rejection_rate_near_nominal(null_battery):
    size = 100.0 * float(np.mean(null_battery["P"] < 0.05))
    assert 3.4 <= size <= 7.4


def test_null_statistic_follows_chi_squared(null_battery):
    ks = stats.kstest(null_battery["T"], stats.chi2(1).cdf)
    assert ks.statistic < 0.08


def test_null_p_values_are_uniform(null_battery):
    ks = stats.kstest(null_battery["P"], "uniform")
    assert ks.pvalue > 0.01


def test_null_standardized_statistic_has_unit_scale(null_battery):
    # the screened branch is a squared standardized mean, so its
    # average over null replicates must sit near 1
    mean_t = float(np.mean(null_battery["tv0"]))
    assert 0.75 <= mean_t <= 1.3


def test_null_dimension_screen_rarely_fires(null_battery):
    assert null_battery["q0_pct"] >= 95.0


def test_calibrated_noise_matches_analytic_value(null_battery):
    # signal-to-noise calibration on the reference grid: the S1 signal
    # variance has a closed form, putting sigma2 at 0.07228
    g = make_uniform_grid(101)
    sigma2 = calibrate_noise(scenario("S1"), g, np.random.default_rng(404))
    assert abs(sigma2 - 0.07228) / 0.07228 < 0.03
    assert abs(null_battery["sigma2"] - 0.07228) / 0.07228 < 0.03


# ---------------------------------------------------------------------------
# battery: power against fixed deviations (500 replicates per cell)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "sid,d,n,seed_base,low,high",
    [
        ("S1", 1, 100, 100_000, 91.7, 100.0),
        ("S4", 1, 100, 50_000_000, 38.4, 59.4),
        ("S8", 1, 250, 50_000_000, 89.3, 100.0),
    ],
)
def test_power_against_deviations(sid, d, n, seed_base, low, high):
    spec = scenario(sid)
    g = make_uniform_grid(30)
    sigma2 = calibrate_noise(spec, g, np.random.default_rng(404))
    rejections = 0
    for rep in range(500):
        ds = generate_dataset(spec, d, n, 30, seed=seed_base + rep, sigma2=sigma2)
        rejections += hybrid_test(ds, TestConfig(ridge_seed=rep)).reject
    rate = 100.0 * rejections / 500
    assert low <= rate <= high


# ---------------------------------------------------------------------------
# battery: hybrid against its two components (400 replicates per delta)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def component_battery():
    rows = {}
    for delta in (0.0, 0.4, 0.6, 0.8, 1.0):
        base = 500_000 + 1000 * int(round(10 * delta))
        hybrid = mean_only = pair_only = q0 = 0
        for rep in range(400):
            ds = component_study_dataset(delta, n=100, M=200, seed=base + rep)
            r = hybrid_test(ds, TestConfig(ridge_seed=rep))
            hybrid += r.reject
            mean_only += r.diagnostics["p_v0"] < 0.05
            pair_only += r.diagnostics["p_v1"] < 0.05
            q0 += r.q_hat == 0
        rows[delta] = tuple(100.0 * c / 400 for c in (hybrid, mean_only, pair_only, q0))
    return rows


def test_hybrid_power_dominates_both_components(component_battery):
    # at clear deviations the adaptive statistic must match or beat
    # each fixed component, up to Monte Carlo slack
    for delta in (0.6, 0.8, 1.0):
        hybrid, mean_only, pair_only, _ = component_battery[delta]
        assert hybrid >= mean_only - 3.0
        assert hybrid >= pair_only - 3.0


def test_hybrid_keeps_size_at_null_deviation(component_battery):
    hybrid, _, _, q0 = component_battery[0.0]
    assert hybrid <= 10.0
    assert q0 >= 95.0


def test_dimension_screen_tracks_deviation_strength(component_battery):
    q0_rates = [component_battery[d][3] for d in (0.0, 0.4, 0.6, 0.8, 1.0)]
    assert q0_rates[-1] <= 5.0
    assert all(a >= b for a, b in zip(q0_rates, q0_rates[1:]))


# ---------------------------------------------------------------------------
# battery: observation-grid coarseness (500 replicates per cell)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def gridsize_battery():
    scens = ("S2", "S4", "S6", "S8", "S9")
    g_ref = make_uniform_grid(101)
    sizes, powers = {}, {}
    for sid in scens:
        spec = scenario(sid)
        sigma2 = calibrate_noise(spec, g_ref, np.random.default_rng(404))
        for d, Ms, table in ((0, (8, 32), sizes), (1, (32, 64), powers)):
            for M in Ms:
                rej = 0
                for rep in range(500):
                    ds = generate_dataset(spec, d, 100, M, seed=3_000_000 + rep, sigma2=sigma2)
                    rej += hybrid_test(ds, TestConfig(ridge_seed=rep)).reject
                table[(sid, M)] = 100.0 * rej / 500
    return scens, sizes, powers


def test_size_distortion_shrinks_as_grid_refines(gridsize_battery):
    scens, sizes, _ = gridsize_battery
    coarse = np.mean([abs(sizes[(sid, 8)] - 5.0) for sid in scens])
    moderate = np.mean([abs(sizes[(sid, 32)] - 5.0) for sid in scens])
    assert coarse > moderate


def test_power_saturates_at_moderate_grids(gridsize_battery):
    scens, _, powers = gridsize_battery
    for sid in scens:
        assert abs(powers[(sid, 64)] - powers[(sid, 32)]) <= 3.0


# ---------------------------------------------------------------------------
# battery: eigen-system identities on synthetic Gaussian designs
# ---------------------------------------------------------------------------


def _gaussian_designs():
    for kind, seed in ((ProcessKind.bm(), 100), (ProcessKind.bm(), 101), (ProcessKind.ou(), 102)):
        g = make_uniform_grid(41)
        paths = sample_paths(kind, g, np.random.default_rng(seed), 60)
        sm, _, _ = smooth_paths(paths, g)
        K = sobolev_kernel(g)
        C = covariance_estimate(sm, g)
        yield g, K, C, build_eigensystem(K, C, g)


def test_eigensystem_is_covariance_orthonormal():
    for g, _, C, es in _gaussian_designs():
        k = min(10, es.nu_max)
        wphi = es.phi_matrix[:k] * g.weights[None, :]
        gram = wphi @ C.entries @ wphi.T
        assert np.max(np.abs(gram - np.eye(k))) < 1e-6


def test_eigensystem_diagonalizes_penalized_operator():
    # recovering the raw eigenvector coordinates through the
    # half-operator and rescaling by sqrt(1 + rho*) must return the
    # identity; this is the joint-diagonalization property in the only
    # numerically stable normalization (rho* spans ~9 decades here)
    for g, K, C, es in _gaussian_designs():
        k = min(10, es.nu_max)
        sw = np.sqrt(g.weights)
        kt = sw[:, None] * K.entries * sw[None, :]
        ct = sw[:, None] * C.entries * sw[None, :]
        vals, vecs = np.linalg.eigh((kt + kt.T) / 2.0)
        kh = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
        t_mat = kh @ np.linalg.solve(kh @ ct @ kh + np.eye(g.M), kh)
        vals, vecs = np.linalg.eigh((t_mat + t_mat.T) / 2.0)
        th = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
        phit = es.phi_matrix[:k].T * sw[:, None]
        half = np.linalg.lstsq(th, phit, rcond=1e-12)[0]
        scale = np.sqrt(1.0 + es.rho_star[:k])
        normalized = (half.T @ half) / scale[:, None] / scale[None, :]
        assert np.max(np.abs(normalized - np.eye(k))) < 1e-5


# ---------------------------------------------------------------------------
# battery: large-sample process oracles
# ---------------------------------------------------------------------------


def test_brownian_covariance_leading_eigenvalue(grid101, bm_cov_101):
    sw = np.sqrt(grid101.weights)
    lam1 = float(np.linalg.eigvalsh(sw[:, None] * bm_cov_101.entries * sw[None, :])[-1])
    want = (0.5 * np.pi) ** -2
    assert abs(lam1 - want) / want < 0.02


def test_ou_paths_have_stationary_variance():
    g = make_uniform_grid(101)
    paths = sample_paths(ProcessKind.ou(), g, np.random.default_rng(909), 100_000)
    node_vars = paths.var(axis=0)
    band = 3.0 * 1.5 * math.sqrt(2.0 / 100_000)
    assert float(np.max(np.abs(node_vars - 1.5))) < band


# ---------------------------------------------------------------------------
# battery: hand-computed oracles
# ---------------------------------------------------------------------------


def test_chi_squared_tail_reference_points():
    assert chi2_upper_tail(0.0) == 1.0
    assert chi2_upper_tail(3.841459) == pytest.approx(0.05, abs=1e-5)
    assert chi2_upper_tail(1.0) == pytest.approx(0.317311, abs=1e-6)


def test_weighted_mean_statistic_by_hand():
    g = make_uniform_grid(5)
    assert v0(np.array([2.0]), np.full((1, 5), 3.0), 0.01, grid=g) == pytest.approx(
        0.06, abs=1e-15
    )
    curves = np.vstack([np.full(5, 1.0), np.full(5, 2.0), np.full(5, 1.0)])
    got = v0(np.array([1.0, 0.5, -1.0]), curves, 0.01, grid=g)
    assert got == pytest.approx(0.01 / 3.0, abs=1e-15)


def test_pair_statistic_by_hand():
    got = v1(np.array([1.0, 2.0]), np.array([0.3, 0.7]), 0.5)
    want = 2.0 * stats.norm.pdf(-0.4 / 0.5) / 0.5
    assert got == pytest.approx(want, rel=1e-14)


def test_sobolev_kernel_closed_form_value():
    K = sobolev_kernel(make_uniform_grid(9))
    assert K.entries[0, 0] == pytest.approx(1.0 / 120.0, abs=1e-13)


def test_indicative_operator_by_hand():
    g = make_uniform_grid(3)
    x = np.array([1.0, 2.0, -1.0])
    op = indicative_operator(np.array([2.0]), x[None, :], g)
    assert np.allclose(op.entries, 14.0 * np.outer(x, x), atol=1e-12)


def test_dimension_screen_by_hand():
    from flmcheck.sdrdim import RidgePair

    assert estimate_dimension(np.zeros(4), RidgePair(0.1, 0.1)) == 0
    assert estimate_dimension(np.array([10.0, 0.001, 0.0]), RidgePair(0.1, 0.1)) == 1


def test_noise_free_ridge_floor():
    g = make_uniform_grid(12)
    curves = sample_paths(ProcessKind.bm(), g, np.random.default_rng(2), 25)
    ridge = null_reference_ridge(curves, 0.0, B=20, rng=np.random.default_rng(0), grid=g)
    assert ridge.c1 == 1.0 / math.sqrt(25)
    assert ridge.c2 == ridge.c1


def test_noiseless_representable_slope_is_recovered():
    g = make_uniform_grid(41)
    paths = sample_paths(ProcessKind.bm(), g, np.random.default_rng(7), 30)
    sm, _, _ = smooth_paths(paths, g)
    K = sobolev_kernel(g)
    coef = np.zeros(30)
    coef[:5] = [0.8, -0.5, 0.3, 0.2, -0.1]
    beta0 = 0.4 - 0.7 * g.nodes + K.entries @ (g.weights * (sm.T @ coef))
    y = sm @ (g.weights * beta0)
    est = estimate_slope(sm, y, K, 1e-10, grid=g)
    assert np.max(np.abs(est.fitted - y)) / np.max(np.abs(y)) < 1e-4


def test_gcv_curve_is_positive_and_finite():
    g = make_uniform_grid(21)
    paths = sample_paths(ProcessKind.bm(), g, np.random.default_rng(6), 30)
    sm, _, _ = smooth_paths(paths, g)
    design = build_slope_design(sm, sobolev_kernel(g), g)
    y = sm @ (g.weights * g.nodes) + 0.1 * np.random.default_rng(8).standard_normal(30)
    values = design.gcv_values(y, DEFAULT_LAMBDA_GRID)
    assert np.all(np.isfinite(values))
    assert np.all(values > 0.0)
