"""Sobolev kernel, covariance eigen-system and penalized slope fit."""

import math

import numpy as np
import pytest

from flmcheck import (
    GridFunction,
    NumericError,
    ProcessKind,
    build_eigensystem,
    calibrate_noise,
    covariance_estimate,
    default_lambda,
    estimate_slope,
    gcv_select_lambda,
    generate_dataset,
    make_uniform_grid,
    sample_paths,
    scenario,
    scenario_beta,
    smooth_paths,
    sobolev_kernel,
)
from flmcheck.rkhs import DEFAULT_LAMBDA_GRID, KernelMatrix, build_slope_design


def bernoulli_oracle(s, t):
    # independent closed form: K(s,t) = B2(s)B2(t)/4 - B4(|s-t|)/24
    b2 = lambda x: x**2 - x + 1.0 / 6.0
    b4 = lambda x: x**4 - 2 * x**3 + x**2 - 1.0 / 30.0
    return b2(s) * b2(t) / 4.0 - b4(abs(s - t)) / 24.0


def test_kernel_matches_bernoulli_form():
    g = make_uniform_grid(9)
    K = sobolev_kernel(g)
    want = np.array([[bernoulli_oracle(s, t) for t in g.nodes] for s in g.nodes])
    assert np.allclose(K.entries, want, atol=1e-14)
    assert K.entries[0, 0] == pytest.approx(1.0 / 120.0, abs=1e-13)


def test_kernel_is_positive_semidefinite():
    g = make_uniform_grid(41)
    K = sobolev_kernel(g)
    sw = np.sqrt(g.weights)
    vals = np.linalg.eigvalsh(sw[:, None] * K.entries * sw[None, :])
    assert vals.min() > -1e-10


def test_kernel_order_restriction():
    with pytest.raises(ValueError):
        sobolev_kernel(make_uniform_grid(5), m=3)


def test_kernel_matrix_validation():
    g = make_uniform_grid(3)
    with pytest.raises(ValueError, match="symmetric"):
        KernelMatrix(np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), g)
    with pytest.raises(ValueError, match="finite"):
        KernelMatrix(np.full((3, 3), np.nan), g)


def test_covariance_of_identical_curves_vanishes():
    g = make_uniform_grid(12)
    mat = np.tile(np.sin(g.nodes), (4, 1))
    C = covariance_estimate(mat, g)
    assert np.allclose(C.entries, 0.0, atol=1e-15)


def test_covariance_brownian_motion_variance(grid101, bm_cov_101):
    # Var BM(0.5) = 0.5; node 50 sits at t = 0.5
    assert abs(grid101.nodes[50] - 0.5) < 1e-12
    assert bm_cov_101.entries[50, 50] == pytest.approx(0.5, abs=0.01)


def test_covariance_needs_two_curves():
    g = make_uniform_grid(6)
    with pytest.raises(ValueError):
        covariance_estimate(np.ones((1, 6)), g)


@pytest.fixture(scope="module")
def small_design():
    g = make_uniform_grid(25)
    paths = sample_paths(ProcessKind.bm(), g, np.random.default_rng(21), 40)
    sm, _, _ = smooth_paths(paths, g)
    K = sobolev_kernel(g)
    C = covariance_estimate(sm, g)
    return g, sm, K, C


def test_eigensystem_is_covariance_orthonormal(small_design):
    g, _, K, C = small_design
    es = build_eigensystem(K, C, g)
    wphi = es.phi_matrix * g.weights[None, :]
    gram = wphi @ C.entries @ wphi.T
    assert np.allclose(gram, np.eye(es.nu_max), atol=1e-6)


def test_eigensystem_joint_diagonalization(small_design):
    # the eigenfunctions must diagonalize the penalized operator as well:
    # recovering the raw eigenvector coordinates through the half-operator
    # and rescaling by sqrt(1 + rho*) has to give back the identity
    g, _, K, C = small_design
    es = build_eigensystem(K, C, g)
    sw = np.sqrt(g.weights)
    kt = sw[:, None] * K.entries * sw[None, :]
    ct = sw[:, None] * C.entries * sw[None, :]
    vals, vecs = np.linalg.eigh((kt + kt.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    kh = (vecs * np.sqrt(vals)) @ vecs.T
    t_mat = kh @ np.linalg.solve(kh @ ct @ kh + np.eye(g.M), kh)
    vals, vecs = np.linalg.eigh((t_mat + t_mat.T) / 2.0)
    th = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    phit = es.phi_matrix.T * sw[:, None]
    half = np.linalg.lstsq(th, phit, rcond=1e-12)[0]
    scale = np.sqrt(1.0 + es.rho_star)
    normalized = (half.T @ half) / scale[:, None] / scale[None, :]
    assert np.allclose(normalized, np.eye(es.nu_max), atol=1e-5)


def test_eigensystem_identity_operators():
    # K = C = W^(-1) conjugates to the identity, where every direction has
    # rho~ = 1/2, i.e. rho* = 1 exactly
    g = make_uniform_grid(15)
    ident = np.diag(1.0 / g.weights)
    K = KernelMatrix(ident, g)
    C = KernelMatrix(ident, g)
    es = build_eigensystem(K, C, g)
    assert es.nu_max == g.M
    assert np.allclose(es.rho_star, 1.0, atol=1e-12)


def test_eigensystem_rho_star_ascending(small_design):
    g, _, K, C = small_design
    es = build_eigensystem(K, C, g)
    assert np.all(es.rho_star >= 0.0)
    assert np.all(np.diff(es.rho_star) >= -1e-9)
    assert es.nu_max <= np.linalg.matrix_rank(C.entries)
    assert len(es.phi_star) == es.nu_max


def test_eigensystem_rejects_zero_covariance():
    g = make_uniform_grid(10)
    K = sobolev_kernel(g)
    C = KernelMatrix(np.zeros((10, 10)), g)
    with pytest.raises(ValueError, match="no positive eigenvalue"):
        build_eigensystem(K, C, g)


def test_eigensystem_grid_mismatch():
    g, h = make_uniform_grid(10), make_uniform_grid(11)
    with pytest.raises(ValueError):
        build_eigensystem(sobolev_kernel(g), KernelMatrix(np.eye(11), h), g)


# ---------------------------------------------------------------------------
# slope estimation
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def noiseless_fit():
    g = make_uniform_grid(41)
    paths = sample_paths(ProcessKind.bm(), g, np.random.default_rng(7), 30)
    sm, _, _ = smooth_paths(paths, g)
    K = sobolev_kernel(g)
    coef = np.zeros(30)
    coef[:5] = [0.8, -0.5, 0.3, 0.2, -0.1]
    beta0 = 0.4 - 0.7 * g.nodes + K.entries @ (g.weights * (sm.T @ coef))
    y = sm @ (g.weights * beta0)
    return g, sm, K, beta0, y


def test_noiseless_representable_slope_is_recovered(noiseless_fit):
    g, sm, K, beta0, y = noiseless_fit
    est = estimate_slope(sm, y, K, 1e-10, grid=g)
    fit_rel = np.max(np.abs(est.fitted - y)) / np.max(np.abs(y))
    assert fit_rel < 1e-4
    num = np.sum(g.weights * (est.beta_hat.values - beta0) ** 2)
    assert math.sqrt(num / np.sum(g.weights * beta0**2)) < 1e-4


def test_zero_responses_give_zero_slope(noiseless_fit):
    g, sm, K, _, _ = noiseless_fit
    est = estimate_slope(sm, np.zeros(30), K, 1e-3, grid=g)
    assert np.allclose(est.beta_hat.values, 0.0, atol=1e-12)
    assert np.allclose(est.fitted, 0.0, atol=1e-12)


def test_fit_decomposition_is_exact(noiseless_fit):
    g, sm, K, _, y = noiseless_fit
    rng = np.random.default_rng(99)
    yy = y + rng.standard_normal(30)
    est = estimate_slope(sm, yy, K, 0.05, grid=g)
    assert np.array_equal(est.fitted, yy - est.residuals)
    assert isinstance(est.beta_hat, GridFunction)
    assert est.edf == pytest.approx(est.design.edf(0.05))


def test_fit_is_linear_in_responses(noiseless_fit):
    g, sm, K, _, _ = noiseless_fit
    design = build_slope_design(sm, K, g)
    rng = np.random.default_rng(14)
    y1, y2 = rng.standard_normal((2, 30))
    b1 = estimate_slope(sm, y1, K, 0.01, design=design).beta_hat.values
    b2 = estimate_slope(sm, y2, K, 0.01, design=design).beta_hat.values
    combo = estimate_slope(sm, 2.0 * y1 - 0.5 * y2, K, 0.01, design=design).beta_hat.values
    assert np.allclose(combo, 2.0 * b1 - 0.5 * b2, atol=1e-9)


def test_slope_consistency_under_gcv():
    # 50 replicates at n=250: the relative L2 error of the fitted slope
    # against the data-generating one must stay small on average
    g = make_uniform_grid(30)
    K = sobolev_kernel(g)
    spec = scenario("S1")
    sig2 = calibrate_noise(spec, g, np.random.default_rng(404))
    beta_true = scenario_beta("S1", g).values
    den = math.sqrt(float(np.sum(g.weights * beta_true**2)))
    errs = []
    for rep in range(50):
        ds = generate_dataset(spec, 0, 250, 30, seed=4000 + rep, sigma2=sig2)
        sm, _, _ = smooth_paths(ds.curves, ds.grid)
        lam = gcv_select_lambda(sm, ds.responses, K, grid=g)
        est = estimate_slope(sm, ds.responses, K, lam, grid=g)
        diff = est.beta_hat.values - beta_true
        errs.append(math.sqrt(float(np.sum(g.weights * diff**2))) / den)
    assert float(np.mean(errs)) < 0.25


def test_degenerate_curves_raise(noiseless_fit):
    g, _, K, _, _ = noiseless_fit
    with pytest.raises(NumericError, match="rank deficient"):
        estimate_slope(np.zeros((30, 41)), np.ones(30), K, 0.1, grid=g)


def test_lambda_must_be_positive(noiseless_fit):
    g, sm, K, _, y = noiseless_fit
    with pytest.raises(ValueError, match="positive"):
        estimate_slope(sm, y, K, 0.0, grid=g)


def test_gcv_noise_prefers_heaviest_penalty():
    g = make_uniform_grid(30)
    K = sobolev_kernel(g)
    top = DEFAULT_LAMBDA_GRID[-1]
    hits = 0
    for rep in range(100):
        rng = np.random.default_rng(2000 + rep)
        paths = sample_paths(ProcessKind.bm(), g, rng, 100)
        sm, _, _ = smooth_paths(paths, g)
        hits += gcv_select_lambda(sm, rng.standard_normal(100), K, grid=g) == top
    assert hits >= 75


def test_gcv_signal_prefers_light_penalty():
    g = make_uniform_grid(30)
    K = sobolev_kernel(g)
    med = float(np.median(DEFAULT_LAMBDA_GRID))
    for rep in range(20):
        rng = np.random.default_rng(2500 + rep)
        paths = sample_paths(ProcessKind.bm(), g, rng, 100)
        sm, _, _ = smooth_paths(paths, g)
        y = sm @ (g.weights * np.sin(2 * np.pi * g.nodes)) + 0.001 * rng.standard_normal(100)
        assert gcv_select_lambda(sm, y, K, grid=g) < med


def test_gcv_selection_stays_on_the_grid(noiseless_fit):
    g, sm, K, _, y = noiseless_fit
    lam = gcv_select_lambda(sm, y + 0.1, K, grid=g)
    assert lam in DEFAULT_LAMBDA_GRID
    with pytest.raises(ValueError, match="nonempty and positive"):
        gcv_select_lambda(sm, y, K, grid=g, lambda_grid=np.array([]))
    with pytest.raises(ValueError, match="nonempty and positive"):
        gcv_select_lambda(sm, y, K, grid=g, lambda_grid=np.array([-1.0, 1.0]))


def test_effective_dof_decrease_with_penalty(noiseless_fit):
    g, sm, K, _, _ = noiseless_fit
    design = build_slope_design(sm, K, g)
    edfs = [design.edf(lam) for lam in np.logspace(-8, 2, 11)]
    assert all(a > b for a, b in zip(edfs, edfs[1:]))
    assert edfs[-1] >= design.m


def test_default_lambda_rate():
    assert default_lambda(100) == pytest.approx(100.0 ** (-6.0 / 7.0), rel=1e-15)
    assert default_lambda(64, k=2) == pytest.approx(64.0 ** (-0.8), rel=1e-15)
    with pytest.raises(ValueError):
        default_lambda(0)
    with pytest.raises(ValueError):
        default_lambda(10, k=0)
