import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clockensemble.model import (
    ClockSpec,
    ConfigError,
    EnsembleConfig,
    diff_matrix,
    ensemble_matrices,
    ensemble_noise_cov,
    homogeneous_ensemble,
    jst_error_operators,
    kron_factor,
    observable_decomp,
    pinv_diff,
    process_noise_cov,
    projections,
    transition_matrix,
)

from conftest import random_weights
from oracles import noise_cov_quadrature

# frozen outputs of the Simpson quadrature oracle (tests/oracles.py)
FROZEN_Q = {
    ((0.0, 1.0), 1.0): [[1 / 3, 1 / 2], [1 / 2, 1.0]],
    ((0.0, 0.0, 1.0), 1.0): [[1 / 20, 1 / 8, 1 / 6], [1 / 8, 1 / 3, 1 / 2], [1 / 6, 1 / 2, 1.0]],
    ((0.3, 0.7, 1.1), 0.8): [
        [0.37748906666666665, 0.28032000000000007, 0.0938666666666667],
        [0.28032000000000007, 0.7477333333333334, 0.3520000000000001],
        [0.0938666666666667, 0.3520000000000001, 0.8800000000000001],
    ],
}


def test_transition_matrix_examples():
    np.testing.assert_array_equal(transition_matrix(2, 0.1), [[1, 0.1], [0, 1]])
    np.testing.assert_array_equal(transition_matrix(3, 1.0), [[1, 1, 0.5], [0, 1, 1], [0, 0, 1]])
    np.testing.assert_array_equal(transition_matrix(1, 5.0), [[1.0]])


@pytest.mark.parametrize("n, tau", [(0, 1.0), (2, 0.0), (2, -1.0), (1.5, 1.0)])
def test_transition_matrix_rejects(n, tau):
    with pytest.raises(ValueError):
        transition_matrix(n, tau)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5), t1=st.floats(0.01, 3.0), t2=st.floats(0.01, 3.0))
def test_transition_semigroup(n, t1, t2):
    lhs = transition_matrix(n, t1) @ transition_matrix(n, t2)
    np.testing.assert_allclose(lhs, transition_matrix(n, t1 + t2), rtol=1e-12, atol=1e-12)


def test_process_noise_cov_white_channel():
    np.testing.assert_array_equal(process_noise_cov(ClockSpec(2, (1.0, 0.0)), 2.0), [[2, 0], [0, 0]])


@pytest.mark.parametrize("key", list(FROZEN_Q))
def test_process_noise_cov_matches_frozen_quadrature(key):
    sigma, tau = key
    Q = process_noise_cov(ClockSpec(len(sigma), sigma), tau)
    np.testing.assert_allclose(Q, FROZEN_Q[key], rtol=0, atol=1e-10)


@pytest.mark.parametrize("key", list(FROZEN_Q))
def test_quadrature_oracle_reproduces_frozen_values(key):
    sigma, tau = key
    np.testing.assert_allclose(noise_cov_quadrature(sigma, tau), FROZEN_Q[key], rtol=0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    sigma=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=5),
    tau=st.floats(0.01, 10.0),
)
def test_process_noise_cov_symmetric_psd(sigma, tau):
    Q = process_noise_cov(ClockSpec(len(sigma), tuple(sigma)), tau)
    np.testing.assert_array_equal(Q, Q.T)
    vals = np.linalg.eigvalsh(Q)
    assert vals.min() >= -1e-18 * max(vals.max(), 0.0) - 1e-300


def test_process_noise_cov_rejects_bad_tau():
    with pytest.raises(ValueError):
        process_noise_cov(ClockSpec(1, (1.0,)), 0.0)


def test_clockspec_validation():
    with pytest.raises(ConfigError):
        ClockSpec(0, ())
    with pytest.raises(ConfigError):
        ClockSpec(2, (1.0,))
    with pytest.raises(ConfigError):
        ClockSpec(1, (-1.0,))


def test_ensemble_matrices_examples():
    cfg = homogeneous_ensemble(2, (1.0,), 3, tau=1.0)
    F, H, _ = ensemble_matrices(cfg, 0)
    np.testing.assert_array_equal(F, np.eye(2))
    np.testing.assert_array_equal(H, [[1, -1]])

    cfg = homogeneous_ensemble(2, (1.0, 1.0), 3, tau=0.5)
    F, _, _ = ensemble_matrices(cfg, 0)
    expected = [[1, 0, 0.5, 0], [0, 1, 0, 0.5], [0, 0, 1, 0], [0, 0, 0, 1]]
    np.testing.assert_array_equal(F, expected)


def test_homogeneous_noise_is_kronecker():
    cfg = homogeneous_ensemble(4, (0.3, 0.2, 0.1), 3, tau=0.7)
    _, _, W = ensemble_matrices(cfg, 0)
    Q = process_noise_cov(cfg.clocks[0], 0.7)
    np.testing.assert_array_equal(W, np.kron(Q, np.eye(4)))
    np.testing.assert_array_equal(kron_factor(W, 4), Q)


def test_heterogeneous_noise_layout():
    clocks = [ClockSpec(2, (1.0, 2.0)), ClockSpec(2, (3.0, 4.0))]
    W = ensemble_noise_cov(clocks, 1.0)
    # order-major layout: index = order * m + clock
    for j, c in enumerate(clocks):
        idx = [j, 2 + j]
        np.testing.assert_array_equal(W[np.ix_(idx, idx)], process_noise_cov(c, 1.0))
    assert W[0, 1] == 0.0 and W[0, 3] == 0.0
    assert kron_factor(W, 2) is None


def test_diff_matrix_examples():
    np.testing.assert_array_equal(diff_matrix(2), [[1, -1]])
    np.testing.assert_allclose(pinv_diff(2), [[0.5], [-0.5]], atol=1e-15)
    np.testing.assert_allclose(pinv_diff(3), np.array([[2, -1], [-1, 2], [-1, -1]]) / 3, atol=1e-15)
    with pytest.raises(ValueError):
        diff_matrix(1)


@pytest.mark.parametrize("m", range(2, 21))
def test_pinv_moore_penrose(m):
    V, Vp = diff_matrix(m), pinv_diff(m)
    np.testing.assert_allclose(V @ Vp @ V, V, atol=1e-12)
    np.testing.assert_allclose(Vp @ V @ Vp, Vp, atol=1e-12)
    np.testing.assert_allclose((V @ Vp).T, V @ Vp, atol=1e-12)
    np.testing.assert_allclose((Vp @ V).T, Vp @ V, atol=1e-12)
    np.testing.assert_allclose(Vp, np.linalg.pinv(V), atol=1e-12)


def test_projections_example():
    proj = projections([0.5, 0.5])
    np.testing.assert_array_equal(proj.P, [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        projections([0.5, 0.6])


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 12), n=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_proof_identities(m, n, seed):
    rng = np.random.default_rng(seed)
    beta = random_weights(rng, m)
    proj = projections(beta)
    E = np.vstack([np.eye(m - 1), np.zeros((1, m - 1))])
    np.testing.assert_allclose(beta @ proj.V_ddag, 0.0, atol=1e-12)
    np.testing.assert_allclose(proj.P_bar @ E @ diff_matrix(m), proj.P_bar, atol=1e-12)
    np.testing.assert_allclose(beta @ proj.P, beta, atol=1e-12)
    F_ddag, _ = jst_error_operators(n, beta)
    B = np.kron(np.eye(n), beta[None, :])
    np.testing.assert_allclose(B @ F_ddag, B, atol=1e-12)


def test_observable_decomp_examples():
    cfg = homogeneous_ensemble(3, (1.0,), 4)
    s = observable_decomp(cfg, 0)
    np.testing.assert_array_equal(s.F_o, np.eye(2))
    np.testing.assert_array_equal(s.H_o, np.eye(2))


@pytest.mark.parametrize("n, m", [(1, 2), (2, 5), (3, 3), (4, 7)])
def test_decomposition_round_trip(rng, n, m):
    cfg = homogeneous_ensemble(m, tuple(np.ones(n)), 2)
    s = observable_decomp(cfg, 0)
    x = rng.normal(size=(100, n * m))
    np.testing.assert_allclose(s.join(*s.split(x)), x, atol=1e-12)


def test_observable_noise_kronecker(rng):
    n, m = 3, 4
    cfg = homogeneous_ensemble(m, (0.4, 0.3, 0.2), 2, tau=1.3)
    Q = process_noise_cov(cfg.clocks[0], 1.3)
    V = diff_matrix(m)
    np.testing.assert_allclose(observable_decomp(cfg, 0).W_o, np.kron(Q, V @ V.T), rtol=1e-13, atol=1e-15)


def test_ensemble_config_validation():
    clock = ClockSpec(2, (1.0, 1.0))
    with pytest.raises(ConfigError, match="weights"):
        EnsembleConfig(clocks=[clock] * 3, horizon=5, weights=[0.5, 0.5, 0.5])
    with pytest.raises(ConfigError):
        EnsembleConfig(clocks=[clock], horizon=5)
    with pytest.raises(ConfigError):
        EnsembleConfig(clocks=[clock, ClockSpec(1, (1.0,))], horizon=5)
    with pytest.raises(ConfigError):
        EnsembleConfig(clocks=[clock] * 2, horizon=5, tau=[1.0, -1.0, 1, 1, 1])
    with pytest.raises(ConfigError):
        EnsembleConfig(clocks=[clock] * 2, horizon=5, r=-1.0)
    with pytest.raises(ConfigError):
        EnsembleConfig(clocks=[clock] * 2, horizon=5, p0=0.0)


def test_ensemble_config_defaults():
    cfg = homogeneous_ensemble(4, (1.0, 2.0), 10, r=2.0)
    np.testing.assert_array_equal(cfg.weights, np.full(4, 0.25))
    np.testing.assert_array_equal(cfg.r, 2.0 * np.eye(3))
    np.testing.assert_array_equal(cfg.r_guess, cfg.r)
    assert cfg.p0 == 1e-8
    assert cfg.tau.shape == (10,) and cfg.constant_tau
    np.testing.assert_array_equal(cfg.w_hat(0), ensemble_noise_cov(cfg.clocks, 1.0))
