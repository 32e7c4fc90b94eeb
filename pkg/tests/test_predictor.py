import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedsv import (
    DegenerateSpectrumError,
    ModelError,
    NoiseMatrix,
    NoiseProfile,
    PerturbationModel,
    SpectralPrediction,
    decompose,
    fluctuation,
    fluctuation_covariance,
    predict,
    sample_noise,
    top_singular_values,
    z0_second_moment_bound,
)
from spikedsv.ensembles import AllelicModel, BlockSpec, block_model, genetics_model, rank1_model, sample_allelic_probabilities
from spikedsv.predictor import (
    fix_signs,
    gram_matrix,
    refined_sqrt,
    shift,
    sigma_matrices,
    spectral_data,
    variance_profiles,
)

from conftest import REF_GAMMA, REF_Q_EXACT, REF_V1


def _random_model(M=7, N=11, K=3, seed=3, var_range=(0.5, 2.0)):
    rng = np.random.default_rng(seed)
    F, _ = np.linalg.qr(rng.standard_normal((M, K)))
    G = rng.standard_normal((N, K)) * 5
    var = rng.uniform(*var_range, (M, N))
    return PerturbationModel(F, G, NoiseProfile.gaussian((M, N), var))


def test_gram_orthogonal_columns():
    G = np.zeros((5, 2))
    G[0, 0], G[1, 1] = 3.0, -2.0
    np.testing.assert_array_equal(gram_matrix(G), np.diag([9.0, 4.0]))


def test_gram_exactly_symmetric():
    G = np.random.default_rng(0).standard_normal((50, 4))
    R0 = gram_matrix(G)
    assert np.array_equal(R0, R0.T)


def test_gram_block_model():
    mu = (0.5, 1.0, 1.5, -0.7)
    M, N = 6, 9
    model = block_model(BlockSpec(mu=mu, sigma2=(1.0,) * 4, M=M, N=N))
    m1, m2, m3, m4 = mu
    expected = M * N * np.array([[m1**2 + m2**2, m1 * m3 + m2 * m4], [m1 * m3 + m2 * m4, m3**2 + m4**2]])
    np.testing.assert_allclose(gram_matrix(model.G), expected, rtol=1e-13)


def test_gram_genetics_model():
    sizes = (3, 5, 8)
    p = sample_allelic_probabilities(3, 40, 11)
    model = genetics_model(AllelicModel(sizes=sizes, p=p))
    expected = 4 * np.sqrt(np.outer(sizes, sizes)) * (p @ p.T)
    np.testing.assert_allclose(gram_matrix(model.G), expected, rtol=1e-13)


def test_spectral_data_reference_q():
    w, V = spectral_data(REF_Q_EXACT)
    np.testing.assert_allclose(w, REF_GAMMA, atol=1e-5)
    np.testing.assert_allclose(V[:, 0], REF_V1, atol=1e-5)


def test_spectral_data_diagonal():
    w, V = spectral_data(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_array_equal(w, [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(V, np.eye(3))


def test_spectral_data_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        spectral_data(np.diag([2.0, 2.0, 1.0]))
    with pytest.raises(DegenerateSpectrumError):
        spectral_data(np.diag([2.0, 0.0]))


def test_spectral_data_rejects_asymmetric():
    with pytest.raises(ModelError):
        spectral_data(np.array([[1.0, 0.5], [0.0, 2.0]]))


def test_sign_convention():
    V = fix_signs(np.array([[0.0, -0.6], [-1.0, 0.8]]))
    np.testing.assert_array_equal(V, [[0.0, 0.6], [1.0, -0.8]])
    # tiny leading component is skipped
    V = fix_signs(np.array([[-1e-13], [-1.0]]))
    assert V[1, 0] == 1.0


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_spectral_data_stable_under_tiny_perturbation(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4))
    S = A @ A.T + np.diag([4.0, 3.0, 2.0, 1.0])
    E = rng.standard_normal((4, 4))
    E = 0.5 * (E + E.T)
    E *= 1e-14 * np.linalg.norm(S, 2) / np.linalg.norm(E, 2)
    w0, V0 = spectral_data(S)
    w1, V1 = spectral_data(S + E)
    np.testing.assert_allclose(w1, w0, rtol=0, atol=1e-13 * np.linalg.norm(S, 2))
    gaps = np.diff(w0[::-1]).min()
    assert np.max(np.abs(V1 - V0)) < 1e-11 * np.linalg.norm(S, 2) / gaps


def test_refined_sqrt():
    x = np.array([0.0, 2.0, 1e300, 123456789.0**2])
    s = refined_sqrt(x)
    assert s[0] == 0.0
    np.testing.assert_allclose(s**2, x, rtol=4 * np.finfo(float).eps)
    assert s[3] == 123456789.0


def test_variance_profiles_constant():
    model = _random_model(var_range=(0.7, 0.7 + 1e-300))
    d_r, d_s = variance_profiles(model)
    np.testing.assert_allclose(d_r, 0.7)
    np.testing.assert_allclose(d_s, 0.7)


def test_variance_profiles_block():
    s2 = (0.1, 0.2, 0.3, 0.4)
    model = block_model(BlockSpec(mu=(0, 1, 1, 1), sigma2=s2, M=3, N=4))
    d_r, _ = variance_profiles(model)
    np.testing.assert_allclose(d_r[:4], (s2[0] + s2[2]) / 2)
    np.testing.assert_allclose(d_r[4:], (s2[1] + s2[3]) / 2)


def test_variance_profiles_genetics():
    al = AllelicModel(sizes=(2, 3), p=sample_allelic_probabilities(2, 10, 4))
    var = genetics_model(al).noise.variance()
    p_rows = al.p[al.membership()]
    np.testing.assert_allclose(var, 2 * p_rows * (1 - p_rows), rtol=1e-15)


def test_sigma_matrices_rank1():
    rng = np.random.default_rng(0)
    mu = rng.uniform(0.5, 1.5, 9)
    M, s2 = 5, 0.8
    model, _ = rank1_model(mu, s2, M)
    sR, sS = sigma_matrices(model)
    np.testing.assert_allclose(sR, [[s2 * M * np.sum(mu**2)]], rtol=1e-13)
    np.testing.assert_allclose(sS, [[s2]], rtol=1e-13)


def test_sigma_matrices_block():
    s2 = (0.1, 0.2, 0.3, 0.4)
    model = block_model(BlockSpec(mu=(0, 1, 1, 1), sigma2=s2, M=3, N=4))
    _, sS = sigma_matrices(model)
    np.testing.assert_allclose(sS, 0.5 * np.diag([s2[0] + s2[1], s2[2] + s2[3]]), atol=1e-15)


def test_sigma_matrices_zero_noise():
    model = _random_model(var_range=(0.0, 0.0))
    sR, sS = sigma_matrices(model)
    assert not sR.any() and not sS.any()


def test_shift_block_reference():
    M, N, s2 = 20, 50, 1 / 3
    model = block_model(BlockSpec(mu=(0, 1, 1, 1), sigma2=(s2,) * 4, M=M, N=N, entry_family="uniform"))
    pred = predict(model)
    m1 = (np.sqrt(5) - 1) * s2 * (M + N) / (2 * np.sqrt(M * N))
    assert pred.m[0] == pytest.approx(m1, rel=1e-12)
    assert pred.m[0] == pytest.approx(0.45603, abs=1e-5)
    assert pred.center[0] == pytest.approx(51.6228, abs=1e-4)
    assert pred.center[1] == pytest.approx(20.7378, abs=1e-4)


def test_shift_zero_and_errors():
    v = np.array([1.0, 0.0])
    assert shift(np.zeros((2, 2)), np.zeros((2, 2)), 0.3, v, 0.5, 10, 20) == 0.0
    with pytest.raises(ModelError):
        shift(np.eye(2), np.eye(2), 0.0, v, 0.5, 10, 20)


def test_shift_invariant_under_transpose():
    model = _random_model()
    pred = predict(model)
    rho, U = spectral_data(gram_matrix(model.G))
    F_t = model.G @ U / np.sqrt(rho)
    G_t = model.F @ U * np.sqrt(rho)
    var = model.noise.variance()
    model_t = PerturbationModel(F_t, G_t, NoiseProfile.gaussian(var.T.shape, var.T))
    pred_t = predict(model_t)
    np.testing.assert_allclose(pred_t.rho, pred.rho, rtol=1e-12)
    np.testing.assert_allclose(pred_t.m, pred.m, rtol=1e-12)


def test_prediction_invariants_and_json():
    pred = predict(_random_model())
    assert np.all(np.diff(pred.rho) < 0) and np.all(pred.rho > 0)
    for W in (pred.V, pred.U):
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0)
    for S in (pred.sigma_R, pred.sigma_S):
        assert np.array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-12 * np.abs(S).max()
    d = json.loads(pred.to_json())
    assert set(d) == {"rho", "gamma", "V", "U", "sigma_R", "sigma_S", "m", "c"}
    back = SpectralPrediction.from_json(pred.to_json())
    for name in SpectralPrediction._FIELDS:
        np.testing.assert_array_equal(getattr(back, name), getattr(pred, name))


def test_fluctuation_zero_noise():
    model = _random_model()
    noise = NoiseMatrix(np.zeros((model.M, model.N)), 0, model.model_id)
    Z0, Z = fluctuation(model, noise, predict(model))
    assert not Z0.any() and not Z.any()


def test_fluctuation_rank1_formula():
    rng = np.random.default_rng(2)
    mu = rng.uniform(0.5, 2.0, 13)
    M, N = 8, 13
    model, _ = rank1_model(mu, 1.0, M)
    pred = predict(model)
    noise = sample_noise(model, 5)
    _, Z = fluctuation(model, noise, pred)
    gamma = np.sum(mu**2) / N
    expected = np.sum(noise.values * mu[None, :]) / np.sqrt(M * N * gamma)
    assert Z[0] == pytest.approx(expected, rel=1e-12)


def test_fluctuation_covariance_matches_rank1_variance():
    model, _ = rank1_model([1.0], 2.5, 10, 10)
    np.testing.assert_allclose(fluctuation_covariance(model, predict(model)), [[2.5]], rtol=1e-13)


def test_z0_second_moment_bound():
    model = _random_model(M=10, N=15, K=2)
    R = 10_000
    acc = 0.0
    for s in range(R):
        Z0, _ = fluctuation(model, sample_noise(model, s), predict(model))
        acc += np.sum(Z0**2)
    assert acc / R <= z0_second_moment_bound(model)


def test_decompose_zero_noise():
    model = _random_model()
    pred = predict(model)
    noise = NoiseMatrix(np.zeros((model.M, model.N)), 0, model.model_id)
    lam = top_singular_values(model.mean(), model.K).singular_values
    np.testing.assert_allclose(lam, pred.sqrt_rho, rtol=1e-12)
    fs = decompose(model, noise, pred, lam)
    np.testing.assert_allclose(fs.epsilon, -pred.m, atol=1e-10 * pred.sqrt_rho.max())


@given(st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_decompose_reconstructs(seed):
    model = _random_model()
    pred = predict(model)
    noise = sample_noise(model, seed)
    D = noise.values + model.mean()
    lam = top_singular_values(D, model.K).singular_values
    fs = decompose(model, noise, pred, lam)
    recon = pred.sqrt_rho + fs.Z + pred.m + fs.epsilon
    np.testing.assert_allclose(recon, lam, rtol=4 * np.finfo(float).eps)


def test_decompose_requires_descending():
    model = _random_model()
    pred = predict(model)
    with pytest.raises(ModelError):
        decompose(model, sample_noise(model, 0), pred, [1.0, 2.0, 0.5])


def _median_abs_eps(M, N, R):
    model = block_model(BlockSpec(mu=(0, 1, 1, 1), sigma2=(1 / 3,) * 4, M=M, N=N, entry_family="uniform"))
    pred = predict(model)
    eps = []
    for s in range(R):
        noise = sample_noise(model, s)
        lam = top_singular_values(noise.values + model.mean(), 2).singular_values
        eps.append(decompose(model, noise, pred, lam).epsilon)
    return np.median(np.abs(eps), axis=0)


def test_residual_shrinks_with_size():
    small = _median_abs_eps(20, 50, 1000)
    large = _median_abs_eps(200, 500, 1000)
    assert np.all(large < small)


def test_rank1_fluctuation_variance():
    s2, R = 1.0, 4000
    model, _ = rank1_model([1.0], s2, 40, 60)
    pred = predict(model)
    Z = np.array([fluctuation(model, sample_noise(model, s), pred)[1][0] for s in range(R)])
    assert abs(Z.var(ddof=1) - s2) < 4 * s2 * np.sqrt(2 / R)
