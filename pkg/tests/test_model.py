import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedsv import (
    CustomTable,
    ModelError,
    NoiseMatrix,
    NoiseProfile,
    PerturbationModel,
    ShiftedBinomial,
    assemble_observation,
    sample_noise,
    validate_model,
)
from spikedsv.ensembles import BlockSpec, block_model, genetics_model, AllelicModel, sample_allelic_probabilities
from spikedsv.model import Gaussian, UniformCentered, orthonormality_defect, sample_noise_rows


def _model(M=5, N=7, K=2, sigma2=1.0, seed=0):
    rng = np.random.default_rng(seed)
    F = np.eye(M)[:, :K]
    G = rng.standard_normal((N, K))
    return PerturbationModel(F, G, NoiseProfile.gaussian((M, N), sigma2))


def test_identity_columns_have_zero_defect():
    rep = validate_model(_model())
    assert rep.orthonormality_defect == 0.0


def test_validation_gaps_include_zero():
    rep = validate_model(_model(K=3))
    gam = np.sort(np.linalg.eigvalsh(rep.q_hat))[::-1]
    np.testing.assert_allclose(rep.eigen_gaps, gam - np.append(gam[1:], 0.0))
    assert rep.min_gap == rep.eigen_gaps.min()


def test_block_gap_approaches_limit():
    target = np.sqrt(5) / 4
    gaps = []
    for n in (5, 50, 500):
        spec = BlockSpec(mu=(0, 1, 1, 1), sigma2=(1.0,) * 4, M=n, N=2 * n)
        gaps.append(validate_model(block_model(spec)).eigen_gaps[0])
    # per-block constant means make q_hat scale-free, so the gap matches at every size
    np.testing.assert_allclose(gaps, target, rtol=1e-12)


def test_duplicate_column_names_pair():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((6, 3))
    G[:, 2] = G[:, 0]
    model = PerturbationModel(np.eye(5)[:, :3], G, NoiseProfile.gaussian((5, 6), 1.0))
    with pytest.raises(ModelError, match="column 2.*column 0"):
        validate_model(model)


def test_near_degenerate_spectrum_warns():
    G = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    model = PerturbationModel(np.eye(3)[:, :2], G, NoiseProfile.gaussian((3, 3), 1.0))
    with pytest.warns(UserWarning, match="near-degenerate"):
        rep = validate_model(model)
    assert rep.warnings


def test_dimension_errors():
    with pytest.raises(ModelError):
        PerturbationModel(np.eye(4)[:, :2], np.ones((5, 3)), NoiseProfile.gaussian((4, 5), 1.0))
    with pytest.raises(ModelError):
        PerturbationModel(np.eye(4)[:, :2], np.ones((5, 2)), NoiseProfile.gaussian((4, 6), 1.0))
    with pytest.raises(ModelError, match="orthonormal"):
        PerturbationModel(2 * np.eye(4)[:, :2], np.ones((5, 2)), NoiseProfile.gaussian((4, 5), 1.0))


def test_gaussian_sampler_mean():
    # 2x2 model, 1e5 independent draws of every entry
    model = _model(M=2, N=2, K=1, sigma2=4.0)
    R = 100_000
    draws = np.stack([sample_noise(model, s).values for s in range(R)])
    assert np.all(np.abs(draws.mean(axis=0)) < 4 / np.sqrt(R) * 2.0)


def test_shifted_binomial_support():
    p = np.array([[0.1, 0.5, 0.93]])
    model = PerturbationModel(np.ones((1, 1)), np.ones((3, 1)), NoiseProfile((1, 3), (ShiftedBinomial(p),)))
    vals = np.stack([sample_noise(model, s).values for s in range(2000)])[:, 0, :]
    for j in range(3):
        support = {-2 * p[0, j], 1 - 2 * p[0, j], 2 - 2 * p[0, j]}
        assert all(np.isclose(v, list(support)).any() for v in np.unique(vals[:, j]))


def test_binomial_half_distribution():
    law = ShiftedBinomial(0.5)
    u = np.linspace(0.0005, 0.9995, 1000)
    counts = law.transform(u, slice(None), (1000,)) + 1.0
    np.testing.assert_allclose(np.bincount(counts.astype(int)) / 1000, [0.25, 0.5, 0.25])


def test_same_seed_identical():
    model = _model()
    a, b = sample_noise(model, 99), sample_noise(model, 99)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_noise(model, 100).values)


def test_row_slices_match_full_draw():
    model = _model(M=9, N=4)
    full = sample_noise(model, 5).values
    parts = np.vstack([sample_noise_rows(model, 5, a, b) for a, b in ((0, 2), (2, 7), (7, 9))])
    np.testing.assert_array_equal(parts, full)


def test_assemble_zero_noise_and_constant_mean():
    M, N, mu = 4, 6, 2.5
    F = np.full((M, 1), 1 / np.sqrt(M))
    G = np.full((N, 1), mu * np.sqrt(M))
    model = PerturbationModel(F, G, NoiseProfile.gaussian((M, N), 0.0))
    D = assemble_observation(model, sample_noise(model, 3))
    np.testing.assert_allclose(D, mu, rtol=1e-15)


def test_assemble_tabulated_instance():
    C = np.arange(12, dtype=float).reshape(3, 4) / 10
    F = np.array([[1.0], [0.0], [0.0]])
    G = np.array([[1.0], [2.0], [3.0], [4.0]])
    model = PerturbationModel(F, G, NoiseProfile.gaussian((3, 4), 1.0))
    D = assemble_observation(model, NoiseMatrix(C, 0, model.model_id))
    expected = [[1.0, 2.1, 3.2, 4.3], [0.4, 0.5, 0.6, 0.7], [0.8, 0.9, 1.0, 1.1]]
    np.testing.assert_allclose(D, expected, rtol=0, atol=1e-15)


def test_assemble_rejects_foreign_noise():
    a, b = _model(seed=0), _model(seed=1)
    with pytest.raises(ModelError, match="different model"):
        assemble_observation(a, sample_noise(b, 0))


@given(st.integers(0, 2**32), st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_assembly_linear_in_noise(s1, s2):
    model = _model()
    c1, c2 = sample_noise(model, s1).values, sample_noise(model, s2).values
    lhs = assemble_observation(model, NoiseMatrix(c1 + c2, 0, model.model_id))
    np.testing.assert_allclose(lhs, assemble_observation(model, NoiseMatrix(c1, 0, model.model_id)) + c2, atol=1e-13)


@pytest.mark.parametrize(
    "profile",
    [
        NoiseProfile.gaussian((3, 3), 2.0),
        NoiseProfile.uniform((3, 3), 1 / 3),
        NoiseProfile((3, 3), (ShiftedBinomial(np.full((3, 3), 0.2)),)),
        NoiseProfile((3, 3), (CustomTable([-1.0, 0.0, 2.0], [0.4, 0.4, 0.2]),)),
    ],
    ids=["gaussian", "uniform", "binomial", "table"],
)
def test_empirical_fourth_moment_within_slack(profile):
    model = PerturbationModel(np.eye(3)[:, :1], np.ones((3, 1)), profile)
    draws = np.stack([sample_noise(model, s).values for s in range(10_000)])
    assert np.abs(draws.mean(axis=0)).max() < 0.1
    assert (draws**4).mean(axis=0).max() <= 1.5 * profile.fourth_moment_bound
    np.testing.assert_allclose((draws**2).mean(axis=0), profile.variance(), rtol=0.1)
    assert np.all(profile.variance() <= np.sqrt(profile.fourth_moment_bound))


def test_fourth_moment_bound_too_small():
    with pytest.raises(ModelError, match="exceeds"):
        NoiseProfile.gaussian((2, 2), 1.0, fourth_moment_bound=2.0)


def test_custom_table_recenters():
    with pytest.warns(UserWarning, match="recentering"):
        law = CustomTable([0.0, 1.0], [0.5, 0.5])
    np.testing.assert_allclose(law.values, [-0.5, 0.5])


def test_mixed_laws_by_assignment():
    assign = np.array([[0, 1], [1, 0]])
    prof = NoiseProfile((2, 2), (Gaussian(1.0), UniformCentered(np.sqrt(3.0))), assignment=assign)
    np.testing.assert_allclose(prof.variance(), 1.0)
    np.testing.assert_allclose(prof.fourth_moment(), [[3.0, 1.8], [1.8, 3.0]])


def test_constructors_pass_validation():
    spec = BlockSpec(mu=(0, 1, 1, 1), sigma2=(1 / 3,) * 4, M=20, N=50, entry_family="uniform")
    assert validate_model(block_model(spec)).orthonormality_defect <= 1e-12
    al = AllelicModel(sizes=(20, 40, 60), p=sample_allelic_probabilities(3, 2500, 0))
    rep = validate_model(genetics_model(al))
    assert rep.orthonormality_defect <= 1e-12
    assert np.all(rep.eigen_gaps > 0) and rep.eigen_gaps.size == 3


def test_orthonormality_defect_value():
    F = np.array([[1.0, 0.0], [0.0, 1.0 + 1e-9]])
    assert orthonormality_defect(F) == pytest.approx(2e-9, rel=1e-6)
