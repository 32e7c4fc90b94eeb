"""Largest singular values of a low-rank signal plus independent noise.

Finite-size predictions for the decomposition

    lambda_r = sqrt(rho_r) + Z_r + m_r + eps_r,

closed forms for block and population-genetics ensembles, a resolvent
determinant cross-check and a seeded Monte Carlo harness.
"""

from .criterion import (
    CriterionMatrices,
    CriterionRow,
    SvdResult,
    criterion_check,
    criterion_determinant,
    criterion_matrices,
    determinant_at,
    spectral_norm,
    top_singular_values,
)
from .ensembles import (
    AllelicModel,
    BlockPrediction,
    BlockSpec,
    GeneticsPrediction,
    MomentTensor,
    Rank1Prediction,
    block_model,
    block_predictions,
    block_q,
    genetics_limits,
    genetics_model,
    genetics_predictions,
    pi_moments_empirical,
    pi_moments_spectral,
    rank1_model,
    sample_allelic_probabilities,
)
from .errors import DegenerateSpectrumError, ModelError, NumericalError
from .model import (
    CustomTable,
    EntryLaw,
    Gaussian,
    NoiseMatrix,
    NoiseProfile,
    PerturbationModel,
    ShiftedBinomial,
    UniformCentered,
    ValidationReport,
    assemble_observation,
    sample_noise,
    validate_model,
)
from .predictor import (
    FluctuationSample,
    SpectralPrediction,
    decompose,
    fluctuation,
    fluctuation_covariance,
    normalized_scale,
    normalized_shift,
    predict,
    z0_second_moment_bound,
)
from .simharness import EnsembleSummary, RunSpec, export, load_summary, run_ensemble

__version__ = "0.1.0"
