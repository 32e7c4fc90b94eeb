"""Genotype matrix with three subpopulations.

120 individuals (20, 40, 60) typed at 2500 markers; allele probabilities
p = U^2 drawn independently per subpopulation and marker.  Prints the
limiting quantities built from the tabulated moments, the finite-size
predictions for one draw of p, and a short simulation.
"""

import numpy as np

from spikedsv import (
    AllelicModel,
    RunSpec,
    genetics_model,
    genetics_predictions,
    pi_moments_spectral,
    predict,
    run_ensemble,
    sample_allelic_probabilities,
)
from spikedsv.simharness import normalized_targets

np.set_printoptions(precision=6, suppress=True)

al = AllelicModel(sizes=(20, 40, 60), p=sample_allelic_probabilities(3, 2500, seed=1))
spectral = genetics_predictions(al, pi_moments_spectral("u-squared", K=3))
print("Q\n", spectral.Q)
print("gamma", spectral.gamma)
print("v_1  ", spectral.V[:, 0])
print("m = a sqrt(c) + b / sqrt(c), rows (a, b)\n", spectral.m_coef)
print("m    ", spectral.m)
print("cov\n", spectral.cov)

# predictions for the realized p vectors use their empirical moments
model = genetics_model(al)
pred = predict(model)
s = run_ensemble(RunSpec(model, 1000, seed=5, collect={"lambda", "Z", "epsilon", "normalized_Lambda"}))
print("\ncenters  ", pred.center)
print("emp means", s.emp_mean)
print("emp cov\n", s.emp_cov)

# normalized squares lambda^2 / (sqrt(M) + sqrt(N))^2
center, var = normalized_targets(s)
print("\nLambda centers", center)
print("Lambda means  ", s.Lambda.mean(axis=0))
print("Lambda var    ", var, s.Lambda.var(axis=0, ddof=1))
