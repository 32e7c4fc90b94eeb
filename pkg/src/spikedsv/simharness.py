"""Seeded Monte Carlo over noise draws, summary statistics and file export."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .criterion import spectral_norm, top_singular_values
from .errors import ModelError, NumericalError
from .model import PerturbationModel, sample_noise
from .predictor import (
    SpectralPrediction,
    fluctuation_covariance,
    fluctuation_matrix,
    normalized_scale,
    normalized_shift,
    predict,
)
from .rng import split_seed

log = logging.getLogger(__name__)

COLLECT_FLAGS = frozenset({"lambda", "Z", "epsilon", "normalized_Lambda"})
MAX_DROP_FRACTION = 1e-3
MIN_BINS = 20


@dataclass
class RunSpec:
    """One Monte Carlo run: replicate ``i`` draws its noise with ``split_seed(seed, i)``.

    ``weyl_every`` sets how often the perturbation bound
    ``|lambda_r - sqrt(rho_r)| <= ||C||`` is checked (every 100th replicate by
    default, 0 disables).  ``threads`` only affects speed, never results.
    """

    model: PerturbationModel
    replicates: int
    seed: int
    threads: int = 1
    collect: frozenset = frozenset({"lambda", "Z", "epsilon"})
    weyl_every: int = 100
    svd_backend: str = "auto"

    def __post_init__(self):
        if self.replicates < 1:
            raise ModelError("replicates must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must be a 64-bit unsigned integer")
        self.collect = frozenset(self.collect) | {"lambda"}
        unknown = self.collect - COLLECT_FLAGS
        if unknown:
            raise ModelError(f"unknown collect flags {sorted(unknown)}")
        self.threads = max(1, int(self.threads))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray


@dataclass
class EnsembleSummary:
    """Per-replicate samples (``R x K``) and their aggregate statistics.

    ``ks`` scores ``lambda_r - sqrt(rho_r) - m_r`` against a centered normal
    with the exact finite-size variance of ``Z_r`` (``pred_var``).
    """

    M: int
    N: int
    seed: int
    replicates: int
    samples: np.ndarray
    Z: np.ndarray | None
    epsilon: np.ndarray | None
    Lambda: np.ndarray | None
    emp_mean: np.ndarray
    emp_var: np.ndarray
    emp_cov: np.ndarray
    pred_var: np.ndarray
    ks: np.ndarray
    histograms: list
    prediction: SpectralPrediction
    weyl_checked: int = 0
    weyl_violations: int = 0
    dropped: list = field(default_factory=list)
    extra_prediction: dict | None = None
    replicate_ids: np.ndarray | None = None

    def __post_init__(self):
        if self.replicate_ids is None:
            self.replicate_ids = np.arange(self.samples.shape[0])

    @property
    def K(self) -> int:
        return self.samples.shape[1]

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "M": self.M,
            "N": self.N,
            "seed": self.seed,
            "replicates": self.replicates,
            "samples": arr(self.samples),
            "Z": arr(self.Z),
            "epsilon": arr(self.epsilon),
            "Lambda": arr(self.Lambda),
            "emp_mean": arr(self.emp_mean),
            "emp_var": arr(self.emp_var),
            "emp_cov": arr(self.emp_cov),
            "pred_var": arr(self.pred_var),
            "ks": arr(self.ks),
            "histograms": [
                {"edges": arr(h.edges), "counts": arr(h.counts), "density": arr(h.density)} for h in self.histograms
            ],
            "prediction": self.prediction.to_dict(),
            "weyl_checked": self.weyl_checked,
            "weyl_violations": self.weyl_violations,
            "dropped": list(self.dropped),
            "extra_prediction": self.extra_prediction,
            "replicate_ids": arr(self.replicate_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSummary":
        def arr(a, dtype=float):
            return None if a is None else np.asarray(a, dtype=dtype)

        return cls(
            M=int(d["M"]),
            N=int(d["N"]),
            seed=int(d["seed"]),
            replicates=int(d["replicates"]),
            samples=arr(d["samples"]),
            Z=arr(d["Z"]),
            epsilon=arr(d["epsilon"]),
            Lambda=arr(d["Lambda"]),
            emp_mean=arr(d["emp_mean"]),
            emp_var=arr(d["emp_var"]),
            emp_cov=arr(d["emp_cov"]),
            pred_var=arr(d["pred_var"]),
            ks=arr(d["ks"]),
            histograms=[
                Histogram(arr(h["edges"]), arr(h["counts"], np.int64), arr(h["density"])) for h in d["histograms"]
            ],
            prediction=SpectralPrediction.from_dict(d["prediction"]),
            weyl_checked=int(d["weyl_checked"]),
            weyl_violations=int(d["weyl_violations"]),
            dropped=list(d["dropped"]),
            extra_prediction=d.get("extra_prediction"),
            replicate_ids=arr(d.get("replicate_ids"), np.int64),
        )


def ks_distance(sample, mean: float, variance: float) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``sample`` and ``Normal(mean, variance)``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise ModelError("KS distance needs at least two observations")
    if not variance > 0:
        raise ModelError(f"KS distance needs a positive variance, got {variance!r}")
    cdf = ndtr((x - mean) / np.sqrt(variance))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def histogram(x, center: float, variance: float) -> Histogram:
    """Freedman-Diaconis bins (at least 20) plus the normal density at bin midpoints.

    The bin range covers the data and ``center +/- 4.5 sd`` so the tabulated
    density carries essentially all of its mass.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if variance > 0:
        sd = np.sqrt(variance)
        lo, hi = min(lo, center - 4.5 * sd), max(hi, center + 4.5 * sd)
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.histogram_bin_edges(x, bins="fd", range=(lo, hi))
    if edges.size - 1 < MIN_BINS:
        edges = np.linspace(lo, hi, MIN_BINS + 1)
    counts, edges = np.histogram(x, bins=edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    if variance > 0:
        dens = np.exp(-0.5 * (mid - center) ** 2 / variance) / np.sqrt(2 * np.pi * variance)
    else:
        dens = np.zeros_like(mid)
    return Histogram(edges=edges, counts=counts.astype(np.int64), density=dens)


def _replicate(model, pred, spec, i, D_mean):
    noise = sample_noise(model, split_seed(spec.seed, i))
    C = noise.values
    lam = top_singular_values(C + D_mean, model.K, backend=spec.svd_backend).singular_values
    Z0 = fluctuation_matrix(model, C)
    Z = np.einsum("ir,ij,jr->r", pred.V, Z0, pred.V) / np.sqrt(pred.gamma)
    weyl = None
    if spec.weyl_every and i % spec.weyl_every == 0:
        weyl = bool(np.all(np.abs(lam - pred.sqrt_rho) <= spectral_norm(C) * (1 + 1e-12) + 1e-12))
    return lam, Z, weyl


def _run_chunk(model, pred, spec, indices):
    D_mean = model.mean()
    out = []
    for i in indices:
        try:
            out.append((i, *_replicate(model, pred, spec, i, D_mean)))
        except (np.linalg.LinAlgError, NumericalError) as exc:
            out.append((i, None, None, repr(exc)))
    return out


def run_ensemble(spec: RunSpec, prediction: SpectralPrediction | None = None) -> EnsembleSummary:
    """Sample, decompose and summarize ``spec.replicates`` noise draws.

    Work is split into contiguous chunks of replicate indices; results are
    folded in index order, so the output depends only on ``(model, seed, R)``.
    """
    model = spec.model
    pred = predict(model) if prediction is None else prediction
    R, K = spec.replicates, model.K
    nchunks = min(R, max(spec.threads * 4, 1))
    bounds = np.linspace(0, R, nchunks + 1).astype(int)
    chunks = [range(bounds[k], bounds[k + 1]) for k in range(nchunks)]
    if spec.threads == 1:
        parts = [_run_chunk(model, pred, spec, ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            parts = list(pool.map(lambda ch: _run_chunk(model, pred, spec, ch), chunks))

    lam = np.empty((R, K))
    Z = np.empty((R, K))
    keep = np.ones(R, dtype=bool)
    dropped = []
    checked = violations = 0
    for part in parts:
        for i, li, zi, extra in part:
            if li is None:
                keep[i] = False
                dropped.append({"replicate": int(i), "error": extra})
                continue
            lam[i], Z[i] = li, zi
            if extra is not None:
                checked += 1
                violations += not extra
    if len(dropped) > MAX_DROP_FRACTION * R:
        raise NumericalError(f"{len(dropped)} of {R} replicates failed; more than {MAX_DROP_FRACTION:.1%}")
    if dropped:
        log.warning("dropped %d replicate(s) after SVD failure", len(dropped))
    lam, Z = lam[keep], Z[keep]
    eps = lam - pred.sqrt_rho - Z - pred.m

    M, N = model.M, model.N
    Lambda = lam**2 / (np.sqrt(M) + np.sqrt(N)) ** 2 if "normalized_Lambda" in spec.collect else None
    pred_var = np.diag(fluctuation_covariance(model, pred)).copy()
    centered = lam - pred.center
    ks = np.array(
        [ks_distance(centered[:, r], 0.0, pred_var[r]) if pred_var[r] > 0 and len(lam) > 1 else np.nan for r in range(K)]
    )
    hists = [histogram(lam[:, r], pred.center[r], pred_var[r]) for r in range(K)]
    ddof = 1 if len(lam) > 1 else 0
    emp_cov = np.atleast_2d(np.cov(lam, rowvar=False, ddof=ddof)) if len(lam) > 1 else np.zeros((K, K))
    return EnsembleSummary(
        M=M,
        N=N,
        seed=int(spec.seed),
        replicates=R,
        samples=lam,
        Z=Z if "Z" in spec.collect else None,
        epsilon=eps if "epsilon" in spec.collect else None,
        Lambda=Lambda,
        emp_mean=lam.mean(axis=0),
        emp_var=lam.var(axis=0, ddof=ddof),
        emp_cov=emp_cov,
        pred_var=pred_var,
        ks=ks,
        histograms=hists,
        prediction=pred,
        weyl_checked=checked,
        weyl_violations=violations,
        dropped=dropped,
        replicate_ids=np.flatnonzero(keep),
    )


def normalized_targets(summary: EnsembleSummary) -> tuple[np.ndarray, np.ndarray]:
    """Predicted center and variance of ``Lambda_r = lambda_r^2 / (sqrt(M) + sqrt(N))^2``."""
    pred, M, N = summary.prediction, summary.M, summary.N
    center = pred.rho / (np.sqrt(M) + np.sqrt(N)) ** 2 + normalized_shift(pred, M, N)
    return center, normalized_scale(pred, M, N) ** 2 * summary.pred_var


def _fmt(x) -> str:
    return repr(float(x))


def export(summary: EnsembleSummary, directory) -> list[str]:
    """Write ``samples.csv``, ``summary.json`` and ``hist_<r>.csv`` (r from 1) to ``directory``."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    path = os.path.join(directory, "samples.csv")
    header = ["replicate", "r", "lambda", "Z", "epsilon"]
    if summary.Lambda is not None:
        header.append("Lambda")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(summary.samples.shape[0]):
            for r in range(summary.K):
                row = [int(summary.replicate_ids[i]), r + 1, _fmt(summary.samples[i, r])]
                row.append(_fmt(summary.Z[i, r]) if summary.Z is not None else "")
                row.append(_fmt(summary.epsilon[i, r]) if summary.epsilon is not None else "")
                if summary.Lambda is not None:
                    row.append(_fmt(summary.Lambda[i, r]))
                w.writerow(row)
    paths.append(path)

    path = os.path.join(directory, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh)
    paths.append(path)

    for r, h in enumerate(summary.histograms, start=1):
        path = os.path.join(directory, f"hist_{r}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count", "normal_density_at_midpoint"])
            for k in range(h.counts.size):
                w.writerow([_fmt(h.edges[k]), _fmt(h.edges[k + 1]), int(h.counts[k]), _fmt(h.density[k])])
        paths.append(path)
    return paths


def load_summary(path) -> EnsembleSummary:
    with open(path) as fh:
        return EnsembleSummary.from_dict(json.load(fh))
