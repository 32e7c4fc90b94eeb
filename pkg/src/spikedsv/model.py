"""Perturbed-matrix model ``D = C + F G^T``: noise laws, validation, sampling."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from .errors import ModelError
from .rng import uniforms

ORTHONORMALITY_TOL = 1e-10
CUSTOM_MEAN_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class EntryLaw:
    """Centered law of one entry, sampled by inverse CDF from one uniform.

    Parameters are arrays broadcastable to the ``(M, N)`` shape of the noise
    matrix, so a single law object can describe entrywise-varying variances.
    """

    name = "abstract"

    def transform(self, u: np.ndarray, rows: slice, shape) -> np.ndarray:
        raise NotImplementedError

    def variance(self, shape) -> np.ndarray:
        raise NotImplementedError

    def fourth_moment(self, shape) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def describe(self) -> dict:
        out = {"law": self.name}
        for key, val in self.params().items():
            out[key] = np.asarray(val).tolist()
        return out

    @staticmethod
    def _at(param, shape, rows):
        return np.broadcast_to(param, shape)[rows]


class Gaussian(EntryLaw):
    name = "gaussian"

    def __init__(self, sigma):
        self.sigma = _frozen(sigma)
        if np.any(self.sigma < 0):
            raise ModelError("gaussian sigma must be non-negative")

    def transform(self, u, rows, shape):
        return self._at(self.sigma, shape, rows) * ndtri(u)

    def variance(self, shape):
        return np.broadcast_to(self.sigma**2, shape)

    def fourth_moment(self, shape):
        return np.broadcast_to(3.0 * self.sigma**4, shape)

    def params(self):
        return {"sigma": self.sigma}


class UniformCentered(EntryLaw):
    """Uniform on ``[-half_width, half_width]``."""

    name = "uniform_centered"

    def __init__(self, half_width):
        self.half_width = _frozen(half_width)
        if np.any(self.half_width < 0):
            raise ModelError("uniform half_width must be non-negative")

    def transform(self, u, rows, shape):
        return self._at(self.half_width, shape, rows) * (2.0 * u - 1.0)

    def variance(self, shape):
        return np.broadcast_to(self.half_width**2 / 3.0, shape)

    def fourth_moment(self, shape):
        return np.broadcast_to(self.half_width**4 / 5.0, shape)

    def params(self):
        return {"half_width": self.half_width}


class ShiftedBinomial(EntryLaw):
    """``Binomial(trials, p) - trials * p``; genotype counts when ``trials=2``."""

    name = "shifted_binomial"

    def __init__(self, p, trials: int = 2):
        self.p = _frozen(p)
        self.trials = int(trials)
        if self.trials < 1:
            raise ModelError("trials must be a positive integer")
        if np.any((self.p < 0) | (self.p > 1)):
            raise ModelError("binomial probabilities must lie in [0, 1]")

    def transform(self, u, rows, shape):
        p = self._at(self.p, shape, rows)
        q = 1.0 - p
        if self.trials == 2:
            count = (u >= q * q).astype(float) + (u >= 1.0 - p * p)
        else:
            from scipy.stats import binom

            count = np.zeros_like(u)
            for k in range(self.trials):
                count += u >= binom.cdf(k, self.trials, p)
        return count - self.trials * p

    def variance(self, shape):
        return np.broadcast_to(self.trials * self.p * (1.0 - self.p), shape)

    def fourth_moment(self, shape):
        pq = self.p * (1.0 - self.p)
        n = self.trials
        return np.broadcast_to(n * pq * (1.0 + 3.0 * (n - 2) * pq), shape)

    def params(self):
        return {"p": self.p, "trials": self.trials}


class CustomTable(EntryLaw):
    """Discrete law on ``values`` with probabilities ``probs`` (shared by all its entries).

    Tables whose mean exceeds 1e-12 in magnitude are recentered with a warning.
    """

    name = "custom_table"

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ModelError("custom_table needs matching 1-D values and probs")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ModelError(f"custom_table probabilities must sum to 1, got {probs.sum()!r}")
        mean = float(values @ probs)
        if abs(mean) > CUSTOM_MEAN_TOL:
            warnings.warn(f"custom_table mean {mean:.3e} is not zero; recentering", stacklevel=2)
            values = values - mean
        order = np.argsort(values, kind="stable")
        self.values = _frozen(values[order])
        self.probs = _frozen(probs[order])
        self._cdf = np.cumsum(self.probs)[:-1]

    def transform(self, u, rows, shape):
        return self.values[np.searchsorted(self._cdf, u, side="right")]

    def variance(self, shape):
        return np.full(shape, float(self.values**2 @ self.probs))

    def fourth_moment(self, shape):
        return np.full(shape, float(self.values**4 @ self.probs))

    def params(self):
        return {"values": self.values, "probs": self.probs}


@dataclass(frozen=True, eq=False)
class NoiseProfile:
    """Independent centered entry laws for an ``M x N`` noise matrix.

    ``laws`` lists the entry families in use; ``assignment[i, j]`` indexes the
    law of entry ``(i, j)`` (omitted when a single law covers the matrix).
    ``fourth_moment_bound`` defaults to the largest exact fourth moment.
    """

    shape: tuple
    laws: tuple
    assignment: np.ndarray | None = None
    fourth_moment_bound: float | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 2 or min(shape) < 1:
            raise ModelError(f"noise shape must be (M, N) with M, N >= 1, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        laws = tuple(self.laws) if not isinstance(self.laws, EntryLaw) else (self.laws,)
        if not laws:
            raise ModelError("noise profile needs at least one entry law")
        object.__setattr__(self, "laws", laws)
        if self.assignment is None:
            if len(laws) != 1:
                raise ModelError("several laws require an assignment array")
        else:
            idx = np.array(self.assignment, dtype=np.intp)
            if idx.shape != shape:
                raise ModelError(f"assignment shape {idx.shape} differs from noise shape {shape}")
            if idx.min() < 0 or idx.max() >= len(laws):
                raise ModelError("assignment refers to a law that does not exist")
            idx.setflags(write=False)
            object.__setattr__(self, "assignment", idx)
        for law in laws:
            for key, val in law.params().items():
                try:
                    np.broadcast_to(val, shape)
                except ValueError:
                    if law.name != "custom_table":
                        raise ModelError(f"{law.name} parameter {key!r} does not broadcast to {shape}")

        exact = float(self.fourth_moment().max())
        bound = exact if self.fourth_moment_bound is None else float(self.fourth_moment_bound)
        if exact > bound * (1 + 1e-12):
            raise ModelError(f"fourth moment {exact!r} exceeds the declared bound {bound!r}")
        object.__setattr__(self, "fourth_moment_bound", bound)

    @classmethod
    def gaussian(cls, shape, sigma2, **kw):
        return cls(shape, (Gaussian(np.sqrt(sigma2)),), **kw)

    @classmethod
    def uniform(cls, shape, sigma2, **kw):
        return cls(shape, (UniformCentered(np.sqrt(3.0 * np.asarray(sigma2, float))),), **kw)

    def _combine(self, attr):
        if self.assignment is None:
            return np.asarray(getattr(self.laws[0], attr)(self.shape))
        out = np.zeros(self.shape)
        for k, law in enumerate(self.laws):
            mask = self.assignment == k
            out[mask] = np.asarray(getattr(law, attr)(self.shape))[mask]
        return out

    def variance(self) -> np.ndarray:
        """Entrywise variances ``sigma_ij^2`` as an ``(M, N)`` array."""
        return self._combine("variance")

    def fourth_moment(self) -> np.ndarray:
        return self._combine("fourth_moment")

    def transform(self, u: np.ndarray, rows: slice = slice(None)) -> np.ndarray:
        if self.assignment is None:
            return self.laws[0].transform(u, rows, self.shape)
        out = np.empty_like(u)
        sel = self.assignment[rows]
        for k, law in enumerate(self.laws):
            mask = sel == k
            if mask.any():
                out[mask] = law.transform(u, rows, self.shape)[mask]
        return out

    def describe(self) -> dict:
        return {
            "shape": list(self.shape),
            "laws": [law.describe() for law in self.laws],
            "fourth_moment_bound": self.fourth_moment_bound,
        }

    def fingerprint(self, h) -> None:
        h.update(json.dumps({"shape": self.shape, "bound": self.fourth_moment_bound}).encode())
        for law in self.laws:
            h.update(law.name.encode())
            for key, val in sorted(law.params().items()):
                arr = np.ascontiguousarray(np.asarray(val, dtype=float))
                h.update(key.encode())
                h.update(repr(arr.shape).encode())
                h.update(arr.tobytes())
        if self.assignment is not None:
            h.update(np.ascontiguousarray(self.assignment).tobytes())


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """Mean structure ``F G^T`` (F: ``M x K`` orthonormal columns, G: ``N x K``) plus noise."""

    F: np.ndarray
    G: np.ndarray
    noise: NoiseProfile

    def __post_init__(self):
        F = _frozen(self.F)
        G = _frozen(self.G)
        if F.ndim == 1:
            F = _frozen(F[:, None])
        if G.ndim == 1:
            G = _frozen(G[:, None])
        if F.ndim != 2 or G.ndim != 2:
            raise ModelError("F and G must be matrices")
        if F.shape[1] != G.shape[1]:
            raise ModelError(f"F has {F.shape[1]} columns but G has {G.shape[1]}")
        M, K = F.shape
        N = G.shape[0]
        if K < 1 or K > min(M, N):
            raise ModelError(f"rank K={K} must satisfy 1 <= K <= min(M, N) = {min(M, N)}")
        if self.noise.shape != (M, N):
            raise ModelError(f"noise shape {self.noise.shape} does not match model shape {(M, N)}")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
            raise ModelError("F and G must be finite")
        defect = orthonormality_defect(F)
        if defect > ORTHONORMALITY_TOL:
            raise ModelError(f"columns of F are not orthonormal (defect {defect:.3e})")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)

    @property
    def M(self) -> int:
        return self.F.shape[0]

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def K(self) -> int:
        return self.F.shape[1]

    @cached_property
    def model_id(self) -> str:
        h = hashlib.sha256()
        h.update(np.array(self.F.shape + self.G.shape, dtype=np.int64).tobytes())
        h.update(self.F.tobytes())
        h.update(self.G.tobytes())
        self.noise.fingerprint(h)
        return h.hexdigest()

    def mean(self) -> np.ndarray:
        return self.F @ self.G.T


@dataclass(frozen=True, eq=False)
class NoiseMatrix:
    values: np.ndarray
    seed: int
    model_id: str


@dataclass
class ValidationReport:
    orthonormality_defect: float
    q_hat: np.ndarray
    eigen_gaps: np.ndarray
    min_gap: float
    warnings: list = field(default_factory=list)


def orthonormality_defect(F) -> float:
    F = np.asarray(F, dtype=float)
    return float(np.max(np.abs(F.T @ F - np.eye(F.shape[1]))))


def _dependent_pair(G, rtol):
    """Locate a column of G lying in the span of earlier ones; pair it with its closest partner."""
    scale = np.linalg.norm(G, 2)
    for s in range(G.shape[1]):
        sv = np.linalg.svd(G[:, : s + 1], compute_uv=False)
        if sv[-1] <= rtol * max(scale, np.finfo(float).tiny):
            if s == 0:
                return (0, 0)
            norms = np.linalg.norm(G[:, :s], axis=0) * np.linalg.norm(G[:, s])
            with np.errstate(invalid="ignore", divide="ignore"):
                cos = np.abs(G[:, :s].T @ G[:, s]) / norms
            return (int(np.nanargmax(cos)) if np.any(np.isfinite(cos)) else 0, s)
    return None


def validate_model(model: PerturbationModel, gap_tol: float = 1e-6) -> ValidationReport:
    """Check the structural assumptions on a model at its finite size.

    Reports the orthonormality defect of F, the normalized Gram matrix
    ``q_hat = G^T G / (M N)`` and the gaps between its consecutive eigenvalues
    (the smallest eigenvalue is compared against 0).  A rank-deficient G is a
    hard error; a near-degenerate spectrum only produces a warning.
    """
    G = model.G
    pair = _dependent_pair(G, rtol=1e-12)
    if pair is not None:
        r, s = pair
        raise ModelError(f"G is rank deficient: column {s} is linearly dependent (closest partner: column {r})")
    q_hat = G.T @ G / (model.M * model.N)
    q_hat = 0.5 * (q_hat + q_hat.T)
    gam = np.sort(np.linalg.eigvalsh(q_hat))[::-1]
    gaps = gam - np.append(gam[1:], 0.0)
    report = ValidationReport(
        orthonormality_defect=orthonormality_defect(model.F),
        q_hat=q_hat,
        eigen_gaps=gaps,
        min_gap=float(gaps.min()),
    )
    if report.min_gap < gap_tol:
        report.warnings.append(
            f"near-degenerate spectrum: min eigen gap {report.min_gap:.3e} < {gap_tol:.3e}; "
            "repeated or vanishing eigenvalues are outside the covered regime"
        )
        warnings.warn(report.warnings[-1], stacklevel=2)
    return report


def sample_noise_rows(model: PerturbationModel, seed: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start:stop`` of the noise matrix for ``seed``; equal to the same slice of the full draw."""
    N = model.N
    if not 0 <= start <= stop <= model.M:
        raise ModelError(f"row range {start}:{stop} outside 0:{model.M}")
    u = uniforms(seed, start * N, (stop - start) * N).reshape(stop - start, N)
    return model.noise.transform(u, slice(start, stop))


def sample_noise(model: PerturbationModel, seed: int) -> NoiseMatrix:
    """Draw ``C``: entry ``(i, j)`` is a function of ``(seed, i, j)`` only."""
    values = sample_noise_rows(model, seed, 0, model.M)
    values.setflags(write=False)
    return NoiseMatrix(values=values, seed=int(seed), model_id=model.model_id)


def assemble_observation(model: PerturbationModel, noise: NoiseMatrix) -> np.ndarray:
    """Return ``D = C + F G^T``."""
    if noise.model_id != model.model_id:
        raise ModelError("noise matrix was sampled for a different model")
    return noise.values + model.mean()
