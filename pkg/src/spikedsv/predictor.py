"""Deterministic growth, shift and fluctuation terms of the top-K singular values.

For ``D = C + F G^T`` each of the K largest singular values splits as

    lambda_r = sqrt(rho_r) + Z_r + m_r + eps_r

with ``rho_r`` the eigenvalues of ``R0 = G^T G``, ``Z_r`` a centered linear
statistic of the noise, ``m_r`` a deterministic shift set by the entry
variances, and a residual ``eps_r`` that vanishes in probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, ModelError
from .model import NoiseMatrix, PerturbationModel

SIGN_TOL = 1e-12
GAP_RTOL = 1e-12


def gram_matrix(G) -> np.ndarray:
    """``G^T G``, symmetrized to remove rounding skew."""
    G = np.asarray(G, dtype=float)
    R0 = G.T @ G
    return 0.5 * (R0 + R0.T)


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the first component with magnitude above 1e-12 is positive."""
    V = np.array(V, dtype=float)
    for r in range(V.shape[1]):
        big = np.flatnonzero(np.abs(V[:, r]) > SIGN_TOL)
        if big.size and V[big[0], r] < 0:
            V[:, r] = -V[:, r]
    return V


def spectral_data(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in strictly descending order with sign-fixed unit eigenvectors.

    Raises
    ------
    DegenerateSpectrumError
        If two eigenvalues (or the smallest one and zero) are closer than
        ``1e-12 * ||S||``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ModelError(f"expected a square matrix, got shape {S.shape}")
    scale = np.linalg.norm(S, 2)
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * max(scale, 1.0):
        raise ModelError("matrix is not symmetric")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    gaps = w - np.append(w[1:], 0.0)
    if np.any(gaps <= GAP_RTOL * scale):
        raise DegenerateSpectrumError(
            f"eigenvalues {w} are repeated or non-positive (gap tolerance {GAP_RTOL * scale:.3e})"
        )
    return w, fix_signs(V)


def _two_product(a, b):
    """Dekker's error-free product: ``a * b == p + e`` exactly (barring overflow)."""
    p = a * b
    split = 134217729.0  # 2**27 + 1
    ta = split * a
    a_hi = ta - (ta - a)
    a_lo = a - a_hi
    tb = split * b
    b_hi = tb - (tb - b)
    b_lo = b - b_hi
    e = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, e


def refined_sqrt(x):
    """Square root with one Newton step on top of the library value.

    The residual ``s^2 - x`` is formed with an exact product, so the step
    corrects a library result that is off by an ulp and leaves a correctly
    rounded one unchanged.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(x)
    p, e = _two_product(s, s)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        resid = (p - x) + e
        t = s - resid / (2.0 * s)
    return np.where((s > 0) & np.isfinite(t), t, s)


def variance_profiles(model: PerturbationModel) -> tuple[np.ndarray, np.ndarray]:
    """Column- and row-averaged entry variances ``(D_R, D_S)`` (diagonals only)."""
    var = model.noise.variance()
    return var.mean(axis=0), var.mean(axis=1)


def sigma_matrices(model: PerturbationModel) -> tuple[np.ndarray, np.ndarray]:
    """``Sigma_R = G^T diag(D_R) G`` and ``Sigma_S = F^T diag(D_S) F``."""
    d_r, d_s = variance_profiles(model)
    sigma_R = model.G.T @ (d_r[:, None] * model.G)
    sigma_S = model.F.T @ (d_s[:, None] * model.F)
    return 0.5 * (sigma_R + sigma_R.T), 0.5 * (sigma_S + sigma_S.T)


def shift(sigma_R, sigma_S, gamma_r, v_r, c, M, N) -> float:
    """Deterministic shift ``m_r``.

    ``m_r = v_r^T (c / (gamma_r M N) Sigma_R + Sigma_S) v_r / (2 sqrt(c gamma_r))``
    """
    if not gamma_r > 0:
        raise ModelError(f"shift needs a positive eigenvalue, got {gamma_r!r}")
    v = np.asarray(v_r, dtype=float)
    inner = c / (gamma_r * M * N) * np.asarray(sigma_R) + np.asarray(sigma_S)
    return float(v @ inner @ v / (2.0 * np.sqrt(c * gamma_r)))


@dataclass
class SpectralPrediction:
    """Finite-size spectral data and shifts; ``to_json`` uses these field names verbatim."""

    rho: np.ndarray
    gamma: np.ndarray
    V: np.ndarray
    U: np.ndarray
    sigma_R: np.ndarray
    sigma_S: np.ndarray
    m: np.ndarray
    c: float

    _FIELDS = ("rho", "gamma", "V", "U", "sigma_R", "sigma_S", "m", "c")

    @property
    def K(self) -> int:
        return len(self.rho)

    @property
    def sqrt_rho(self) -> np.ndarray:
        return refined_sqrt(self.rho)

    @property
    def center(self) -> np.ndarray:
        """Predicted location ``sqrt(rho_r) + m_r`` of each singular value."""
        return self.sqrt_rho + self.m

    def to_dict(self) -> dict:
        out = {}
        for name in self._FIELDS:
            val = getattr(self, name)
            out[name] = float(val) if name == "c" else np.asarray(val).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralPrediction":
        kw = {name: (float(d[name]) if name == "c" else np.asarray(d[name], dtype=float)) for name in cls._FIELDS}
        return cls(**kw)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "SpectralPrediction":
        return cls.from_dict(json.loads(text))


def predict(model: PerturbationModel) -> SpectralPrediction:
    """All deterministic quantities of the decomposition for one model.

    The limits in the asymptotic statement are replaced by their finite-size
    surrogates: ``gamma_r`` and ``v_r`` come from ``R0 / (M N)``.
    """
    M, N = model.M, model.N
    R0 = gram_matrix(model.G)
    rho, U = spectral_data(R0)
    gamma, V = spectral_data(R0 / (M * N))
    sigma_R, sigma_S = sigma_matrices(model)
    c = M / N
    m = np.array([shift(sigma_R, sigma_S, gamma[r], V[:, r], c, M, N) for r in range(model.K)])
    return SpectralPrediction(rho=rho, gamma=gamma, V=V, U=U, sigma_R=sigma_R, sigma_S=sigma_S, m=m, c=c)


def fluctuation_matrix(model: PerturbationModel, C) -> np.ndarray:
    """``Z0 = G^T C^T F / sqrt(M N)``."""
    C = np.asarray(C, dtype=float)
    return model.G.T @ (C.T @ model.F) / np.sqrt(model.M * model.N)


def fluctuation(model: PerturbationModel, noise: NoiseMatrix, pred: SpectralPrediction):
    """Return ``(Z0, Z)`` with ``Z_r = v_r^T Z0 v_r / sqrt(gamma_r)``."""
    Z0 = fluctuation_matrix(model, noise.values)
    Z = np.einsum("ir,ij,jr->r", pred.V, Z0, pred.V) / np.sqrt(pred.gamma)
    return Z0, Z


def fluctuation_covariance(model: PerturbationModel, pred: SpectralPrediction) -> np.ndarray:
    """Exact covariance of ``(Z_1, ..., Z_K)`` for independent entries.

    ``Z_r`` is linear in the noise with weight ``a_r(i) b_r(j) / sqrt(M N gamma_r)``
    where ``a_r = F v_r`` and ``b_r = G v_r``, so the covariance is a weighted
    sum of the entry variances.
    """
    var = model.noise.variance()
    A = model.F @ pred.V
    B = model.G @ pred.V
    K = model.K
    cov = np.empty((K, K))
    for r in range(K):
        for s in range(r, K):
            cov[r, s] = cov[s, r] = (A[:, r] * A[:, s]) @ var @ (B[:, r] * B[:, s])
    scale = np.sqrt(np.outer(pred.gamma, pred.gamma)) * model.M * model.N
    return cov / scale


def normalized_shift(pred: SpectralPrediction, M: int, N: int) -> np.ndarray:
    """Shift of ``Lambda_r = lambda_r^2 / (sqrt(M) + sqrt(N))^2`` around ``rho_r / (sqrt(M) + sqrt(N))^2``.

    First-order propagation of ``m_r`` through ``x -> x^2``.
    """
    return 2.0 * pred.sqrt_rho * pred.m / (np.sqrt(M) + np.sqrt(N)) ** 2


def normalized_scale(pred: SpectralPrediction, M: int, N: int) -> np.ndarray:
    """Factor ``2 sqrt(rho_r) / (sqrt(M) + sqrt(N))^2`` mapping fluctuations of lambda to those of Lambda."""
    return 2.0 * pred.sqrt_rho / (np.sqrt(M) + np.sqrt(N)) ** 2


@dataclass
class FluctuationSample:
    Z0: np.ndarray
    Z: np.ndarray
    lam: np.ndarray
    epsilon: np.ndarray


def decompose(model: PerturbationModel, noise: NoiseMatrix, pred: SpectralPrediction, lam) -> FluctuationSample:
    """Split observed singular values into growth, fluctuation, shift and residual."""
    lam = np.asarray(lam, dtype=float)[: model.K]
    if lam.size != model.K:
        raise ModelError(f"need {model.K} singular values, got {lam.size}")
    if np.any(np.diff(lam) > 0):
        raise ModelError("singular values must be sorted in descending order")
    Z0, Z = fluctuation(model, noise, pred)
    eps = lam - pred.sqrt_rho - Z - pred.m
    return FluctuationSample(Z0=Z0, Z=Z, lam=lam, epsilon=eps)


def z0_second_moment_bound(model: PerturbationModel) -> float:
    """Upper bound ``K^2 sqrt(C4) max_s ||g_s||^2 / (M N)`` on ``E ||Z0||_F^2``.

    Each entry ``f_r^T C g_s`` has second moment at most
    ``max sigma_ij^2 ||g_s||^2`` and ``max sigma_ij^2 <= sqrt(C4)``.
    """
    g2 = np.max(np.sum(model.G**2, axis=0))
    return model.K**2 * np.sqrt(model.noise.fourth_moment_bound) * g2 / (model.M * model.N)
