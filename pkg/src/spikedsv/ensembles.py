"""Concrete models: rank one column means, 2x2 block means, and genotype arrays.

Each constructor returns a :class:`~spikedsv.model.PerturbationModel`; the
``*_predictions`` functions give the closed-form limiting quantities.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ModelError
from .model import NoiseProfile, PerturbationModel, ShiftedBinomial
from .predictor import spectral_data
from .rng import uniforms

# ---------------------------------------------------------------------------
# rank one


@dataclass
class Rank1Prediction:
    sqrt_rho: float
    shift: float
    variance: float
    gamma: float
    c: float

    @property
    def center(self) -> float:
        return self.sqrt_rho + self.shift


def _profile(shape, sigma2, family):
    if family == "gaussian":
        return NoiseProfile.gaussian(shape, sigma2)
    if family in ("uniform", "uniform_centered"):
        return NoiseProfile.uniform(shape, sigma2)
    raise ModelError(f"unsupported entry family {family!r} (use 'gaussian' or 'uniform')")


def rank1_model(mu, sigma2: float, M: int, N: int | None = None, family: str = "gaussian"):
    """Column means ``mu_j`` with common variance ``sigma2``.

    Returns the model (``f = 1_M / sqrt(M)``, ``g = sqrt(M) mu``) and the
    normal approximation of the largest singular value: center
    ``sqrt(M sum mu_j^2) + sigma2 (sqrt(c) + 1/sqrt(c)) / (2 sqrt(gamma))``
    with ``gamma = mean(mu_j^2)``, variance ``sigma2``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if N is not None and mu.size == 1:
        mu = np.full(N, mu[0])
    N = mu.size
    if not np.any(mu != 0):
        raise ModelError("rank-1 model needs a nonzero mean vector")
    if sigma2 < 0:
        raise ModelError("sigma2 must be non-negative")
    F = np.full((M, 1), 1.0 / np.sqrt(M))
    G = np.sqrt(M) * mu[:, None]
    model = PerturbationModel(F, G, _profile((M, N), sigma2, family))
    gamma = float(np.mean(mu**2))
    c = M / N
    shift = sigma2 * (np.sqrt(c) + 1.0 / np.sqrt(c)) / (2.0 * np.sqrt(gamma))
    pred = Rank1Prediction(
        sqrt_rho=float(np.sqrt(M * np.sum(mu**2))), shift=float(shift), variance=float(sigma2), gamma=gamma, c=c
    )
    return model, pred


# ---------------------------------------------------------------------------
# 2x2 block means


@dataclass(frozen=True)
class BlockSpec:
    """``(2M) x (2N)`` matrix of four ``M x N`` blocks with means ``mu`` and variances ``sigma2``.

    Blocks are ordered top-left, top-right, bottom-left, bottom-right.
    """

    mu: tuple
    sigma2: tuple
    M: int
    N: int
    entry_family: str = "gaussian"

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        s2 = tuple(float(x) for x in np.broadcast_to(np.asarray(self.sigma2, float), (4,)))
        if len(mu) != 4:
            raise ModelError("block model needs four means")
        if any(s < 0 for s in s2):
            raise ModelError("block variances must be non-negative")
        if self.M < 1 or self.N < 1:
            raise ModelError("block dimensions must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", s2)
        m1, m2, m3, m4 = mu
        scale = max(abs(x) for x in mu) ** 2
        if abs(m2 * m3 - m1 * m4) <= 1e-12 * max(scale, np.finfo(float).tiny):
            raise ModelError(
                f"linear dependence: mu2*mu3 == mu1*mu4 for mu={mu}; the right factors are proportional"
            )
        off = m1 * m3 + m2 * m4
        diff = m1**2 + m2**2 - m3**2 - m4**2
        if abs(off) <= 1e-12 * scale and abs(diff) <= 1e-12 * scale:
            raise ModelError(
                f"equal-length orthogonality: mu1 = +/-mu4 and mu2 = -/+mu3 for mu={mu}; "
                "the two eigenvalues coincide"
            )


def block_q(mu) -> np.ndarray:
    m1, m2, m3, m4 = mu
    return 0.25 * np.array([[m1**2 + m2**2, m1 * m3 + m2 * m4], [m1 * m3 + m2 * m4, m3**2 + m4**2]])


def block_model(spec: BlockSpec) -> PerturbationModel:
    M, N = spec.M, spec.N
    m1, m2, m3, m4 = spec.mu
    F = np.zeros((2 * M, 2))
    F[:M, 0] = F[M:, 1] = 1.0 / np.sqrt(M)
    G = np.empty((2 * N, 2))
    G[:N, 0], G[N:, 0] = m1, m2
    G[:N, 1], G[N:, 1] = m3, m4
    G *= np.sqrt(M)
    s = spec.sigma2
    sigma2 = np.empty((2 * M, 2 * N))
    sigma2[:M, :N], sigma2[:M, N:], sigma2[M:, :N], sigma2[M:, N:] = s
    return PerturbationModel(F, G, _profile(sigma2.shape, sigma2, spec.entry_family))


@dataclass
class BlockPrediction:
    gamma: np.ndarray
    v: np.ndarray
    m: np.ndarray
    cov: np.ndarray
    sqrt_rho: np.ndarray

    @property
    def center(self):
        return self.sqrt_rho + self.m


def block_predictions(spec: BlockSpec) -> BlockPrediction:
    """Closed-form limits for the block model.

    The shift uses the general formula with
    ``Sigma_R = (MN/2) [[mu1^2 a + mu2^2 b, mu1 mu3 a + mu2 mu4 b], [., mu3^2 a + mu4^2 b]]``
    (``a = s1 + s3``, ``b = s2 + s4``) and ``Sigma_S = diag(s1 + s2, s3 + s4) / 2``.
    The covariance comes from the limit
    ``Z0 -> 1/2 [[mu1 s1 z1 + mu2 s2 z2, mu1 s3 z3 + mu2 s4 z4], [mu3 s1 z1 + mu4 s2 z2, mu3 s3 z3 + mu4 s4 z4]]``
    with independent standard normals ``z1..z4``, expanded exactly.
    """
    M, N = spec.M, spec.N
    m1, m2, m3, m4 = spec.mu
    s1, s2, s3, s4 = spec.sigma2
    gamma, V = spectral_data(block_q(spec.mu))
    a, b = s1 + s3, s2 + s4
    sigma_R = 0.5 * M * N * np.array(
        [[m1**2 * a + m2**2 * b, m1 * m3 * a + m2 * m4 * b], [m1 * m3 * a + m2 * m4 * b, m3**2 * a + m4**2 * b]]
    )
    sigma_S = 0.5 * np.diag([s1 + s2, s3 + s4])
    Mf, Nf = 2 * M, 2 * N
    c = M / N
    m = np.empty(2)
    for r in range(2):
        v = V[:, r]
        inner = c / (gamma[r] * Mf * Nf) * sigma_R + sigma_S
        m[r] = v @ inner @ v / (2.0 * np.sqrt(c * gamma[r]))

    sd = np.sqrt([s1, s2, s3, s4])
    # L[:, :, l] is the coefficient matrix of z_l in the limit of Z0
    L = np.zeros((2, 2, 4))
    L[0, 0, 0], L[0, 0, 1] = m1 * sd[0], m2 * sd[1]
    L[0, 1, 2], L[0, 1, 3] = m1 * sd[2], m2 * sd[3]
    L[1, 0, 0], L[1, 0, 1] = m3 * sd[0], m4 * sd[1]
    L[1, 1, 2], L[1, 1, 3] = m3 * sd[2], m4 * sd[3]
    L *= 0.5
    W = np.einsum("ir,ijl,jr->rl", V, L, V) / np.sqrt(gamma)[:, None]
    cov = W @ W.T
    return BlockPrediction(gamma=gamma, v=V, m=m, cov=cov, sqrt_rho=np.sqrt(4.0 * gamma * M * N))


# ---------------------------------------------------------------------------
# population genetics


class MomentTensor:
    """Symmetric mixed moments ``pi_{r1..rd}`` of allelic probabilities, orders 1-4.

    ``tensor(d)`` is the full ``K^d`` array; ``pi(r, s, ...)`` indexes it.
    """

    def __init__(self, tensors, provenance: str):
        self.tensors = tuple(np.asarray(t, dtype=float) for t in tensors)
        if len(self.tensors) != 4:
            raise ModelError("moment tensor needs orders 1 through 4")
        self.K = self.tensors[0].shape[0]
        for d, t in enumerate(self.tensors, start=1):
            if t.shape != (self.K,) * d:
                raise ModelError(f"order-{d} tensor has shape {t.shape}")
        self.provenance = provenance

    def tensor(self, d: int) -> np.ndarray:
        return self.tensors[d - 1]

    def pi(self, *idx) -> float:
        return float(self.tensors[len(idx) - 1][tuple(idx)])

    def check(self, atol: float = 1e-12) -> None:
        """Raise unless values lie in (0, 1), tensors are symmetric and Cauchy-Schwarz holds."""
        for d, t in enumerate(self.tensors, start=1):
            if np.any(t <= 0) or np.any(t >= 1):
                raise ModelError(f"order-{d} moments must lie strictly inside (0, 1)")
            for perm in itertools.permutations(range(d)):
                if np.max(np.abs(t - t.transpose(perm))) > atol:
                    raise ModelError(f"order-{d} moment tensor is not symmetric")
        p2 = self.tensors[1]
        d = np.diag(p2)
        if np.any(p2**2 > np.outer(d, d) * (1 + 1e-12)):
            raise ModelError("order-2 moments violate Cauchy-Schwarz")

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, **{f"order{d}": self.tensor(d).tolist() for d in range(1, 5)}}


def pi_moments_empirical(p) -> MomentTensor:
    """Averages ``(1/N) sum_j p_{r1}(j) ... p_{rd}(j)`` over markers; ``p`` is ``K x N``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if np.any((p <= 0) | (p >= 1)):
        raise ModelError("allelic probabilities must lie strictly inside (0, 1)")
    N = p.shape[1]
    t1 = p.mean(axis=1)
    t2 = np.einsum("aj,bj->ab", p, p) / N
    t3 = np.einsum("aj,bj,cj->abc", p, p, p) / N
    t4 = np.einsum("aj,bj,cj,dj->abcd", p, p, p, p) / N
    return MomentTensor((t1, t2, t3, t4), provenance="empirical")


def u_squared_density(x):
    """Density ``1 / (2 sqrt(x))`` on (0, 1]: the law of ``U^2`` with ``U`` uniform."""
    return 0.5 / np.sqrt(x)


def uniform_density(x):
    return np.ones_like(np.asarray(x, dtype=float))


SPECTRA = {"u-squared": u_squared_density, "uniform": uniform_density}


def _marginal_moments(density, order=4, tol=1e-6):
    """``E x^k``, ``k = 0..order`` of a density on [0, 1] by adaptive Gauss-Kronrod."""
    out = np.empty(order + 1)
    for k in range(order + 1):
        val, _ = integrate.quad(lambda x, k=k: x**k * density(x), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
        out[k] = val
    if abs(out[0] - 1.0) > tol:
        raise ModelError(f"density is not normalized: integral = {out[0]!r}")
    return out


def pi_moments_spectral(spectrum, K: int | None = None, tol: float = 1e-6) -> MomentTensor:
    """Moments ``pi_{r1..rd} = int x_{r1} ... x_{rd} phi(x) dx`` of a joint allelic spectrum.

    ``spectrum`` is either a list of K one-dimensional marginal densities
    (independent coordinates; a single density with ``K`` repeats it), a
    name from :data:`SPECTRA`, or a callable ``phi(x_1, ..., x_K)`` of a
    non-product density for ``K <= 3``.
    """
    if isinstance(spectrum, str):
        if spectrum not in SPECTRA:
            raise ModelError(f"unknown spectrum {spectrum!r}; choose from {sorted(SPECTRA)}")
        spectrum = SPECTRA[spectrum]
    if callable(spectrum) and K is not None and _is_marginal(spectrum):
        spectrum = [spectrum] * K
    if isinstance(spectrum, (list, tuple)):
        K = len(spectrum)
        mom = [_marginal_moments(f, tol=tol) for f in spectrum]
        tensors = []
        for d in range(1, 5):
            t = np.empty((K,) * d)
            for idx in itertools.product(range(K), repeat=d):
                val = 1.0
                for r, mult in Counter(idx).items():
                    val *= mom[r][mult]
                t[idx] = val
            tensors.append(t)
        return MomentTensor(tensors, provenance="spectral")
    if K is None or K > 3:
        raise ModelError("non-product spectra are supported for K <= 3 and need K")
    return _cubature_moments(spectrum, K, tol)


def _is_marginal(f) -> bool:
    return getattr(f, "__name__", "") in {g.__name__ for g in SPECTRA.values()} or getattr(f, "marginal", False)


def _cubature_moments(phi, K, tol):
    opts = {"epsabs": 1e-10, "epsrel": 1e-10, "limit": 100}
    ranges = [(0.0, 1.0)] * K

    def integral(weight):
        val, _ = integrate.nquad(lambda *x: weight(x) * phi(*x), ranges, opts=[opts] * K)
        return val

    mass = integral(lambda x: 1.0)
    if abs(mass - 1.0) > tol:
        raise ModelError(f"density is not normalized: integral = {mass!r}")
    tensors = []
    cache = {}
    for d in range(1, 5):
        t = np.empty((K,) * d)
        for idx in itertools.product(range(K), repeat=d):
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = integral(lambda x, key=key: np.prod([x[i] for i in key]))
            t[idx] = cache[key]
        tensors.append(t)
    return MomentTensor(tensors, provenance="spectral")


@dataclass
class AllelicModel:
    """Subpopulation sizes and per-marker allele probabilities ``p`` (``K x N``).

    Individuals are stored contiguously by subpopulation.
    """

    sizes: tuple
    p: np.ndarray
    pi: MomentTensor | None = None

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.p.shape[0] != len(self.sizes):
            raise ModelError(f"{len(self.sizes)} subpopulation sizes but {self.p.shape[0]} probability vectors")
        if any(s < 1 for s in self.sizes):
            raise ModelError("every subpopulation needs at least one individual")
        if np.any((self.p <= 0) | (self.p >= 1)):
            raise ModelError("allelic probabilities must lie strictly inside (0, 1)")
        if self.pi is None:
            self.pi = pi_moments_empirical(self.p)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def M(self) -> int:
        return sum(self.sizes)

    @property
    def N(self) -> int:
        return self.p.shape[1]

    @property
    def proportions(self) -> np.ndarray:
        s = np.asarray(self.sizes, dtype=float)
        return s / s.sum()

    def membership(self) -> np.ndarray:
        return np.repeat(np.arange(self.K), self.sizes)


def sample_allelic_probabilities(K: int, N: int, seed: int, spectrum: str = "u-squared") -> np.ndarray:
    """Independent draws ``p_r(j)`` for ``K`` subpopulations, ``K x N``.

    ``u-squared`` squares a uniform (density ``1/(2 sqrt(x))``, moments
    ``1/(2k+1)``); ``uniform`` uses the uniform itself.
    """
    u = uniforms(seed, 0, K * N).reshape(K, N)
    if spectrum == "u-squared":
        return u * u
    if spectrum == "uniform":
        return u
    raise ModelError(f"unknown spectrum {spectrum!r}")


def genetics_model(allelic: AllelicModel) -> PerturbationModel:
    """Genotype counts: ``f_r = e_r / sqrt(M_r)``, ``g_s = 2 sqrt(M_s) p_s``, Binomial(2, p) noise."""
    K, M = allelic.K, allelic.M
    member = allelic.membership()
    sizes = np.asarray(allelic.sizes, dtype=float)
    F = np.zeros((M, K))
    F[np.arange(M), member] = 1.0 / np.sqrt(sizes[member])
    G = (2.0 * np.sqrt(sizes))[None, :] * allelic.p.T
    noise = NoiseProfile((M, allelic.N), (ShiftedBinomial(allelic.p[member], trials=2),))
    return PerturbationModel(F, G, noise)


@dataclass
class GeneticsPrediction:
    """Limits of the shift and covariance of the top singular values, and of their normalized squares."""

    Q: np.ndarray
    gamma: np.ndarray
    V: np.ndarray
    sigma_t: np.ndarray
    m: np.ndarray
    m_coef: np.ndarray
    cov: np.ndarray
    m_tilde: np.ndarray
    cov_tilde: np.ndarray
    c: float
    proportions: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for key in ("Q", "gamma", "V", "sigma_t", "m", "m_coef", "cov", "m_tilde", "cov_tilde", "proportions"):
            out[key] = np.asarray(getattr(self, key)).tolist()
        out["c"] = float(self.c)
        out.update(self.extra)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def genetics_limits(pi: MomentTensor, proportions, c: float) -> GeneticsPrediction:
    """Closed-form limits from the moment tensor, subpopulation proportions ``c_r / c`` and ``c = M / N``.

    ``Q_rs = 4 sqrt(c_r c_s) / c pi_rs`` and
    ``[Sigma_t]_rs = sqrt(c_r c_s) / c (pi_rst - pi_rstt)``.  The shift is
    ``m_r = a_r sqrt(c) + b_r / sqrt(c)`` with
    ``b_r = sum_t v_rt^2 (pi_t - pi_tt) / sqrt(gamma_r)`` and
    ``a_r = 4 gamma_r^{-3/2} sum_t (c_t / c) v_r^T Sigma_t v_r``; ``m_coef``
    holds the rows ``(a_r, b_r)``.  The covariance is
    ``8 / sqrt(gamma_r gamma_s) sum_t v_rt v_st v_r^T Sigma_t v_s``, and the
    normalized squares use ``m_tilde`` and ``cov_tilde`` scaled by
    ``2 sqrt(gamma_r c) / (1 + sqrt(c))^2`` per index.
    """
    w = np.asarray(proportions, dtype=float)
    w = w / w.sum()
    K = w.size
    if pi.K != K:
        raise ModelError(f"moment tensor has K={pi.K} but {K} proportions were given")
    sq = np.sqrt(np.outer(w, w))
    Q = 4.0 * sq * pi.tensor(2)
    Q = 0.5 * (Q + Q.T)
    gamma, V = spectral_data(Q)
    p3, p4 = pi.tensor(3), pi.tensor(4)
    idx = np.arange(K)
    sigma_t = np.stack([sq * (p3[:, :, t] - p4[:, :, t, t]) for t in range(K)])
    het = pi.tensor(1) - pi.tensor(2)[idx, idx]

    quad = np.einsum("ir,tij,jr->rt", V, sigma_t, V)  # v_r^T Sigma_t v_r
    a = 4.0 * gamma**-1.5 * (quad @ w)
    b = (V**2).T @ het / np.sqrt(gamma)
    m = a * np.sqrt(c) + b / np.sqrt(c)

    cross = np.einsum("ir,tij,js->trs", V, sigma_t, V)  # v_r^T Sigma_t v_s
    S = np.einsum("tr,ts,trs->rs", V, V, cross)
    cov = 8.0 * S / np.sqrt(np.outer(gamma, gamma))
    cov = 0.5 * (cov + cov.T)

    k = (1.0 + np.sqrt(c)) ** 2
    m_tilde = 2.0 / k * ((V**2).T @ het) + 8.0 * c / (gamma * k) * (quad @ w)
    cov_tilde = 32.0 * c / k**2 * S
    cov_tilde = 0.5 * (cov_tilde + cov_tilde.T)
    return GeneticsPrediction(
        Q=Q,
        gamma=gamma,
        V=V,
        sigma_t=sigma_t,
        m=m,
        m_coef=np.column_stack([a, b]),
        cov=cov,
        m_tilde=m_tilde,
        cov_tilde=cov_tilde,
        c=float(c),
        proportions=w,
    )


def genetics_predictions(allelic: AllelicModel, pi: MomentTensor | None = None) -> GeneticsPrediction:
    """Limits at the model's own ``c = M / N``, from its empirical moments unless ``pi`` is given."""
    return genetics_limits(allelic.pi if pi is None else pi, allelic.proportions, allelic.M / allelic.N)
