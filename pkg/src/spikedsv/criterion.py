"""Top-K singular values and the K x K determinant criterion they satisfy.

For ``||C||^2 < lambda^2 / 4`` every top singular value ``lambda`` of
``D = C + F G^T`` solves

    det((lambda I - Z) S^{-1} (lambda I - Z^T) - R) = 0,

with ``Z, S, R`` built from resolvents of ``C``.  The criterion is evaluated
independently of the SVD and serves as a cross-check on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ModelError, NumericalError

CRITERION_MAX_DIM = 512
SINGULAR_COND = 1e12
# below this ratio lambda_k / lambda_1 the Gram route loses more than ~1e-12 relative
GRAM_MIN_RATIO = 1e-2


@dataclass
class SvdResult:
    singular_values: np.ndarray
    left_vectors: np.ndarray | None
    right_vectors: np.ndarray | None
    backend_tag: str
    residual_bound: float | None


def _dense(D, k, want_vectors):
    if want_vectors:
        U, s, Vt = sla.svd(D, full_matrices=False, lapack_driver="gesdd")
        return s[:k], U[:, :k], Vt[:k].T
    return sla.svd(D, compute_uv=False, lapack_driver="gesdd")[:k], None, None


def _gram(D, k, want_vectors):
    M, N = D.shape
    wide = M <= N
    A = D @ D.T if wide else D.T @ D
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    w, X = sla.eigh(A, subset_by_index=[n - k, n - 1], driver="evr")
    w, X = w[::-1], X[:, ::-1]
    s = np.sqrt(np.clip(w, 0.0, None))
    if not want_vectors:
        return s, None, None
    with np.errstate(divide="ignore", invalid="ignore"):
        if wide:
            U = X
            V = (D.T @ U) / s
        else:
            V = X
            U = (D @ V) / s
    return s, U, V


def top_singular_values(D, k: int, want_vectors: bool = False, backend: str = "auto") -> SvdResult:
    """The ``k`` largest singular values of a dense matrix, descending.

    ``backend="gram"`` takes a partial symmetric eigendecomposition of the
    smaller Gram matrix; it is used automatically for larger matrices when
    the requested values stay above ``1e-2 * lambda_1``, where its relative
    accuracy ``eps * (lambda_1 / lambda_k)^2`` is still about 1e-12.
    Otherwise a full dense SVD is used.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ModelError("expected a matrix")
    if not np.all(np.isfinite(D)):
        raise NumericalError("matrix has non-finite entries")
    M, N = D.shape
    if not 1 <= k <= min(M, N):
        raise ModelError(f"k={k} must satisfy 1 <= k <= min(M, N) = {min(M, N)}")

    if backend == "auto":
        backend = "gram" if min(M, N) > 32 else "dense"
    if backend == "gram":
        s, U, V = _gram(D, k, want_vectors)
        if s[0] == 0 or s[-1] < GRAM_MIN_RATIO * s[0]:
            backend = "dense"
    if backend == "dense":
        s, U, V = _dense(D, k, want_vectors)
    elif backend != "gram":
        raise ModelError(f"unknown backend {backend!r}")

    resid = None
    if want_vectors:
        resid = float(np.max(np.linalg.norm(D @ V - U * s, axis=0)))
    return SvdResult(singular_values=s, left_vectors=U, right_vectors=V, backend_tag=backend, residual_bound=resid)


def spectral_norm(C) -> float:
    return float(top_singular_values(C, 1).singular_values[0])


@dataclass
class CriterionMatrices:
    Z: np.ndarray
    S: np.ndarray
    R: np.ndarray
    lam: float
    gap_ok: bool
    noise_norm: float


def _resolvent_solve(C, lam, W_right, F):
    """Return ``(I_N - C^T C / lam^2)^{-1} W_right`` and ``S = F^T (I_M - C C^T / lam^2)^{-1} F``.

    One Cholesky factorization of the smaller of the two Gram operators is
    used; the other side follows from the push-through identity.
    """
    M, N = C.shape
    t = 1.0 / lam**2
    if N <= M:
        A = np.eye(N) - t * (C.T @ C)
        fac = sla.cho_factor(A, lower=True)
        CtF = C.T @ F
        X = sla.cho_solve(fac, np.hstack([W_right, CtF]))
        XW, XF = X[:, : W_right.shape[1]], X[:, W_right.shape[1]:]
        # (I - CC^T t)^{-1} = I + t C (I - C^T C t)^{-1} C^T
        S = F.T @ F + t * CtF.T @ XF
        return XW, S
    A = np.eye(M) - t * (C @ C.T)
    fac = sla.cho_factor(A, lower=True)
    Y = sla.cho_solve(fac, np.hstack([C @ W_right, F]))
    YW, YF = Y[:, : W_right.shape[1]], Y[:, W_right.shape[1]:]
    # (I - C^T C t)^{-1} = I + t C^T (I - C C^T t)^{-1} C
    XW = W_right + t * (C.T @ YW)
    S = F.T @ YF
    return XW, S


def criterion_matrices(C, F, G, lam: float) -> CriterionMatrices:
    """Resolvent matrices ``Z(lam), S(lam), R(lam)``.

    ``Z = G^T (I - C^T C/lam^2)^{-1} C^T F / lam``,
    ``S = F^T (I - C C^T/lam^2)^{-1} F``,
    ``R = G^T (I - C^T C/lam^2)^{-1} G``.

    Requires ``||C||^2 < lam^2 / 2``; ``gap_ok`` records the stronger
    ``||C||^2 < lam^2 / 4`` under which ``S`` is guaranteed invertible.
    """
    C = np.asarray(C, dtype=float)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    M, N = C.shape
    if F.shape[0] != M or G.shape[0] != N or F.shape[1] != G.shape[1]:
        raise ModelError(f"incompatible shapes C{C.shape}, F{F.shape}, G{G.shape}")
    if min(M, N) > CRITERION_MAX_DIM:
        raise ModelError(f"criterion oracle limited to min(M, N) <= {CRITERION_MAX_DIM}")
    lam = float(lam)
    cnorm = spectral_norm(C)
    if not cnorm**2 < lam**2 / 2:
        raise ModelError(f"precondition ||C||^2 < lambda^2/2 violated: ||C|| = {cnorm:.6g}, lambda = {lam:.6g}")
    CtF = C.T @ F
    X, S = _resolvent_solve(C, lam, np.hstack([CtF, G]), F)
    K = F.shape[1]
    Z = G.T @ X[:, :K] / lam
    R = G.T @ X[:, K:]
    S = 0.5 * (S + S.T)
    R = 0.5 * (R + R.T)
    return CriterionMatrices(Z=Z, S=S, R=R, lam=lam, gap_ok=bool(cnorm**2 < lam**2 / 4), noise_norm=cnorm)


def criterion_determinant(cm: CriterionMatrices) -> float:
    """``det((lam I - Z) S^{-1} (lam I - Z^T) - R)`` via LU with partial pivoting."""
    if not cm.gap_ok:
        raise ModelError(
            f"criterion requires ||C||^2 < lambda^2/4 (||C|| = {cm.noise_norm:.6g}, lambda = {cm.lam:.6g})"
        )
    if np.linalg.cond(cm.S) > SINGULAR_COND:
        raise NumericalError("S is numerically singular")
    K = cm.S.shape[0]
    L = cm.lam * np.eye(K) - cm.Z
    A = L @ sla.solve(cm.S, L.T, assume_a="sym") - cm.R
    return float(sla.det(A))


def determinant_at(C, F, G, lam: float) -> float:
    return criterion_determinant(criterion_matrices(C, F, G, lam))


@dataclass
class CriterionRow:
    r: int
    lam: float
    det_root: float
    det_below: float
    det_above: float
    passed: bool


def criterion_check(C, F, G, rtol: float = 1e-6, offset: float = 0.05) -> list[CriterionRow]:
    """Evaluate the determinant at each top singular value of ``C + F G^T`` and at ``lambda (1 +/- offset)``.

    A root passes when ``|det(lambda_r)| <= rtol * |det(lambda_r (1 + offset))|``.
    The lower off-root point is reported when it satisfies the norm
    precondition and is NaN otherwise.
    """
    C = np.asarray(C, dtype=float)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    K = F.shape[1]
    lam = top_singular_values(C + F @ G.T, K, backend="dense").singular_values
    rows = []
    for r, lr in enumerate(lam, start=1):
        d0 = determinant_at(C, F, G, lr)
        dhi = determinant_at(C, F, G, lr * (1 + offset))
        try:
            dlo = determinant_at(C, F, G, lr * (1 - offset))
        except ModelError:
            dlo = float("nan")
        rows.append(CriterionRow(r, float(lr), d0, dlo, dhi, bool(abs(d0) <= rtol * abs(dhi))))
    return rows
