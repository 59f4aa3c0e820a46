"""Gap-certified extraction of the near-kernel of a symmetric PSD matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2000
MIN_GAP_RATIO = 1e3
SHIFT_INVERT_LIMIT = 6000


class GapAmbiguityError(RuntimeError):
    """No clear spectral gap separates the near-kernel from the rest."""

    def __init__(self, message: str, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues)


@dataclass(frozen=True)
class Kernel:
    """Orthonormal near-kernel basis with its spectral certificate.

    Attributes:
        basis: ``(N, k)`` orthonormal columns.
        eigenvalues: the computed low spectrum (ascending).
        threshold: geometric mean of the eigenvalues flanking the gap.
        gap_ratio: ratio of those two eigenvalues.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray
    threshold: float
    gap_ratio: float

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _scale(S) -> float:
    if sp.issparse(S):
        return float(abs(S).sum(axis=1).max()) if S.nnz else 0.0
    return float(np.abs(S).sum(axis=1).max()) if S.size else 0.0


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    V = np.array(V, dtype=float, copy=True)
    for j in range(V.shape[1]):
        i = np.argmax(np.abs(V[:, j]) > 0.999 * np.abs(V[:, j]).max())
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def low_spectrum(S, count: int, seed: int = 0, direct: bool | None = None):
    """Ascending ``count`` smallest eigenpairs of symmetric ``S``.

    Args:
        direct: force (``True``) or forbid (``False``) sparse shift-invert;
            by default it is used up to ``SHIFT_INVERT_LIMIT`` unknowns.
    """
    N = S.shape[0]
    count = min(count, N)
    if N < DENSE_LIMIT:
        A = S.toarray() if sp.issparse(S) else np.asarray(S)
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        return w[:count], V[:, :count]
    if direct is None:
        direct = N <= SHIFT_INVERT_LIMIT
    if direct:
        scale = _scale(S) or 1.0
        v0 = np.random.default_rng(seed).standard_normal(N)
        w, V = spla.eigsh(sp.csc_matrix(S), k=min(count, N - 2), sigma=-1e-3 * scale, which="LM", v0=v0)
        order = np.argsort(w)
        return w[order], V[:, order]
    # block iteration: sparse LU of periodic 3D/4D Laplacians fills in badly
    X = np.random.default_rng(seed).standard_normal((N, count))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w, V = spla.lobpcg(sp.csr_matrix(S), X, largest=False, tol=1e-12, maxiter=2000)
    order = np.argsort(w)
    return w[order], V[:, order]


def polish_kernel(S, V: np.ndarray) -> np.ndarray:
    """Remove the range component of approximate kernel vectors, then orthonormalize."""
    S = sp.csr_matrix(S)
    out = np.empty_like(V)
    for j in range(V.shape[1]):
        v = V[:, j]
        r = S @ v
        if np.linalg.norm(r) > 0:
            x, _ = spla.cg(S, r, rtol=1e-10, atol=0.0, maxiter=2000)
            if np.linalg.norm(S @ (v - x)) < np.linalg.norm(r):
                v = v - x
        out[:, j] = v
    Q, Rm = np.linalg.qr(out)
    return Q * np.sign(np.diag(Rm))


def certified_kernel(S, max_kernel: int = 32, seed: int = 0, min_ratio: float = MIN_GAP_RATIO,
                     direct: bool | None = None) -> Kernel:
    """Near-kernel of a symmetric positive semidefinite matrix.

    Args:
        S: dense or sparse symmetric PSD matrix.
        max_kernel: largest kernel dimension searched for.
        seed: seed for the iterative solver's start vector.
        min_ratio: required ratio across the gap.
        direct: passed to :func:`low_spectrum`.

    Raises:
        GapAmbiguityError: if the largest ratio between consecutive
            eigenvalues in the low spectrum is below ``min_ratio``.
    """
    N = S.shape[0]
    if N == 0:
        return Kernel(np.zeros((0, 0)), np.zeros(0), 0.0, np.inf)
    scale = _scale(S) or 1.0
    floor = 1e-16 * scale
    count = min(N, 8)
    while True:
        w, V = low_spectrum(S, count, seed, direct)
        mu = np.concatenate([[floor], np.maximum(w, floor)])
        if len(w) == N:
            mu = np.concatenate([mu, [max(scale, mu[-1]) * 1.0]])
        ratios = mu[1:] / mu[:-1]
        k = int(np.argmax(ratios))
        if (k < len(w) and k < count - 1) or count >= N or count > max_kernel + 2:
            break
        count = min(N, 2 * count)
    ratio = float(ratios[k])
    if ratio < min_ratio:
        raise GapAmbiguityError(
            f"spectral gap ratio {ratio:.3g} below {min_ratio:g} (low spectrum {w[:6]})", w)
    threshold = float(np.sqrt(mu[k] * mu[k + 1]))
    B = V[:, :k]
    if N >= DENSE_LIMIT and not (direct if direct is not None else N <= SHIFT_INVERT_LIMIT) and k:
        B = polish_kernel(S, B)
    return Kernel(fix_signs(B), w, threshold, ratio)


def dense_nullspace(A: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Orthonormal null space of a small dense matrix via SVD."""
    A = np.atleast_2d(A)
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    _, s, Vt = np.linalg.svd(A)
    tol = rtol * (s[0] if s.size else 1.0)
    r = int(np.sum(s > tol))
    return Vt[r:].T


def numerical_rank(A: np.ndarray, rtol: float = 1e-9) -> int:
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
