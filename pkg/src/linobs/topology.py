"""Real homology and cohomology of closed complexes.

Harmonic cochains come from a gap-certified eigensolve of the Hodge
Laplacian; cycles are integer chains chosen greedily from combinatorial
candidates so that the period matrix is well conditioned.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus as calc
from ._spectral import certified_kernel, numerical_rank
from .calculus import Cochain
from .mesh import Chain, CellComplex, chain_integral


class ObstructedError(ValueError):
    """A closed cochain has nonzero periods, so it has no potential."""

    def __init__(self, message: str, periods):
        super().__init__(message)
        self.periods = np.asarray(periods)


@dataclass(frozen=True, eq=False)
class HomologyData:
    """Betti numbers, harmonic bases, cycle bases and period matrices.

    Attributes:
        complex: the complex.
        betti: ``b_p`` for ``p = 0..n``.
        harmonic: per degree, primal harmonic cochains (orthonormal).
        cycles: per degree, primal integer cycles.
        period_matrix: per degree, ``P[i, j] = <harmonic[i], cycles[j]>``.
        gap_ratios: spectral certificate per degree.
    """

    complex: CellComplex
    betti: tuple
    harmonic: dict
    cycles: dict
    period_matrix: dict
    gap_ratios: dict
    harmonic_residuals: dict
    _dual: dict = field(default_factory=dict, repr=False)

    def condition(self, p: int) -> float:
        P = self.period_matrix[p]
        return float(np.linalg.cond(P)) if P.size else 1.0

    def harmonic_basis(self, p: int, dual: bool = False) -> list[Cochain]:
        if not dual:
            return self.harmonic[p]
        self._ensure_dual(p)
        return self._dual[p][0]

    def cycle_basis(self, p: int, dual: bool = False) -> list[Chain]:
        if not dual:
            return self.cycles[p]
        self._ensure_dual(p)
        return self._dual[p][1]

    def _ensure_dual(self, q: int) -> None:
        if q in self._dual:
            return
        n = self.complex.dimension
        hs = [calc.hodge_star(h) for h in self.harmonic[n - q]]
        cands = self.complex.cycle_candidates(q, dual=True)
        self._dual[q] = (hs, _greedy_cycles(hs, cands, self.betti[q]))

    def to_csv(self) -> str:
        """Period tables: one row per cycle, one column per harmonic cochain."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["degree", "cycle"] + [f"h{i}" for i in range(max(self.betti) or 1)])
        for p in range(self.complex.dimension + 1):
            P = self.period_matrix[p]
            for j, z in enumerate(self.cycles[p]):
                w.writerow([p, z.label or f"z{j}"] + [f"{P[i, j]:.12g}" for i in range(P.shape[0])])
        return buf.getvalue()


def _laplacian_sym(K: CellComplex, p: int) -> sp.csr_matrix:
    """``W^{1/2} (delta d + d delta) W^{-1/2}``, symmetric PSD."""
    n = K.dimension
    w = K.star_weights(p)
    sw = np.sqrt(w)
    N = K.n_cells(p)
    S = sp.csr_matrix((N, N))
    if p < n:
        B = K.boundary(p + 1).astype(float)
        S = S + sp.diags(1 / sw) @ B @ sp.diags(K.star_weights(p + 1)) @ B.T @ sp.diags(1 / sw)
    if p > 0:
        B = K.boundary(p).astype(float)
        S = S + sp.diags(sw) @ B.T @ sp.diags(1 / K.star_weights(p - 1)) @ B @ sp.diags(sw)
    return sp.csr_matrix(0.5 * (S + S.T))


def _greedy_cycles(hs: list[Cochain], cands: list[Chain], b: int) -> list[Chain]:
    chosen: list[Chain] = []
    if b == 0:
        return chosen
    for z in cands:
        trial = chosen + [z]
        P = np.array([[chain_integral(h, c) for c in trial] for h in hs])
        if numerical_rank(P, 1e-8) == len(trial):
            chosen = trial
        if len(chosen) == b:
            return chosen
    raise RuntimeError(f"only {len(chosen)} of {b} independent cycles found among candidates")


def compute_homology(K: CellComplex, seed: int = 0) -> HomologyData:
    """Betti numbers, harmonic representatives and cycle bases of ``K``.

    Raises:
        GapAmbiguityError: if a Laplacian spectrum has no certified gap.
        ValueError: for lorentzian complexes (no definite Laplacian).
    """
    if K.signature != "riemannian":
        raise ValueError("homology is computed on riemannian complexes only")
    key = ("homology", seed)
    if key in K._cache:
        return K._cache[key]
    n = K.dimension
    betti, harm, cyc, per, gaps, res = [], {}, {}, {}, {}, {}
    for p in range(n + 1):
        S = _laplacian_sym(K, p)
        # sparse LU stays cheap on surfaces; volumes fill in and use block iteration
        ker = certified_kernel(S, seed=seed, direct=True if n <= 2 else None)
        H = ker.basis / np.sqrt(K.star_weights(p))[:, None]
        hs = [Cochain(K, p, H[:, i]) for i in range(ker.dim)]
        z = _greedy_cycles(hs, K.cycle_candidates(p), ker.dim)
        # canonical basis: dual to the cycles, then symmetrically orthonormalized
        if ker.dim:
            P = np.array([[chain_integral(h, c) for c in z] for h in hs])
            H = H @ np.linalg.inv(P).T
            G = H.T @ (K.star_weights(p)[:, None] * H)
            ev, U = np.linalg.eigh(G)
            H = H @ (U @ np.diag(ev ** -0.5) @ U.T)
            hs = [Cochain(K, p, H[:, i]) for i in range(ker.dim)]
        P = np.array([[chain_integral(h, c) for c in z] for h in hs]).reshape(ker.dim, ker.dim)
        r = 0.0
        for h in hs:
            nh = calc.norm(h)
            if p < n:
                r = max(r, calc.norm(calc.exterior_derivative(h)) / nh)
            if p > 0:
                r = max(r, calc.norm(calc.codifferential(h)) / nh)
        betti.append(ker.dim)
        harm[p], cyc[p], per[p], gaps[p], res[p] = hs, z, P, ker.gap_ratio, r
    hd = HomologyData(K, tuple(betti), harm, cyc, per, gaps, res)
    K._cache[key] = hd
    return hd


def betti_numbers(K: CellComplex) -> tuple[int, ...]:
    return compute_homology(K).betti


@dataclass(frozen=True)
class PeriodResult:
    """Periods of a cochain over a cycle basis plus its closedness residual."""

    values: np.ndarray
    closedness: float
    is_class: bool
    labels: tuple = ()


def periods(c: Cochain, hd: HomologyData, tol: float = 1e-8) -> PeriodResult:
    """Integrate a closed scalar cochain over the cycle basis of its degree.

    The closedness residual is ``||dc|| / (||d|| ||c||)`` (0 in top degree);
    above ``tol`` the result is flagged as not a cohomology class.
    """
    if c.values.shape[1] != 1:
        raise calc.SlotError("periods need a scalar cochain; killing-pair Lie-valued data first")
    K = c.complex
    z = hd.cycle_basis(c.degree, c.dual)
    vals = np.array([chain_integral(c, zi) for zi in z], dtype=float)
    resid = 0.0
    if c.degree < K.dimension:
        nc = calc.norm(c)
        if nc > 0:
            resid = calc.norm(calc.exterior_derivative(c)) / (nc * _d_norm(K, c.degree, c.dual))
    return PeriodResult(vals, float(resid), bool(resid <= tol), tuple(zi.label for zi in z))


def _d_norm(K: CellComplex, p: int, dual: bool) -> float:
    key = ("dnorm", p, dual)
    if key not in K._cache:
        # weighted operator norm of d
        wi = np.sqrt(calc.norm_weights(K, calc.Slot(p, dual)))
        wo = np.sqrt(calc.norm_weights(K, calc.Slot(p + 1, dual)))
        M = sp.diags(wo) @ calc.d_matrix(K, p, dual) @ sp.diags(1 / wi)
        K._cache[key] = calc._op_norm(M) or 1.0
    return K._cache[key]


def solve_potential(c: Cochain, hd: HomologyData, tol: float = 1e-8) -> Cochain:
    """Minimum-norm ``beta`` with ``d beta = c`` for an exact cochain ``c``.

    Raises:
        ObstructedError: if ``c`` is not closed or has nonzero periods.
    """
    if c.degree == 0:
        raise ValueError("0-cochains have no potential")
    pr = periods(c, hd, tol)
    nc = calc.norm(c)
    scale = max(nc, 1e-300) * max(1.0, hd.complex.total_volume())
    if not pr.is_class:
        raise ObstructedError(f"cochain is not closed (residual {pr.closedness:.3g})", pr.values)
    if pr.values.size and np.max(np.abs(pr.values)) > tol * scale:
        raise ObstructedError(f"obstructed: nontrivial class with periods {pr.values}", pr.values)
    K = c.complex
    D = calc.d_matrix(K, c.degree - 1, c.dual)
    g = c.values.shape[1]
    cols = []
    for a in range(g):
        sol = spla.lsqr(D, c.values[:, a], atol=1e-15, btol=1e-15, iter_lim=20 * D.shape[1])[0]
        cols.append(sol)
    return Cochain(K, c.degree - 1, np.stack(cols, axis=1), c.dual, c.algebra)


def hodge_decomposition(c: Cochain, hd: HomologyData):
    """Split ``c = d beta + delta gamma + h`` (orthogonal parts).

    Returns:
        ``(exact, coexact, harmonic)`` cochains.
    """
    K = c.complex
    p, dual = c.degree, c.dual
    hs = hd.harmonic_basis(p, dual)
    h = c.like(np.zeros_like(c.values))
    for hi in hs:
        h = h + hi * (calc.inner_product(c, hi) / calc.inner_product(hi, hi))
    rest = c - h
    exact = c.like(np.zeros_like(c.values))
    if p > 0:
        w = np.sqrt(calc.norm_weights(K, c.slot))
        D = sp.diags(w) @ calc.d_matrix(K, p - 1, dual)
        beta = np.stack([spla.lsqr(D, w * rest.values[:, a], atol=1e-15, btol=1e-15,
                                   iter_lim=20 * D.shape[1])[0] for a in range(c.values.shape[1])], axis=1)
        exact = c.like(calc.d_matrix(K, p - 1, dual) @ beta)
    return exact, rest - exact, h
