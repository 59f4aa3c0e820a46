"""Discrete form calculus on a :class:`~linobs.mesh.CellComplex`.

Cochains carry a ``(cells, coefficient dim)`` value matrix.  A primal
``p``-cochain has one row per primal ``p``-cell; a dual ``q``-cochain has
one row per primal ``(n - q)``-cell (the cell it is dual to).

Conventions (see ``docs/conventions.md``):

* primal ``d`` on ``p``-cochains is ``boundary(p+1).T``;
* dual ``d`` on a dual cochain indexed by primal ``k``-cells is
  ``(-1)**k * boundary(k)``;
* the Hodge star on primal ``k``-cochains is ``diag(dual_vol / primal_vol)``
  times the metric sign, and the dual star is fixed by ``** = eps_k``;
* the codifferential is ``(-1)**p * star^-1 d star``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import CellComplex, _perm_sign


class SlotError(ValueError):
    """Raised when operands live in incompatible cochain spaces."""


# ---------------------------------------------------------------------------
# Lie algebras


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """Finite-dimensional real Lie algebra in a fixed ordered basis.

    Attributes:
        name: registry name.
        structure: ``structure[a, b, c] = c^a_{bc}``, so ``[e_b, e_c] = c^a_{bc} e_a``.
        killing: ``K_ab = c^c_{ad} c^d_{bc}``, computed from ``structure``.
    """

    name: str
    structure: np.ndarray
    killing: np.ndarray

    @property
    def dim(self) -> int:
        return self.structure.shape[0]

    @classmethod
    def from_structure(cls, name: str, structure) -> "LieAlgebra":
        C = np.asarray(structure, dtype=float)
        K = np.einsum("cad,dbc->ab", C, C)
        return cls(name, C, K)

    def bracket(self, x, y) -> np.ndarray:
        return np.einsum("abc,b,c->a", self.structure, x, y)

    def pair(self, x, y) -> float:
        return float(x @ self.killing @ y)

    def check(self, tol: float = 1e-12) -> dict:
        """Residuals of antisymmetry, Jacobi and Killing invariance."""
        C, K = self.structure, self.killing
        anti = np.abs(C + C.transpose(0, 2, 1)).max()
        # [[x,y],z] + cyclic, on basis triples
        cc = np.einsum("abe,ecd->abcd", C, C)
        jac = np.abs(cc + cc.transpose(0, 2, 3, 1) + cc.transpose(0, 3, 1, 2)).max()
        # <[a,b],c> - <a,[b,c]>
        lhs = np.einsum("eab,ec->abc", C, K)
        rhs = np.einsum("ae,ebc->abc", K, C)
        inv = np.abs(lhs - rhs).max()
        eig = np.linalg.eigvalsh(K)
        return {
            "antisymmetry": float(anti), "jacobi": float(jac), "invariance": float(inv),
            "min_abs_killing_eig": float(np.abs(eig).min()),
            "ok": bool(anti <= tol and jac <= tol and inv <= tol),
        }


def su2() -> LieAlgebra:
    """su(2) with ``c^k_{ij} = eps_{ijk}`` (so ``K = -2 I``)."""
    C = np.zeros((3, 3, 3))
    for i, j, k in itertools.permutations(range(3)):
        C[k, i, j] = _perm_sign((i, j, k))
    return LieAlgebra.from_structure("su2", C)


ALGEBRAS = {"su2": su2}


def get_algebra(name: str) -> LieAlgebra:
    try:
        return ALGEBRAS[name]()
    except KeyError:
        raise ValueError(f"unknown Lie algebra {name!r}; known: {sorted(ALGEBRAS)}") from None


# ---------------------------------------------------------------------------
# cochains and slots


@dataclass(frozen=True)
class Slot:
    """Cochain space descriptor: form degree, primal/dual, coefficient dimension."""

    degree: int
    dual: bool = False
    dim: int = 1

    def rows(self, K: CellComplex) -> int:
        return K.n_cells(K.dimension - self.degree if self.dual else self.degree)

    def size(self, K: CellComplex) -> int:
        return self.rows(K) * self.dim

    def describe(self) -> str:
        kind = "dual" if self.dual else "primal"
        coef = "scalar" if self.dim == 1 else f"dim {self.dim}"
        return f"{kind} {self.degree}-cochain ({coef})"


@dataclass(frozen=True, eq=False)
class Cochain:
    """Discrete differential form.

    Attributes:
        complex: the underlying cell complex.
        degree: form degree ``p``.
        values: array of shape ``(rows, coefficient dim)``.
        dual: whether values live on dual cells.
        algebra: the Lie algebra for Lie-valued cochains, else ``None``.
    """

    complex: CellComplex
    degree: int
    values: np.ndarray
    dual: bool = False
    algebra: LieAlgebra | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        n = self.complex.dimension
        if not 0 <= self.degree <= n:
            raise SlotError(f"degree {self.degree} outside 0..{n}")
        want = self.slot.rows(self.complex)
        if v.shape[0] != want:
            raise SlotError(f"{self.slot.describe()} needs {want} rows, got {v.shape[0]}")
        g = 1 if self.algebra is None else self.algebra.dim
        if v.shape[1] != g:
            raise SlotError(f"coefficient dimension {v.shape[1]} does not match {g}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cochain values must be finite")

    @property
    def slot(self) -> Slot:
        return Slot(self.degree, self.dual, self.values.shape[1])

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def like(self, values) -> "Cochain":
        return Cochain(self.complex, self.degree, np.reshape(values, self.values.shape), self.dual, self.algebra)

    @classmethod
    def zeros(cls, K: CellComplex, degree: int, dual: bool = False, algebra: LieAlgebra | None = None):
        g = 1 if algebra is None else algebra.dim
        return cls(K, degree, np.zeros((Slot(degree, dual).rows(K), g)), dual, algebra)

    @classmethod
    def from_flat(cls, K, slot: Slot, flat, algebra=None):
        return cls(K, slot.degree, np.reshape(flat, (slot.rows(K), slot.dim)), slot.dual, algebra)

    def __add__(self, other: "Cochain") -> "Cochain":
        _same_slot(self, other)
        return self.like(self.values + other.values)

    def __sub__(self, other: "Cochain") -> "Cochain":
        _same_slot(self, other)
        return self.like(self.values - other.values)

    def __neg__(self) -> "Cochain":
        return self.like(-self.values)

    def __mul__(self, s: float) -> "Cochain":
        return self.like(s * self.values)

    __rmul__ = __mul__


def _same_slot(a: Cochain, b: Cochain) -> None:
    if a.complex is not b.complex:
        raise SlotError("cochains live on different complexes")
    if a.slot != b.slot:
        raise SlotError(f"slot mismatch: {a.slot.describe()} vs {b.slot.describe()}")


def _index_degree(K: CellComplex, slot: Slot) -> int:
    return K.dimension - slot.degree if slot.dual else slot.degree


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Sparse linear map between cochain spaces acting cell-wise on coefficients."""

    matrix: sp.csr_matrix
    domain: Slot
    codomain: Slot
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))

    def check_shape(self, K: CellComplex) -> None:
        want = (self.codomain.rows(K), self.domain.rows(K))
        if self.matrix.shape != want:
            raise SlotError(f"{self.label}: shape {self.matrix.shape} != {want}")

    def __call__(self, c: Cochain) -> Cochain:
        if (c.degree, c.dual) != (self.domain.degree, self.domain.dual):
            raise SlotError(f"{self.label} expects a {self.domain.describe()}, got {c.slot.describe()}")
        return Cochain(c.complex, self.codomain.degree, self.matrix @ c.values, self.codomain.dual, c.algebra)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        if (other.codomain.degree, other.codomain.dual) != (self.domain.degree, self.domain.dual):
            raise SlotError(f"cannot compose {self.label} after {other.label}")
        return LinearOperator(self.matrix @ other.matrix, other.domain, self.codomain,
                              f"{self.label}∘{other.label}")

    def lifted(self, g: int) -> sp.csr_matrix:
        """Matrix acting on flattened ``g``-component coefficients (index ``cell*g + a``)."""
        return lift(self.matrix, g)

    def norm(self) -> float:
        return _op_norm(self.matrix)


def lift(M, g: int) -> sp.csr_matrix:
    M = sp.csr_matrix(M)
    return M if g == 1 else sp.kron(M, sp.identity(g), format="csr")


def _op_norm(M) -> float:
    """Spectral norm estimate (exact for small matrices)."""
    M = sp.csr_matrix(M)
    if min(M.shape) == 0 or M.nnz == 0:
        return 0.0
    if min(M.shape) <= 400:
        return float(np.linalg.norm(M.toarray(), 2))
    from scipy.sparse.linalg import svds
    s = svds(M.astype(float), k=1, return_singular_vectors=False, v0=np.random.default_rng(0).standard_normal(min(M.shape)), tol=1e-6)
    return float(s[0])


# ---------------------------------------------------------------------------
# operator matrices


def d_matrix(K: CellComplex, degree: int, dual: bool = False) -> sp.csr_matrix:
    """Coboundary matrix on ``degree``-cochains."""
    n = K.dimension
    if degree >= n:
        raise SlotError(f"exterior derivative undefined on {n}-forms of an {n}-complex")
    if not dual:
        return sp.csr_matrix(K.boundary(degree + 1).T, dtype=float)
    k = n - degree
    return sp.csr_matrix((-1) ** k * K.boundary(k), dtype=float)


def star_matrix(K: CellComplex, degree: int, dual: bool = False) -> sp.csr_matrix:
    """Hodge star on ``degree``-cochains (toggles primal/dual)."""
    if not dual:
        return sp.diags(K.star_weights(degree)).tocsr()
    k = K.dimension - degree
    return sp.diags(K.star_square_sign(k) / K.star_weights(k)).tocsr()


def star_inverse_matrix(K: CellComplex, degree: int, dual: bool = False) -> sp.csr_matrix:
    """Inverse of the star whose *codomain* is the ``degree``-cochain space given."""
    # star from the other side, times eps
    other = K.dimension - degree
    eps = K.star_square_sign(degree)
    return eps * star_matrix(K, other, not dual)


def codiff_matrix(K: CellComplex, degree: int, dual: bool = False) -> sp.csr_matrix:
    """Codifferential ``(-1)**p star^-1 d star`` on ``degree``-cochains."""
    if degree == 0:
        raise SlotError("codifferential undefined on 0-forms")
    n = K.dimension
    S = star_matrix(K, degree, dual)
    D = d_matrix(K, n - degree, not dual)
    Si = star_inverse_matrix(K, degree - 1, dual)
    return ((-1) ** degree * (Si @ D @ S)).tocsr()


def inner_weights(K: CellComplex, degree: int, dual: bool = False) -> np.ndarray:
    """Diagonal weights of the cochain inner product ``a . star b``."""
    if not dual:
        return K.star_weights(degree)
    k = K.dimension - degree
    index = (K.dimension - K.metric_signature) // 2
    return (-1) ** index / K.star_weights(k)


def metric_matrix(K: CellComplex, slot: Slot, algebra: LieAlgebra | None = None) -> sp.csr_matrix:
    """Gram matrix of the inner product on flattened values of ``slot``."""
    w = inner_weights(K, slot.degree, slot.dual)
    if algebra is None or slot.dim == 1:
        return sp.diags(w).tocsr()
    return sp.kron(sp.diags(w), sp.csr_matrix(algebra.killing), format="csr")


def norm_weights(K: CellComplex, slot: Slot) -> np.ndarray:
    """Positive per-row weights used for norms (Euclidean on coefficients)."""
    return np.abs(inner_weights(K, slot.degree, slot.dual))


def d_operator(K, degree, dual=False) -> LinearOperator:
    return LinearOperator(d_matrix(K, degree, dual), Slot(degree, dual), Slot(degree + 1, dual), "d")


def star_operator(K, degree, dual=False) -> LinearOperator:
    return LinearOperator(star_matrix(K, degree, dual), Slot(degree, dual),
                          Slot(K.dimension - degree, not dual), "*")


def codiff_operator(K, degree, dual=False) -> LinearOperator:
    return LinearOperator(codiff_matrix(K, degree, dual), Slot(degree, dual), Slot(degree - 1, dual), "δ")


# ---------------------------------------------------------------------------
# cochain-level API


def exterior_derivative(c: Cochain) -> Cochain:
    """Coboundary of ``c``; exact integer-incidence arithmetic."""
    M = d_matrix(c.complex, c.degree, c.dual)
    return Cochain(c.complex, c.degree + 1, M @ c.values, c.dual, c.algebra)


def hodge_star(c: Cochain) -> Cochain:
    """Diagonal Hodge star; maps primal ``p`` to dual ``n - p`` and back."""
    M = star_matrix(c.complex, c.degree, c.dual)
    return Cochain(c.complex, c.complex.dimension - c.degree, M @ c.values, not c.dual, c.algebra)


def codifferential(c: Cochain) -> Cochain:
    """Metric adjoint of ``d``: ``(-1)**p * star^-1 d star``."""
    M = codiff_matrix(c.complex, c.degree, c.dual)
    return Cochain(c.complex, c.degree - 1, M @ c.values, c.dual, c.algebra)


def inner_product(a: Cochain, b: Cochain) -> float:
    """``sum a . star b``; Lie-valued coefficients contract through the Killing form."""
    _same_slot(a, b)
    w = inner_weights(a.complex, a.degree, a.dual)
    if a.algebra is None:
        return float(np.sum(w[:, None] * a.values * b.values))
    return float(np.einsum("i,ia,ab,ib->", w, a.values, a.algebra.killing, b.values))


def norm(c: Cochain) -> float:
    """Weighted Euclidean norm (positive even for Lie-valued or lorentzian data)."""
    w = norm_weights(c.complex, c.slot)
    return float(np.sqrt(np.sum(w[:, None] * c.values ** 2)))


def laplacian_matrix(K: CellComplex, degree: int, dual: bool = False) -> sp.csr_matrix:
    """Hodge Laplacian ``delta d + d delta`` on ``degree``-cochains."""
    n = K.dimension
    N = Slot(degree, dual).rows(K)
    L = sp.csr_matrix((N, N))
    if degree < n:
        L = L + codiff_matrix(K, degree + 1, dual) @ d_matrix(K, degree, dual)
    if degree > 0:
        L = L + d_matrix(K, degree - 1, dual) @ codiff_matrix(K, degree, dual)
    return sp.csr_matrix(L)


# ---------------------------------------------------------------------------
# wedge engine


def _components(n: int, p: int):
    return list(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def _product_signs(n: int, p: int, q: int) -> np.ndarray:
    """T[O, I, J] with dx^I ^ dx^J = T[O, I, J] dx^O."""
    CI, CJ, CO = _components(n, p), _components(n, q), _components(n, p + q)
    T = np.zeros((len(CO), len(CI), len(CJ)))
    pos = {c: i for i, c in enumerate(CO)}
    for i, I in enumerate(CI):
        for j, J in enumerate(CJ):
            if set(I) & set(J):
                continue
            T[pos[tuple(sorted(I + J))], i, j] = _perm_sign(I + J)
    return T


def _lin(K, bases):
    m, n = K.params["m"], K.dimension
    return np.ravel_multi_index(tuple((bases % m).T), (m,) * n)


def _interp_cubical(K: CellComplex, slot: Slot):
    """Interpolation ``P`` (cells -> per-top constant components) and restriction ``R``."""
    n, m, h = K.dimension, K.params["m"], K.params["h"]
    nv = m ** n
    tops = K.cell_base[0]  # top cube base equals its lowest vertex base
    q = slot.degree
    comps = _components(n, q)
    rows, cols, vals = [], [], []
    for ci, Cmp in enumerate(comps):
        if not slot.dual:
            axes, free, sign = Cmp, tuple(i for i in range(n) if i not in Cmp), 1
        else:
            axes = tuple(i for i in range(n) if i not in Cmp)
            free, sign = Cmp, _perm_sign(axes + Cmp)
        ai = _components(n, len(axes)).index(axes)
        for off in itertools.product((0, 1), repeat=len(free)):
            shift = np.zeros(n, dtype=np.int64)
            for f, o in zip(free, off):
                shift[f] = o
            cell = ai * nv + _lin(K, tops + shift)
            rows.append(np.arange(nv) * len(comps) + ci)
            cols.append(cell)
            vals.append(np.full(nv, float(sign)))
    nfree = n - q if not slot.dual else q
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    shape = (nv * len(comps), slot.rows(K))
    P = sp.csr_matrix((vals / (2 ** nfree * h ** q), (rows, cols)), shape=shape)
    R = sp.csr_matrix((vals * h ** q / 2 ** nfree, (cols, rows)), shape=shape[::-1])
    return P, R


def _triangle_frames(K: CellComplex):
    f = K.cells[2]
    X = K.vertex_coords
    P = X[f]
    nrm = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    nrm *= K.top_orientation[:, None] / np.linalg.norm(nrm, axis=1, keepdims=True)
    e1 = P[:, 1] - P[:, 0]
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(nrm, e1)
    return P, e1, e2


def _interp_simplicial(K: CellComplex, slot: Slot):
    if slot.dual:
        raise SlotError("wedge on simplicial complexes accepts primal operands only")
    f = K.cells[2]
    nt = len(f)
    p = slot.degree
    area = K.primal_volumes[2]
    if p == 0:
        rows = np.repeat(np.arange(nt), 3)
        cols = f.reshape(-1)
        P = sp.csr_matrix((np.full(3 * nt, 1 / 3), (rows, cols)), shape=(nt, K.n_cells(0)))
        wts = np.repeat(area, 3)
        acc = np.bincount(cols, weights=wts, minlength=K.n_cells(0))
        R = sp.csr_matrix((wts / acc[cols], (cols, rows)), shape=(K.n_cells(0), nt))
        return P, R
    if p == 2:
        ids = np.arange(nt)
        P = sp.csr_matrix((1 / area, (ids, ids)), shape=(nt, nt))
        R = sp.csr_matrix((area, (ids, ids)), shape=(nt, nt))
        return P, R
    Pt, e1, e2 = _triangle_frames(K)
    eid = {tuple(e): i for i, e in enumerate(K.cells[1])}
    pairs = ((0, 1), (0, 2), (1, 2))
    edge_ids = np.array([[eid[(t[i], t[j])] for i, j in pairs] for t in f])
    A = np.empty((nt, 3, 2))
    for r, (i, j) in enumerate(pairs):
        v = Pt[:, j] - Pt[:, i]
        A[:, r, 0] = np.einsum("ij,ij->i", v, e1)
        A[:, r, 1] = np.einsum("ij,ij->i", v, e2)
    Ap = np.linalg.pinv(A)  # (nt, 2, 3)
    rows = (np.arange(nt)[:, None, None] * 2 + np.arange(2)[None, :, None]) * np.ones((1, 1, 3), int)
    cols = np.broadcast_to(edge_ids[:, None, :], (nt, 2, 3))
    P = sp.csr_matrix((Ap.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(2 * nt, K.n_cells(1)))
    rrows = np.broadcast_to(edge_ids[:, :, None], (nt, 3, 2))
    rcols = np.arange(nt)[:, None, None] * 2 + np.arange(2)[None, None, :]
    rcols = np.broadcast_to(rcols, (nt, 3, 2))
    R = sp.csr_matrix((A.reshape(-1) / 2, (rrows.reshape(-1), rcols.reshape(-1))), shape=(K.n_cells(1), 2 * nt))
    return P, R


def interpolation(K: CellComplex, slot: Slot):
    """Cached ``(P, R)`` pair for scalar cochains of ``slot``'s degree/kind."""
    key = ("interp", slot.degree, slot.dual)
    if key not in K._cache:
        fn = _interp_cubical if K.kind == "cubical" else _interp_simplicial
        K._cache[key] = fn(K, Slot(slot.degree, slot.dual))
    return K._cache[key]


def vertex_average(K: CellComplex, target_index_degree: int, source_dual: bool) -> sp.csr_matrix:
    """Average a 0-form onto the cells indexing a target cochain.

    A primal 0-form is averaged over the vertices of each target cell; a
    dual 0-form (one value per top cell) over the top cells containing it.
    """
    key = ("avg", target_index_degree, source_dual)
    if key in K._cache:
        return K._cache[key]
    k, n = target_index_degree, K.dimension
    if not source_dual:
        verts = K.cells[k]
        rows = np.repeat(np.arange(len(verts)), verts.shape[1])
        M = sp.csr_matrix((np.full(verts.size, 1.0 / verts.shape[1]), (rows, verts.reshape(-1))),
                          shape=(len(verts), K.n_cells(0)))
    else:
        M = sp.identity(K.n_cells(k), format="csr")
        for j in range(k + 1, n + 1):
            M = M @ abs(K.boundary(j)).astype(float)
        M = sp.csr_matrix(M)
        M.data[:] = 1.0
        rs = np.asarray(M.sum(axis=1)).ravel()
        M = sp.diags(1 / rs) @ M
    K._cache[key] = sp.csr_matrix(M)
    return K._cache[key]


def _table(mode: str, ga: int, gb: int, algebra: LieAlgebra | None) -> np.ndarray:
    if mode == "scalar":
        if ga == 1 and gb == 1:
            return np.ones((1, 1, 1))
        # scalar times Lie-valued acts componentwise
        g = max(ga, gb)
        t = np.zeros((g, ga, gb))
        for c in range(g):
            t[c, 0 if ga == 1 else c, 0 if gb == 1 else c] = 1.0
        return t
    if algebra is None:
        raise SlotError(f"{mode} product needs Lie-valued operands")
    if mode == "bracket":
        return algebra.structure
    if mode == "killing":
        return algebra.killing[None]
    raise ValueError(mode)


def _out_dual(a: Slot, b: Slot, dual: bool | None) -> bool:
    if dual is not None:
        return dual
    return a.dual and b.dual


def _check_algebras(a: Cochain, b: Cochain, mode: str) -> LieAlgebra | None:
    if a.complex is not b.complex:
        raise SlotError("operands live on different complexes")
    if mode != "scalar":
        if a.algebra is None or b.algebra is None:
            raise SlotError(f"{mode} product needs Lie-valued operands")
        if a.algebra is not b.algebra and a.algebra.name != b.algebra.name:
            raise SlotError("algebra mismatch")
        return a.algebra
    return a.algebra or b.algebra


def _out_algebra(mode: str, a: Cochain, b: Cochain):
    if mode == "killing":
        return None
    return a.algebra or b.algebra


def product_matrix(K: CellComplex, fixed: Cochain, fixed_left: bool, var: Slot,
                   mode: str = "scalar", dual: bool | None = None,
                   algebra: LieAlgebra | None = None) -> tuple[sp.csr_matrix, Slot]:
    """Sparse matrix of ``v -> fixed ^ v`` (or ``v ^ fixed``) on flattened values.

    Returns the matrix and the output slot.  This is the Jacobian of the
    wedge with respect to the varying operand.
    """
    fs = fixed.slot
    sa, sb = (fs, var) if fixed_left else (var, fs)
    p, q = sa.degree, sb.degree
    n = K.dimension
    if p + q > n:
        raise SlotError(f"wedge degree {p}+{q} exceeds dimension {n}")
    alg = algebra if algebra is not None else fixed.algebra
    t = _table(mode, sa.dim, sb.dim, alg)
    gc = t.shape[0]
    gv = var.dim
    if p == 0 or q == 0:
        z_left = p == 0
        zs, os_ = (sa, sb) if z_left else (sb, sa)
        if dual is not None and dual != os_.dual:
            raise SlotError("a 0-form product keeps the kind of the other operand")
        out = Slot(os_.degree, os_.dual, gc)
        A = vertex_average(K, _index_degree(K, os_), zs.dual)
        if fixed_left != z_left:
            # the varying operand is the 0-form
            F = fixed.values
            spec = "cab,ib->ica" if z_left else "cab,ia->icb"
            return (_block_diag(np.einsum(spec, t, F)) @ lift(A, gv)).tocsr(), out
        Z = A @ fixed.values
        spec = "cab,ia->icb" if z_left else "cab,ib->ica"
        return _block_diag(np.einsum(spec, t, Z)), out
    out = Slot(p + q, _out_dual(sa, sb, dual), gc)
    Pf, _ = interpolation(K, fs)
    Pv, _ = interpolation(K, var)
    _, Ro = interpolation(K, out)
    ntop = K.n_cells(n)
    T = _product_signs(n, p, q)
    Fi = (Pf @ fixed.values).reshape(ntop, -1, fs.dim)
    if fixed_left:
        blk = np.einsum("oij,cab,tia->tocjb", T, t, Fi)
    else:
        blk = np.einsum("oij,cab,tjb->tocia", T, t, Fi)
    blk = blk.reshape(ntop, T.shape[0] * gc, -1)
    M = lift(Ro, gc) @ _block_diag(blk) @ lift(Pv, gv)
    return sp.csr_matrix(M), out


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    nb, r, c = blocks.shape
    rows = (np.arange(nb)[:, None, None] * r + np.arange(r)[None, :, None]) + np.zeros((1, 1, c), int)
    cols = (np.arange(nb)[:, None, None] * c + np.arange(c)[None, None, :]) + np.zeros((1, r, 1), int)
    return sp.csr_matrix((blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(nb * r, nb * c))


def _wedge(a: Cochain, b: Cochain, mode: str, dual: bool | None) -> Cochain:
    alg = _check_algebras(a, b, mode)
    K = a.complex
    n = K.dimension
    p, q = a.degree, b.degree
    if p + q > n:
        raise SlotError(f"wedge degree {p}+{q} exceeds dimension {n}")
    if a.degree == 0 or b.degree == 0:
        M, out = product_matrix(K, a, True, b.slot, mode, dual, alg)
        vals = M @ b.flat
    else:
        t = _table(mode, a.slot.dim, b.slot.dim, alg)
        out = Slot(p + q, _out_dual(a.slot, b.slot, dual), t.shape[0])
        Pa, _ = interpolation(K, a.slot)
        Pb, _ = interpolation(K, b.slot)
        _, Ro = interpolation(K, out)
        ntop = K.n_cells(n)
        A = (Pa @ a.values).reshape(ntop, -1, a.slot.dim)
        B = (Pb @ b.values).reshape(ntop, -1, b.slot.dim)
        T = _product_signs(n, p, q)
        prod = np.einsum("oij,cab,tia,tjb->toc", T, t, A, B)
        vals = Ro @ prod.reshape(-1, t.shape[0])
    return Cochain(K, out.degree, np.reshape(vals, (out.rows(K), out.dim)), out.dual, _out_algebra(mode, a, b))


def wedge(a: Cochain, b: Cochain, dual: bool | None = None) -> Cochain:
    """Wedge product by one-point quadrature on each top cell.

    Args:
        a, b: operands; either may be primal or dual (dual only on cubical
            complexes).  Lie-valued operands are multiplied componentwise
            only when the other operand is scalar.
        dual: force the output kind; by default the output is dual only
            when both inputs are.

    A 0-form operand is averaged onto the cells of the other operand and
    multiplied pointwise, so ``wedge(c, c)`` of a 0-cochain is ``c**2``.
    Otherwise both operands are interpolated to constant forms per top
    cell, multiplied exactly, and integrated back; the scheme is exact for
    constant forms on flat tori and first-order accurate in general.
    """
    if a.algebra is not None and b.algebra is not None:
        raise SlotError("use bracket_wedge or killing_pair for two Lie-valued operands")
    return _wedge(a, b, "scalar", dual)


def bracket_wedge(a: Cochain, b: Cochain, dual: bool | None = None) -> Cochain:
    """``[a ^ b]^c = c^c_{de} a^d ^ b^e``."""
    return _wedge(a, b, "bracket", dual)


def killing_pair(a: Cochain, b: Cochain, dual: bool | None = None) -> Cochain:
    """``<a ^ b> = K_de a^d ^ b^e`` (scalar cochain)."""
    return _wedge(a, b, "killing", dual)


# ---------------------------------------------------------------------------
# constructors


def constant_form(K: CellComplex, degree: int, component, coeff=1.0, dual: bool = False,
                  algebra: LieAlgebra | None = None) -> Cochain:
    """Cochain of a constant-coefficient form ``coeff * dx^component`` on a flat torus.

    Args:
        component: tuple of axes (sorted).
        coeff: scalar or Lie-algebra coefficient vector.
    """
    if K.kind != "cubical":
        raise SlotError("constant forms are only defined on flat tori")
    comps = _components(K.dimension, degree)
    ci = comps.index(tuple(component))
    slot = Slot(degree, dual)
    P, R = interpolation(K, slot)
    ntop = K.n_cells(K.dimension)
    coeff = np.atleast_1d(np.asarray(coeff, dtype=float))
    g = 1 if algebra is None else algebra.dim
    if coeff.size != g:
        raise SlotError("coefficient size does not match the algebra")
    vals = np.zeros((ntop, len(comps), g))
    vals[:, ci, :] = coeff
    return Cochain(K, degree, R @ vals.reshape(-1, g), dual, algebra)
