"""Closed oriented cell complexes with diagonal-Hodge metric data.

Two families are supported: cubical flat tori ``T^d`` (the circle is the
``d = 1`` case) and triangulated unit spheres built by subdividing an
icosahedron.  Every complex is immutable after construction.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from typing import Any

import numpy as np
import scipy.sparse as sp

MAX_TOP_CELLS = 100_000
MAX_SUBDIVISIONS = 6
AXIS_NAMES = "xyzt"


class MeshError(ValueError):
    """Raised when a complex cannot be built from the requested parameters."""


@dataclass(frozen=True)
class Chain:
    """Integer chain of primal (or dual) cells of one degree.

    For a dual chain, ``coeffs`` is indexed by the primal cells of degree
    ``n - degree`` whose dual cells make up the chain.
    """

    complex: "CellComplex"
    degree: int
    coeffs: np.ndarray
    dual: bool = False
    label: str = ""

    def boundary(self) -> "Chain":
        K = self.complex
        if self.degree == 0:
            return Chain(K, -1, np.zeros(0, dtype=np.int64), self.dual)
        if not self.dual:
            b = K.boundary(self.degree) @ self.coeffs
            return Chain(K, self.degree - 1, np.asarray(b, dtype=np.int64), False)
        # dual boundary is the transpose of the dual coboundary
        k = K.dimension - self.degree + 1  # primal index degree of the faces
        sign = -1 if k % 2 else 1
        b = sign * (K.boundary(k).T @ self.coeffs)
        return Chain(K, self.degree - 1, np.asarray(b, dtype=np.int64), True)


@dataclass(frozen=True, eq=False)
class CellComplex:
    """A closed, oriented cell complex.

    Attributes:
        dimension: topological dimension ``n``.
        kind: ``"cubical"`` or ``"simplicial"``.
        cells: per degree, an integer array of vertex tuples (one row per cell).
        incidence: ``incidence[k]`` is the signed boundary matrix taking
            ``k``-chains to ``(k-1)``-chains (``incidence[0]`` is empty).
        primal_volumes / dual_volumes: per degree, one positive real per cell.
        metric_signs: per degree, +1/-1 per cell; only lorentzian tori carry -1.
        signature: ``"riemannian"`` or ``"lorentzian"``.
    """

    name: str
    dimension: int
    kind: str
    cells: tuple
    incidence: tuple
    primal_volumes: tuple
    dual_volumes: tuple
    metric_signs: tuple
    vertex_coords: np.ndarray
    signature: str = "riemannian"
    timelike_axis: int | None = None
    params: dict = field(default_factory=dict)
    # cubical bookkeeping: per degree, the axis subset index and base multi-index of each cell
    cell_axes: tuple = ()
    cell_base: tuple = ()
    # simplicial bookkeeping
    top_orientation: np.ndarray | None = None
    well_centered: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- counts and matrices -------------------------------------------------

    def n_cells(self, k: int) -> int:
        return int(self.cells[k].shape[0])

    @property
    def cell_counts(self) -> tuple[int, ...]:
        return tuple(self.n_cells(k) for k in range(self.dimension + 1))

    def boundary(self, k: int) -> sp.csr_matrix:
        """Signed integer matrix of the boundary map on ``k``-chains."""
        if not 1 <= k <= self.dimension:
            raise ValueError(f"no boundary map in degree {k}")
        return self.incidence[k]

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * self.n_cells(k) for k in range(self.dimension + 1))

    def star_weights(self, k: int) -> np.ndarray:
        """Diagonal of the primal Hodge star on ``k``-cochains."""
        return self.dual_volumes[k] / self.primal_volumes[k] * self.metric_signs[k]

    @property
    def metric_signature(self) -> int:
        """Number of positive minus number of negative metric eigenvalues."""
        return self.dimension - 2 if self.signature == "lorentzian" else self.dimension

    def star_square_sign(self, k: int) -> int:
        """Sign ``eps_k`` with ``** = eps_k`` on ``k``-forms."""
        n, s = self.dimension, self.metric_signature
        return (-1) ** (k * (n - k) + (n - s) // 2)

    def total_volume(self) -> float:
        return float(self.primal_volumes[self.dimension].sum())

    # -- cycles ---------------------------------------------------------------

    def cycle_candidates(self, degree: int, dual: bool = False) -> list[Chain]:
        """Combinatorial integer cycles used as homology basis candidates."""
        n = self.dimension
        if self.kind == "cubical":
            out = []
            for C in itertools.combinations(range(n), degree):
                S = tuple(i for i in range(n) if i not in C)
                if not dual:
                    k, axes, pinned = degree, C, S
                else:
                    k, axes, pinned = n - degree, S, S
                idx = _axes_index(n, k, axes)
                base = self.cell_base[k]
                mask = self.cell_axes[k] == idx
                mask &= np.all(base[:, list(pinned)] == 0, axis=1) if pinned else True
                coeffs = np.zeros(self.n_cells(k), dtype=np.int64)
                coeffs[mask] = _perm_sign(S + C) if dual else 1
                label = "".join(AXIS_NAMES[i] for i in C) or "pt"
                out.append(Chain(self, degree, coeffs, dual, label))
            return out
        # simplicial 2-sphere
        if degree == 0:
            k = n if dual else 0
            coeffs = np.zeros(self.n_cells(k), dtype=np.int64)
            coeffs[0] = 1
            return [Chain(self, 0, coeffs, dual, "pt")]
        if degree == n:
            k = 0 if dual else n
            return [Chain(self, n, np.ones(self.n_cells(k), dtype=np.int64), dual, "S2")]
        return []

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        """Debug/oracle export: cells, incidence triplets, volumes, coordinates."""
        inc = {}
        for k in range(1, self.dimension + 1):
            B = self.incidence[k].tocoo()
            inc[str(k)] = [[int(i), int(j), int(v)] for i, j, v in zip(B.row, B.col, B.data)]
        return {
            "name": self.name,
            "dimension": self.dimension,
            "kind": self.kind,
            "signature": self.signature,
            "timelike_axis": self.timelike_axis,
            "cells": {str(k): self.cells[k].tolist() for k in range(self.dimension + 1)},
            "incidence": inc,
            "volumes": {
                "primal": {str(k): self.primal_volumes[k].tolist() for k in range(self.dimension + 1)},
                "dual": {str(k): self.dual_volumes[k].tolist() for k in range(self.dimension + 1)},
            },
            "coords": self.vertex_coords.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# helpers


def _perm_sign(seq) -> int:
    """Sign of the permutation that sorts ``seq`` (distinct entries)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _axes_index(n: int, k: int, axes) -> int:
    return list(itertools.combinations(range(n), k)).index(tuple(axes))


def _check_partition(K: CellComplex) -> None:
    n, V = K.dimension, K.total_volume()
    for k in range(n + 1):
        if np.any(K.primal_volumes[k] <= 0) or np.any(K.dual_volumes[k] <= 0):
            raise MeshError(f"non-positive volume in degree {k}")
        if K.well_centered is not None and not K.well_centered.all():
            continue
        got = float(np.dot(K.primal_volumes[k], K.dual_volumes[k]))
        want = comb(n, k) * V
        if abs(got - want) > 1e-9 * want:
            raise MeshError(f"volume partition fails in degree {k}: {got} != {want}")


# ---------------------------------------------------------------------------
# cubical tori


def build_torus(d: int, m_per_axis: int, side_length: float = 2 * np.pi,
                signature: str = "riemannian", timelike_axis: int = 0) -> CellComplex:
    """Cubical complex on the flat torus ``T^d`` with ``m`` cells per axis.

    Edges run in the positive axis direction (including the wrap-around
    edge); a ``k``-cell with axes ``S`` is oriented by ``dx^S`` with ``S``
    sorted.  Dual cells are centred on the primal cell centres.
    """
    if not 1 <= d <= 4:
        raise MeshError(f"torus dimension must be in 1..4, got {d}")
    if m_per_axis < 3:
        raise MeshError(f"need at least 3 cells per axis, got {m_per_axis}")
    if m_per_axis ** d > MAX_TOP_CELLS:
        raise MeshError(f"{m_per_axis}^{d} top cells exceeds the {MAX_TOP_CELLS} budget")
    if side_length <= 0:
        raise MeshError("side length must be positive")
    if signature not in ("riemannian", "lorentzian"):
        raise MeshError(f"unknown signature {signature!r}")
    if signature == "lorentzian" and not 0 <= timelike_axis < d:
        raise MeshError(f"timelike axis {timelike_axis} out of range for d={d}")

    m, h = m_per_axis, side_length / m_per_axis
    shape = (m,) * d
    nv = m ** d
    bases = np.array(np.unravel_index(np.arange(nv), shape)).T  # (nv, d)

    def lin(b):
        return np.ravel_multi_index(tuple((b % m).T), shape)

    cells, axes_of, base_of, prim, dual, signs = [], [], [], [], [], []
    offsets = []  # first cell id of each axis subset, per degree
    for k in range(d + 1):
        subsets = list(itertools.combinations(range(d), k))
        verts, ax, bs, sg = [], [], [], []
        for si, S in enumerate(subsets):
            corners = []
            for T in itertools.product((0, 1), repeat=k):
                shift = np.zeros(d, dtype=np.int64)
                for t, s in zip(T, S):
                    shift[s] = t
                corners.append(lin(bases + shift))
            verts.append(np.stack(corners, axis=1) if corners else np.zeros((nv, 0), np.int64))
            ax.append(np.full(nv, si))
            bs.append(bases)
            neg = signature == "lorentzian" and timelike_axis in S
            sg.append(np.full(nv, -1.0 if neg else 1.0))
        offsets.append({S: i * nv for i, S in enumerate(subsets)})
        cells.append(np.concatenate(verts))
        axes_of.append(np.concatenate(ax))
        base_of.append(np.concatenate(bs))
        prim.append(np.full(len(subsets) * nv, h ** k))
        dual.append(np.full(len(subsets) * nv, h ** (d - k)))
        signs.append(np.concatenate(sg))

    incidence = [sp.csr_matrix((nv, 0), dtype=np.int64)]
    for k in range(1, d + 1):
        rows, cols, vals = [], [], []
        for S, off in offsets[k].items():
            col = off + np.arange(nv)
            for j, s in enumerate(S):
                face = S[:j] + S[j + 1:]
                foff = offsets[k - 1][face]
                e = np.zeros(d, dtype=np.int64)
                e[s] = 1
                sign = (-1) ** j
                rows += [foff + lin(bases + e), foff + lin(bases)]
                cols += [col, col]
                vals += [np.full(nv, sign), np.full(nv, -sign)]
        B = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(prim[k - 1]), len(prim[k])), dtype=np.int64)
        incidence.append(B)

    name = "circle" if d == 1 else f"T{d}"
    K = CellComplex(
        name=name, dimension=d, kind="cubical", cells=tuple(cells),
        incidence=tuple(incidence), primal_volumes=tuple(prim), dual_volumes=tuple(dual),
        metric_signs=tuple(signs), vertex_coords=bases * h, signature=signature,
        timelike_axis=timelike_axis if signature == "lorentzian" else None,
        params={"m": m, "h": h, "side_length": side_length},
        cell_axes=tuple(axes_of), cell_base=tuple(base_of),
    )
    _check_partition(K)
    return K


def build_circle(n_edges: int, circumference: float = 2 * np.pi) -> CellComplex:
    """Uniform circle with ``n_edges`` edges; identical to ``build_torus(1, ...)``."""
    if n_edges < 3:
        raise MeshError(f"a circle needs at least 3 edges, got {n_edges}")
    return build_torus(1, n_edges, circumference)


# ---------------------------------------------------------------------------
# icospheres


def _icosahedron():
    p = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    verts = list(v)
    cache: dict[tuple[int, int], int] = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            x = verts[a] + verts[b]
            verts.append(x / np.linalg.norm(x))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in f:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(out)


def _circumcenters(P):
    """Circumcentres of triangles ``P`` of shape (T, 3, 3)."""
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    u, w = b - a, c - a
    n = np.cross(u, w)
    nn = np.einsum("ij,ij->i", n, n)
    num = (np.einsum("ij,ij->i", u, u)[:, None] * np.cross(w, n)
           + np.einsum("ij,ij->i", w, w)[:, None] * np.cross(n, u))
    return a + num / (2 * nn[:, None])


def build_icosphere(subdivisions: int) -> CellComplex:
    """Triangulated unit sphere with circumcentric dual volumes.

    Edges and triangles are stored with sorted vertex tuples.  Edges are
    oriented from the smaller to the larger vertex id; triangles carry the
    outward orientation (``top_orientation`` records whether that agrees
    with the sorted vertex order).  Triangles whose circumcentre falls
    outside them use barycentric dual pieces instead.
    """
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise MeshError(f"subdivisions must be in 0..{MAX_SUBDIVISIONS}, got {subdivisions}")
    v, f = _icosahedron()
    for _ in range(subdivisions):
        v, f = _subdivide(v, f)
    f = np.sort(f, axis=1)
    f = f[np.lexsort(f.T[::-1])]
    edges = np.unique(np.concatenate([f[:, [0, 1]], f[:, [0, 2]], f[:, [1, 2]]]), axis=0)
    nv, ne, nf = len(v), len(edges), len(f)
    eid = {tuple(e): i for i, e in enumerate(edges)}

    P = v[f]
    normal = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    orient = np.sign(np.einsum("ij,ij->i", normal, P.mean(axis=1))).astype(np.int64)
    area = 0.5 * np.linalg.norm(normal, axis=1)

    d1 = sp.csr_matrix(
        (np.r_[-np.ones(ne), np.ones(ne)], (np.r_[edges[:, 0], edges[:, 1]], np.r_[np.arange(ne), np.arange(ne)])),
        shape=(nv, ne), dtype=np.int64)
    e_bc = np.array([eid[(b, c)] for _, b, c in f])
    e_ac = np.array([eid[(a, c)] for a, _, c in f])
    e_ab = np.array([eid[(a, b)] for a, b, _ in f])
    cols = np.arange(nf)
    d2 = sp.csr_matrix(
        (np.r_[orient, -orient, orient], (np.r_[e_bc, e_ac, e_ab], np.r_[cols, cols, cols])),
        shape=(ne, nf), dtype=np.int64)

    cc = _circumcenters(P)
    # barycentric coordinates of the circumcentre decide well-centredness
    sq = lambda x: np.einsum("ij,ij->i", x, x)  # noqa: E731
    la, lb, lc = sq(P[:, 1] - P[:, 2]), sq(P[:, 0] - P[:, 2]), sq(P[:, 0] - P[:, 1])
    well = (la * (lb + lc - la) > 0) & (lb * (la + lc - lb) > 0) & (lc * (la + lb - lc) > 0)
    center = np.where(well[:, None], cc, P.mean(axis=1))

    edge_len = np.linalg.norm(v[edges[:, 1]] - v[edges[:, 0]], axis=1)
    dual_edge = np.zeros(ne)
    dual_vert = np.zeros(nv)
    local = [(0, 1, 2, e_ab), (0, 2, 1, e_ac), (1, 2, 0, e_bc)]
    for i, j, o, ids in local:
        pi, pj, po = P[:, i], P[:, j], P[:, o]
        midp = 0.5 * (pi + pj)
        dist = np.linalg.norm(center - midp, axis=1)
        # signed: positive when the centre lies on the side of the opposite vertex
        t = pj - pi
        t = t / np.linalg.norm(t, axis=1, keepdims=True)
        nrm = np.cross(normal, t)
        side = np.sign(np.einsum("ij,ij->i", center - midp, nrm) * np.einsum("ij,ij->i", po - midp, nrm))
        seg = np.where(well, side * dist, dist)
        np.add.at(dual_edge, ids, seg)
        half = 0.5 * np.linalg.norm(pj - pi, axis=1)
        piece = 0.5 * half * seg
        np.add.at(dual_vert, f[:, i], np.where(well, piece, 0.0))
        np.add.at(dual_vert, f[:, j], np.where(well, piece, 0.0))
    for i in range(3):
        np.add.at(dual_vert, f[:, i], np.where(well, 0.0, area / 3))

    K = CellComplex(
        name=f"icosphere{subdivisions}", dimension=2, kind="simplicial",
        cells=(np.arange(nv)[:, None], edges, f),
        incidence=(sp.csr_matrix((nv, 0), dtype=np.int64), d1, d2),
        primal_volumes=(np.ones(nv), edge_len, area),
        dual_volumes=(dual_vert, dual_edge, np.ones(nf)),
        metric_signs=(np.ones(nv), np.ones(ne), np.ones(nf)),
        vertex_coords=v, params={"subdivisions": subdivisions},
        top_orientation=orient, well_centered=well,
    )
    _check_partition(K)
    return K


# ---------------------------------------------------------------------------
# pairing of cochains with chains


def chain_integral(c, z: Chain) -> np.ndarray | float:
    """Exact pairing of a cochain with an integer chain.

    Returns a float for scalar cochains and a coefficient vector for
    Lie-algebra-valued ones.
    """
    if c.degree != z.degree or bool(c.dual) != bool(z.dual):
        raise ValueError(
            f"cannot pair a degree-{c.degree} {'dual' if c.dual else 'primal'} cochain "
            f"with a degree-{z.degree} {'dual' if z.dual else 'primal'} chain")
    if c.complex is not z.complex:
        raise ValueError("cochain and chain live on different complexes")
    out = z.coeffs.astype(float) @ c.values
    return float(out[0]) if c.values.shape[1] == 1 else out
