"""Linearized Noether complexes, their adjoints and rigid cosymmetries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus as calc
from ._spectral import certified_kernel, numerical_rank
from .calculus import Cochain, LinearOperator, Slot
from .models import CosymGen, Model, linearized_kernel
from .topology import HomologyData, compute_homology

COMPOSITION_TOL = 1e-12


class CompositionError(RuntimeError):
    """Consecutive operators of a Noether complex do not compose to zero."""


@dataclass(frozen=True, eq=False)
class NoetherComplex:
    """Ordered operator chain with its slot descriptors.

    Attributes:
        operators: ``[e_lin, z^0, ...]`` (direct) or their adjoints in reverse order.
        slots: cochain spaces between the operators.
        direction: ``"direct"`` or ``"adjoint"``.
        residuals: relative composition residual per consecutive pair.
    """

    operators: list
    slots: list
    direction: str
    residuals: dict = field(default_factory=dict)


def metric_adjoint(K, op: LinearOperator) -> LinearOperator:
    """``G_in^{-1} M^T G_out``: the transpose under the cochain inner products."""
    gi = calc.inner_weights(K, op.domain.degree, op.domain.dual)
    go = calc.inner_weights(K, op.codomain.degree, op.codomain.dual)
    M = sp.diags(1 / gi) @ op.matrix.T @ sp.diags(go)
    return LinearOperator(M, op.codomain, op.domain, f"{op.label}*")


def _composition_residuals(ops) -> dict:
    out = {}
    for a, b in zip(ops[:-1], ops[1:]):
        P = b.matrix @ a.matrix
        scale = (a.norm() * b.norm()) or 1.0
        out[f"{b.label}∘{a.label}"] = float(abs(P).max() / scale) if P.nnz else 0.0
    return out


def assemble(model: Model, tol: float = COMPOSITION_TOL):
    """Direct and adjoint linearized Noether complexes of ``model``.

    Raises:
        CompositionError: naming the first pair whose composition exceeds ``tol``.
    """
    K = model.complex
    ops = model.complex_ops()
    direct = NoetherComplex(ops, [model.field_slot] + [o.codomain for o in ops], "direct",
                            _composition_residuals(ops))
    adj = [metric_adjoint(K, o) for o in reversed(ops)]
    adjoint = NoetherComplex(adj, [adj[0].domain] + [o.codomain for o in adj], "adjoint",
                             _composition_residuals(adj))
    for cx in (direct, adjoint):
        for name, r in cx.residuals.items():
            if r > tol:
                raise CompositionError(f"{cx.direction} complex: {name} = {r:.3g} exceeds {tol:g}")
    return direct, adjoint


def adjointness_residual(K, op: LinearOperator, rng, g: int = 1) -> float:
    """``|<z u, v> - <u, z* v>| / (|u| |v| |z|)`` for random ``u, v``."""
    adj = metric_adjoint(K, op)
    u = Cochain(K, op.domain.degree, rng.standard_normal((op.domain.rows(K), 1)), op.domain.dual)
    v = Cochain(K, op.codomain.degree, rng.standard_normal((op.codomain.rows(K), 1)), op.codomain.dual)
    lhs = calc.inner_product(op(u), v)
    rhs = calc.inner_product(u, adj(v))
    scale = calc.norm(u) * calc.norm(v) * (op.norm() or 1.0)
    return abs(lhs - rhs) / scale


@dataclass(frozen=True, eq=False)
class CosymmetryBasis:
    """Rigid cosymmetry representatives of one stage.

    Attributes:
        stage: Noether stage.
        slot: adjoint slot the representatives live in.
        representatives: field-independent cochains (scalar kernel times algebra basis).
        labels: one per representative.
        triviality: per representative, relative residual of the best
            approximation by the image of the next adjoint operator
            (close to 1 means nontrivial).
        generators: model-declared generators of this stage that passed verification.
        generator_residuals: kernel-property residual per declared generator.
    """

    stage: int
    slot: Slot
    representatives: list
    labels: list
    triviality: list
    generators: list
    generator_residuals: dict
    gap_ratio: float

    @property
    def dim(self) -> int:
        return len(self.representatives)


def _stage_ops(model: Model, stage: int):
    """Operators into and out of the stage-``s`` equation slot."""
    ops = model.complex_ops()
    into = ops[stage]
    out = ops[stage + 1] if stage + 1 < len(ops) else None
    return into, out


def rigid_cosymmetries(model: Model, stage: int, seed: int = 0, samples: int = 10,
                       tol: float = 1e-10) -> CosymmetryBasis:
    """Kernel of the stage-``s`` adjoint operator modulo the next adjoint image.

    Computed as the certified kernel of ``z z* + w* w`` where ``z`` maps into
    the stage slot and ``w`` out of it.  Declared generators of the stage
    are re-verified on random on-shell fields.
    """
    if not 0 <= stage <= model.stage:
        raise ValueError(f"stage {stage} outside 0..{model.stage}")
    K = model.complex
    into, out = _stage_ops(model, stage)
    slot = into.codomain
    w = calc.inner_weights(K, slot.degree, slot.dual)
    if np.any(w <= 0):
        raise ValueError("cosymmetries need a definite inner product")
    L = into.matrix @ metric_adjoint(K, into).matrix
    if out is not None:
        L = L + metric_adjoint(K, out).matrix @ out.matrix
    sw = np.sqrt(w)
    S = sp.diags(sw) @ L @ sp.diags(1 / sw)
    ker = certified_kernel(sp.csr_matrix(0.5 * (S + S.T)), seed=seed)
    U = ker.basis / sw[:, None]
    reps, labels = [], []
    g = model.g
    for i in range(U.shape[1]):
        for a in range(g):
            v = np.zeros((U.shape[0], g))
            v[:, a] = U[:, i]
            reps.append(Cochain(K, slot.degree, v, slot.dual, model.algebra))
            labels.append(f"s{stage}:k{i}" + (f"⊗e{a + 1}" if model.algebra is not None else ""))
    triv = [triviality_residual(model, stage, r) for r in reps]
    order = np.lexsort((np.arange(len(labels)), np.array(labels)))
    reps = [reps[i] for i in order]
    labels = [labels[i] for i in order]
    triv = [triv[i] for i in order]
    gens, gres = [], {}
    rng = np.random.default_rng(seed)
    basis, _ = linearized_kernel(model, seed)
    adj_into = metric_adjoint(K, into)
    for gen in model.generators:
        if gen.stage != stage:
            continue
        worst = 0.0
        for _ in range(samples):
            psi = _random_on_shell(model, basis, rng)
            xi = gen.evaluator(psi)
            r = adj_into(xi)
            scale = max(calc.norm(xi), calc.norm(psi) ** gen.degree) * (adj_into.norm() or 1.0)
            worst = max(worst, calc.norm(r) / max(scale, 1e-300))
        gres[gen.label] = worst
        if worst <= tol:
            gens.append(gen)
    return CosymmetryBasis(stage, slot, reps, labels, triv, gens, gres, ker.gap_ratio)


def _random_on_shell(model: Model, basis, rng) -> Cochain:
    if not basis:
        return model.zero_field()
    c = rng.standard_normal(len(basis))
    v = sum(ci * b.values for ci, b in zip(c, basis))
    return model.field(v)


def triviality_residual(model: Model, stage: int, xi: Cochain) -> float:
    """Relative residual of ``xi`` against the image of the next adjoint operator.

    A residual near zero certifies ``xi`` as trivial; near one, as nontrivial.
    """
    K = model.complex
    _, out = _stage_ops(model, stage)
    nx = calc.norm(xi)
    if nx == 0:
        return 0.0
    if out is None:
        return 1.0
    A = metric_adjoint(K, out).matrix
    wt = np.sqrt(calc.norm_weights(K, xi.slot))
    Aw = sp.diags(wt) @ A
    res = 0.0
    for a in range(xi.values.shape[1]):
        b = wt * xi.values[:, a]
        sol = spla.lsqr(Aw, b, atol=1e-14, btol=1e-14, iter_lim=10 * A.shape[1])[0]
        res += float(np.sum((Aw @ sol - b) ** 2))
    return float(np.sqrt(res) / nx)


def null_source(gen: CosymGen, psi: Cochain, zeta: Cochain, model: Model | None = None) -> Cochain:
    """Evaluate ``rho(psi, zeta)``; ``zeta`` must lie in the equation slot."""
    if model is not None and (zeta.degree, zeta.dual) != (model.eq_slot.degree, model.eq_slot.dual):
        raise calc.SlotError(f"zeta must be a {model.eq_slot.describe()}, got {zeta.slot.describe()}")
    return gen.source(psi, zeta)


def current_residual(model: Model, gen: CosymGen, psi: Cochain) -> float:
    """``|d k(psi) - rho(psi, e_lin psi)|`` relative to ``|rho| + |d k|`` (or absolute if both vanish)."""
    dk = calc.exterior_derivative(gen.current(psi))
    rho = gen.source(psi, model.e_lin(psi))
    scale = calc.norm(rho) + calc.norm(dk)
    diff = calc.norm(dk - rho)
    return diff / scale if scale > 0 else diff


def verify_noether_correspondence(model: Model, hd: HomologyData | None = None, seed: int = 0,
                                  samples: int = 5, tol: float = 1e-10) -> dict:
    """Count cosymmetry classes against conserved-current classes.

    Every stage carrying declared generators is examined.
    A field-independent generator defines the linear functionals
    ``zeta -> <h, rho(zeta)>`` for harmonic ``h`` in the source degree.
    Functionals of the form ``w . z^s zeta`` are trivial, so each is
    projected onto the kernel of ``z^s`` before the rank is taken.  The
    current count is that rank over the generators of the stage.
    """
    K = model.complex
    hd = hd or compute_homology(K)
    rng = np.random.default_rng(seed)
    report = {"model": model.name, "stages": []}
    stages = sorted({gn.stage for gn in model.generators})
    for s in stages:
        cb = rigid_cosymmetries(model, s, seed)
        into, out = _stage_ops(model, s)
        gens = [gn for gn in cb.generators if gn.field_independent]
        rows = []
        id_res = {}
        for gn in model.generators:
            if gn.stage != s:
                continue
            worst = 0.0
            for _ in range(samples):
                worst = max(worst, current_residual(model, gn, model.random_field(rng)))
            id_res[gn.label] = worst
        for gn in gens:
            if id_res.get(gn.label, 1.0) > tol:
                continue
            R = gn.source_matrix(model.zero_field())
            rho_slot = _source_slot(model, gn)
            hs = hd.harmonic_basis(rho_slot.degree, rho_slot.dual)
            wv = calc.inner_weights(K, rho_slot.degree, rho_slot.dual)
            F = np.array([(wv * h.values[:, 0]) @ R for h in hs]).reshape(len(hs), -1)
            if out is not None:
                F = _project_off_rows(F, calc.lift(out.matrix, model.g))
            rows.append(F.reshape(-1))
        n_cur = numerical_rank(np.array(rows), 1e-8) if rows else 0
        report["stages"].append({
            "stage": s,
            "cosymmetry_classes": cb.dim,
            "current_classes": int(n_cur),
            "match": bool(cb.dim == n_cur),
            "current_identity_residuals": id_res,
            "generators_verified": [gn.label for gn in cb.generators],
        })
    report["match"] = all(st["match"] for st in report["stages"])
    return report


def _source_slot(model: Model, gen: CosymGen) -> Slot:
    c = gen.source(model.zero_field(), model.eq_cochain(np.zeros(model.eq_slot.rows(model.complex) * model.g)))
    return c.slot


def _project_off_rows(F: np.ndarray, Z) -> np.ndarray:
    """Euclidean projection of the rows of ``F`` onto ``ker Z``."""
    Z = sp.csr_matrix(Z)
    out = np.empty_like(F)
    for i, f in enumerate(F):
        # f - Z^T y with y = argmin |Z^T y - f|
        y = spla.lsqr(Z.T, f, atol=1e-14, btol=1e-14, iter_lim=10 * Z.shape[0])[0]
        out[i] = f - Z.T @ y
    return out
