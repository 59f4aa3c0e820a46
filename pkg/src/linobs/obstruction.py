"""Deformation currents, obstruction charges and conservativity tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import calculus as calc
from .calculus import Cochain
from .models import CosymGen, Model, linearized_kernel
from .topology import HomologyData, _d_norm, periods

ON_SHELL_TOL = 1e-8
CHARGE_TOL = 1e-8
HOMOGENEITY_FACTORS = (2.0, 3.0)


@dataclass
class ObstructionEntry:
    """Charges of one cosymmetry generator on one field."""

    label: str
    degree_l: int
    order: int
    current_degree: int
    current_dual: bool
    periods: list
    cycles: list
    closedness: float
    homogeneity_error: float | None
    max_abs: float
    scale: float
    verdict: str


@dataclass
class ObstructionReport:
    """Period vectors of every declared generator's deformation current.

    Attributes:
        model: model name.
        psi_norm: weighted norm of the field.
        on_shell_residual: ``|e_lin psi| / (|psi| |e_lin|)``.
        on_shell: whether the residual is within tolerance.
        entries: one per generator.
    """

    model: str
    psi_norm: float
    on_shell_residual: float
    on_shell: bool
    entries: list = field(default_factory=list)

    def entry(self, label: str) -> ObstructionEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def max_charge(self) -> float:
        return max((e.max_abs for e in self.entries), default=0.0)

    def max_relative_charge(self) -> float:
        return max((e.max_abs / e.scale if e.scale > 0 else 0.0 for e in self.entries), default=0.0)

    def to_json(self) -> dict:
        return asdict(self)


def _check_field(model: Model, psi: Cochain) -> None:
    if (psi.degree, psi.dual) != (model.field_slot.degree, model.field_slot.dual) or psi.complex is not model.complex:
        raise calc.SlotError(f"psi must be a {model.field_slot.describe()} on the model's complex")


def deformation_current(model: Model, gen: CosymGen, psi: Cochain,
                        deformation: Callable | None = None) -> Cochain:
    """``j = rho(psi, f(psi))`` for the leading nonlinearity (or a given deformation)."""
    _check_field(model, psi)
    f = deformation if deformation is not None else model.f_leading
    return gen.source(psi, f(psi))


def on_shell_residual(model: Model, psi: Cochain) -> float:
    n = calc.norm(psi)
    if n == 0:
        return 0.0
    return calc.norm(model.e_lin(psi)) / (n * (model.e_lin_norm() or 1.0))


def _entry(model, gen, psi, hd, deformation, tol, homogeneity, zero=False):
    slot = _current_slot(model, gen)
    cyc = hd.cycle_basis(slot.degree, slot.dual)
    order = gen.degree + model.m
    scale = calc.norm(psi) ** order
    if zero:
        vals, closed, herr = np.zeros(len(cyc)), 0.0, 0.0
    else:
        j = deformation_current(model, gen, psi, deformation)
        vals = periods(j, hd).values
        # residuals are measured against the level at which a charge counts as nonzero
        floor = tol * scale
        closed = 0.0
        if slot.degree < model.complex.dimension:
            dj = calc.norm(calc.exterior_derivative(j))
            closed = dj / (_d_norm(model.complex, slot.degree, slot.dual) * max(calc.norm(j), floor, 1e-300))
        herr = None
        if homogeneity:
            herr = 0.0
            for t in HOMOGENEITY_FACTORS:
                pt = periods(deformation_current(model, gen, psi * t, deformation), hd).values
                want = t ** order * vals
                den = max(np.abs(want).max(initial=0.0), t ** order * floor, 1e-300)
                herr = max(herr, float(np.abs(pt - want).max(initial=0.0) / den))
    mx = float(np.abs(vals).max(initial=0.0))
    verdict = "nonzero" if mx > tol * scale and mx > 0 else "zero"
    return ObstructionEntry(gen.label, gen.degree, order, slot.degree, slot.dual,
                            [float(v) for v in vals], [z.label for z in cyc], float(closed),
                            herr, mx, float(scale), verdict)


def _current_slot(model: Model, gen: CosymGen):
    if ("current_slot", gen.label) not in model._cache:
        zeta = model.eq_cochain(np.zeros(model.eq_slot.rows(model.complex) * model.g))
        model._cache[("current_slot", gen.label)] = gen.source(model.zero_field(), zeta).slot
    return model._cache[("current_slot", gen.label)]


def obstruction_charges(model: Model, psi: Cochain, hd: HomologyData, tol: float = CHARGE_TOL,
                        on_shell_tol: float = ON_SHELL_TOL, homogeneity: bool = True,
                        deformation: Callable | None = None,
                        generators: list | None = None) -> ObstructionReport:
    """Periods of every generator's deformation current on ``psi``.

    Args:
        tol: an entry is ``"nonzero"`` when some period exceeds
            ``tol * |psi|**(l+m)``.
        homogeneity: also recompute at ``t psi`` for ``t`` in 2, 3 and record
            the worst deviation from ``t**(l+m)`` scaling, relative to
            ``max(|t**(l+m) charge|, t**(l+m) tol |psi|**(l+m))``.
        deformation: replaces the leading nonlinearity (e.g. a trivial one).
    """
    _check_field(model, psi)
    zero = not np.any(psi.values)
    res = on_shell_residual(model, psi)
    rep = ObstructionReport(model.name, calc.norm(psi), float(res), bool(res <= on_shell_tol))
    for gen in generators if generators is not None else model.generators:
        rep.entries.append(_entry(model, gen, psi, hd, deformation, tol, homogeneity, zero))
    return rep


def random_on_shell(model: Model, rng: np.random.Generator, seed: int = 0) -> Cochain:
    """Random combination of the linearized solution basis."""
    basis, _ = linearized_kernel(model, seed)
    c = rng.standard_normal(len(basis))
    return model.field(sum(ci * b.values for ci, b in zip(c, basis)))


def is_conservative(model: Model, gen: CosymGen, samples: int, hd: HomologyData, tol: float = CHARGE_TOL,
                    seed: int = 0, sampler: Callable | None = None) -> dict:
    """Sample on-shell fields and look for a nonzero deformation-current period.

    Returns:
        dict with ``verdict`` (``"conservative"`` or ``"not conservative"``),
        ``witness`` (``"nonzero witness found"`` or
        ``"no witness found at N samples"``), the largest normalized period
        and the maximizing field norm.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    best, best_norm, best_vals = 0.0, 0.0, []
    for _ in range(samples):
        psi = sampler(rng) if sampler is not None else random_on_shell(model, rng, seed)
        e = _entry(model, gen, psi, hd, None, tol, False, not np.any(psi.values))
        rel = e.max_abs / e.scale if e.scale > 0 else 0.0
        if rel >= best:
            best, best_norm, best_vals = rel, calc.norm(psi), e.periods
    conservative = best <= tol
    return {
        "generator": gen.label,
        "verdict": "conservative" if conservative else "not conservative",
        "witness": f"no witness found at {samples} samples" if conservative else "nonzero witness found",
        "max_period": float(best),
        "witness_norm": float(best_norm),
        "witness_periods": best_vals,
        "samples": samples,
    }


def shifted_generator(model: Model, gen: CosymGen, rng: np.random.Generator, density: int = 3) -> CosymGen:
    """Equivalent generator ``rho + d J + s z^0`` with random sparse ``J`` and ``s``.

    The current becomes ``k + J(e_lin psi)``, so the current identity still holds.
    """
    K = model.complex
    slot = _current_slot(model, gen)
    neq = model.eq_slot.rows(K) * model.g
    if slot.degree == 0:
        raise ValueError("a 0-form source has no potential shift")
    jslot = calc.Slot(slot.degree - 1, slot.dual)
    J = sp.random(jslot.rows(K), neq, density=min(1.0, density / neq), random_state=rng, format="csr")
    Dj = calc.d_matrix(K, jslot.degree, jslot.dual)
    z0 = model.noether_ops[0] if model.noether_ops else None
    if z0 is not None:
        nz = z0.codomain.rows(K) * model.g
        Sg = sp.random(slot.rows(K), nz, density=min(1.0, density / nz), random_state=rng, format="csr")
        Z = calc.lift(z0.matrix, model.g)
        extra = Dj @ J + Sg @ Z
    else:
        extra = Dj @ J

    def source(psi, zeta):
        base = gen.source(psi, zeta)
        return base.like(base.values[:, 0] + extra @ zeta.flat)

    def current(psi):
        base = gen.current(psi)
        return base.like(base.values[:, 0] + J @ model.e_lin(psi).flat)

    return CosymGen(gen.label + "+shift", gen.stage, gen.degree, gen.evaluator, source, current,
                    lambda psi: sp.csr_matrix(gen.source_matrix(psi) + extra), gen.field_independent)


def well_definedness(model: Model, gen: CosymGen, psi: Cochain, hd: HomologyData, seed: int = 0) -> dict:
    """Charge change when the generator is shifted by trivial terms."""
    rng = np.random.default_rng(seed)
    g2 = shifted_generator(model, gen, rng)
    a = _entry(model, gen, psi, hd, None, CHARGE_TOL, False)
    b = _entry(model, g2, psi, hd, None, CHARGE_TOL, False)
    diff = float(np.abs(np.subtract(a.periods, b.periods)).max(initial=0.0))
    den = max(a.max_abs, a.scale, 1e-300)
    # the current identity holds off shell too, where both sides are sizeable
    off = model.random_field(rng)
    dk = calc.exterior_derivative(g2.current(off))
    rho = g2.source(off, model.e_lin(off))
    return {
        "generator": gen.label,
        "relative_change": diff / den,
        "current_identity": calc.norm(dk - rho) / max(calc.norm(rho) + calc.norm(dk), 1e-300),
    }


def gauge_change(model: Model, psi: Cochain, lam: Cochain, hd: HomologyData) -> float:
    """Change of all charges under ``psi -> psi + d lam``.

    Normalized by ``max(|charges|, |psi|**(l+m))`` so vanishing charges do not blow up.
    """
    if model.field_slot.degree != 1:
        raise ValueError("gauge shifts need a 1-form field")
    shifted = psi + calc.exterior_derivative(lam)
    a = obstruction_charges(model, psi, hd, homogeneity=False)
    b = obstruction_charges(model, shifted, hd, homogeneity=False)
    num = max(float(np.abs(np.subtract(x.periods, y.periods)).max(initial=0.0)) for x, y in zip(a.entries, b.entries))
    den = max([a.max_charge()] + [e.scale for e in a.entries] + [1e-300])
    return num / den
