"""Newton continuation of linearized solutions and the obstruction implication."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus as calc
from .calculus import Cochain
from .models import Model, linearized_kernel
from .obstruction import obstruction_charges
from .topology import HomologyData, compute_homology

DENSE_LIMIT = 2000
EXTEND_RTOL = 1e-9
ABS_FLOOR = 1e-13
SOUNDNESS_TOL = 1e-6


class TheoremViolation(AssertionError):
    """An extended sample carries a nonzero obstruction charge."""

    def __init__(self, message: str, witness: dict):
        super().__init__(message)
        self.witness = witness


@dataclass
class ContinuationResult:
    """Outcome of path following ``phi_t`` tangent to ``t psi``.

    Attributes:
        psi: the linearized solution.
        t_grid: continuation parameters attempted, ascending.
        histories: per grid point, the residual after every Gauss-Newton step.
        final_residual: equation residual at the last point reached.
        verdict: ``"extended"``, ``"stalled"`` or ``"diverged"``.
        family: ``phi_t`` per grid point when extended.
        label: for stalls, ``"obstruction-consistent"`` or ``"solver-inconclusive"``.
        tangency: ``|(phi_t - phi)/t - psi|`` per grid point when extended.
        tangency_constant: fitted ``C`` with tangency ``<= C t``.
    """

    psi: Cochain
    t_grid: list
    histories: list
    final_residual: float
    verdict: str
    family: list = field(default_factory=list)
    label: str = ""
    t_reached: float = 0.0
    tangency: list = field(default_factory=list)
    tangency_constant: float | None = None

    def to_json(self) -> dict:
        return {
            "psi_norm": calc.norm(self.psi),
            "t_grid": [float(t) for t in self.t_grid],
            "histories": [[float(r) for r in h] for h in self.histories],
            "final_residual": float(self.final_residual),
            "verdict": self.verdict,
            "label": self.label,
            "t_reached": float(self.t_reached),
            "tangency": [float(x) for x in self.tangency],
            "tangency_constant": self.tangency_constant,
        }

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "iteration", "residual"])
        for t, h in zip(self.t_grid, self.histories):
            for i, r in enumerate(h):
                w.writerow([f"{t:.12g}", i, f"{r:.12g}"])
        return buf.getvalue()


def solve_linearized(model: Model, seed: int = 0) -> list[Cochain]:
    """Orthonormal basis of the certified kernel of ``[e_lin; gauge_fix]``."""
    return linearized_kernel(model, seed)[0]


class _System:
    """Weighted augmented system ``[e; gauge; pin]`` and its Jacobian."""

    def __init__(self, model: Model, psi: Cochain, seed: int):
        K = model.complex
        self.model = model
        g = model.g
        self.we = np.repeat(np.sqrt(calc.norm_weights(K, model.eq_slot)), g)
        wf = np.repeat(calc.norm_weights(K, model.field_slot), g)
        self.scale = model.e_lin_norm() or 1.0
        basis = solve_linearized(model, seed)
        self.H = np.stack([wf * b.flat for b in basis], axis=0) if basis else np.zeros((0, wf.size))
        self.c = self.H @ psi.flat
        self.G = None
        if model.gauge_fix is not None:
            wg = np.repeat(np.sqrt(calc.norm_weights(K, model.gauge_fix.codomain)), g)
            self.G = sp.diags(wg) @ calc.lift(model.gauge_fix.matrix, g)
        self.bg = model.background.flat

    def eq_residual(self, phi: np.ndarray) -> float:
        return float(np.linalg.norm(self.we * self.model.e(self.model.field(phi)).flat))

    def residual(self, phi: np.ndarray, t: float) -> np.ndarray:
        parts = [self.we * self.model.e(self.model.field(phi)).flat]
        if self.G is not None:
            parts.append(self.G @ (phi - self.bg))
        parts.append(self.scale * (self.H @ (phi - self.bg) - t * self.c))
        return np.concatenate(parts)

    def jacobian(self, phi: np.ndarray):
        blocks = [[sp.diags(self.we) @ self.model.jacobian(self.model.field(phi))]]
        if self.G is not None:
            blocks.append([self.G])
        blocks.append([sp.csr_matrix(self.scale * self.H)])
        return sp.csr_matrix(sp.vstack([b[0] for b in blocks]))


def _step(J, r: np.ndarray) -> np.ndarray:
    if J.shape[1] <= DENSE_LIMIT:
        return np.linalg.lstsq(J.toarray(), -r, rcond=None)[0]
    return spla.lsqr(J, -r, atol=1e-14, btol=1e-14, iter_lim=20 * J.shape[1])[0]


def _newton(sys_: _System, phi: np.ndarray, t: float, threshold: float, max_iter: int):
    hist = []
    r = sys_.residual(phi, t)
    rn = float(np.linalg.norm(r))
    hist.append(rn)
    r0 = rn
    status = "stalled"
    for k in range(max_iter):
        if rn <= threshold:
            status = "converged"
            break
        phi = phi + _step(sys_.jacobian(phi), r)
        r = sys_.residual(phi, t)
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        if not np.isfinite(rn) or rn > 10 * max(r0, threshold):
            status = "diverged"
            break
        if len(hist) > 5 and rn > 0.99 * hist[-6] and rn > threshold:
            status = "stalled"
            break
    else:
        if rn <= threshold:
            status = "converged"
    return phi, hist, status


def extend(model: Model, psi: Cochain, t_max: float = 1.0, steps: int = 6, hd: HomologyData | None = None,
           seed: int = 0, max_iter: int = 40, charge_tol: float = 1e-8) -> ContinuationResult:
    """Follow ``phi_t`` with harmonic part pinned to ``t psi`` on a geometric grid.

    Args:
        t_max: last continuation parameter (the grid starts at ``1e-3``).
        steps: number of grid points.
        hd: homology used to label stalls; computed on demand.
        charge_tol: relative charge level above which a stall is labeled
            obstruction-consistent.
    """
    if steps < 1 or t_max <= 0:
        raise ValueError("need steps >= 1 and t_max > 0")
    t0 = min(1e-3, t_max)
    grid = list(np.geomspace(t0, t_max, steps)) if steps > 1 else [t_max]
    sys_ = _System(model, psi, seed)
    phi_prev, t_prev = sys_.bg.copy(), 0.0
    histories, family = [], []
    verdict, final = "extended", 0.0
    t_done = 0.0
    for t in grid:
        phi = phi_prev + (t - t_prev) * psi.flat
        threshold = max(EXTEND_RTOL * sys_.scale * np.linalg.norm(phi * np.repeat(
            np.sqrt(calc.norm_weights(model.complex, model.field_slot)), model.g)), ABS_FLOOR)
        phi, hist, status = _newton(sys_, phi, t, threshold, max_iter)
        histories.append(hist)
        final = sys_.eq_residual(phi)
        if status != "converged":
            verdict = status
            break
        family.append(model.field(phi))
        phi_prev, t_prev, t_done = phi, t, t
    res = ContinuationResult(psi, grid[:len(histories)], histories, final, verdict, family, "", t_done)
    if verdict == "extended":
        bg = model.background
        res.tangency = [calc.norm((ph - bg) * (1.0 / t) - psi) for ph, t in zip(family, grid)]
        ts = np.asarray(grid)
        res.tangency_constant = float(np.max(np.asarray(res.tangency) / ts))
        res.family = family
    elif verdict == "stalled":
        hd = hd or compute_homology(model.complex)
        rep = obstruction_charges(model, psi, hd, tol=charge_tol, homogeneity=False)
        nonzero = any(e.verdict == "nonzero" for e in rep.entries)
        res.label = "obstruction-consistent" if nonzero else "solver-inconclusive"
    return res


def designed_witnesses(model: Model) -> list[tuple[str, Cochain]]:
    """Closed-form test fields per model family."""
    K = model.complex
    out = [("zero", model.zero_field())]
    if model.name == "cyclic-particle":
        out.append(("psi0=0.1", model.field(0.1 * np.ones(K.n_cells(0)))))
    if model.name == "chern-simons" and model.g >= 2:
        e1 = [1.0] + [0.0] * (model.g - 1)
        e2 = [0.0, 1.0] + [0.0] * (model.g - 2)
        a = calc.constant_form(K, 1, (0,), e1, algebra=model.algebra)
        b = calc.constant_form(K, 1, (1,), e1, algebra=model.algebra)
        c = calc.constant_form(K, 1, (1,), e2, algebra=model.algebra)
        out.append(("commuting e1(dx+dy)", model.field((a + b).values * 0.1)))
        out.append(("noncommuting e1dx+e2dy", model.field((a + c).values * 0.1)))
    return out


def verify_obstruction_theorem(model: Model, n_samples: int, hd: HomologyData | None = None, seed: int = 0,
                               t_max: float = 1.0, steps: int = 4, amplitude: float = 0.1,
                               max_basis: int = 9, tol: float = SOUNDNESS_TOL) -> dict:
    """Check ``extended => all charges vanish`` over a sample of linearized solutions.

    Samples are kernel basis elements (scaled to ``amplitude``), ``n_samples``
    random combinations with random norms up to ``amplitude``, and the
    designed witnesses of the model.

    Raises:
        TheoremViolation: with the offending sample if an extended field has
            a charge above ``tol * |psi|**(l+m)``.
    """
    hd = hd or compute_homology(model.complex)
    rng = np.random.default_rng(seed)
    basis = solve_linearized(model, seed)
    samples = []
    for i, b in enumerate(basis[:max_basis]):
        samples.append((f"basis{i}", b * (amplitude / calc.norm(b))))
    for i in range(n_samples):
        if not basis:
            break
        v = sum(ci * b.values for ci, b in zip(rng.standard_normal(len(basis)), basis))
        psi = model.field(v)
        samples.append((f"random{i}", psi * (amplitude * rng.uniform(0.2, 1.0) / calc.norm(psi))))
    samples.extend(designed_witnesses(model))
    rows = []
    for name, psi in samples:
        rep = obstruction_charges(model, psi, hd, homogeneity=False)
        res = extend(model, psi, t_max, steps, hd, seed)
        rel = rep.max_relative_charge()
        row = {
            "sample": name,
            "psi_norm": rep.psi_norm,
            "max_charge": rep.max_charge(),
            "max_relative_charge": rel,
            "verdict": res.verdict,
            "label": res.label,
            "final_residual": res.final_residual,
            "t_reached": res.t_reached,
            "tangency_constant": res.tangency_constant,
        }
        rows.append(row)
        if res.verdict == "extended" and rel > tol:
            raise TheoremViolation(
                f"{model.name}: sample {name} extended with relative charge {rel:.3g}",
                {**row, "charges": rep.to_json(), "psi": psi.values.tolist()})
    zero = [r for r in rows if r["max_relative_charge"] <= tol]
    return {
        "model": model.name,
        "samples": rows,
        "implication_holds": True,
        "extended": sum(r["verdict"] == "extended" for r in rows),
        "converse": {
            "charge_free": len(zero),
            "charge_free_extended": sum(r["verdict"] == "extended" for r in zero),
        },
    }
