"""Registry of example PDE systems as discrete models.

Every model has the form ``e(phi) = e_lin(phi) - f(phi)`` about the zero
background, with ``f`` homogeneous quadratic (``m = 2``).  Linear operators
are stored as scalar cell matrices; Lie-valued cochains are acted on
componentwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import sph_harm_y

from . import calculus as calc
from ._spectral import certified_kernel
from .calculus import Cochain, LieAlgebra, LinearOperator, Slot, lift
from .mesh import CellComplex


class ModelError(ValueError):
    """A model cannot be built on the given complex."""


@dataclass(frozen=True, eq=False)
class CosymGen:
    """Cosymmetry generator with its null source and conserved current.

    Attributes:
        label: display name.
        stage: Noether stage ``s`` of the adjoint slot.
        degree: polynomial degree ``l`` in the field.
        evaluator: ``psi -> cochain`` in the stage-``s`` adjoint slot.
        source: ``(psi, zeta) -> scalar cochain``, linear in ``zeta``.
        current: ``psi -> scalar cochain`` with ``d current(psi) = source(psi, e_lin psi)``.
        source_matrix: ``psi -> matrix`` of ``zeta -> source(psi, zeta)`` on flattened values.
        field_independent: ``True`` for rigid generators (``l = 0``).
    """

    label: str
    stage: int
    degree: int
    evaluator: Callable
    source: Callable
    current: Callable
    source_matrix: Callable
    field_independent: bool = True


@dataclass(frozen=True, eq=False)
class Model:
    """A discrete PDE system linearized about the zero background.

    Attributes:
        name: registry name.
        complex: the mesh.
        algebra: coefficient Lie algebra or ``None`` for scalar fields.
        field_slot / eq_slot: cochain spaces of the field and of the equations.
        stage: length ``r`` of the Noether tail.
        e_lin: linearized operator (scalar cell matrix).
        f_leading: quadratic leading nonlinearity.
        f_jacobian: ``psi -> sparse Jacobian of f_leading`` on flattened values.
        noether_ops: ``[z^0, ..., z^{r-1}]``.
        gauge_fix: gauge-fixing operator on the field, if any.
        generators: declared cosymmetry generators.
        m: order of ``f_leading``.
    """

    name: str
    complex: CellComplex
    algebra: LieAlgebra | None
    field_slot: Slot
    eq_slot: Slot
    stage: int
    e_lin: LinearOperator
    f_leading: Callable
    f_jacobian: Callable
    noether_ops: list
    gauge_fix: LinearOperator | None
    generators: list
    m: int = 2
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def g(self) -> int:
        return 1 if self.algebra is None else self.algebra.dim

    @property
    def background(self) -> Cochain:
        return self.zero_field()

    def zero_field(self) -> Cochain:
        return Cochain.zeros(self.complex, self.field_slot.degree, self.field_slot.dual, self.algebra)

    def field(self, values) -> Cochain:
        return Cochain(self.complex, self.field_slot.degree,
                       np.reshape(values, (self.field_slot.rows(self.complex), self.g)),
                       self.field_slot.dual, self.algebra)

    def eq_cochain(self, values) -> Cochain:
        return Cochain(self.complex, self.eq_slot.degree,
                       np.reshape(values, (self.eq_slot.rows(self.complex), self.g)),
                       self.eq_slot.dual, self.algebra)

    def random_field(self, rng: np.random.Generator) -> Cochain:
        return self.field(rng.standard_normal((self.field_slot.rows(self.complex), self.g)))

    def e(self, phi: Cochain) -> Cochain:
        """Full equation form ``e_lin(phi) - f(phi)``."""
        return self.e_lin(phi) - self.f_leading(phi)

    def e_lin_matrix(self) -> sp.csr_matrix:
        return lift(self.e_lin.matrix, self.g)

    def jacobian(self, phi: Cochain) -> sp.csr_matrix:
        return sp.csr_matrix(self.e_lin_matrix() - self.f_jacobian(phi))

    def e_lin_norm(self) -> float:
        if "e_lin_norm" not in self._cache:
            K = self.complex
            wi = np.sqrt(calc.norm_weights(K, self.field_slot))
            wo = np.sqrt(calc.norm_weights(K, self.eq_slot))
            M = sp.diags(wo) @ self.e_lin.matrix @ sp.diags(1 / wi)
            self._cache["e_lin_norm"] = calc._op_norm(M)
        return self._cache["e_lin_norm"]

    def complex_ops(self) -> list[LinearOperator]:
        return [self.e_lin] + list(self.noether_ops)

    def check(self, seed: int = 0) -> dict:
        """Background residual, Noether compositions and Taylor remainder."""
        rng = np.random.default_rng(seed)
        bg = calc.norm(self.e(self.background))
        comps = {}
        ops = self.complex_ops()
        for a, b in zip(ops[:-1], ops[1:]):
            P = b.matrix @ a.matrix
            scale = (a.norm() * b.norm()) or 1.0
            comps[f"{b.label}∘{a.label}"] = float(abs(P).max() / scale) if P.nnz else 0.0
        psi = self.random_field(rng)
        taylor = []
        for t in (1e-1, 1e-2, 1e-3, 1e-4):
            tp = psi * t
            lin, quad = self.e_lin(tp), self.f_leading(tp)
            r = self.e(self.background + tp) - lin + quad
            # remainder beyond the floating-point floor of the two terms
            floor = 64 * np.finfo(float).eps * (calc.norm(lin) + calc.norm(quad))
            taylor.append(max(calc.norm(r) - floor, 0.0) / t ** (self.m + 1))
        return {"background_residual": bg, "compositions": comps, "taylor_remainder": taylor}


# ---------------------------------------------------------------------------
# shared pieces


def _rigid_generator(K, algebra, label, stage, eps_values, eval_slot, zeta_slot, current_fn):
    """Generator ``rho(psi, zeta) = <eps ^ zeta>`` for a closed 0-form ``eps``."""
    eps = Cochain(K, 0, eps_values, False, algebra)
    mode = "killing" if algebra is not None else "scalar"
    star_eps = calc.hodge_star(eps)

    n = K.dimension
    vol_eps = Cochain(K, n, K.primal_volumes[n][:, None] * eps.values[:1], False, algebra)

    def evaluator(psi):
        return star_eps if eval_slot.dual else vol_eps

    def source(psi, zeta):
        return calc._wedge(eps, zeta, mode, None)

    def source_matrix(psi):
        M, _ = calc.product_matrix(K, eps, True, Slot(zeta_slot.degree, zeta_slot.dual, eps.values.shape[1]),
                                   mode, None, algebra)
        return M

    return CosymGen(label, stage, 0, evaluator, source, current_fn(eps, mode), source_matrix, True)


def _lie_basis(algebra: LieAlgebra, K: CellComplex):
    out = []
    for a in range(algebra.dim):
        v = np.zeros((K.n_cells(0), algebra.dim))
        v[:, a] = 1.0
        out.append((f"e{a + 1}", v))
    return out


def _require_riemannian_torus(K: CellComplex, dims, name: str) -> None:
    if K.kind != "cubical" or K.dimension not in dims:
        raise ModelError(f"{name} needs a flat torus of dimension {sorted(dims)}, got {K.name}")
    if K.signature != "riemannian":
        raise ModelError(f"{name} ships on riemannian tori only")


# ---------------------------------------------------------------------------
# cyclic-time particle


def model_cyclic_particle(K: CellComplex) -> Model:
    """``psi'' = psi**2`` on a circle.

    The field is a primal 0-cochain and the equation a dual 1-cochain
    (one row per vertex): ``e(phi) = d*d phi - *(phi**2)``.
    """
    if K.dimension != 1:
        raise ModelError(f"the cyclic particle needs a 1-dimensional complex, got dimension {K.dimension}")
    B1 = K.boundary(1).astype(float)
    W0, W1 = K.star_weights(0), K.star_weights(1)
    L = sp.csr_matrix(-B1 @ sp.diags(W1) @ B1.T)
    field_slot, eq_slot = Slot(0), Slot(1, True)
    e_lin = LinearOperator(L, field_slot, eq_slot, "d*d")

    def f(psi):
        return Cochain(K, 1, W0[:, None] * psi.values ** 2, True)

    def fj(psi):
        return sp.diags(2 * W0 * psi.values[:, 0]).tocsr()

    ones = np.ones(K.n_cells(0))

    def mom_current(psi):
        return Cochain(K, 0, W1[:, None] * (B1.T @ psi.values), True)

    momentum = CosymGen(
        "momentum", 0, 0,
        evaluator=lambda psi: Cochain(K, 1, W0 * ones, True),
        source=lambda psi, zeta: Cochain(K, 1, zeta.values, True),
        current=mom_current,
        source_matrix=lambda psi: sp.identity(K.n_cells(0), format="csr"),
    )

    A = calc.vertex_average(K, 0, True)

    def speed(psi):
        return W1 * (B1.T @ psi.values[:, 0])

    energy = CosymGen(
        "energy", 0, 1,
        evaluator=lambda psi: Cochain(K, 1, W0 * (A @ speed(psi)), True),
        source=lambda psi, zeta: Cochain(K, 1, (A @ speed(psi))[:, None] * zeta.values, True),
        current=lambda psi: Cochain(K, 0, 0.5 * speed(psi) ** 2, True),
        source_matrix=lambda psi: sp.diags(A @ speed(psi)).tocsr(),
        field_independent=False,
    )
    return Model("cyclic-particle", K, None, field_slot, eq_slot, 0, e_lin, f, fj, [], None,
                 [momentum, energy], 2, {"circumference": K.total_volume()})


# ---------------------------------------------------------------------------
# semilinear elliptic equation on the sphere


def real_sph_harm(l: int, m: int, xyz: np.ndarray) -> np.ndarray:
    """Real orthonormal spherical harmonic ``Y_lm`` at unit vectors ``xyz``."""
    theta = np.arccos(np.clip(xyz[:, 2], -1, 1))
    phi = np.arctan2(xyz[:, 1], xyz[:, 0])
    Y = sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        return Y.real
    s = np.sqrt(2) * (-1) ** m
    return s * (Y.real if m > 0 else Y.imag)


def harmonic_triple_integral(lm1, lm2, lm3, order: int = 48) -> float:
    """``int_{S^2} Y1 Y2 Y3`` for real harmonics by tensor Gauss quadrature.

    Exact for total degree below ``order``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    phi = 2 * np.pi * np.arange(2 * order) / (2 * order)
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1 - ct ** 2)
    xyz = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    vals = np.prod([real_sph_harm(l, m, xyz) for l, m in (lm1, lm2, lm3)], axis=0).reshape(ct.shape)
    return float(np.sum(w[:, None] * vals) * (2 * np.pi / (2 * order)))


def sphere_spectrum(K: CellComplex, count: int):
    """Lowest ``count`` eigenpairs of ``stiffness y = mu * mass y``."""
    key = ("sphere_spectrum", count)
    if key not in K._cache:
        B1 = K.boundary(1).astype(float)
        Kst = sp.csc_matrix(B1 @ sp.diags(K.star_weights(1)) @ B1.T)
        M = sp.diags(K.star_weights(0)).tocsc()
        v0 = np.random.default_rng(0).standard_normal(K.n_cells(0))
        mu, Y = spla.eigsh(Kst, k=count, M=M, sigma=-0.5, which="LM", v0=v0)
        order = np.argsort(mu)
        K._cache[key] = (mu[order], Y[:, order])
    return K._cache[key]


def discrete_harmonics(K: CellComplex, l: int):
    """Discrete degree-``l`` harmonics aligned with real ``Y_lm``, ``m = -l..l``.

    Returns:
        ``(basis, eigenvalues)`` with ``basis`` of shape ``(V, 2l+1)``,
        orthonormal in the lumped mass inner product.

    Raises:
        ModelError: if the cluster near ``l(l+1)`` does not have ``2l+1`` members.
    """
    lam = l * (l + 1)
    mu, Y = sphere_spectrum(K, min(K.n_cells(0) - 2, (l + 2) ** 2 + 2))
    window = np.abs(mu - lam) < (l + 1)
    idx = np.flatnonzero(window)
    if len(idx) != 2 * l + 1:
        raise ModelError(
            f"near-kernel for l={l} has dimension {len(idx)} (expected {2 * l + 1}); "
            f"refine the mesh (eigenvalues near {lam}: {mu[window]})")
    V = Y[:, idx]
    w = K.star_weights(0)
    X = K.vertex_coords
    T = np.stack([real_sph_harm(l, m, X) for m in range(-l, l + 1)], axis=1)
    C = V.T @ (w[:, None] * T)  # coordinates of the projections
    H = V @ C
    G = H.T @ (w[:, None] * H)
    ev, U = np.linalg.eigh(G)
    H = H @ (U @ np.diag(ev ** -0.5) @ U.T)
    return H, mu[idx]


def model_semilinear_sphere(K: CellComplex, l: int) -> Model:
    """``*(Delta psi + l(l+1) psi) = *(psi**2)`` on a triangulated sphere.

    The shift is the mean of the discrete degree-``l`` eigenvalue cluster,
    so the linearized kernel is exactly that cluster when it is degenerate.
    """
    if K.kind != "simplicial" or K.dimension != 2:
        raise ModelError("the sphere model needs a triangulated 2-sphere")
    if not 0 <= l <= 4:
        raise ModelError(f"l must be in 0..4, got {l}")
    H, mu = discrete_harmonics(K, l)
    shift = float(mu.mean())
    B1 = K.boundary(1).astype(float)
    W0, W1 = K.star_weights(0), K.star_weights(1)
    stiff = sp.csr_matrix(B1 @ sp.diags(W1) @ B1.T)
    L = sp.csr_matrix(shift * sp.diags(W0) - stiff)
    field_slot, eq_slot = Slot(0), Slot(2, True)
    e_lin = LinearOperator(L, field_slot, eq_slot, "*(Δ+λ)")
    edges = K.cells[1]

    def f(psi):
        return Cochain(K, 2, W0[:, None] * psi.values ** 2, True)

    def fj(psi):
        return sp.diags(2 * W0 * psi.values[:, 0]).tocsr()

    gens = []
    for j, m in enumerate(range(-l, l + 1)):
        Yv = H[:, j].copy()

        def current(psi, Yv=Yv):
            p = psi.values[:, 0]
            a, b = edges[:, 0], edges[:, 1]
            return Cochain(K, 1, W1 * (Yv[a] * p[b] - Yv[b] * p[a]), True)

        gens.append(CosymGen(
            f"Y{l},{m}", 0, 0,
            evaluator=lambda psi, Yv=Yv: Cochain(K, 2, W0 * Yv, True),
            source=lambda psi, zeta, Yv=Yv: Cochain(K, 2, Yv[:, None] * zeta.values, True),
            current=current,
            source_matrix=lambda psi, Yv=Yv: sp.diags(Yv).tocsr(),
        ))
    return Model(f"sphere-l{l}", K, None, field_slot, eq_slot, 0, e_lin, f, fj, [], None, gens, 2,
                 {"l": l, "shift": shift, "cluster": mu.tolist(), "harmonics": H})


# ---------------------------------------------------------------------------
# gauge theories on flat tori


def model_yang_mills(K: CellComplex, algebra: LieAlgebra) -> Model:
    """Quadratic Yang-Mills about the trivial connection on ``T^3`` or ``T^4``.

    ``e_lin = *delta d`` on g-valued 1-cochains; the equation is a dual
    ``(n-1)``-cochain and ``f = *delta(1/2 [a ^ a]) + [a ^ *da]``.
    """
    _require_riemannian_torus(K, {3, 4}, "Yang-Mills")
    n = K.dimension
    field_slot, eq_slot = Slot(1), Slot(n - 1, True)
    st1, st2 = calc.star_matrix(K, 1), calc.star_matrix(K, 2)
    D1 = calc.d_matrix(K, 1)
    e_lin = LinearOperator(st1 @ calc.codiff_matrix(K, 2) @ D1, field_slot, eq_slot, "*δd")
    z0 = LinearOperator(calc.d_matrix(K, n - 1, True), eq_slot, Slot(n, True), "d")
    gauge = LinearOperator(calc.codiff_matrix(K, 1), field_slot, Slot(0), "δ")
    g = algebra.dim
    S_delta2 = lift(st1 @ calc.codiff_matrix(K, 2), g)
    S_d = lift(st2 @ D1, g)

    def stard(a):
        return Cochain(K, n - 2, st2 @ (D1 @ a.values), True, algebra)

    def f(a):
        t1 = calc.bracket_wedge(a, a)
        t1 = Cochain(K, n - 1, st1 @ (calc.codiff_matrix(K, 2) @ (0.5 * t1.values)), True, algebra)
        t2 = calc.bracket_wedge(a, stard(a), dual=True)
        return t1 + t2

    def fj(a):
        s = Slot(1, False, g)
        Bl, _ = calc.product_matrix(K, a, True, s, "bracket")
        Br, _ = calc.product_matrix(K, a, False, s, "bracket")
        J1 = S_delta2 @ (0.5 * (Bl + Br))
        Cr, _ = calc.product_matrix(K, stard(a), False, s, "bracket", dual=True)
        Cl, _ = calc.product_matrix(K, a, True, Slot(n - 2, True, g), "bracket", dual=True)
        return sp.csr_matrix(J1 + Cr + Cl @ S_d)

    gens = []
    for lab, v in _lie_basis(algebra, K):
        def current(eps, mode):
            return lambda psi: calc._wedge(eps, stard(psi), mode, None)
        gens.append(_rigid_generator(K, algebra, f"ε={lab}", 1, v, Slot(n, True), eq_slot, current))
    return Model(f"yang-mills-T{n}", K, algebra, field_slot, eq_slot, 1, e_lin, f, fj, [z0], gauge, gens, 2,
                 {"algebra": algebra.name})


def model_chern_simons(K: CellComplex, algebra: LieAlgebra) -> Model:
    """Chern-Simons on ``T^3``: ``e(a) = da - [a ^ a]``, both sides primal 2-cochains."""
    _require_riemannian_torus(K, {3}, "Chern-Simons")
    field_slot, eq_slot = Slot(1), Slot(2)
    e_lin = LinearOperator(calc.d_matrix(K, 1), field_slot, eq_slot, "d")
    z0 = LinearOperator(calc.d_matrix(K, 2), eq_slot, Slot(3), "d")
    gauge = LinearOperator(calc.codiff_matrix(K, 1), field_slot, Slot(0), "δ")
    g = algebra.dim

    def f(a):
        return calc.bracket_wedge(a, a)

    def fj(a):
        s = Slot(1, False, g)
        Bl, _ = calc.product_matrix(K, a, True, s, "bracket")
        Br, _ = calc.product_matrix(K, a, False, s, "bracket")
        return sp.csr_matrix(Bl + Br)

    gens = []
    for lab, v in _lie_basis(algebra, K):
        def current(eps, mode):
            return lambda psi: calc._wedge(eps, psi, mode, None)
        gens.append(_rigid_generator(K, algebra, f"ε={lab}", 1, v, Slot(3), eq_slot, current))
    return Model("chern-simons", K, algebra, field_slot, eq_slot, 1, e_lin, f, fj, [z0], gauge, gens, 2,
                 {"algebra": algebra.name})


def model_freedman_townsend(K: CellComplex, algebra: LieAlgebra, max_m: int = 6) -> Model:
    """Freedman-Townsend on ``T^4`` with a g-valued 2-cochain field.

    ``e_lin = *delta d`` (dual 2-cochain equation), Noether tail ``d, d``,
    ``f = [*db ^ *db] - *delta(2 [*db ^ b])``.
    """
    _require_riemannian_torus(K, {4}, "Freedman-Townsend")
    if K.params["m"] > max_m:
        raise ModelError(f"Freedman-Townsend mesh too large: m={K.params['m']} > {max_m}")
    field_slot, eq_slot = Slot(2), Slot(2, True)
    st2, st3 = calc.star_matrix(K, 2), calc.star_matrix(K, 3)
    D2 = calc.d_matrix(K, 2)
    cod3 = calc.codiff_matrix(K, 3)
    e_lin = LinearOperator(st2 @ cod3 @ D2, field_slot, eq_slot, "*δd")
    z0 = LinearOperator(calc.d_matrix(K, 2, True), eq_slot, Slot(3, True), "d")
    z1 = LinearOperator(calc.d_matrix(K, 3, True), Slot(3, True), Slot(4, True), "d")
    gauge = LinearOperator(calc.codiff_matrix(K, 2), field_slot, Slot(1), "δ")
    g = algebra.dim
    S_d = lift(st3 @ D2, g)
    S_delta = lift(st2 @ cod3, g)

    def stard(b):
        return Cochain(K, 1, st3 @ (D2 @ b.values), True, algebra)

    def f(b):
        s = stard(b)
        t1 = calc.bracket_wedge(s, s)
        t2 = calc.bracket_wedge(s, b, dual=False)
        t2 = Cochain(K, 2, st2 @ (cod3 @ (2.0 * t2.values)), True, algebra)
        return t1 - t2

    def fj(b):
        s = stard(b)
        ds = Slot(1, True, g)
        Sl, _ = calc.product_matrix(K, s, True, ds, "bracket")
        Sr, _ = calc.product_matrix(K, s, False, ds, "bracket")
        J1 = (Sl + Sr) @ S_d
        Br, _ = calc.product_matrix(K, b, False, ds, "bracket", dual=False)
        Bl, _ = calc.product_matrix(K, s, True, Slot(2, False, g), "bracket", dual=False)
        J2 = 2.0 * S_delta @ (Br @ S_d + Bl)
        return sp.csr_matrix(J1 - J2)

    gens = []
    for lab, v in _lie_basis(algebra, K):
        def current(eps, mode):
            return lambda psi: -calc._wedge(eps, stard(psi), mode, None)
        gens.append(_rigid_generator(K, algebra, f"ε={lab}", 2, v, Slot(4, True), eq_slot, current))
    return Model("freedman-townsend", K, algebra, field_slot, eq_slot, 2, e_lin, f, fj, [z0, z1], gauge,
                 gens, 2, {"algebra": algebra.name})


# ---------------------------------------------------------------------------
# linearized solutions


def linearized_kernel(model: Model, seed: int = 0):
    """Certified kernel of ``[e_lin; gauge_fix]`` on the field slot.

    Returns:
        ``(basis, kernel)``: a list of field cochains orthonormal in the
        weighted Euclidean norm (scalar kernel tensored with the algebra
        basis) and the spectral certificate of the scalar problem.
    """
    if "kernel" in model._cache:
        return model._cache["kernel"]
    K = model.complex
    wf = calc.norm_weights(K, model.field_slot)
    A = model.e_lin.matrix
    S = A.T @ sp.diags(calc.norm_weights(K, model.eq_slot)) @ A
    if model.gauge_fix is not None:
        G = model.gauge_fix.matrix
        S = S + G.T @ sp.diags(calc.norm_weights(K, model.gauge_fix.codomain)) @ G
    Ssym = sp.diags(wf ** -0.5) @ S @ sp.diags(wf ** -0.5)
    ker = certified_kernel(sp.csr_matrix(0.5 * (Ssym + Ssym.T)), seed=seed)
    U = ker.basis / np.sqrt(wf)[:, None]
    basis = []
    for i in range(U.shape[1]):
        for a in range(model.g):
            v = np.zeros((U.shape[0], model.g))
            v[:, a] = U[:, i]
            basis.append(model.field(v))
    model._cache["kernel"] = (basis, ker)
    return basis, ker


def build_model(name: str, K: CellComplex, algebra: LieAlgebra | None = None, **kw) -> Model:
    """Construct a registered model by name."""
    if name == "cyclic-particle":
        return model_cyclic_particle(K)
    if name == "semilinear-sphere":
        return model_semilinear_sphere(K, kw.get("l", 1))
    if algebra is None:
        raise ModelError(f"model {name!r} needs a Lie algebra")
    if name == "yang-mills":
        return model_yang_mills(K, algebra)
    if name == "chern-simons":
        return model_chern_simons(K, algebra)
    if name == "freedman-townsend":
        return model_freedman_townsend(K, algebra)
    raise ModelError(f"unknown model {name!r}")


MODEL_NAMES = ("cyclic-particle", "semilinear-sphere", "yang-mills", "chern-simons", "freedman-townsend")
