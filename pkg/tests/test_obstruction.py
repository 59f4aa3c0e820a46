import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linobs import calculus as calc
from linobs.calculus import Cochain
from linobs.continuation import solve_linearized
from linobs.mesh import build_torus
from linobs.models import model_chern_simons
from linobs.obstruction import (deformation_current, gauge_change, is_conservative, obstruction_charges,
                                random_on_shell, well_definedness)
from linobs.topology import compute_homology

GAUGE_BAND = 1e-12


@settings(max_examples=20, deadline=None)
@given(psi0=st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3))
def test_ode_momentum_charge_is_quadratic(ode, hd_of, psi0):
    psi = ode.field(psi0 * np.ones(ode.complex.n_cells(0)))
    rep = obstruction_charges(ode, psi, hd_of(ode))
    assert rep.entry("momentum").periods[0] == pytest.approx(2 * np.pi * psi0 ** 2, rel=1e-12)
    assert rep.entry("energy").max_abs == 0.0
    assert rep.on_shell


def test_zero_field_has_zero_charges(all_models, hd_of):
    for M in all_models:
        rep = obstruction_charges(M, M.zero_field(), hd_of(M))
        assert rep.max_charge() == 0.0
        assert all(e.verdict == "zero" for e in rep.entries)


def test_off_shell_field_is_flagged(ode, hd_of, rng):
    rep = obstruction_charges(ode, ode.random_field(rng), hd_of(ode))
    assert not rep.on_shell


def test_wrong_field_slot_rejected(ode, hd_of):
    with pytest.raises(calc.SlotError):
        obstruction_charges(ode, Cochain.zeros(ode.complex, 1), hd_of(ode))


def test_ode_conservativity(ode, hd_of):
    hd = hd_of(ode)
    mom, energy = ode.generators
    v = is_conservative(ode, energy, 10, hd)
    assert v["verdict"] == "conservative"
    assert v["witness"] == "no witness found at 10 samples"
    assert v["max_period"] <= 1e-8
    v = is_conservative(ode, mom, 3, hd)
    assert v["verdict"] == "not conservative"
    assert v["witness"] == "nonzero witness found"
    with pytest.raises(ValueError):
        is_conservative(ode, mom, 0, hd)


def test_chern_simons_constant_charge():
    g = calc.su2()
    K = build_torus(3, 8)
    M = model_chern_simons(K, g)
    hd = compute_homology(K)
    a = calc.constant_form(K, 1, (0,), [1, 0, 0], algebra=g)
    b = calc.constant_form(K, 1, (1,), [0, 1, 0], algebra=g)
    rep = obstruction_charges(M, M.field((a + b).values), hd)
    # 2 <e3, [e1, e2]> (2 pi)^2 with <e3, e3> = -2
    assert rep.entry("ε=e3").periods == pytest.approx([-4 * (2 * np.pi) ** 2, 0, 0], abs=1e-9)
    assert rep.entry("ε=e1").max_abs == 0.0
    assert rep.entry("ε=e3").cycles == ["xy", "xz", "yz"]


def test_chern_simons_abelian_restriction_is_conservative(cs, hd_of):
    basis = [b for b in solve_linearized(cs) if not np.any(b.values[:, 1:])]

    def sampler(rng):
        return cs.field(sum(c * b.values for c, b in zip(rng.standard_normal(len(basis)), basis)))

    for gen in cs.generators:
        assert is_conservative(cs, gen, 4, hd_of(cs), sampler=sampler)["verdict"] == "conservative"


def test_homogeneity_all_models(all_models, hd_of, rng):
    for M in all_models:
        psi = random_on_shell(M, rng)
        rep = obstruction_charges(M, psi, hd_of(M))
        for e in rep.entries:
            assert e.order == e.degree_l + 2
            assert e.homogeneity_error <= 1e-8, (M.name, e.label)


def test_current_is_closed_on_shell(all_models, hd_of, rng):
    for M in all_models:
        psi = random_on_shell(M, rng)
        rep = obstruction_charges(M, psi, hd_of(M), homogeneity=False)
        assert max(e.closedness for e in rep.entries) <= 1e-8, M.name


def test_well_definedness(all_models, hd_of, rng):
    for M in all_models:
        psi = random_on_shell(M, rng)
        for gen in M.generators:
            r = well_definedness(M, gen, psi, hd_of(M), seed=3)
            assert r["relative_change"] < 1e-8, (M.name, gen.label)
            assert r["current_identity"] < 1e-10


def test_trivial_deformation_has_no_charge(ode, hd_of, rng):
    K = ode.complex

    def trivial(p):
        return ode.e_lin(Cochain(K, 0, p.values ** 2))

    for _ in range(5):
        psi = ode.random_field(rng)
        rep = obstruction_charges(ode, psi, hd_of(ode), deformation=trivial)
        assert rep.entry("momentum").max_abs <= 1e-8 * rep.entry("momentum").scale


@pytest.mark.parametrize("fixture", ["cs", "ym"])
def test_gauge_invariance(request, fixture, hd_of, rng):
    M = request.getfixturevalue(fixture)
    K = M.complex
    X = K.vertex_coords
    smooth = np.stack([np.sin(X[:, 0]) * np.cos(X[:, 2]), np.cos(X[:, 1]), np.sin(X[:, 0] + X[:, 1])], axis=1)
    for lam_vals in (smooth, rng.standard_normal((K.n_cells(0), 3))):
        lam = Cochain(K, 0, 0.1 * lam_vals, algebra=M.algebra)
        psi = random_on_shell(M, rng) * 0.1
        assert gauge_change(M, psi, lam, hd_of(M)) <= GAUGE_BAND


def test_gauge_change_needs_one_forms(ode, hd_of):
    with pytest.raises(ValueError):
        gauge_change(ode, ode.zero_field(), Cochain.zeros(ode.complex, 0), hd_of(ode))


def test_deformation_current_slot(sphere2):
    psi = solve_linearized(sphere2)[0]
    j = deformation_current(sphere2, sphere2.generators[0], psi)
    assert (j.degree, j.dual) == (2, True)


def test_report_serializes(cs, hd_of, rng):
    import json
    rep = obstruction_charges(cs, random_on_shell(cs, rng), hd_of(cs))
    data = json.loads(json.dumps(rep.to_json()))
    assert len(data["entries"]) == 3
