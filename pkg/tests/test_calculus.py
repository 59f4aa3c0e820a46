import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linobs import calculus as calc
from linobs.calculus import Cochain, SlotError, Slot, su2
from linobs.mesh import build_icosphere, build_torus

COMPLEXES = {
    "T2": build_torus(2, 4),
    "T3": build_torus(3, 3),
    "T4": build_torus(4, 3),
    "T2-lor": build_torus(2, 4, signature="lorentzian"),
    "T3-lor": build_torus(3, 3, signature="lorentzian", timelike_axis=1),
    "ico2": build_icosphere(2),
}


def rand(K, p, dual, rng, algebra=None):
    g = 1 if algebra is None else algebra.dim
    return Cochain(K, p, rng.standard_normal((Slot(p, dual).rows(K), g)), dual, algebra)


def test_su2_structure():
    g = su2()
    chk = g.check()
    assert chk["ok"]
    assert np.allclose(g.killing, -2 * np.eye(3))
    assert np.allclose(g.bracket([1, 0, 0], [0, 1, 0]), [0, 0, 1])


def test_unknown_algebra():
    with pytest.raises(ValueError):
        calc.get_algebra("e8")


@pytest.mark.parametrize("name", COMPLEXES)
@pytest.mark.parametrize("dual", [False, True])
def test_d_squared_exact(name, dual):
    K = COMPLEXES[name]
    for p in range(K.dimension - 1):
        P = calc.d_matrix(K, p + 1, dual) @ calc.d_matrix(K, p, dual)
        assert P.count_nonzero() == 0


@pytest.mark.parametrize("name", COMPLEXES)
@pytest.mark.parametrize("dual", [False, True])
def test_double_star_sign(name, dual, rng):
    K = COMPLEXES[name]
    n = K.dimension
    for p in range(n + 1):
        c = rand(K, p, dual, rng)
        ss = calc.hodge_star(calc.hodge_star(c))
        eps = K.star_square_sign(p)
        assert np.allclose(ss.values, eps * c.values, rtol=1e-13, atol=0)


def test_star_square_sign_formula():
    assert build_torus(2, 3).star_square_sign(1) == -1
    assert build_torus(3, 3).star_square_sign(1) == 1
    assert build_torus(4, 3).star_square_sign(2) == 1
    assert build_torus(4, 3, signature="lorentzian").star_square_sign(2) == -1


@pytest.mark.parametrize("name", COMPLEXES)
@pytest.mark.parametrize("dual", [False, True])
def test_codifferential_adjoint(name, dual, rng):
    K = COMPLEXES[name]
    for p in range(K.dimension):
        a, b = rand(K, p, dual, rng), rand(K, p + 1, dual, rng)
        lhs = calc.inner_product(calc.exterior_derivative(a), b)
        rhs = calc.inner_product(a, calc.codifferential(b))
        scale = calc.norm(a) * calc.norm(b) * calc.d_operator(K, p, dual).norm()
        assert abs(lhs - rhs) <= 1e-12 * scale


@pytest.mark.parametrize("name", ["T3", "ico2", "T3-lor"])
def test_codifferential_squared(name, rng):
    K = COMPLEXES[name]
    for p in range(2, K.dimension + 1):
        c = rand(K, p, False, rng)
        r = calc.codifferential(calc.codifferential(c))
        assert np.abs(r.values).max() <= 1e-12 * np.abs(c.values).max() * 1e2


def test_lie_valued_inner_product_uses_killing(rng):
    K = COMPLEXES["T2"]
    g = su2()
    a = rand(K, 1, False, rng, g)
    assert calc.inner_product(a, a) < 0
    assert calc.norm(a) > 0


def test_cochain_validation():
    K = COMPLEXES["T2"]
    with pytest.raises(SlotError):
        Cochain(K, 1, np.zeros(3))
    with pytest.raises(SlotError):
        Cochain(K, 3, np.zeros(1))
    with pytest.raises(ValueError):
        Cochain(K, 0, np.full(K.n_cells(0), np.nan))
    a = Cochain.zeros(K, 1)
    with pytest.raises(SlotError):
        _ = a + Cochain.zeros(K, 1, dual=True)


def test_operator_slot_check():
    K = COMPLEXES["T2"]
    d1 = calc.d_operator(K, 1)
    with pytest.raises(SlotError):
        d1(Cochain.zeros(K, 0))
    with pytest.raises(SlotError):
        _ = calc.d_operator(K, 0) @ d1


def test_constant_form_wedge_exact():
    K = build_torus(3, 4)
    dx = calc.constant_form(K, 1, (0,))
    dy = calc.constant_form(K, 1, (1,))
    dxy = calc.constant_form(K, 2, (0, 1))
    assert np.allclose(calc.wedge(dx, dy).values, dxy.values, atol=1e-15)
    assert np.allclose(calc.wedge(dy, dx).values, -dxy.values, atol=1e-15)
    assert np.allclose(calc.wedge(dx, dx).values, 0)


@settings(max_examples=15, deadline=None)
@given(p=st.integers(1, 2), q=st.integers(1, 2), seed=st.integers(0, 2 ** 16))
def test_graded_commutativity_constant_forms(p, q, seed):
    K = build_torus(4, 3)
    rng = np.random.default_rng(seed)
    comps_p = calc._components(4, p)
    comps_q = calc._components(4, q)
    a = sum((calc.constant_form(K, p, c, rng.standard_normal()) for c in comps_p[1:]),
            calc.constant_form(K, p, comps_p[0], rng.standard_normal()))
    b = sum((calc.constant_form(K, q, c, rng.standard_normal()) for c in comps_q[1:]),
            calc.constant_form(K, q, comps_q[0], rng.standard_normal()))
    ab, ba = calc.wedge(a, b), calc.wedge(b, a)
    assert np.allclose(ab.values, (-1) ** (p * q) * ba.values, atol=1e-12)


def test_zero_form_product_is_pointwise(rng):
    K = COMPLEXES["ico2"]
    c = rand(K, 0, False, rng)
    assert np.allclose(calc.wedge(c, c).values, c.values ** 2)


def test_dual_wedge_of_constants():
    K = build_torus(3, 4)
    dx = calc.constant_form(K, 1, (0,), dual=True)
    dy = calc.constant_form(K, 1, (1,), dual=True)
    dxy = calc.constant_form(K, 2, (0, 1), dual=True)
    assert np.allclose(calc.wedge(dx, dy).values, dxy.values, atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 16), left=st.booleans(), dual=st.booleans())
def test_product_matrix_matches_wedge(seed, left, dual):
    K = build_torus(3, 3)
    g = su2()
    rng = np.random.default_rng(seed)
    a = rand(K, 1, dual, rng, g)
    b = rand(K, 1, False, rng, g)
    out_dual = dual if dual else None
    fixed, var = (a, b) if left else (b, a)
    M, _ = calc.product_matrix(K, fixed, left, var.slot, "bracket", out_dual, g)
    want = calc.bracket_wedge(a, b, dual=out_dual)
    assert np.allclose(M @ var.flat, want.flat, atol=1e-12)


def test_bracket_wedge_of_one_forms_is_symmetric(rng):
    K = build_torus(3, 3)
    g = su2()
    a, b = rand(K, 1, False, rng, g), rand(K, 1, False, rng, g)
    assert np.allclose(calc.bracket_wedge(a, b).values, calc.bracket_wedge(b, a).values, atol=1e-13)


def test_killing_pair_of_constants():
    K = build_torus(3, 4)
    g = su2()
    a = calc.constant_form(K, 1, (0,), [0, 0, 1], algebra=g)
    b = calc.constant_form(K, 1, (1,), [0, 0, 1], algebra=g)
    v = calc.killing_pair(a, b)
    assert v.algebra is None
    assert np.allclose(v.values, -2 * calc.constant_form(K, 2, (0, 1)).values)


def test_wedge_degree_overflow():
    K = COMPLEXES["T2"]
    a = Cochain.zeros(K, 2)
    with pytest.raises(SlotError):
        calc.wedge(a, Cochain.zeros(K, 1))


def test_wedge_of_two_lie_valued_needs_mode():
    K = COMPLEXES["T2"]
    g = su2()
    with pytest.raises(SlotError):
        calc.wedge(Cochain.zeros(K, 1, algebra=g), Cochain.zeros(K, 1, algebra=g))


def test_constant_form_requires_torus():
    with pytest.raises(SlotError):
        calc.constant_form(COMPLEXES["ico2"], 1, (0,))
