import numpy as np
import pytest

from linobs import calculus as calc
from linobs.calculus import Cochain
from linobs.mesh import build_circle, build_icosphere, build_torus
from linobs.topology import (ObstructedError, compute_homology, hodge_decomposition, periods,
                             solve_potential)


@pytest.mark.parametrize("K,betti", [
    (build_circle(16), (1, 1)),
    (build_icosphere(2), (1, 0, 1)),
    (build_torus(2, 4), (1, 2, 1)),
    (build_torus(3, 4), (1, 3, 3, 1)),
    (build_torus(4, 3), (1, 4, 6, 4, 1)),
], ids=["circle", "ico2", "T2", "T3", "T4"])
def test_betti_numbers(K, betti):
    hd = compute_homology(K)
    assert hd.betti == betti
    assert max(hd.harmonic_residuals.values()) <= 1e-10
    for p in range(K.dimension + 1):
        if hd.betti[p]:
            P = hd.period_matrix[p]
            assert P[0, 0] > 0
            assert np.allclose(P, P[0, 0] * np.eye(hd.betti[p]), atol=1e-8 * P[0, 0])


def test_constant_form_periods(t3):
    hd = compute_homology(t3)
    c = calc.constant_form(t3, 2, (0, 1))
    pr = periods(c, hd)
    assert pr.is_class
    assert np.allclose(pr.values, [(2 * np.pi) ** 2, 0, 0], atol=1e-12)
    assert pr.labels == ("xy", "xz", "yz")


def test_dual_periods(t3):
    hd = compute_homology(t3)
    c = calc.constant_form(t3, 1, (2,), dual=True)
    pr = periods(c, hd)
    assert len(pr.values) == 3
    assert np.abs(pr.values).max() == pytest.approx(2 * np.pi, rel=1e-12)


def test_exact_cochain_potential(t3, rng):
    hd = compute_homology(t3)
    f = Cochain(t3, 0, rng.standard_normal(t3.n_cells(0)))
    c = calc.exterior_derivative(f)
    beta = solve_potential(c, hd)
    assert np.allclose(calc.exterior_derivative(beta).values, c.values, atol=1e-9)


def test_obstructed_potential(t3):
    hd = compute_homology(t3)
    c = calc.constant_form(t3, 1, (0,))
    with pytest.raises(ObstructedError) as info:
        solve_potential(c, hd)
    assert np.allclose(info.value.periods, [2 * np.pi, 0, 0])


def test_non_closed_cochain_flagged(t3, rng):
    hd = compute_homology(t3)
    c = Cochain(t3, 1, rng.standard_normal(t3.n_cells(1)))
    assert not periods(c, hd).is_class
    with pytest.raises(ObstructedError):
        solve_potential(c, hd)


def test_hodge_decomposition(t3, rng):
    hd = compute_homology(t3)
    c = Cochain(t3, 1, rng.standard_normal(t3.n_cells(1)))
    ex, co, h = hodge_decomposition(c, hd)
    assert np.allclose((ex + co + h).values, c.values)
    assert abs(calc.inner_product(ex, co)) < 1e-8 * calc.norm(c) ** 2
    assert abs(calc.inner_product(ex, h)) < 1e-8 * calc.norm(c) ** 2
    assert calc.norm(calc.exterior_derivative(h)) < 1e-8 * calc.norm(c)


def test_lorentzian_rejected():
    with pytest.raises(ValueError):
        compute_homology(build_torus(2, 4, signature="lorentzian"))


def test_period_csv(t3):
    text = compute_homology(t3).to_csv()
    assert text.splitlines()[0].startswith("degree,cycle")
    assert len(text.splitlines()) == 1 + 1 + 3 + 3 + 1


def test_lie_valued_periods_rejected(t3, algebra):
    hd = compute_homology(t3)
    with pytest.raises(calc.SlotError):
        periods(Cochain.zeros(t3, 1, algebra=algebra), hd)
