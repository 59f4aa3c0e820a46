"""Independent oracles for the reference numbers used elsewhere."""

import numpy as np
import pytest
import sympy
from sympy.physics.wigner import gaunt, wigner_3j

from linobs.calculus import su2
from linobs.mesh import build_circle
from linobs.models import harmonic_triple_integral


def y20_cubed_closed_form():
    # Y20 = sqrt(5/(4 pi)) P2(cos t); int P2^3 dx over [-1, 1] = 4/35
    return (5 / (4 * np.pi)) ** 1.5 * 2 * np.pi * 4 / 35


def test_y20_triple_integral_wigner():
    g = gaunt(2, 2, 2, 0, 0, 0)
    w = sympy.sqrt(125 / (4 * sympy.pi)) * wigner_3j(2, 2, 2, 0, 0, 0) ** 2
    assert float(g) == pytest.approx(float(w), rel=1e-14)
    assert float(g) == pytest.approx(y20_cubed_closed_form(), rel=1e-14)
    assert float(g) == pytest.approx(0.18022375, abs=1e-8)


@pytest.mark.parametrize("lms", [((2, 0),) * 3, ((2, 2), (2, -2), (2, 0)), ((2, 1), (2, 1), (2, 0)), ((1, 0),) * 3])
def test_quadrature_matches_sympy(lms):
    # real harmonics as combinations of complex ones, evaluated symbolically
    x, y, z = sympy.symbols("x y z", real=True)
    th, ph = sympy.symbols("theta phi", real=True)

    def real_y(l, m):
        if m == 0:
            return sympy.Ynm(l, 0, th, ph).expand(func=True)
        c = sympy.Ynm(l, abs(m), th, ph).expand(func=True)
        s = sympy.sqrt(2) * (-1) ** m
        return s * (sympy.re(c) if m > 0 else sympy.im(c))

    f = sympy.simplify(real_y(*lms[0]) * real_y(*lms[1]) * real_y(*lms[2]) * sympy.sin(th))
    exact = float(sympy.integrate(sympy.integrate(f, (ph, 0, 2 * sympy.pi)), (th, 0, sympy.pi)))
    assert harmonic_triple_integral(*lms) == pytest.approx(exact, abs=1e-13)


def test_ode_charge_oracle():
    # momentum charge of a constant psi0 is the uniform-mesh sum of psi0^2 over the dual cells
    K = build_circle(64)
    assert float(np.sum(K.dual_volumes[0])) == pytest.approx(2 * np.pi, rel=1e-15)


def test_chern_simons_closed_form():
    g = su2()
    e1, e2, e3 = np.eye(3)
    val = 2 * g.pair(e3, g.bracket(e1, e2)) * (2 * np.pi) ** 2
    assert val == pytest.approx(-4 * (2 * np.pi) ** 2)
