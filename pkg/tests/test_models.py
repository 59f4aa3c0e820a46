import numpy as np
import pytest

from linobs import calculus as calc
from linobs.continuation import solve_linearized
from linobs.mesh import build_icosphere, build_torus
from linobs.models import (ModelError, build_model, discrete_harmonics, harmonic_triple_integral,
                           linearized_kernel, model_chern_simons, model_freedman_townsend,
                           model_semilinear_sphere, model_yang_mills, real_sph_harm)
from linobs.noether import current_residual


def test_model_checks(all_models):
    for M in all_models:
        chk = M.check()
        assert chk["background_residual"] == 0.0
        assert max(chk["compositions"].values(), default=0.0) <= 1e-12, M.name
        assert max(chk["taylor_remainder"]) <= 1e-9, M.name


def test_jacobian_matches_finite_difference(all_models, rng):
    for M in all_models:
        phi = M.random_field(rng) * 0.3
        v = M.random_field(rng)
        J = M.jacobian(phi)
        eps = 1e-6
        fd = (M.e(phi + v * eps).flat - M.e(phi - v * eps).flat) / (2 * eps)
        assert np.linalg.norm(J @ v.flat - fd) <= 1e-7 * max(np.linalg.norm(fd), 1.0), M.name


def test_current_identities(all_models, rng):
    for M in all_models:
        for gen in M.generators:
            assert current_residual(M, gen, M.random_field(rng)) <= 1e-10, (M.name, gen.label)


def test_linearized_dimensions(ode, sphere1, sphere2, cs, ym, ft):
    assert len(solve_linearized(ode)) == 1
    assert len(solve_linearized(sphere1)) == 3
    assert len(solve_linearized(sphere2)) == 5
    assert len(solve_linearized(cs)) == 9
    assert len(solve_linearized(ym)) == 9
    assert len(solve_linearized(ft)) == 18


def test_linearized_basis_is_on_shell(all_models):
    for M in all_models:
        for b in solve_linearized(M):
            assert calc.norm(M.e_lin(b)) <= 1e-8 * calc.norm(b) * M.e_lin_norm()
        _, ker = linearized_kernel(M)
        assert ker.gap_ratio >= 1e3


@pytest.mark.parametrize("l", [1, 2])
def test_sphere_cluster_near_l_l_plus_1(ico3, l):
    _, mu = discrete_harmonics(ico3, l)
    assert len(mu) == 2 * l + 1
    assert np.all(np.abs(mu - l * (l + 1)) <= 0.02 * l * (l + 1))


def test_discrete_harmonics_track_continuum(ico3):
    H, _ = discrete_harmonics(ico3, 2)
    Y = real_sph_harm(2, 0, ico3.vertex_coords)
    w = ico3.star_weights(0)
    overlap = (H[:, 2] * w) @ Y / np.sqrt((Y * w) @ Y)
    assert overlap > 0.999


def test_sphere_needs_fine_mesh_for_high_l():
    with pytest.raises(ModelError):
        model_semilinear_sphere(build_icosphere(1), 3)


def test_model_geometry_checks(algebra):
    with pytest.raises(ModelError):
        model_semilinear_sphere(build_torus(2, 4), 1)
    with pytest.raises(ModelError):
        model_chern_simons(build_torus(4, 3), algebra)
    with pytest.raises(ModelError):
        model_yang_mills(build_icosphere(1), algebra)
    with pytest.raises(ModelError):
        model_freedman_townsend(build_torus(4, 7), algebra)
    with pytest.raises(ModelError):
        model_chern_simons(build_torus(3, 4, signature="lorentzian"), algebra)


def test_build_model_registry(t3, algebra):
    assert build_model("chern-simons", t3, algebra).name == "chern-simons"
    with pytest.raises(ModelError):
        build_model("chern-simons", t3)
    with pytest.raises(ModelError):
        build_model("einstein", t3, algebra)


def test_field_slots(ode, cs, ym, ft):
    assert (ode.field_slot.degree, ode.eq_slot.degree, ode.eq_slot.dual) == (0, 1, True)
    assert (cs.field_slot.degree, cs.eq_slot.degree, cs.eq_slot.dual) == (1, 2, False)
    assert (ym.eq_slot.degree, ym.eq_slot.dual) == (2, True)
    assert (ft.field_slot.degree, ft.eq_slot.degree, ft.stage) == (2, 2, 2)


def test_triple_integral_quadrature():
    # Y00 Ylm Ylm integrates to 1/sqrt(4 pi)
    assert harmonic_triple_integral((0, 0), (2, 1), (2, 1)) == pytest.approx(1 / np.sqrt(4 * np.pi), rel=1e-13)
    assert abs(harmonic_triple_integral((1, 0), (1, 1), (1, -1))) < 1e-14
