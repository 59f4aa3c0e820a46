import dataclasses

import numpy as np
import pytest

from linobs.calculus import Cochain, LinearOperator, SlotError
from linobs.noether import (CompositionError, adjointness_residual, assemble, null_source,
                            rigid_cosymmetries, verify_noether_correspondence)


def test_compositions_vanish(all_models):
    for M in all_models:
        direct, adjoint = assemble(M)
        assert max(direct.residuals.values(), default=0.0) <= 1e-12
        assert max(adjoint.residuals.values(), default=0.0) <= 1e-12
        assert len(direct.operators) == M.stage + 1


def test_ft_two_step_tail(ft):
    direct, _ = assemble(ft)
    assert len(direct.residuals) == 2


def test_broken_complex_is_reported(cs):
    z = cs.noether_ops[0]
    bad = LinearOperator(z.matrix + 1e-3 * np.abs(z.matrix), z.domain, z.codomain, "d'")
    broken = dataclasses.replace(cs, noether_ops=[bad], _cache={})
    with pytest.raises(CompositionError, match="d'"):
        assemble(broken)


def test_metric_adjointness(all_models, rng):
    for M in all_models:
        K = M.complex
        for op in M.complex_ops():
            assert adjointness_residual(K, op, rng) <= 1e-12, (M.name, op.label)


@pytest.mark.parametrize("fixture,stage,dim", [
    ("ode", 0, 1), ("sphere2", 0, 5), ("cs", 1, 3), ("ym", 1, 3), ("ft", 2, 3)])
def test_rigid_cosymmetry_counts(request, fixture, stage, dim):
    M = request.getfixturevalue(fixture)
    cb = rigid_cosymmetries(M, stage)
    assert cb.dim == dim
    assert cb.gap_ratio >= 1e3
    assert min(cb.triviality) > 0.5
    assert len(cb.generators) == len([g for g in M.generators if g.stage == stage])


def test_stage_out_of_range(ode):
    with pytest.raises(ValueError):
        rigid_cosymmetries(ode, 1)


@pytest.mark.parametrize("fixture", ["ode", "sphere1", "sphere2", "cs", "ym", "ft"])
def test_noether_correspondence(request, fixture, hd_of):
    M = request.getfixturevalue(fixture)
    rep = verify_noether_correspondence(M, hd_of(M))
    assert rep["match"], rep


def test_null_source_slot_check(cs):
    gen = cs.generators[0]
    with pytest.raises(SlotError):
        null_source(gen, cs.zero_field(), Cochain.zeros(cs.complex, 1, algebra=cs.algebra), cs)
    z = Cochain.zeros(cs.complex, 2, algebra=cs.algebra)
    assert not np.any(null_source(gen, cs.zero_field(), z, cs).values)
