import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from linobs._spectral import (GapAmbiguityError, certified_kernel, dense_nullspace, fix_signs,
                              numerical_rank)


def _diag_with_kernel(N, k, seed=0):
    rng = np.random.default_rng(seed)
    d = np.concatenate([np.zeros(k), rng.uniform(1.0, 2.0, N - k)])
    return sp.diags(d).tocsr()


@settings(max_examples=10, deadline=None)
@given(k=st.integers(0, 6), seed=st.integers(0, 1000))
def test_dense_kernel_dimension(k, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    d = np.concatenate([np.zeros(k), rng.uniform(1, 3, 40 - k)])
    S = Q @ np.diag(d) @ Q.T
    ker = certified_kernel(S)
    assert ker.dim == k
    if k:
        assert np.allclose(ker.basis.T @ ker.basis, np.eye(k), atol=1e-10)
        assert np.linalg.norm(S @ ker.basis) < 1e-10


@pytest.mark.parametrize("direct", [True, False])
def test_sparse_kernel_paths(direct):
    S = _diag_with_kernel(7000, 3)
    ker = certified_kernel(S, direct=direct)
    assert ker.dim == 3
    assert ker.gap_ratio >= 1e3
    assert np.linalg.norm(S @ ker.basis) < 1e-8


def test_gap_ambiguity():
    S = np.diag(np.geomspace(1e-14, 1.0, 30))
    with pytest.raises(GapAmbiguityError) as info:
        certified_kernel(S)
    assert info.value.eigenvalues is not None


def test_empty_matrix():
    assert certified_kernel(np.zeros((0, 0))).dim == 0


def test_fix_signs_is_deterministic():
    V = np.array([[0.1, -0.9], [-0.8, 0.2]])
    F = fix_signs(V)
    assert F[1, 0] > 0 and F[0, 1] > 0
    assert np.allclose(fix_signs(-V), F)


def test_rank_and_nullspace():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    assert numerical_rank(A) == 1
    N = dense_nullspace(A)
    assert N.shape == (3, 2)
    assert np.allclose(A @ N, 0)
