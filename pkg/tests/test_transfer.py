import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from conftest import make_ltiqo
from ltiqo.errors import ResolventSingularError, UnstableSystemError
from ltiqo.model import LtiqoSystem
from ltiqo.transfer import (SamplingConfig, TransferCache, eval_G1, eval_G2, eval_K, hinf_estimate,
                            sigma_profile, state_response)

FAST = SamplingConfig(points_per_decade=60, grid_quad=(60, 30))


def test_G1_scalar():
    sys = LtiqoSystem([[-1.0]], [[1.0]], [[1.0]])
    assert eval_G1(sys, 0.0)[0, 0] == pytest.approx(1.0)


def test_G1_is_D_without_C(rng):
    sys = LtiqoSystem(-np.eye(3), rng.standard_normal((3, 2)), D=rng.standard_normal((2, 2)))
    for s in (0.0, 1j, 3 + 2j):
        assert np.array_equal(eval_G1(sys, s), sys.D.astype(complex))


def test_G1_matches_eigendecomposition(rng):
    sys = make_ltiqo(rng, 4, 2, 2)
    lam, V = sla.eig(sys.A)
    s = 2j
    ref = sys.C @ V @ np.diag(1.0 / (s - lam)) @ np.linalg.solve(V, sys.B) + sys.D
    assert np.linalg.norm(eval_G1(sys, s) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_singular_shift():
    sys = LtiqoSystem([[-1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ResolventSingularError):
        eval_G1(sys, -1.0)


def test_K_equals_P_without_M(rng):
    P = np.array([[1.0, 2.0], [2.0, 5.0]])
    sys = LtiqoSystem(-np.eye(3), rng.standard_normal((3, 2)), P=[P])
    assert np.array_equal(eval_K(sys, 0, 0.5j, -2j), P.astype(complex))


def test_K_scalar_closed_form():
    sys = LtiqoSystem([[-1.0]], [[1.0]], M=[[[1.0]]])
    assert eval_K(sys, 0, 0.0, 0.0)[0, 0] == pytest.approx(1.0)
    s1 = s2 = 1j
    assert eval_K(sys, 0, s1, s2)[0, 0] == pytest.approx(1.0 / ((s2 + 1) * (s1 + 1)), abs=1e-15)


def test_K_index_range(rng):
    with pytest.raises(IndexError):
        eval_K(make_ltiqo(rng, 2, 1, 1), 1, 0j, 0j)


def test_G2_rows_are_vec_K(rng):
    sys = make_ltiqo(rng, 5, 2, 2, quad=(0, 1))
    s1, s2 = 0.4j, -1.3j
    G2 = eval_G2(sys, s1, s2)
    assert G2.shape == (2, 4)
    for j in range(2):
        assert np.array_equal(G2[j], eval_K(sys, j, s1, s2).reshape(-1, order="F"))


def test_G2_zero_system(rng):
    sys = LtiqoSystem(-np.eye(2), rng.standard_normal((2, 2)), C=np.ones((1, 2)))
    assert not np.any(eval_G2(sys, 1j, 2j))


def test_single_quadratic_output_norm_identity(rng):
    for _ in range(20):
        sys = make_ltiqo(rng, 4, 2, 1)
        s1, s2 = 1j * rng.standard_normal(2)
        sig = np.linalg.svd(eval_G2(sys, s1, s2), compute_uv=False)[0]
        fro = np.linalg.norm(eval_K(sys, 0, s1, s2))
        assert abs(sig - fro) <= 1e-12 * fro


def test_sigma_profile_basic(rng):
    assert np.allclose(sigma_profile(np.eye(2)).values, [1.0, 1.0])
    prof = sigma_profile(np.diag([3.0, 1.0]))
    assert np.allclose(prof.values, [3.0, 1.0])
    assert np.allclose(np.abs(prof.left), np.eye(2)) and np.allclose(np.abs(prof.right), np.eye(2))
    G = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    prof = sigma_profile(G)
    rebuilt = prof.left[:, :3] @ np.diag(prof.values) @ prof.right.conj().T
    assert np.max(np.abs(rebuilt - G)) < 1e-12
    assert np.all(np.diff(prof.values) <= 0)


def test_conjugate_symmetries(rng):
    for _ in range(20):
        sys = make_ltiqo(rng, 4, 2, 2)
        w, w1, w2 = rng.standard_normal(3) * 3
        assert np.max(np.abs(eval_G1(sys, -1j * w) - eval_G1(sys, 1j * w).conj())) < 1e-13
        G = eval_G2(sys, 1j * w1, 1j * w2)
        assert np.max(np.abs(eval_G2(sys, -1j * w1, -1j * w2) - G.conj())) < 1e-13
        assert np.max(np.abs(eval_G2(sys, -1j * w1, 1j * w2) - eval_G2(sys, 1j * w1, -1j * w2).conj())) < 1e-13


def test_cache_matches_direct(rng):
    sys = make_ltiqo(rng, 4, 2, 1)
    cache = TransferCache(sys)
    w = np.array([0.0, 0.5, 2.0, 0.5])
    G = cache.G1(w)
    for k, wk in enumerate(w):
        assert np.allclose(G[k], eval_G1(sys, 1j * wk), rtol=1e-13, atol=1e-15)
    assert len(cache) == 3
    K = cache.K([[0.5, 2.0]], [0])
    assert np.allclose(K[0, 0], eval_K(sys, 0, 0.5j, 2j), rtol=1e-13, atol=1e-15)


def test_state_response_batched(rng):
    sys = make_ltiqo(rng, 3, 2, 1)
    X = state_response(sys.A, sys.B, [0.0, 1.5])
    assert np.allclose(X[1], np.linalg.solve(1.5j * np.eye(3) - sys.A, sys.B))


def test_hinf_zero_system():
    est = hinf_estimate(LtiqoSystem(-np.eye(2), np.ones((2, 1))), FAST)
    assert est.total == 0.0


def test_hinf_scalar_linear():
    est = hinf_estimate(LtiqoSystem([[-1.0]], [[1.0]], [[1.0]]), FAST)
    assert est.linear_part == pytest.approx(1.0, abs=1e-6)
    assert est.argmax_lin == pytest.approx(0.0, abs=1e-3)
    assert est.quadratic_part == 0.0


def test_hinf_scalar_quadratic():
    est = hinf_estimate(LtiqoSystem([[-1.0]], [[1.0]], M=[[[1.0]]]), FAST)
    assert est.quadratic_part == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(est.argmax_quad, (0.0, 0.0), atol=1e-3)
    assert est.total == est.linear_part + est.quadratic_part


def test_hinf_rejects_unstable():
    with pytest.raises(UnstableSystemError):
        hinf_estimate(LtiqoSystem([[1.0]], [[1.0]], [[1.0]]))


def test_hinf_dominates_random_samples(rng):
    sys = make_ltiqo(rng, 6, 2, 2)
    est = hinf_estimate(sys, FAST)
    w = 10.0 ** rng.uniform(-4, 4, 2000) * rng.choice([-1, 1], 2000)
    lin = np.linalg.norm(TransferCache(sys).G1(np.abs(w)), ord=2, axis=(1, 2))
    assert est.linear_part >= lin.max() - 1e-10


def test_hinf_homogeneity(rng):
    sys = make_ltiqo(rng, 4, 2, 1)
    base = hinf_estimate(sys, FAST).total
    for alpha in (-2.0, 0.5):
        scaled = hinf_estimate(sys.scaled_output(alpha), FAST).total
        assert scaled == pytest.approx(abs(alpha) * base, rel=1e-6)


def test_hinf_maximum_modulus(rng):
    sys = make_ltiqo(rng, 4, 2, 1)
    est = hinf_estimate(sys, FAST)
    for _ in range(100):
        s1, s2 = rng.uniform(0.01, 3, 2) + 1j * rng.standard_normal(2) * 3
        assert np.linalg.norm(eval_G1(sys, s1), 2) <= est.linear_part * (1 + 1e-6)
        assert np.linalg.norm(eval_K(sys, 0, s1, s2)) <= est.quadratic_part * (1 + 1e-6)


def test_hinf_triangle_inequality(rng):
    a, b = make_ltiqo(rng, 3, 2, 1), make_ltiqo(rng, 4, 2, 1)
    both = LtiqoSystem(sla.block_diag(a.A, b.A), np.vstack([a.B, b.B]), np.hstack([a.C, b.C]), a.D + b.D,
                       [sla.block_diag(a.M[0], b.M[0])], [a.P[0] + b.P[0]])
    total = hinf_estimate(both, FAST).total
    assert total <= hinf_estimate(a, FAST).total + hinf_estimate(b, FAST).total + 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(-50.0, 50.0))
def test_first_order_modulus_property(a, w):
    sys = LtiqoSystem([[-a]], [[1.0]], [[1.0]])
    assert abs(eval_G1(sys, 1j * w)[0, 0]) == pytest.approx(1.0 / np.hypot(a, w), rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_quadratic_estimate_covers_diagonal_lines(seed):
    rng = np.random.default_rng(seed)
    sys = make_ltiqo(rng, 6, 2, 1)
    est = hinf_estimate(sys, FAST)
    w = np.logspace(-3, 3, 4000)
    X = state_response(sys.A, sys.B, w)
    for Xa in (X, X.conj()):
        K = np.einsum("fan,ab,fbm->fnm", X, sys.M[0], Xa) + sys.P[0]
        assert est.quadratic_part >= np.linalg.norm(K.reshape(w.size, -1), axis=1).max() * (1 - 1e-9)
