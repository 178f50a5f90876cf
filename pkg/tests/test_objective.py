import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import grad_instance, make_ltiqo, rel_err
from ltiqo.grad import fd_gradient
from ltiqo.model import LtiqoSystem, build_error_system
from ltiqo.objective import ErrorModel, FrequencySets, LevelMode, f_lls, grad_f_lls
from ltiqo.param import decode_ltiqo, encode
from ltiqo.transfer import SamplingConfig, eval_G1, eval_K, hinf_estimate

FREQS = FrequencySets(np.logspace(-1.5, 1.5, 9).tolist() + [0.0],
                      [(0.0, 0.0), (0.5, 1.0), (-0.7, 0.7), (2.0, 0.3), (-1.5, 3.0)])


def naive_value(fom, theta, gamma, omega1, omega2, mode="half"):
    """Direct sum over the given points, one transfer evaluation at a time."""
    rom = decode_ltiqo(theta)
    lvl = LevelMode.parse(mode).level(gamma)
    quad = [j for j in range(fom.p) if np.any(fom.M[j]) or np.any(fom.P[j])
            or np.any(rom.M[j]) or np.any(rom.P[j])]
    total = 0.0
    for w in omega1:
        s = np.linalg.svd(eval_G1(fom, 1j * w) - eval_G1(rom, 1j * w), compute_uv=False)
        total += np.sum(np.maximum(s - lvl, 0.0) ** 2)
    for w1, w2 in omega2:
        rows = [(eval_K(fom, j, 1j * w1, 1j * w2) - eval_K(rom, j, 1j * w1, 1j * w2)).ravel() for j in quad]
        s = np.linalg.svd(np.array(rows), compute_uv=False)
        total += np.sum(np.maximum(s - lvl, 0.0) ** 2)
    return total / lvl


# ------------------------------------------------------------------ values

def test_all_below_level_is_zero(rng):
    fom, th = grad_instance(rng, "full", 3, 2)
    s1, s2 = ErrorModel(fom).error_sigmas(decode_ltiqo(th), FREQS.omega1, FREQS.omega2)
    gamma = 2.0 * max(s1.max(), s2.max()) * 1.01
    val = f_lls(fom, th, gamma, FREQS)
    assert val.value == 0.0
    assert val.n_violations_lin == val.n_violations_quad == 0
    assert np.all(grad_f_lls(fom, th, gamma, FREQS) == 0.0)


def test_single_violation_closed_form():
    fom = LtiqoSystem([[-1.0]], [[0.0]], [[0.0]], [[2.0]])
    th = encode(LtiqoSystem([[-1.0]], [[1.0]], [[0.0]], [[0.0]]), "full")
    freqs = FrequencySets([0.5], [])
    # sigma = 2 gamma with the full level: (1/gamma) gamma^2 = gamma
    assert f_lls(fom, th, 1.0, freqs, mode="sum").value == pytest.approx(1.0, rel=1e-14)
    assert f_lls(fom, th, 3.0, freqs, mode="sum").value == 0.0
    # half level: (2 - 1)^2 / 1
    assert f_lls(fom, th, 2.0, freqs, mode="half").value == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("scheme", ["full", "diagm", "ph"])
@pytest.mark.parametrize("mode", ["half", "sum"])
def test_matches_mirrored_naive_sum(scheme, mode):
    rng = np.random.default_rng(31)
    fom, th = grad_instance(rng, scheme, 3, 2)
    gamma = 0.3
    f = f_lls(fom, th, gamma, FREQS, mode).value
    mirror1 = np.unique(np.concatenate([FREQS.omega1, -FREQS.omega1]) + 0.0)
    mirror2 = np.unique(np.concatenate([FREQS.omega2, -FREQS.omega2]) + 0.0, axis=0)
    naive = naive_value(fom, th, gamma, mirror1, mirror2, mode)
    # points that are their own mirror image are counted once by the naive sum
    self1 = FREQS.omega1[FREQS.omega1 == 0.0]
    self2 = FREQS.omega2[np.all(FREQS.omega2 == 0.0, axis=1)]
    fixed = naive_value(fom, th, gamma, self1, self2, mode)
    assert f > 0
    assert naive == pytest.approx(2 * f - fixed, rel=1e-10)


def test_value_counts_and_maxima(rng):
    fom, th = grad_instance(rng, "full", 2, 2)
    s1, s2 = ErrorModel(fom).error_sigmas(decode_ltiqo(th), FREQS.omega1, FREQS.omega2)
    val = f_lls(fom, th, 0.5, FREQS)
    assert val.max_sigma_lin == pytest.approx(s1.max())
    assert val.max_sigma_quad == pytest.approx(s2.max())
    assert val.n_violations_lin == np.count_nonzero(s1 > 0.25)
    assert val.n_violations_quad == np.count_nonzero(s2 > 0.25)


def test_linear_terms_skipped_without_linear_output(rng):
    fom = make_ltiqo(rng, 5, 2, 1)
    fom = LtiqoSystem(fom.A, fom.B, M=fom.M, P=fom.P, p=1)
    rom = make_ltiqo(rng, 2, 2, 1)
    rom = LtiqoSystem(rom.A, rom.B, M=rom.M, P=rom.P, p=1)
    s1, s2 = ErrorModel(fom).error_sigmas(rom, FREQS.omega1, FREQS.omega2)
    assert s1.shape[0] == 0 and s2.shape[0] == len(FREQS.omega2)


def test_unevaluable_rom_is_infinite():
    fom = LtiqoSystem([[-1.0]], [[1.0]], [[1.0]])
    th = encode(LtiqoSystem([[0.0]], [[1.0]], [[1.0]]), "full")
    freqs = FrequencySets([0.0], [])
    val, g = ErrorModel(fom).evaluate(th, 1.0, freqs, want_grad=True)
    assert val.value == np.inf
    assert np.all(np.isnan(g))


def test_nonpositive_gamma_rejected(rng):
    fom, th = grad_instance(rng, "full", 2, 1)
    with pytest.raises(ValueError):
        f_lls(fom, th, 0.0, FREQS)


# --------------------------------------------------------------- gradients

@pytest.mark.parametrize("scheme", ["full", "diagm", "ph"])
@pytest.mark.parametrize("mode", ["half", "sum"])
def test_gradient_matches_fd(scheme, mode):
    rng = np.random.default_rng(5)
    fom, th = grad_instance(rng, scheme, 4, 2)
    model = ErrorModel(fom)
    gamma = 0.4
    g = grad_f_lls(fom, th, gamma, FREQS, mode, model=model)
    fd = fd_gradient(lambda t: model.evaluate(t, gamma, FREQS, mode).value, th)
    assert np.linalg.norm(g) > 0
    assert rel_err(g, fd) < 1e-6


def test_doubling_gamma_recomputation(rng):
    fom, th = grad_instance(rng, "full", 3, 2)
    s1, s2 = ErrorModel(fom).error_sigmas(decode_ltiqo(th), FREQS.omega1, FREQS.omega2)
    sig = np.concatenate([s1.ravel(), s2.ravel()])
    for gamma in (0.2, 0.4):
        expect = np.sum(np.maximum(sig - gamma, 0) ** 2) / gamma
        assert f_lls(fom, th, gamma, FREQS, "sum").value == pytest.approx(expect, rel=1e-12)


# --------------------------------------------------------------- properties

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), g1=st.floats(0.01, 5.0), factor=st.floats(1.0, 10.0))
def test_nonincreasing_in_gamma(seed, g1, factor):
    rng = np.random.default_rng(seed)
    fom, th = grad_instance(rng, "full", 2, 1)
    model = ErrorModel(fom)
    assert model.evaluate(th, g1 * factor, FREQS).value <= model.evaluate(th, g1, FREQS).value


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), keep1=st.integers(0, 10), keep2=st.integers(0, 5))
def test_removing_points_never_increases(seed, keep1, keep2):
    rng = np.random.default_rng(seed)
    fom, th = grad_instance(rng, "full", 2, 2)
    model = ErrorModel(fom)
    sub = FrequencySets(rng.permutation(FREQS.omega1)[:keep1], rng.permutation(FREQS.omega2)[:keep2])
    assert model.evaluate(th, 0.3, sub).value <= model.evaluate(th, 0.3, FREQS).value


def test_positive_value_implies_error_norm_above_level(rng):
    fom, th = grad_instance(rng, "full", 2, 2)
    gamma = 0.5
    val = f_lls(fom, th, gamma, FREQS)
    assert val.value > 0
    err = build_error_system(fom, decode_ltiqo(th))
    est = hinf_estimate(err, SamplingConfig(points_per_decade=40, grid_quad=(40, 20)))
    assert est.total >= LevelMode.HALF.level(gamma)
    assert est.linear_part >= val.max_sigma_lin * (1 - 1e-12)
    assert est.quadratic_part >= val.max_sigma_quad * (1 - 1e-12)


# --------------------------------------------------------------- frequency sets

def test_default_sets():
    fs = FrequencySets.default()
    assert fs.omega1[0] == 0.0 and fs.omega1[1] == pytest.approx(1e-4) and fs.omega1[-1] == pytest.approx(1e4)
    assert fs.sizes[0] == 81 + 1
    pow10 = [10.0 ** k for k in range(-2, 3)]
    first = sorted({0.0, *pow10, *(-x for x in pow10)})
    second = [0.0, *pow10]
    assert fs.sizes[1] == len(first) * len(second)
    assert {tuple(p) for p in fs.omega2.tolist()} == {(a, b) for a in first for b in second}


def test_union_deduplicates_and_roundtrips():
    fs = FrequencySets([1.0, 0.0], [(0.0, 1.0)])
    grown = fs.union([1.0, 2.0], [(0.0, 1.0), (3.0, 4.0)])
    assert grown.sizes == (3, 2)
    assert fs.sizes == (2, 1)
    back = FrequencySets.from_dict(grown.to_dict())
    np.testing.assert_array_equal(back.omega1, grown.omega1)
    np.testing.assert_array_equal(back.omega2, grown.omega2)


def test_level_mode_parse():
    assert LevelMode.parse("HALF") is LevelMode.HALF
    assert LevelMode.parse(LevelMode.SUM) is LevelMode.SUM
    assert LevelMode.HALF.level(3.0) == 1.5 and LevelMode.SUM.level(3.0) == 3.0
    with pytest.raises(ValueError):
        LevelMode.parse("third")
