import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dyadlab.constants import (BumpFunction, ExponentSet, ainfty_constant, ap_constant, bump_integral_converges,
                               dyadic_maximal, entropy_bump_mult, entropy_bump_sep, local_ainfty_pyramid, log2_bucket,
                               rho, rho_eps)
from dyadlab.grid import DyadicCube, GridError, GridSpec, Weight, cells
from dyadlab.sparse import random_sparse

S1 = GridSpec(1, 1)
ROOT = DyadicCube.root()
small_grids = st.sampled_from([(1, 1), (1, 3), (1, 6), (2, 2), (2, 3), (3, 2)])


def lognormal(spec, seed, zeros=0.0):
    rng = np.random.default_rng(seed)
    v = rng.lognormal(size=spec.ncells)
    v[rng.random(spec.ncells) < zeros] = 0.0
    if not v.any():
        v[0] = 1.0
    return Weight(spec, v)


def test_maximal_examples():
    assert np.all(dyadic_maximal(Weight.constant(GridSpec(2, 2)), DyadicCube(1, (1, 0))) == 1.0)
    assert dyadic_maximal(Weight(S1, [1.0, 3.0]), ROOT).tolist() == [2.0, 3.0]
    assert dyadic_maximal(Weight(S1, [1.0, 0.0]), ROOT).tolist() == [1.0, 0.5]


@settings(max_examples=40, deadline=None)
@given(small_grids, st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.5]))
def test_maximal_matches_ancestor_scan(nl, seed, zeros):
    n, L = nl
    spec = GridSpec(n, L)
    s = lognormal(spec, seed, zeros)
    for k, idx in oracles.all_cubes(n, L):
        q = DyadicCube(k, idx)
        got = dyadic_maximal(s, q)
        np.testing.assert_allclose(got, oracles.maximal(s.values, n, L, (k, idx)), rtol=1e-12)
        assert np.all(got >= s.avg(q) * (1 - 1e-12))
        np.testing.assert_allclose(got, np.maximum(got, s.values[cells(spec, q)]))


def test_ap_examples():
    one = Weight.constant(GridSpec(1, 3))
    assert ap_constant(one, one, 2.7).value == 1.0
    c = ap_constant(Weight(S1, [1.0, 3.0]), Weight.constant(S1), 2.0)
    assert c.value == 3.0 and c.cube == DyadicCube(1, (1,))
    assert ap_constant(Weight(S1, [1.0, 3.0]), Weight.constant(S1), 2.0, [ROOT]).value == 2.0
    with pytest.raises(GridError):
        ap_constant(one, one, 2.0, [])


def test_ainfty_examples():
    assert ainfty_constant(Weight.constant(GridSpec(1, 4))).value == 1.0
    assert ainfty_constant(Weight(S1, [1.0, 3.0])).value == 1.25
    assert ainfty_constant(Weight(S1, [1.0, 0.0])).value == 1.5


def test_rho_eps_examples():
    eps2 = BumpFunction(2.0)
    assert rho_eps(Weight.constant(GridSpec(1, 3)), DyadicCube(1, (1,)), eps2) == 1.0
    assert rho_eps(Weight(S1, [1.0, 3.0]), ROOT, eps2) == pytest.approx(1.25 * (1 + math.log(1.25)) ** 2, rel=1e-14)
    assert rho_eps(Weight(S1, [1.0, 3.0]), ROOT, BumpFunction(0.0)) == 1.25
    with pytest.raises(GridError):
        rho(Weight(S1, [1.0, 0.0]), DyadicCube(1, (1,)))


def test_bump_function():
    eps = BumpFunction(2.5)
    assert eps(1.0) == 1.0
    t = np.linspace(1, 50, 200)
    assert np.all(np.diff(eps(t)) > 0)
    assert bump_integral_converges(2, 1)
    assert not bump_integral_converges(1, 1)
    assert bump_integral_converges(3, 0.5)
    assert not bump_integral_converges(2, 0.5)


def test_bump_convergence_against_quadrature():
    # ∫_1^T dt/(t(1+ln t)^a) = ∫_0^{ln T} du/(1+u)^a: bounded in T iff a > 1
    for a in (0.5, 1.0, 1.5, 3.0):
        tails = [math.log1p(U) if a == 1 else ((1 + U) ** (1 - a) - 1) / (1 - a) for U in (1e3, 1e6)]
        growing = tails[1] - tails[0] > 1.0
        assert growing == (not bump_integral_converges(a, 1.0))


def test_exponent_set():
    ex = ExponentSet(3.0, 2.0)
    assert ex.q == 3.0 and ex.p_dual == 1.5
    assert 1 / ex.q + ex.r / ex.p == pytest.approx(1.0)
    assert ExponentSet(1.5, 2.0).w_exponent == 0.0
    with pytest.raises(ValueError):
        ExponentSet(2.0, 2.0).q
    with pytest.raises(ValueError):
        ExponentSet(1.0, 2.0)
    with pytest.raises(ValueError):
        ExponentSet(2.0, 0.5)


def test_entropy_examples():
    one = Weight.constant(GridSpec(1, 4))
    eps2 = BumpFunction(2.0)
    for p, r in ((1.5, 2), (3, 2), (4, 1), (2, 3)):
        assert entropy_bump_mult(one, one, p, r, eps2).value == 1.0
    assert entropy_bump_sep(one, one, 3.0, 2.0, eps2, eps2).value == 2.0
    w = Weight(S1, [1.0, 3.0])
    sig = Weight.constant(S1)
    assert entropy_bump_mult(w, sig, 2.0, 2.0, eps2).value == pytest.approx(math.sqrt(3), rel=1e-14)
    rw = 1.25 * (1 + math.log(1.25)) ** 2
    root_mult = 2 ** 0.25 * rw ** 0.25
    got = entropy_bump_mult(w, sig, 4.0, 2.0, eps2, [ROOT]).value
    assert got == pytest.approx(root_mult, rel=1e-14)
    got = entropy_bump_sep(w, sig, 4.0, 2.0, eps2, eps2, [ROOT]).value
    assert got == pytest.approx(2 ** 0.25 * (rw ** 0.25 + 1), rel=1e-14)
    # p <= r: the separated constant is the single σ term, equal to the multiplicative one
    for p, r in ((1.5, 2.0), (2.0, 2.0), (2.0, 3.0)):
        assert entropy_bump_sep(w, sig, p, r, eps2, eps2).value == entropy_bump_mult(w, sig, p, r, eps2).value


def _entropy_brute(w, s, p, r, beta_e, beta_h, n, L, sep):
    e = lambda t: (1 + math.log(t)) ** beta_e
    h = lambda t: (1 + math.log(t)) ** beta_h
    best = -1.0
    for q in oracles.all_cubes(n, L):
        mw, ms = oracles.mean(w, n, L, q), oracles.mean(s, n, L, q)
        if mw == 0 or ms == 0:
            continue
        rw, rs = oracles.rho(w, n, L, q), oracles.rho(s, n, L, q)
        rw, rs = max(rw, 1.0), max(rs, 1.0)
        base = mw ** (1 / p) * ms ** (1 - 1 / p)
        sig = (rs * e(rs)) ** (1 / p)
        if p > r:
            wt = (rw * (h if sep else e)(rw)) ** (1 / r - 1 / p)
            val = base * (wt + sig) if sep else base * wt * sig
        else:
            val = base * sig
        best = max(best, val)
    return best


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(1, 3), (1, 5), (2, 2)]), st.integers(0, 2 ** 32 - 1),
       st.sampled_from([(3.0, 2.0), (1.5, 2.0), (4.0, 1.0), (2.0, 3.0)]), st.sampled_from([0.0, 1.5, 3.0]))
def test_entropy_constants_match_brute_force(nl, seed, pr, beta):
    n, L = nl
    spec = GridSpec(n, L)
    w, s = lognormal(spec, seed), lognormal(spec, seed + 7)
    p, r = pr
    eps, eta = BumpFunction(beta), BumpFunction(beta + 1)
    got = entropy_bump_mult(w, s, p, r, eps).value
    assert got == pytest.approx(_entropy_brute(w.values, s.values, p, r, beta, beta, n, L, False), rel=1e-10)
    got = entropy_bump_sep(w, s, p, r, eps, eta).value
    assert got == pytest.approx(_entropy_brute(w.values, s.values, p, r, beta, beta + 1, n, L, True), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(small_grids, st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.4]))
def test_characteristics_match_brute_force(nl, seed, zeros):
    n, L = nl
    spec = GridSpec(n, L)
    w, s = lognormal(spec, seed, zeros), lognormal(spec, seed + 1, zeros)
    p = 1.7
    assert ap_constant(w, s, p).value == pytest.approx(oracles.ap(w.values, s.values, p, n, L), rel=1e-12)
    assert ainfty_constant(w).value == pytest.approx(oracles.ainf(w.values, n, L), rel=1e-12)
    rhos = local_ainfty_pyramid(w)
    assert np.all(rhos[np.isfinite(rhos)] >= 1.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(1, 5), (2, 3)]), st.integers(0, 2 ** 32 - 1))
def test_restriction_monotone_and_scaling(nl, seed):
    spec = GridSpec(*nl)
    w, s = lognormal(spec, seed), lognormal(spec, seed + 1)
    S = random_sparse(spec, 0.5, seed)
    p = 2.5
    assert ap_constant(w, s, p).value >= ap_constant(w, s, p, S).value
    assert ainfty_constant(w).value >= ainfty_constant(w, S).value
    base = ap_constant(w, s, p).value
    for c in (0.5, 3.0, 1 / 7):
        assert ap_constant(Weight(spec, c * w.values), s, p).value == pytest.approx(c * base, rel=1e-12)
        assert ap_constant(w, Weight(spec, c * s.values), p).value == pytest.approx(c ** (p - 1) * base, rel=1e-12)
        np.testing.assert_allclose(local_ainfty_pyramid(Weight(spec, c * w.values)), local_ainfty_pyramid(w),
                                   rtol=1e-12)


def test_argmax_tiebreak_prefers_coarse_then_lex():
    one = Weight.constant(GridSpec(2, 3))
    assert ap_constant(one, one, 2.0).cube == DyadicCube.root(2)
    w = Weight(GridSpec(1, 2), [1.0, 3.0, 3.0, 1.0])
    assert ap_constant(w, Weight.constant(w.spec), 2.0).cube == DyadicCube(2, (1,))


def test_log2_bucket_half_open():
    x = np.array([1.0, 2.0, 3.0, 0.5, 0.75, 4.0 * (1 + 1e-14), 4.0 * (1 - 1e-14), 1.0000001])
    assert log2_bucket(x).tolist() == [0, 1, 2, -1, 0, 2, 2, 1]
