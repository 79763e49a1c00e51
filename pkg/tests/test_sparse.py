import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dyadlab.grid import DyadicCube, GridError, GridFunction, GridSpec, Weight
from dyadlab.sparse import (NotSparseError, SparseCollection, apply, chain, dyadic_square_function, exceptional_sets,
                            generate, is_sparse, random_sparse, sparse_dominate, stopping)

ROOT = DyadicCube.root()


def C(k, i):
    return DyadicCube(k, (i,))


def as_tuples(S):
    return [(q.level, q.index) for q in S.cubes]


def test_is_sparse_examples():
    s = GridSpec(1, 3)
    ok, worst, _ = is_sparse(s, [ROOT, C(1, 0)])
    assert ok and worst == 0.5
    ok, worst, cube = is_sparse(s, [ROOT, C(1, 0), C(1, 1)])
    assert not ok and worst == 1.0 and cube == ROOT
    ok, worst, _ = is_sparse(s, [C(2, 0), C(2, 3), C(3, 2)])
    assert ok and worst == 0.0
    with pytest.raises(NotSparseError):
        SparseCollection.from_cubes(s, [ROOT, C(1, 0), C(1, 1)])


def test_is_sparse_exhaustive_n1_L2():
    n, L = 1, 2
    spec = GridSpec(n, L)
    cubes = list(oracles.all_cubes(n, L))
    for bits in range(2 ** len(cubes)):
        sub = [c for j, c in enumerate(cubes) if bits >> j & 1]
        got, _, _ = is_sparse(spec, [DyadicCube(k, i) for k, i in sub])
        assert got == oracles.is_sparse_union(n, L, sub)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(1, 4), (2, 2)]), st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.6))
def test_is_sparse_matches_union_on_random_subsets(nl, seed, q):
    n, L = nl
    spec = GridSpec(n, L)
    rng = np.random.default_rng(seed)
    cubes = [c for c in oracles.all_cubes(n, L) if rng.random() < q]
    ok, worst, _ = is_sparse(spec, [DyadicCube(k, i) for k, i in cubes])
    ratios = [oracles.cover_ratio_union(n, L, cubes, c) for c in cubes]
    assert ok == all(r <= 0.5 for r in ratios)
    assert worst == pytest.approx(max(ratios, default=0.0), abs=1e-15)


def test_exceptional_set_examples():
    s = GridSpec(1, 2)
    E = exceptional_sets(SparseCollection.from_cubes(s, [ROOT, C(1, 0)]))
    assert E[ROOT].tolist() == [2, 3] and E[C(1, 0)].tolist() == [0, 1]
    anti = SparseCollection.from_cubes(s, [C(2, 0), C(1, 1)])
    for q, e in exceptional_sets(anti).items():
        assert e.tolist() == s.cells(q).tolist()
    assert exceptional_sets(SparseCollection.from_cubes(s, [ROOT]))[ROOT].tolist() == [0, 1, 2, 3]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(1, 6), (2, 3)]), st.integers(0, 2 ** 32 - 1),
       st.sampled_from(["random", "stopping", "chain"]))
def test_generated_collections_and_exceptional_sets(nl, seed, kind):
    spec = GridSpec(*nl)
    S = generate(kind, spec, {"q": 0.5, "depth": spec.L}, seed)
    n, L = nl
    assert oracles.is_sparse_union(n, L, as_tuples(S))
    E = exceptional_sets(S)
    total = 0
    used = set()
    for q, e in E.items():
        cells_q = set(spec.cells(q).tolist())
        assert set(e.tolist()) <= cells_q
        assert 2 * len(e) >= len(cells_q)
        assert used.isdisjoint(e.tolist())
        used |= set(e.tolist())
        total += len(e)
    assert total <= spec.ncells


def test_generate_examples():
    s = GridSpec(1, 3)
    assert chain(s, 2).cubes == [ROOT, C(1, 0), C(2, 0)]
    assert all(r == 0.5 for r in chain(s, 2).cover_ratios[chain(s, 2).mask][:-1])
    assert stopping(GridFunction.constant(s)).cubes == [ROOT]
    with pytest.raises(GridError):
        chain(s, 4)
    with pytest.raises(ValueError):
        stopping(GridFunction(s, np.zeros(8)))


def test_stopping_of_quarter_indicator():
    s = GridSpec(1, 2)
    # averages: root 1/4, [0,1/2) 1/2 (not > 2/4), [0,1/4) 1 (> 2/4)
    S = stopping(GridFunction(s, [1.0, 0, 0, 0]))
    assert S.cubes == [ROOT, C(2, 0)]


def test_random_sparse_is_seeded():
    s = GridSpec(2, 4)
    a, b = random_sparse(s, 0.4, 11), random_sparse(s, 0.4, 11)
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, random_sparse(s, 0.4, 12).mask) or len(a) <= 2


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(1, 6), (2, 3)]), st.integers(0, 2 ** 32 - 1))
def test_stopping_matches_brute_force(nl, seed):
    n, L = nl
    spec = GridSpec(n, L)
    rng = np.random.default_rng(seed)
    f = GridFunction(spec, rng.lognormal(0, 1.5, spec.ncells) * (rng.random(spec.ncells) < 0.7))
    if not f.values.any():
        return
    vals = {c: oracles.mean(f.values, n, L, c) for c in oracles.all_cubes(n, L)}
    want = oracles.stopping_brute(n, L, vals, list(vals))
    assert sorted(as_tuples(stopping(f))) == sorted(want)
    # chains more than double, and the depth bound
    for q in want:
        for c in want:
            if c != q and oracles.contains(c, q):
                assert vals[q] > 2 * vals[c]
    gens = max(sum(1 for c in want if oracles.contains(c, q)) for q in want)
    assert gens <= math.log2(f.values.max() / vals[(0, (0,) * n)]) + 1


def test_apply_examples():
    s = GridSpec(1, 1)
    one = Weight.constant(s)
    assert apply(SparseCollection.from_cubes(s, [ROOT]), one, one, 2).values.tolist() == [1.0, 1.0]
    got = apply(chain(s, 1), one, one, 2).values
    assert got[0] == pytest.approx(math.sqrt(2), rel=1e-15) and got[1] == 1.0
    assert apply(chain(s, 1), one, one, 1).values.tolist() == [2.0, 1.0]
    with pytest.raises(ValueError):
        apply(chain(s, 1), one, one, 0.5)
    with pytest.raises(ValueError):
        apply(chain(s, 1), GridFunction(s, [1.0, -1.0]), one, 2)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(1, 5), (2, 2), (3, 2)]), st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 2.0, 3.5]))
def test_apply_matches_brute_force_and_properties(nl, seed, r):
    n, L = nl
    spec = GridSpec(n, L)
    rng = np.random.default_rng(seed)
    f = GridFunction(spec, rng.lognormal(size=spec.ncells))
    sig = Weight(spec, rng.lognormal(size=spec.ncells))
    w = Weight(spec, rng.lognormal(size=spec.ncells))
    S = random_sparse(spec, 0.5, seed)
    got = apply(S, f, sig, r).values
    np.testing.assert_allclose(got, oracles.apply_brute(n, L, as_tuples(S), f.values, sig.values, r), rtol=1e-12)
    # homogeneity, monotonicity in f and in S
    np.testing.assert_allclose(apply(S, GridFunction(spec, 3 * f.values), sig, r).values, 3 * got, rtol=1e-12)
    bigger = GridFunction(spec, f.values + rng.random(spec.ncells))
    assert np.all(apply(S, bigger, sig, r).values >= got * (1 - 1e-12))
    sub = S.restrict(rng.random(spec.nnodes) < 0.5)
    assert np.all(apply(sub, f, sig, r).values <= got * (1 + 1e-12))
    if r == 2.0:
        lhs = float(np.sum(got ** 2 * w.values)) * spec.cell_measure
        fs = GridFunction(spec, f.values * sig.values)
        rhs = sum(fs.avg(q) ** 2 * w.integral(q) for q in S.cubes)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_square_function_examples():
    s = GridSpec(1, 3)
    assert np.all(dyadic_square_function(GridFunction.constant(s, 4.0)).values == 0)
    assert dyadic_square_function(GridFunction(GridSpec(1, 1), [0.0, 2.0])).values.tolist() == [1.0, 1.0]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(1, 6), (2, 3)]), st.integers(0, 2 ** 32 - 1))
def test_square_function_parseval(nl, seed):
    spec = GridSpec(*nl)
    f = GridFunction(spec, np.random.default_rng(seed).normal(size=spec.ncells))
    sq = dyadic_square_function(f).values
    lhs = float(np.sum(sq ** 2)) * spec.cell_measure + f.averages[0] ** 2
    assert lhs == pytest.approx(float(np.sum(f.values ** 2)) * spec.cell_measure, rel=1e-12)


def test_sparse_dominate_examples():
    s = GridSpec(1, 3)
    S, c = sparse_dominate(GridFunction.constant(s))
    assert S.cubes == [ROOT] and c == 0.0
    S, c = sparse_dominate(GridFunction(GridSpec(1, 1), [0.0, 2.0]))
    assert S.cubes == [ROOT] and c == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sparse_dominate_holds_pointwise(seed):
    spec = GridSpec(1, 7)
    f = GridFunction(spec, np.random.default_rng(seed).normal(size=spec.ncells))
    S, c = sparse_dominate(f)
    sq = dyadic_square_function(f).values
    dom = apply(S, f.abs(), Weight.constant(spec), 2).values
    assert np.all(sq <= c * dom * (1 + 1e-12))
    assert np.any(np.isclose(sq, c * dom, rtol=1e-12))


def test_json_roundtrip(tmp_path):
    s = GridSpec(2, 4)
    S = random_sparse(s, 0.5, 3)
    path = tmp_path / "s.json"
    S.save(path)
    data = json.loads(path.read_text())
    assert all(set(o) == {"k", "i"} for o in data)
    back = SparseCollection.from_json(s, data)
    assert np.array_equal(back.mask, S.mask)
    assert back.to_json() == data
