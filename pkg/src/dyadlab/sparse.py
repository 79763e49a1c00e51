"""Sparse collections of dyadic cubes and the sparse operators A_S^r."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .grid import (DyadicCube, GridError, GridFunction, GridSpec, Weight, _same_grid, as_node_mask,
                   iter_cubes)

SPARSITY_TOL = 1e-12
# exact doublings (common when half a cube is zero) must not be selected by rounding noise
STOP_RTOL = 1e-12


class NotSparseError(GridError):
    pass


def inner_cover(spec: GridSpec, mask: np.ndarray) -> np.ndarray:
    """Per cube Q: |⋃{Q' ∈ S : Q' ⊊ Q}|, via the maximal S-cubes strictly below Q."""
    b = spec.branching
    out = np.zeros(spec.nnodes)
    measures = spec.node_measures()
    for k in range(spec.L - 1, -1, -1):
        child = spec.level_slice(k + 1)
        covered = np.where(mask[child], measures[child], out[child])
        out[spec.level_slice(k)] = covered.reshape(-1, b).sum(axis=1)
    return out


def nearest_owner(spec: GridSpec, mask: np.ndarray) -> np.ndarray:
    """Per node, the smallest marked node containing it (itself included), or -1."""
    b = spec.branching
    owner = np.full(spec.nnodes, -1, dtype=np.int64)
    owner[0] = 0 if mask[0] else -1
    for k in range(1, spec.L + 1):
        sl = spec.level_slice(k)
        inherited = np.repeat(owner[spec.level_slice(k - 1)], b)
        owner[sl] = np.where(mask[sl], np.arange(sl.start, sl.stop), inherited)
    return owner


def stopping_tree(spec: GridSpec, values: np.ndarray, candidates: np.ndarray, factor: float = 2.0):
    """Top-down stopping time over the candidate cubes.

    Maximal candidates start the family; below a selected cube F the maximal
    candidates Q ⊊ F with ``values[Q] > factor * values[F]`` are selected next;
    the comparison carries a relative margin STOP_RTOL so exact ties stay unselected.
    Returns ``(selected, proj, generation)``: ``proj[Q]`` is the minimal
    selected cube containing candidate Q (-1 off the candidates) and
    ``generation`` the stopping generation of selected cubes (-1 otherwise).
    """
    b = spec.branching
    proj = np.full(spec.nnodes, -1, dtype=np.int64)
    gen = np.full(spec.nnodes, -1, dtype=np.int64)
    parent_owner = np.array([-1], dtype=np.int64)
    for k in range(spec.L + 1):
        sl = spec.level_slice(k)
        ids = np.arange(sl.start, sl.stop)
        if k:
            parent_owner = np.repeat(owner, b)
        cand = candidates[sl]
        has_parent = parent_owner >= 0
        F = np.where(has_parent, proj[np.where(has_parent, parent_owner, 0)], -1)
        safeF = np.where(F >= 0, F, 0)
        fresh = cand & (F < 0)
        stop = cand & (F >= 0) & (values[sl] > factor * values[safeF] * (1.0 + STOP_RTOL))
        picked = fresh | stop
        proj[sl] = np.where(picked, ids, np.where(cand, F, -1))
        gen[sl] = np.where(fresh, 0, np.where(stop, gen[safeF] + 1, -1))
        owner = np.where(cand, ids, parent_owner)
    return proj == np.arange(spec.nnodes), proj, gen


@dataclass(frozen=True, eq=False)
class SparseCollection:
    """A ½-sparse family of dyadic cubes, stored as a node mask over the pyramid."""

    spec: GridSpec
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != (self.spec.nnodes,):
            raise GridError("cube mask has the wrong length for this grid")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        ok, worst, cube = is_sparse(self.spec, m)
        if not ok:
            raise NotSparseError(f"not sparse: cover ratio {worst:.6g} > 1/2 at {cube}")

    @classmethod
    def from_cubes(cls, spec: GridSpec, cubes: Iterable[DyadicCube]):
        return cls(spec, as_node_mask(spec, list(cubes)))

    @cached_property
    def cubes(self) -> list[DyadicCube]:
        """Members ordered by level, then lexicographic index."""
        return sorted(iter_cubes(self.spec, self.mask), key=lambda q: (q.level, q.lex))

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self):
        return iter(self.cubes)

    def __contains__(self, cube: DyadicCube) -> bool:
        return bool(self.mask[self.spec.node_index(cube)])

    @cached_property
    def cover_ratios(self) -> np.ndarray:
        return inner_cover(self.spec, self.mask) / self.spec.node_measures()

    def restrict(self, sub_mask: np.ndarray) -> "SparseCollection":
        return SparseCollection(self.spec, self.mask & sub_mask)

    def maximal(self) -> np.ndarray:
        owner = nearest_owner(self.spec, self.mask)
        parent = np.empty(self.spec.nnodes, dtype=np.int64)
        parent[0] = -1
        for k in range(1, self.spec.L + 1):
            parent[self.spec.level_slice(k)] = np.repeat(owner[self.spec.level_slice(k - 1)], self.spec.branching)
        return self.mask & (parent < 0)

    def to_json(self) -> list[dict]:
        return [q.to_json() for q in self.cubes]

    @classmethod
    def from_json(cls, spec: GridSpec, items: list[dict]):
        return cls.from_cubes(spec, (DyadicCube.from_json(o) for o in items))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def is_sparse(spec: GridSpec, cubes) -> tuple[bool, float, DyadicCube | None]:
    """Check the ½-sparsity condition; returns (ok, worst ratio, worst cube)."""
    mask = as_node_mask(spec, cubes)
    if not mask.any():
        return True, 0.0, None
    ratios = np.where(mask, inner_cover(spec, mask) / spec.node_measures(), -1.0)
    node = int(np.argmax(ratios))
    worst = float(ratios[node])
    return worst <= 0.5 + SPARSITY_TOL, worst, spec.node_cube(node)


def exceptional_sets(S: SparseCollection) -> dict[DyadicCube, np.ndarray]:
    """E(Q) = Q minus the maximal S-cubes strictly inside Q, as lexicographic cell indices."""
    spec = S.spec
    owner = nearest_owner(spec, S.mask)[spec.level_slice(spec.L)]
    lex = spec.node_lex_keys()[spec.level_slice(spec.L)]
    out = {}
    for cube in S.cubes:
        out[cube] = np.sort(lex[owner == spec.node_index(cube)])
    return out


def chain(spec: GridSpec, depth: int) -> SparseCollection:
    """Nested cubes [0, 2^{-k})^n for k = 0..depth."""
    if depth > spec.L or depth < 0:
        raise GridError(f"chain depth {depth} must lie in [0, L={spec.L}]")
    return SparseCollection.from_cubes(spec, (DyadicCube(k, (0,) * spec.n) for k in range(depth + 1)))


def random_sparse(spec: GridSpec, q: float, seed: int | None = None, root: bool = True) -> SparseCollection:
    """Include cubes with probability ``q``, skipping any that would overspend an ancestor's budget.

    Cubes are visited level by level, lexicographically within a level, so a
    seed determines the collection. Adding Q below its nearest member P only
    grows P's covered measure, by exactly |Q|.
    """
    if not 0 <= q <= 1:
        raise ValueError(f"inclusion probability must lie in [0,1], got {q}")
    rng = np.random.default_rng(seed)
    mask = np.zeros(spec.nnodes, dtype=bool)
    covered = np.zeros(spec.nnodes)
    owner = np.full(spec.nnodes, -1, dtype=np.int64)
    keys = spec.node_lex_keys()
    measures = spec.node_measures()
    b = spec.branching
    for k in range(spec.L + 1):
        sl = spec.level_slice(k)
        draws = rng.random(sl.stop - sl.start)
        if k:
            owner[sl] = np.repeat(owner[spec.level_slice(k - 1)], b)
        order = np.argsort(keys[sl])
        for local in order:
            node = sl.start + int(local)
            want = draws[keys[node]] < q or (root and k == 0)
            if not want:
                continue
            parent = owner[node]
            if parent >= 0 and covered[parent] + measures[node] > 0.5 * measures[parent] + SPARSITY_TOL * measures[parent]:
                continue
            if parent >= 0:
                covered[parent] += measures[node]
            mask[node] = True
            owner[node] = node
    return SparseCollection(spec, mask)


def stopping(f: GridFunction, factor: float = 2.0) -> SparseCollection:
    """Calderón–Zygmund stopping cubes of |f|, starting from the root."""
    if not np.any(f.values != 0):
        raise ValueError("stopping collection needs f not identically zero")
    spec = f.spec
    avgs = f.abs().averages
    selected, _, _ = stopping_tree(spec, avgs, np.ones(spec.nnodes, dtype=bool), factor)
    return SparseCollection(spec, selected)


def generate(kind: str, spec: GridSpec, params: dict | None = None, seed: int | None = None) -> SparseCollection:
    params = dict(params or {})
    if kind == "chain":
        return chain(spec, int(params.get("depth", spec.L)))
    if kind == "random":
        return random_sparse(spec, float(params.get("q", 0.3)), seed, bool(params.get("root", True)))
    if kind == "stopping":
        f = params.get("f")
        if f is None:
            rng = np.random.default_rng(seed)
            f = GridFunction(spec, rng.lognormal(0.0, float(params.get("s", 1.5)), spec.ncells))
        return stopping(f, float(params.get("factor", 2.0)))
    raise ValueError(f"unknown sparse collection kind {kind!r}")


def operator_coefficients(S: SparseCollection, fs_avg: np.ndarray, r: float) -> np.ndarray:
    return np.where(S.mask, fs_avg, 0.0) ** r


def apply(S: SparseCollection, f: GridFunction, sigma: Weight, r: float = 2.0) -> GridFunction:
    """A_S^r(fσ) = (Σ_{Q∈S} ⟨fσ⟩_Q^r 1_Q)^{1/r}.

    Only f >= 0 is accepted; signed inputs reduce to |f| since
    ⟨fσ⟩_Q <= ⟨|f|σ⟩_Q, so pass ``f.abs()`` explicitly.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    spec = _same_grid(f, sigma)
    if S.spec != spec:
        raise GridError("sparse collection lives on a different grid")
    if np.any(f.values < 0):
        raise ValueError("apply expects f >= 0; pass |f| (norms are attained on nonnegative inputs)")
    fs = GridFunction(spec, f.values * sigma.values)
    power = spec.downsweep(operator_coefficients(S, fs.averages, r))
    return GridFunction.from_morton(spec, np.maximum(power, 0.0) ** (1.0 / r))


def dyadic_square_function(f: GridFunction) -> GridFunction:
    """Martingale square function (Σ_{k=1}^{L} (E_k f - E_{k-1} f)^2)^{1/2}."""
    spec = f.spec
    b = spec.branching
    avgs = f.averages
    total = np.zeros(spec.ncells)
    for k in range(1, spec.L + 1):
        fine = avgs[spec.level_slice(k)]
        coarse = np.repeat(avgs[spec.level_slice(k - 1)], b)
        total += np.repeat((fine - coarse) ** 2, b ** (spec.L - k))
    return GridFunction.from_morton(spec, np.sqrt(total))


def sparse_dominate(f: GridFunction) -> tuple[SparseCollection, float]:
    """S = stopping(f) and the smallest c with S_d f <= c A_S^2(|f|) pointwise."""
    S = stopping(f)
    sq = dyadic_square_function(f).values
    dom = apply(S, f.abs(), Weight.constant(f.spec), 2.0).values
    ratio = np.divide(sq, dom, out=np.zeros_like(sq), where=dom > 0)
    if np.any((dom == 0) & (sq > 0)):
        return S, float("inf")
    return S, float(ratio.max())
