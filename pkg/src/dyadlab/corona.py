"""Principal cubes, the parallel corona and the slicings of a sparse family."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .constants import BumpFunction, ExponentSet, local_ainfty_pyramid, log2_bucket
from .grid import DyadicCube, GridError, GridFunction, GridSpec, Weight, _same_grid, iter_cubes, weighted_averages
from .sparse import SparseCollection, stopping_tree

STOP_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class PrincipalCubes:
    """Stopping family for a pair (f, σ) inside a sparse collection.

    ``proj[Q]`` is the node of the minimal principal cube containing the
    S-cube Q (-1 for nodes outside S); ``generation[F]`` is k for F in 𝓕_k.
    """

    spec: GridSpec
    mask: np.ndarray = field(repr=False)
    proj: np.ndarray = field(repr=False)
    generation: np.ndarray = field(repr=False)
    averages: np.ndarray = field(repr=False)

    @cached_property
    def cubes(self) -> list[DyadicCube]:
        return sorted(iter_cubes(self.spec, self.mask), key=lambda q: (q.level, q.lex))

    def generations(self) -> list[list[DyadicCube]]:
        top = int(self.generation.max()) if self.mask.any() else -1
        return [sorted(iter_cubes(self.spec, self.generation == g), key=lambda q: (q.level, q.lex))
                for g in range(top + 1)]

    def __len__(self) -> int:
        return int(self.mask.sum())

    def project(self, cube: DyadicCube) -> DyadicCube:
        node = int(self.proj[self.spec.node_index(cube)])
        if node < 0:
            raise GridError(f"{cube} is not in the sparse collection")
        return self.spec.node_cube(node)


def principal_cubes(f: GridFunction, sigma: Weight, S: SparseCollection, factor: float = STOP_FACTOR) -> PrincipalCubes:
    """𝓕_0 = maximal cubes of S; children of F are the maximal Q ⊊ F in S with ⟨f⟩_Q^σ > 2⟨f⟩_F^σ."""
    spec = _same_grid(f, sigma)
    if np.any(f.values < 0):
        raise ValueError("principal cubes are built for f >= 0")
    avgs = weighted_averages(f, sigma)
    selected, proj, gen = stopping_tree(spec, avgs, S.mask, factor)
    return PrincipalCubes(spec, selected, proj, gen, avgs)


@dataclass(frozen=True, eq=False)
class Corona:
    S: SparseCollection
    F: PrincipalCubes
    G: PrincipalCubes

    @property
    def spec(self) -> GridSpec:
        return self.S.spec

    def pi(self, cube: DyadicCube) -> tuple[DyadicCube, DyadicCube]:
        return self.F.project(cube), self.G.project(cube)

    @cached_property
    def fibers(self) -> dict[tuple[int, int], np.ndarray]:
        """(F node, G node) -> S nodes Q with π(Q) = (F, G)."""
        nodes = np.flatnonzero(self.S.mask)
        keys = np.stack([self.F.proj[nodes], self.G.proj[nodes]], axis=1)
        out: dict[tuple[int, int], list[int]] = {}
        for (a, b), q in zip(keys.tolist(), nodes.tolist()):
            out.setdefault((a, b), []).append(q)
        return {k: np.array(v) for k, v in out.items()}

    def in_I(self) -> np.ndarray:
        """Per S node: π_𝓕(G) = F for its fiber (F, G)."""
        nodes = np.flatnonzero(self.S.mask)
        Fq, Gq = self.F.proj[nodes], self.G.proj[nodes]
        return self.F.proj[Gq] == Fq

    def in_II(self) -> np.ndarray:
        nodes = np.flatnonzero(self.S.mask)
        Fq, Gq = self.F.proj[nodes], self.G.proj[nodes]
        return self.G.proj[Fq] == Gq

    def to_json(self) -> dict:
        spec = self.spec

        def cube(node):
            return spec.node_cube(int(node)).to_json()

        return {
            "n": spec.n,
            "L": spec.L,
            "F": [q.to_json() for q in self.F.cubes],
            "G": [q.to_json() for q in self.G.cubes],
            "fibers": [
                {"F": cube(a), "G": cube(b), "Q": [cube(q) for q in qs]}
                for (a, b), qs in sorted(self.fibers.items(), key=lambda kv: (kv[0][0], kv[0][1]))
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def parallel_projection(S: SparseCollection, F: PrincipalCubes, G: PrincipalCubes) -> Corona:
    for fam in (F, G):
        if fam.spec != S.spec or np.any(fam.mask & ~S.mask):
            raise GridError("principal cubes were not built from this sparse collection")
    if np.any(S.mask & ((F.proj < 0) | (G.proj < 0))):
        raise AssertionError("an S-cube lies outside every principal cube")
    corona = Corona(S, F, G)
    if not np.all(corona.in_I() | corona.in_II()):
        raise AssertionError("fiber with neither π_F(G) = F nor π_G(F) = G")
    return corona


def quasi_orthogonality_ratio(f: GridFunction, sigma: Weight, F: PrincipalCubes, p: float) -> float:
    """Σ_{F∈𝓕} (⟨f⟩_F^σ)^p σ(F) / ‖f‖_{L^p(σ)}^p."""
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    spec = _same_grid(f, sigma)
    denom = float(np.sum(np.abs(f.values) ** p * sigma.values)) * spec.cell_measure
    if denom == 0:
        raise ValueError("‖f‖_{L^p(σ)} = 0")
    num = float(np.sum(np.where(F.mask, F.averages, 0.0) ** p * sigma.integrals))
    return num / denom


def bilinear_form(S: SparseCollection, f: GridFunction, g: GridFunction, sigma: Weight, w: Weight, r: float) -> float:
    """Σ_{Q∈S} ⟨fσ⟩_Q^r ∫_Q g w."""
    spec = _same_grid(f, g, sigma, w)
    fs = GridFunction(spec, f.values * sigma.values).averages
    gw = GridFunction(spec, g.values * w.values).integrals
    return float(np.sum(np.where(S.mask, fs, 0.0) ** r * gw))


def corona_I_II(S: SparseCollection, f: GridFunction, g: GridFunction, sigma: Weight, w: Weight, r: float,
                corona: Corona) -> tuple[float, float]:
    """The two corona sums I and II (fibers with F ⊆ G may land in both)."""
    spec = _same_grid(f, g, sigma, w)
    if corona.S is not S and not np.array_equal(corona.S.mask, S.mask):
        raise GridError("corona was built for a different sparse collection")
    nodes = np.flatnonzero(S.mask)
    Fq, Gq = corona.F.proj[nodes], corona.G.proj[nodes]
    term = sigma.averages[nodes] ** r * w.integrals[nodes]
    coef = corona.F.averages[Fq] ** r * corona.G.averages[Gq] * term
    return float(coef[corona.in_I()].sum()), float(coef[corona.in_II()].sum())


@dataclass(frozen=True, eq=False)
class SliceFamily:
    label: str
    coords: tuple[int, ...]
    spec: GridSpec
    mask: np.ndarray = field(repr=False)

    @cached_property
    def cubes(self) -> list[DyadicCube]:
        return sorted(iter_cubes(self.spec, self.mask), key=lambda q: (q.level, q.lex))

    def __len__(self) -> int:
        return int(self.mask.sum())


def _group(spec: GridSpec, label: str, members: np.ndarray, coords: list[np.ndarray]) -> list[SliceFamily]:
    nodes = np.flatnonzero(members)
    if not nodes.size:
        return []
    keys = np.stack([c[nodes] for c in coords], axis=1)
    out = []
    for key in np.unique(keys, axis=0):
        sel = nodes[np.all(keys == key, axis=1)]
        mask = np.zeros(spec.nnodes, dtype=bool)
        mask[sel] = True
        out.append(SliceFamily(label, tuple(int(v) for v in key), spec, mask))
    return out


def slice_ap(S: SparseCollection, w: Weight, sigma: Weight, p: float) -> list[SliceFamily]:
    """Buckets 2^{a-1} < ⟨σ⟩_Q^{p-1}⟨w⟩_Q <= 2^a; cubes with a zero product are left out."""
    spec = _same_grid(w, sigma)
    prod = w.averages * sigma.averages ** (p - 1)
    live = S.mask & (prod > 0)
    a = np.zeros(spec.nnodes, dtype=np.int64)
    a[live] = log2_bucket(prod[live])
    return _group(spec, "ap", live, [a])


def slice_entropy(S: SparseCollection, w: Weight, sigma: Weight, p: float, r: float,
                  eps: BumpFunction, eta: BumpFunction) -> list[SliceFamily]:
    """Families S_{a,b} (label "S") and S'_{a,b} (label "S'").

    Q goes to S_{a,b} when ρ_σ(Q)^{1/p} >= ρ_w(Q)^{1/r-1/p}, with
    2^a < ⟨w⟩^{1/p}⟨σ⟩^{1/p'}ρ_{σ,ε}^{1/p} <= 2^{a+1} and 2^b < ρ_σ <= 2^{b+1};
    otherwise to S'_{a,b} with ρ_{w,η}^{1/r-1/p} and ρ_w in those roles.
    Since ρ >= 1, b is clamped at 0 (ρ = 1 exactly joins b = 0). Cubes where
    either weight has zero mass form one family labelled "skipped".
    """
    ex = ExponentSet(p, r)
    if not p > r:
        raise ValueError(f"entropy slicing needs p > r (p={p}, r={r})")
    spec = _same_grid(w, sigma)
    rw = local_ainfty_pyramid(w)
    rs = local_ainfty_pyramid(sigma)
    ok = np.isfinite(rw) & np.isfinite(rs)
    live = S.mask & ok
    rw1 = np.where(ok, rw, 1.0)
    rs1 = np.where(ok, rs, 1.0)
    base = w.averages ** (1 / p) * sigma.averages ** (1 / ex.p_dual)
    x_sig = base * (rs1 * eps(rs1)) ** (1 / p)
    x_w = base * (rw1 * eta(rw1)) ** ex.w_exponent
    sigma_side = rs1 ** (1 / p) >= rw1 ** ex.w_exponent

    a = np.zeros(spec.nnodes, dtype=np.int64)
    b = np.zeros(spec.nnodes, dtype=np.int64)
    m1 = live & sigma_side
    m2 = live & ~sigma_side
    a[m1] = log2_bucket(x_sig[m1]) - 1
    b[m1] = np.maximum(log2_bucket(rs1[m1]) - 1, 0)
    a[m2] = log2_bucket(x_w[m2]) - 1
    b[m2] = np.maximum(log2_bucket(rw1[m2]) - 1, 0)
    out = _group(spec, "S", m1, [a, b]) + _group(spec, "S'", m2, [a, b])
    skipped = S.mask & ~ok
    if skipped.any():
        out.append(SliceFamily("skipped", (), spec, skipped))
    return out
