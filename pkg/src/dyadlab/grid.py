"""Finite dyadic tree over the root cube [0,1)^n.

Public data (``GridFunction.values``, file formats, ``cells``) is in
lexicographic cell order. Internally every array that is swept level by level
is kept in Morton (bit-interleaved) order, where the finest cells of a cube
form one contiguous block; ``GridSpec.lex_to_morton`` converts between them.

A "pyramid" is a flat float array holding one number per dyadic cube, level 0
first, Morton order inside a level (see ``GridSpec.offset``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels

MAX_CELL_BITS = 26


class GridError(ValueError):
    """Malformed grid data, mismatched grids or invalid cubes."""


@lru_cache(maxsize=64)
def _lex_to_morton(n: int, L: int) -> np.ndarray:
    ncells = 1 << (n * L)
    lex = np.arange(ncells, dtype=np.int64)
    # coordinate i_j is the j-th base-2^L digit, i_1 most significant
    coords = [(lex >> (L * (n - 1 - j))) & ((1 << L) - 1) for j in range(n)]
    code = np.zeros(ncells, dtype=np.int64)
    for bit in range(L - 1, -1, -1):
        for j in range(n):
            code = (code << 1) | ((coords[j] >> bit) & 1)
    code.setflags(write=False)
    return code


@lru_cache(maxsize=64)
def _node_levels(n: int, L: int) -> np.ndarray:
    out = np.repeat(np.arange(L + 1), [1 << (n * k) for k in range(L + 1)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _node_measures(n: int, L: int) -> np.ndarray:
    out = 2.0 ** (-n * _node_levels(n, L).astype(float))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _node_lex_keys(n: int, L: int) -> np.ndarray:
    keys = np.concatenate([np.argsort(_lex_to_morton(n, k)) for k in range(L + 1)])
    keys.setflags(write=False)
    return keys


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GridError(f"dimension n must be an integer >= 1, got {self.n}")
        if int(self.L) != self.L or self.L < 0:
            raise GridError(f"depth L must be an integer >= 0, got {self.L}")
        if self.n * self.L > MAX_CELL_BITS:
            raise GridError(f"n*L = {self.n * self.L} exceeds {MAX_CELL_BITS}")

    @property
    def branching(self) -> int:
        return 1 << self.n

    @property
    def ncells(self) -> int:
        return 1 << (self.n * self.L)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.n * self.L)

    @property
    def nnodes(self) -> int:
        return self.offset(self.L + 1)

    def offset(self, k: int) -> int:
        return ((1 << (self.n * k)) - 1) // (self.branching - 1)

    def level_slice(self, k: int) -> slice:
        return slice(self.offset(k), self.offset(k + 1))

    def level_measure(self, k: int) -> float:
        return 2.0 ** (-self.n * k)

    @property
    def lex_to_morton(self) -> np.ndarray:
        """``lex_to_morton[lex] = morton`` for finest cells."""
        return _lex_to_morton(self.n, self.L)

    def node_levels(self) -> np.ndarray:
        return _node_levels(self.n, self.L)

    def node_measures(self) -> np.ndarray:
        return _node_measures(self.n, self.L)

    def node_index(self, cube: "DyadicCube") -> int:
        self.check(cube)
        return self.offset(cube.level) + cube.morton

    def node_cube(self, node: int) -> "DyadicCube":
        k = int(_node_levels(self.n, self.L)[node])
        return DyadicCube.from_morton(k, int(node - self.offset(k)), self.n)

    def check(self, cube: "DyadicCube") -> None:
        if len(cube.index) != self.n:
            raise GridError(f"cube {cube} has dimension {len(cube.index)}, grid has {self.n}")
        if cube.level > self.L:
            raise GridError(f"cube level {cube.level} exceeds grid depth {self.L}")

    def cubes(self, level: int | None = None) -> Iterator["DyadicCube"]:
        """All cubes, by level then lexicographic index."""
        levels = range(self.L + 1) if level is None else [level]
        for k in levels:
            for lex in range(1 << (self.n * k)):
                yield DyadicCube.from_lex(k, lex, self.n)

    def cells(self, cube: "DyadicCube") -> np.ndarray:
        """Lexicographic indices of the finest cells inside ``cube`` (sorted).

        Contiguous when n = 1; for n > 1 the contiguous block is the Morton
        range returned by ``morton_range``.
        """
        lo, hi = self.morton_range(cube)
        return np.sort(_node_lex_keys(self.n, self.L)[self.offset(self.L) + lo:self.offset(self.L) + hi])

    def morton_range(self, cube: "DyadicCube") -> tuple[int, int]:
        self.check(cube)
        span = 1 << (self.n * (self.L - cube.level))
        return cube.morton * span, (cube.morton + 1) * span

    def to_morton(self, values: np.ndarray) -> np.ndarray:
        out = np.empty(self.ncells, dtype=np.float64)
        out[self.lex_to_morton] = values
        return out

    def from_morton(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[self.lex_to_morton]

    def upsweep(self, morton_values: np.ndarray) -> np.ndarray:
        """Cube sums of per-cell values (not yet multiplied by the cell measure)."""
        return kernels.pyramid_sums(np.ascontiguousarray(morton_values, dtype=np.float64), self.n, self.L)

    def downsweep(self, coef: np.ndarray) -> np.ndarray:
        """Per cell (Morton order): sum of ``coef`` over all cubes containing the cell."""
        return kernels.broadcast_sum(np.ascontiguousarray(coef, dtype=np.float64), self.n, self.L)

    def node_lex_keys(self) -> np.ndarray:
        """Per node, the lexicographic index of its cube within its level."""
        return _node_lex_keys(self.n, self.L)


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube ``2^{-level} * ([0,1)^n + index)``."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.level < 0:
            raise GridError(f"negative cube level {self.level}")
        for i in self.index:
            if not 0 <= i < (1 << self.level):
                raise GridError(f"index {self.index} out of range for level {self.level}")

    @classmethod
    def root(cls, n: int = 1) -> "DyadicCube":
        return cls(0, (0,) * n)

    @classmethod
    def from_lex(cls, level: int, lex: int, n: int) -> "DyadicCube":
        mask = (1 << level) - 1
        return cls(level, tuple((lex >> (level * (n - 1 - j))) & mask for j in range(n)))

    @classmethod
    def from_morton(cls, level: int, code: int, n: int) -> "DyadicCube":
        idx = [0] * n
        for bit in range(level):
            for j in range(n - 1, -1, -1):
                idx[j] |= (code & 1) << bit
                code >>= 1
        return cls(level, tuple(idx))

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.n * self.level)

    @property
    def lex(self) -> int:
        out = 0
        for i in self.index:
            out = (out << self.level) | i
        return out

    @property
    def morton(self) -> int:
        code = 0
        for bit in range(self.level - 1, -1, -1):
            for i in self.index:
                code = (code << 1) | ((i >> bit) & 1)
        return code

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GridError("the root cube has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def children(self) -> list["DyadicCube"]:
        out = []
        for code in range(1 << self.n):
            bits = [(code >> (self.n - 1 - j)) & 1 for j in range(self.n)]
            out.append(DyadicCube(self.level + 1, tuple(2 * i + b for i, b in zip(self.index, bits))))
        return out

    def contains(self, other: "DyadicCube") -> bool:
        """Non-strict inclusion ``other ⊆ self``."""
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def to_json(self) -> dict:
        return {"k": self.level, "i": list(self.index)}

    @classmethod
    def from_json(cls, obj: dict) -> "DyadicCube":
        return cls(int(obj["k"]), tuple(obj["i"]))

    def __str__(self) -> str:
        if self.n == 1:
            a = self.index[0]
            return f"[{a}/{1 << self.level},{a + 1}/{1 << self.level})"
        return f"Q(k={self.level}, i={self.index})"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant data on the finest cells, lexicographic order."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size != self.spec.ncells:
            raise GridError(f"expected {self.spec.ncells} values for n={self.spec.n}, L={self.spec.L}, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise GridError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, spec: GridSpec, c: float = 1.0):
        return cls(spec, np.full(spec.ncells, float(c)))

    @classmethod
    def from_morton(cls, spec: GridSpec, morton_values: np.ndarray):
        return cls(spec, spec.from_morton(morton_values))

    @cached_property
    def morton(self) -> np.ndarray:
        out = self.spec.to_morton(self.values)
        out.setflags(write=False)
        return out

    @cached_property
    def integrals(self) -> np.ndarray:
        """Pyramid of ``∫_Q f`` for every cube."""
        out = self.spec.upsweep(self.morton) * self.spec.cell_measure
        out.setflags(write=False)
        return out

    @cached_property
    def averages(self) -> np.ndarray:
        out = self.integrals / self.spec.node_measures()
        out.setflags(write=False)
        return out

    def integral(self, cube: DyadicCube) -> float:
        return float(self.integrals[self.spec.node_index(cube)])

    def avg(self, cube: DyadicCube) -> float:
        return float(self.averages[self.spec.node_index(cube)])

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            _same_grid(self, other)
            return GridFunction(self.spec, self.values * other.values)
        return GridFunction(self.spec, self.values * float(other))

    __rmul__ = __mul__

    def abs(self) -> "GridFunction":
        return GridFunction(self.spec, np.abs(self.values))

    def to_json(self) -> dict:
        return {"n": self.spec.n, "L": self.spec.L, "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict):
        try:
            spec = GridSpec(int(obj["n"]), int(obj["L"]))
            values = obj["values"]
        except (KeyError, TypeError) as exc:
            raise GridError(f"grid function JSON needs keys n, L, values: {exc}") from None
        if len(values) != spec.ncells:
            raise GridError(f"values has {len(values)} entries, expected 2^(nL) = {spec.ncells}")
        return cls(spec, np.asarray(values, dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


class Weight(GridFunction):
    """Nonnegative grid function with positive total mass."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise GridError("weights must be nonnegative")
        if not np.any(self.values > 0):
            raise GridError("weights must have at least one positive entry")

    def mass(self, cube: DyadicCube) -> float:
        return self.integral(cube)

    def __mul__(self, other):
        out = GridFunction.__mul__(self, other)
        if isinstance(other, Weight) or (not isinstance(other, GridFunction) and float(other) > 0):
            return Weight(out.spec, out.values)
        return out

    __rmul__ = __mul__


def _same_grid(*fs: GridFunction) -> GridSpec:
    spec = fs[0].spec
    for f in fs[1:]:
        if f.spec != spec:
            raise GridError(f"grid mismatch: {spec} vs {f.spec}")
    return spec


def cells(spec: GridSpec, cube: DyadicCube) -> np.ndarray:
    return spec.cells(cube)


def integral(f: GridFunction, cube: DyadicCube) -> float:
    return f.integral(cube)


def avg(f: GridFunction, cube: DyadicCube) -> float:
    return f.avg(cube)


def weighted_averages(f: GridFunction, sigma: Weight) -> np.ndarray:
    """Pyramid of ⟨f⟩_Q^σ; cubes with σ(Q) = 0 get 0."""
    spec = _same_grid(f, sigma)
    num = GridFunction(spec, f.values * sigma.values).integrals
    den = sigma.integrals
    out = np.zeros(spec.nnodes)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    return out


def wavg(f: GridFunction, sigma: Weight, cube: DyadicCube) -> float:
    _same_grid(f, sigma)
    den = sigma.integral(cube)
    if den == 0:
        return 0.0
    return float(GridFunction(f.spec, f.values * sigma.values).integral(cube) / den)


def as_node_mask(spec: GridSpec, cubes) -> np.ndarray:
    """Boolean pyramid mask for a cube family (``None`` means every cube)."""
    if cubes is None:
        return np.ones(spec.nnodes, dtype=bool)
    mask = getattr(cubes, "mask", None)
    if mask is not None:
        if cubes.spec != spec:
            raise GridError(f"grid mismatch: {spec} vs {cubes.spec}")
        return mask
    if isinstance(cubes, np.ndarray) and cubes.dtype == bool:
        if cubes.shape != (spec.nnodes,):
            raise GridError("node mask has wrong length")
        return cubes
    out = np.zeros(spec.nnodes, dtype=bool)
    for q in cubes:
        out[spec.node_index(q)] = True
    return out


def pick_node(spec: GridSpec, values: np.ndarray, candidates: np.ndarray) -> int:
    """Argmax over ``candidates`` with ties broken by level, then lexicographic index."""
    idx = np.flatnonzero(candidates)
    best = values[idx].max()
    tied = idx[values[idx] == best]
    if tied.size == 1:
        return int(tied[0])
    levels = spec.node_levels()[tied]
    tied = tied[levels == levels.min()]
    keys = spec.node_lex_keys()[tied]
    return int(tied[np.argmin(keys)])


def iter_cubes(spec: GridSpec, mask: np.ndarray) -> Iterable[DyadicCube]:
    for node in np.flatnonzero(mask):
        yield spec.node_cube(int(node))


def log2_exact(x: float) -> int | None:
    """Exponent m when x is within 1e-12 (relative) of 2^m, else None."""
    m = round(math.log2(x))
    return m if abs(x - 2.0 ** m) <= 1e-12 * 2.0 ** m else None
