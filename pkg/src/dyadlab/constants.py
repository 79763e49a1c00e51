"""Weight characteristics and entropy bump functionals on the dyadic tree.

The maximal function throughout is the dyadic local one: for a cube Q and a
cell c ⊆ Q, ``M(σ1_Q)(c) = max{⟨σ⟩_{Q'} : c ⊆ Q' ⊆ Q}``. Suprema run over a
cube family (default: every cube of the grid) and skip cubes where the
quantity is undefined because a weight has zero mass there.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .grid import DyadicCube, GridError, GridSpec, Weight, _same_grid, as_node_mask, pick_node


class Characteristic(NamedTuple):
    value: float
    cube: DyadicCube


@dataclass(frozen=True)
class BumpFunction:
    """ε(t) = (1 + ln t)^beta on [1, ∞); ε(1) = 1."""

    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"bump exponent must be >= 0, got {self.beta}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 1):
            raise ValueError("bump functions are evaluated on t >= 1")
        out = (1.0 + np.log(t)) ** self.beta
        return float(out) if out.ndim == 0 else out

    def converges(self, gamma: float = 1.0) -> bool:
        """Whether ∫_1^∞ dt / (t ε(t)^gamma) is finite."""
        return bump_integral_converges(self.beta, gamma)


@dataclass(frozen=True)
class ExponentSet:
    p: float
    r: float = 2.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.r >= 1:
            raise ValueError(f"r must be >= 1, got {self.r}")

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1)

    @property
    def q(self) -> float:
        """(p/r)' = p/(p-r); only defined for p > r."""
        if not self.p > self.r:
            raise ValueError(f"q = (p/r)' needs p > r (p={self.p}, r={self.r})")
        return self.p / (self.p - self.r)

    @property
    def w_exponent(self) -> float:
        """Power 1/r - 1/p on ρ_w in the bump constants; 0 when p <= r."""
        return max(1.0 / self.r - 1.0 / self.p, 0.0)


def bump_integral_converges(beta: float, gamma: float) -> bool:
    """∫_1^∞ dt/(t (1+ln t)^{beta*gamma}) < ∞  iff  beta*gamma > 1."""
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    return beta * gamma > 1


def local_ainfty_pyramid(w: Weight) -> np.ndarray:
    """ρ_w(Q) = ∫_Q M(w1_Q) / w(Q) for every cube; NaN where w(Q) = 0."""
    spec = w.spec
    maxint = kernels.suffix_max_integrals(np.ascontiguousarray(w.averages), spec.n, spec.L) * spec.cell_measure
    mass = w.integrals
    out = np.full(spec.nnodes, np.nan)
    pos = mass > 0
    out[pos] = maxint[pos] / mass[pos]
    # ρ >= 1 analytically; only rounding noise is clipped
    noise = pos & (out < 1.0) & (out >= 1.0 - 1e-12)
    out[noise] = 1.0
    return out


def dyadic_maximal(sigma: Weight, cube: DyadicCube) -> np.ndarray:
    """M(σ1_Q) on the cells of ``cube``, aligned with ``spec.cells(cube)``."""
    spec = sigma.spec
    spec.check(cube)
    block = kernels.chain_max(np.ascontiguousarray(sigma.averages), spec.n, spec.L, cube.level, cube.morton)
    lo, hi = spec.morton_range(cube)
    lex = spec.node_lex_keys()[spec.offset(spec.L) + lo:spec.offset(spec.L) + hi]
    return block[np.argsort(lex)]


def rho(sigma: Weight, cube: DyadicCube) -> float:
    mass = sigma.integral(cube)
    if mass <= 0:
        raise GridError(f"ρ_σ undefined on {cube}: σ(Q) = 0")
    val = float(dyadic_maximal(sigma, cube).sum()) * sigma.spec.cell_measure / mass
    return 1.0 if 1.0 - 1e-12 <= val < 1.0 else val


def rho_eps(sigma: Weight, cube: DyadicCube, eps: BumpFunction) -> float:
    r = rho(sigma, cube)
    return r * eps(r)


def _sup(spec: GridSpec, values: np.ndarray, cubes, what: str) -> Characteristic:
    family = as_node_mask(spec, cubes) & np.isfinite(values)
    if not family.any():
        raise GridError(f"{what}: empty cube family (or all cubes have zero mass)")
    node = pick_node(spec, values, family)
    return Characteristic(float(values[node]), spec.node_cube(node))


def ap_products(w: Weight, sigma: Weight, p: float) -> np.ndarray:
    """⟨w⟩_Q ⟨σ⟩_Q^{p-1} for every cube."""
    _same_grid(w, sigma)
    return w.averages * sigma.averages ** (p - 1)


def ap_constant(w: Weight, sigma: Weight, p: float, cubes=None) -> Characteristic:
    """[w,σ]_{A_p} restricted to ``cubes`` (all dyadic cubes by default)."""
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    return _sup(w.spec, ap_products(w, sigma, p), cubes, "ap_constant")


def ainfty_constant(w: Weight, cubes=None) -> Characteristic:
    """Fujii–Wilson [w]_{A_∞}: sup of ρ_w(Q) over the family."""
    return _sup(w.spec, local_ainfty_pyramid(w), cubes, "ainfty_constant")


def _bump_terms(w: Weight, sigma: Weight, p: float, r: float, eps: BumpFunction, eta: BumpFunction | None):
    spec = _same_grid(w, sigma)
    ex = ExponentSet(p, r)
    rw = local_ainfty_pyramid(w)
    rs = local_ainfty_pyramid(sigma)
    ok = np.isfinite(rw) & np.isfinite(rs)
    base = np.full(spec.nnodes, np.nan)
    base[ok] = w.averages[ok] ** (1 / p) * sigma.averages[ok] ** (1 / ex.p_dual)
    rs_eps = np.where(ok, rs * eps(np.where(ok, rs, 1.0)), np.nan)
    bump_w = eta if eta is not None else eps
    rw_bump = np.where(ok, rw * bump_w(np.where(ok, rw, 1.0)), np.nan)
    return ex, base, rs_eps ** (1 / p), rw_bump ** ex.w_exponent if p > r else None


def entropy_bump_mult(w: Weight, sigma: Weight, p: float, r: float, eps: BumpFunction, cubes=None) -> Characteristic:
    """Multiplicative bump ⌈w,σ⌉_{p,r,ε}.

    sup ⟨w⟩^{1/p} ⟨σ⟩^{1/p'} ρ_{w,ε}^{1/r-1/p} ρ_{σ,ε}^{1/p}, where the ρ_w
    factor is present only for p > r (with r = 2 this is the two-case form).
    """
    _, base, sig_term, w_term = _bump_terms(w, sigma, p, r, eps, None)
    vals = base * sig_term if w_term is None else base * sig_term * w_term
    return _sup(w.spec, vals, cubes, "entropy_bump_mult")


def entropy_bump_sep(w: Weight, sigma: Weight, p: float, r: float, eps: BumpFunction,
                     eta: BumpFunction, cubes=None) -> Characteristic:
    """Separated bump ⌊w,σ⌋_{p,r,ε,η}: the ρ_{w,η} and ρ_{σ,ε} terms are added."""
    _, base, sig_term, w_term = _bump_terms(w, sigma, p, r, eps, eta)
    vals = base * sig_term if w_term is None else base * (w_term + sig_term)
    return _sup(w.spec, vals, cubes, "entropy_bump_sep")


def log2_bucket(x: np.ndarray) -> np.ndarray:
    """Integer a with 2^{a-1} < x <= 2^a; values within 1e-12 of 2^m map to m."""
    x = np.asarray(x, dtype=float)
    t = np.log2(x)
    m = np.round(t)
    snap = np.abs(x - np.exp2(m)) <= 1e-12 * np.exp2(m)
    return np.where(snap, m, np.ceil(t)).astype(np.int64)


__all__ = [
    "BumpFunction", "Characteristic", "ExponentSet", "ainfty_constant", "ap_constant", "ap_products",
    "bump_integral_converges", "dyadic_maximal", "entropy_bump_mult", "entropy_bump_sep",
    "local_ainfty_pyramid", "log2_bucket", "rho", "rho_eps",
]
