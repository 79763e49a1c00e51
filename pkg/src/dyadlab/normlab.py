"""Weighted norms, operator-norm estimation and theorem right-hand sides.

Operator norms are for ``A_S^r(·σ) : L^p(σ) -> L^p(w)``. ``op_norm_lower``
certifies lower bounds by ascent; ``exact_norm_22`` is the exact value for
p = r = 2, the square root of the top generalized eigenvalue of the quadratic
form ``Σ_Q ⟨fσ⟩_Q^2 w(Q)`` against ``‖f‖_{L^2(σ)}^2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import (BumpFunction, ExponentSet, ainfty_constant, ap_constant, entropy_bump_mult,
                        entropy_bump_sep, local_ainfty_pyramid)
from .grid import GridError, GridFunction, Weight, _same_grid
from .sparse import SparseCollection, apply

log = logging.getLogger(__name__)


class HypothesisError(ValueError):
    """A theorem's case condition or bump integrability hypothesis fails."""


def lp_norm(g: GridFunction, w: Weight, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    spec = _same_grid(g, w)
    return float(np.sum(np.abs(g.values) ** p * w.values) * spec.cell_measure) ** (1.0 / p)


class _Operator:
    """Morton-order evaluation of Ψ(f) = ‖A_S^r(fσ)‖_{L^p(w)}^p and its ascent direction."""

    def __init__(self, S: SparseCollection, w: Weight, sigma: Weight, p: float, r: float):
        self.spec = S.spec
        self.mask = S.mask
        self.w = w.morton
        self.sigma = sigma.morton
        self.p, self.r = p, r
        self.h = self.spec.cell_measure
        self.inv_meas = 1.0 / self.spec.node_measures()

    def averages(self, cellvals):
        return self.spec.upsweep(cellvals) * self.h * self.inv_meas

    def power_sum(self, f):
        """U = Σ_{Q∋c} ⟨fσ⟩_Q^r and the averages used to build it."""
        avg = self.averages(f * self.sigma)
        return self.spec.downsweep(np.where(self.mask, avg, 0.0) ** self.r), avg

    def value(self, f) -> float:
        U, _ = self.power_sum(f)
        return float(np.sum(self.w * np.maximum(U, 0.0) ** (self.p / self.r)) * self.h) ** (1.0 / self.p)

    def direction(self, f):
        """D with ∂Ψ/∂f = p σ |c| D (so D = λ f^{p-1} at critical points)."""
        U, avg = self.power_sum(f)
        pos = U > 0
        upow = np.zeros_like(U)
        upow[pos] = U[pos] ** (self.p / self.r - 1.0)
        inner = self.averages(self.w * upow)
        coef = np.where(self.mask, avg ** (self.r - 1.0) * inner, 0.0)
        return self.spec.downsweep(coef)

    def normalize(self, f):
        nrm = float(np.sum(self.sigma * f ** self.p) * self.h) ** (1.0 / self.p)
        return f / nrm


@dataclass
class NormEstimate:
    value: float
    f: GridFunction = field(repr=False)
    trace: dict = field(default_factory=dict, repr=False)


def op_norm_lower(S: SparseCollection, w: Weight, sigma: Weight, p: float, r: float = 2.0, restarts: int = 16,
                  iters: int = 400, step: float = 0.25, seed: int | None = 0) -> NormEstimate:
    """Lower bound for ‖A_S^r(·σ)‖_{L^p(σ)→L^p(w)} by multiplicative ascent.

    Each step is ``f <- f * (D / f^{p-1})^{step/(p-1)}`` followed by
    renormalization in L^p(σ); ``step = 1`` is the nonlinear power method.
    Restart 0 starts from the constant function, the rest from seeded
    random positive data. The reported value is re-evaluated from the
    returned maximizer.
    """
    ExponentSet(p, r)
    spec = _same_grid(w, sigma)
    if S.spec != spec:
        raise GridError("sparse collection lives on a different grid")
    if not np.any(sigma.values > 0):
        raise ValueError("σ is identically zero")
    op = _Operator(S, w, sigma, p, r)
    support = op.sigma > 0
    expo = step / (p - 1.0)
    children = np.random.SeedSequence(seed).spawn(max(restarts, 1))

    best_val, best_f = -1.0, None
    per_restart = []
    for i in range(max(restarts, 1)):
        if i == 0:
            f = np.where(support, 1.0, 0.0)
        else:
            f = np.where(support, np.random.default_rng(children[i]).uniform(0.05, 1.0, spec.ncells), 0.0)
        f = op.normalize(f)
        run_best, run_f = op.value(f), f
        for _ in range(iters):
            D = op.direction(f)
            live = f > 0
            ratio = np.zeros_like(f)
            ratio[live] = D[live] / f[live] ** (p - 1.0)
            f = np.where(live, f * ratio ** expo, 0.0)
            if not np.any(f > 0):
                break
            f = op.normalize(f)
            val = op.value(f)
            if val > run_best:
                run_best, run_f = val, f
        per_restart.append(run_best)
        if run_best > best_val:
            best_val, best_f = run_best, run_f

    fstar = GridFunction.from_morton(spec, best_f)
    value = lp_norm(apply(S, fstar, sigma, r), w, p) / lp_norm(fstar, sigma, p)
    trace = {"restarts": max(restarts, 1), "iterations": iters, "step": step, "best_per_restart": per_restart}
    return NormEstimate(value, fstar, trace)


def exact_norm_22(S: SparseCollection, w: Weight, sigma: Weight, tol: float = 1e-10, maxiter: int = 500_000) -> float:
    """√λ_max of Kv = λGv by power iteration on G^{-1}K (matrix-free tree sweeps).

    G^{-1}K v(c) = Σ_{Q∈S, Q∋c} ⟨w⟩_Q ⟨vσ⟩_Q on supp σ. The iteration stops
    when the extrapolated remaining change of the Rayleigh quotient falls
    below ``tol`` relative.
    """
    spec = _same_grid(w, sigma)
    if not np.any(sigma.values > 0):
        raise ValueError("σ is identically zero")
    op = _Operator(S, w, sigma, 2.0, 2.0)
    wavg = np.where(S.mask, w.averages, 0.0)
    support = op.sigma > 0
    G = op.sigma * op.h

    def B(v):
        return np.where(support, spec.downsweep(wavg * op.averages(v * op.sigma)), 0.0)

    v = np.where(support, 1.0, 0.0)
    v /= math.sqrt(float(np.sum(G * v * v)))
    lam_prev, delta_prev = 0.0, None
    for it in range(maxiter):
        Bv = B(v)
        lam = float(np.sum(G * v * Bv))
        if lam == 0.0:
            return 0.0
        delta = lam - lam_prev
        if delta_prev is not None and delta_prev > 0:
            rate = min(max(delta / delta_prev, 0.0), 0.999999)
            if abs(delta) * (1.0 + rate / (1.0 - rate)) <= tol * lam:
                return math.sqrt(lam)
        elif it > 0 and abs(delta) <= tol * lam * 1e-3:
            return math.sqrt(lam)
        lam_prev, delta_prev = lam, delta
        v = Bv / math.sqrt(float(np.sum(G * Bv * Bv)))
    log.warning("exact_norm_22: no convergence after %d iterations", maxiter)
    return math.sqrt(lam)


def carleson_ratio(f: GridFunction, sigma: Weight, S: SparseCollection, p: float, eps: BumpFunction,
                   gamma: float = 1.0) -> float:
    """Σ_{Q∈S} (⟨f⟩_Q^σ)^p σ(Q)/ρ_{σ,ε}(Q) divided by ‖f‖_{L^p(σ)}^p.

    The embedding is only claimed for ∫_1^∞ dt/(t ε(t)^gamma) < ∞ (gamma = 1
    for the embedding itself); other bumps are rejected.
    """
    if not eps.converges(gamma):
        raise HypothesisError(
            f"Carleson embedding needs ∫_1^∞ dt/(t ε(t)^{gamma:g}) < ∞; "
            f"ε = (1+ln t)^{eps.beta:g} gives beta*gamma = {eps.beta * gamma:g} <= 1")
    spec = _same_grid(f, sigma)
    if np.any(f.values < 0):
        raise ValueError("carleson_ratio expects f >= 0")
    norm_p = lp_norm(f, sigma, p) ** p
    if norm_p == 0:
        raise ValueError("‖f‖_{L^p(σ)} = 0")
    rs = local_ainfty_pyramid(sigma)
    live = S.mask & np.isfinite(rs)
    rs_live = rs[live]
    num = GridFunction(spec, f.values * sigma.values).integrals[live]
    mass = sigma.integrals[live]
    lhs = float(np.sum((num / mass) ** p * mass / (rs_live * eps(rs_live))))
    return lhs / norm_p


def testing_constant(S: SparseCollection, w: Weight, sigma: Weight, p: float) -> float:
    """sup_{R∈S} ‖Σ_{Q∈S, Q⊆R} ⟨σ⟩_Q 1_Q‖_{L^p(w)} / σ(R)^{1/p}."""
    spec = _same_grid(w, sigma)
    coef = np.where(S.mask, sigma.averages, 0.0)
    total = spec.downsweep(coef)
    # cumulative coefficient of all cubes containing each node
    cum = np.empty(spec.nnodes)
    cum[0] = coef[0]
    for k in range(1, spec.L + 1):
        cum[spec.level_slice(k)] = np.repeat(cum[spec.level_slice(k - 1)], spec.branching) + coef[spec.level_slice(k)]
    wm = w.morton
    best = None
    for node in np.flatnonzero(S.mask):
        mass = sigma.integrals[node]
        if mass <= 0:
            continue
        cube = spec.node_cube(int(node))
        lo, hi = spec.morton_range(cube)
        above = cum[node] - coef[node]
        vals = total[lo:hi] - above
        ratio = float(np.sum(np.abs(vals) ** p * wm[lo:hi]) * spec.cell_measure) ** (1 / p) / mass ** (1 / p)
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise ValueError("testing_constant: every cube of S has σ(R) = 0")
    return best


def bump_hypotheses(p: float, r: float, eps: BumpFunction | None, eta: BumpFunction | None) -> dict[str, str | None]:
    """Failure message (or None) for each entropy bound's integrability hypothesis."""
    out: dict[str, str | None] = {}
    if eps is not None:
        if p > r:
            out["mult"] = None if eps.converges(1.0) else (
                f"multiplicative entropy bound (p > r) needs ∫ dt/(t ε(t)) < ∞: beta_eps = {eps.beta:g} <= 1")
        else:
            out["mult"] = None if eps.converges(1.0 / p) else (
                f"multiplicative entropy bound (p <= r) needs ∫ dt/(t ε(t)^(1/p)) < ∞: beta_eps/p = {eps.beta / p:g} <= 1")
        msgs = []
        if not eps.converges(1.0 / p):
            msgs.append(f"∫ dt/(t ε(t)^(1/p)) < ∞ fails (beta_eps/p = {eps.beta / p:g} <= 1)")
        if p > r:
            if eta is None:
                msgs.append("separated entropy bound (p > r) needs an η bump")
            elif not eta.converges(1.0 / r - 1.0 / p):
                msgs.append(f"∫ dt/(t η(t)^(1/r-1/p)) < ∞ fails (beta_eta*(1/r-1/p) = "
                            f"{eta.beta * (1.0 / r - 1.0 / p):g} <= 1)")
        out["sep"] = None if not msgs else f"separated entropy bound ({'p > r' if p > r else 'p <= r'}): " + "; ".join(msgs)
    return out


@dataclass
class Bounds:
    p: float
    r: float
    ap_S: float
    ainf_w_S: float
    ainf_sigma_S: float
    B_p: float | None = None
    B_r: float | None = None
    B_m1: float | None = None
    B_ent: float | None = None
    B_ent_all: float | None = None
    B_sep: float | None = None
    B_sep_all: float | None = None
    argmax: dict = field(default_factory=dict)

    def main_bound(self) -> float:
        return self.B_p if self.p > self.r else self.B_r


def theorem_rhs(w: Weight, sigma: Weight, p: float, r: float, S: SparseCollection,
                eps: BumpFunction | None = None, eta: BumpFunction | None = None, strict: bool = True) -> Bounds:
    """Right-hand sides of the A_p–A_∞ and entropy bounds, characteristics restricted to S.

    B_p (p > r) and B_r (p <= r) use [w,σ]_{A_p,S} and [·]_{A_∞,S}; B_m1 is the
    r = 2 two-case square-function bound with the same characteristics. The
    entropy bounds are reported both over S and over all cubes. With
    ``strict`` a failed bump hypothesis raises HypothesisError; otherwise the
    bound is left as None.
    """
    ExponentSet(p, r)
    ap = ap_constant(w, sigma, p, S)
    aw = ainfty_constant(w, S)
    asg = ainfty_constant(sigma, S)
    out = Bounds(p, r, ap.value, aw.value, asg.value,
                 argmax={"ap": ap.cube, "ainf_w": aw.cube, "ainf_sigma": asg.cube})
    if p > r:
        out.B_p = ap.value ** (1 / p) * (aw.value ** (1 / r - 1 / p) + asg.value ** (1 / p))
    else:
        out.B_r = ap.value ** (1 / p) * asg.value ** (1 / p)
    if p <= 2:
        out.B_m1 = ap.value ** (1 / p) * asg.value ** (1 / p)
    else:
        out.B_m1 = ap.value ** (1 / p) * (aw.value ** (0.5 - 1 / p) + asg.value ** (1 / p))
    failures = bump_hypotheses(p, r, eps, eta)
    if strict:
        bad = [m for m in failures.values() if m]
        if bad:
            raise HypothesisError("; ".join(bad))
    if eps is not None and failures.get("mult") is None:
        out.B_ent = entropy_bump_mult(w, sigma, p, r, eps, S).value
        out.B_ent_all = entropy_bump_mult(w, sigma, p, r, eps).value
    if eps is not None and failures.get("sep") is None:
        eta_ = eta if eta is not None else eps
        out.B_sep = entropy_bump_sep(w, sigma, p, r, eps, eta_, S).value
        out.B_sep_all = entropy_bump_sep(w, sigma, p, r, eps, eta_).value
    return out


__all__ = [
    "Bounds", "HypothesisError", "NormEstimate", "bump_hypotheses", "carleson_ratio", "exact_norm_22",
    "lp_norm", "op_norm_lower", "testing_constant", "theorem_rhs",
]
