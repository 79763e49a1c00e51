"""Instance generation, experiment drivers and CSV/JSON reports."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import BumpConfig, ConfigError, ExperimentConfig, WeightSpec
from .constants import BumpFunction, ainfty_constant, ap_constant
from .corona import (bilinear_form, corona_I_II, parallel_projection, principal_cubes, quasi_orthogonality_ratio,
                     slice_ap, slice_entropy)
from .grid import GridError, GridFunction, GridSpec, Weight
from .normlab import (HypothesisError, bump_hypotheses, carleson_ratio, exact_norm_22, lp_norm, op_norm_lower,
                      theorem_rhs)
from .sparse import SparseCollection, apply, chain, generate, stopping

CORONA_SLACK = 1e-12
ORACLE_SLACK = 1e-9
SHARP_SLOPE_MAX = 1.05


def make_power_weight(delta: float, spec: GridSpec) -> Weight:
    """Cell averages of x^{delta-1}: (b^δ - a^δ) / (δ (b - a)) on [a, b)."""
    if spec.n != 1:
        raise GridError("power weights are defined for n = 1 only")
    if not 0 < delta <= 1:
        raise ValueError(f"power exponent must lie in (0, 1], got {delta}")
    edges = np.arange(spec.ncells + 1) / spec.ncells
    return Weight(spec, np.diff(edges ** delta) / (delta * np.diff(edges)))


def dual_weight(w: Weight, p: float) -> Weight:
    """w^{-1/(p-1)} cellwise."""
    if np.any(w.values <= 0):
        raise GridError("the dual weight needs w > 0 on every cell")
    return Weight(w.spec, w.values ** (-1.0 / (p - 1.0)))


@dataclass
class Instance:
    index: int
    spec: GridSpec
    w: Weight
    sigma: Weight
    S: SparseCollection
    f: GridFunction
    g: GridFunction


def _weight(spec: GridSpec, ws: WeightSpec, cfg: ExperimentConfig, i: int, stream: int, path: str) -> Weight | None:
    params = ws.params
    if ws.kind == "constant":
        return Weight.constant(spec, float(params.get("value", 1.0)))
    if ws.kind == "power":
        return make_power_weight(float(params["exponent"]), spec)
    if ws.kind == "random_lognormal":
        seed = params.get("seed", cfg.seed)
        rng = np.random.default_rng([seed, i, stream])
        return Weight(spec, rng.lognormal(float(params.get("mu", 0.0)), float(params.get("s", 1.0)), spec.ncells))
    if ws.kind == "file":
        try:
            w = Weight.load(params["path"])
        except (OSError, GridError, ValueError) as exc:
            raise ConfigError(f"{path}.params.path: {exc}") from None
        if w.spec != spec:
            raise ConfigError(f"{path}.params.path: file grid {w.spec} does not match {spec}")
        return w
    return None


def build_instance(cfg: ExperimentConfig, i: int) -> Instance:
    spec = GridSpec(cfg.grid.n, cfg.grid.L)
    p = cfg.exponents.p
    w = _weight(spec, cfg.weights.w, cfg, i, 1, "weights.w")
    sigma = _weight(spec, cfg.weights.sigma, cfg, i, 2, "weights.sigma")
    if w is None:
        w = dual_weight(sigma, p / (p - 1.0))
    if sigma is None:
        sigma = dual_weight(w, p)
    rng_f = np.random.default_rng([cfg.seed, i, 3])
    rng_g = np.random.default_rng([cfg.seed, i, 4])
    f = GridFunction(spec, rng_f.lognormal(0.0, 1.0, spec.ncells))
    g = GridFunction(spec, rng_g.lognormal(0.0, 1.0, spec.ncells))
    sp = cfg.sparse
    sseed = [cfg.seed if sp.seed is None else sp.seed, i, 5]
    if sp.kind == "stopping":
        source = {"w": w, "sigma": sigma}.get(sp.params.get("of", "random"))
        if source is None:
            source = GridFunction(spec, np.random.default_rng(sseed).lognormal(0.0, float(sp.params.get("s", 1.5)),
                                                                                 spec.ncells))
        S = stopping(source, float(sp.params.get("factor", 2.0)))
    else:
        S = generate(sp.kind, spec, sp.params, sseed)
    return Instance(i, spec, w, sigma, S, f, g)


@dataclass
class Report:
    kind: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @staticmethod
    def _cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([self._cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "columns": self.columns, "rows": self.rows,
                           "summary": self.summary, "violations": self.violations}, indent=1, default=str)

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()

    def write(self, path, fmt: str) -> None:
        Path(path).write_text(self.render(fmt))


def _ratio(a, b):
    return a / b if a is not None and b not in (None, 0) else None


def _cube(q) -> str:
    return f"k={q.level};i={'/'.join(str(i) for i in q.index)}"


def bump_pair(cfg: ExperimentConfig) -> tuple[BumpFunction, BumpFunction]:
    b = cfg.bumps if cfg.bumps is not None else BumpConfig()
    return BumpFunction(b.beta_eps), BumpFunction(b.beta_eta)


def check_case_conditions(cfg: ExperimentConfig) -> None:
    """Bump hypotheses for the configured (p, r); raises ConfigError listing every failed one."""
    if cfg.bumps is None:
        return
    eps, eta = bump_pair(cfg)
    failed = [f"bumps: {msg}" for msg in bump_hypotheses(cfg.exponents.p, cfg.exponents.r, eps, eta).values() if msg]
    if failed:
        raise ConfigError("\n".join(failed))


def _partition_ok(S: SparseCollection, families, expected: np.ndarray) -> bool:
    seen = np.zeros(S.spec.nnodes, dtype=np.int64)
    for fam in families:
        seen += fam.mask
    return bool(np.all(seen[expected] == 1) and np.all(seen[~expected] == 0))


def verify_instance(inst: Instance, cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    p, r = cfg.exponents.p, cfg.exponents.r
    S, w, sigma, f, g = inst.S, inst.w, inst.sigma, inst.f, inst.g
    opt = cfg.optimizer
    bad: list[str] = []
    eps, eta = bump_pair(cfg)
    bounds = theorem_rhs(w, sigma, p, r, S, eps if cfg.bumps else None, eta if cfg.bumps else None)
    est = op_norm_lower(S, w, sigma, p, r, opt.restarts, opt.iters, opt.step, [opt.seed, inst.index])
    bound = bounds.main_bound()
    row = {
        "instance": inst.index, "n": inst.spec.n, "L": inst.spec.L, "p": float(p), "r": float(r),
        "n_cubes": len(S),
        "ap_S": bounds.ap_S, "ainf_w_S": bounds.ainf_w_S, "ainf_sigma_S": bounds.ainf_sigma_S,
        "ap_all": ap_constant(w, sigma, p).value, "ainf_w_all": ainfty_constant(w).value,
        "ainf_sigma_all": ainfty_constant(sigma).value,
        "bound_kind": "B_p" if p > r else "B_r", "bound": bound, "B_m1": bounds.B_m1,
        "B_ent": bounds.B_ent, "B_ent_all": bounds.B_ent_all, "B_sep": bounds.B_sep, "B_sep_all": bounds.B_sep_all,
        "norm_lower": est.value,
    }
    row["ratio"] = _ratio(est.value, bound)
    row["ratio_m1"] = _ratio(est.value, bounds.B_m1) if r == 2 else None
    row["ratio_ent"] = _ratio(est.value, bounds.B_ent)
    row["ratio_sep"] = _ratio(est.value, bounds.B_sep)

    if p == 2 and r == 2:
        exact = exact_norm_22(S, w, sigma)
        row["exact_22"] = exact
        row["lower_le_exact"] = est.value <= exact * (1 + ORACLE_SLACK) + ORACLE_SLACK
        if not row["lower_le_exact"]:
            bad.append(f"instance {inst.index}: lower bound {est.value!r} exceeds exact norm {exact!r}")

    bil = bilinear_form(S, f, g, sigma, w, r)
    pointwise = float(np.sum(apply(S, f, sigma, r).values ** r * g.values * w.values) * inst.spec.cell_measure)
    row["bilinear"] = bil
    if not math.isclose(bil, pointwise, rel_tol=1e-10, abs_tol=0.0):
        bad.append(f"instance {inst.index}: bilinear form {bil!r} != pointwise {pointwise!r}")
    F = principal_cubes(f, sigma, S)
    G = principal_cubes(g, w, S)
    try:
        corona = parallel_projection(S, F, G)
        fibers_ok = sum(len(v) for v in corona.fibers.values()) == len(S)
    except AssertionError as exc:
        corona, fibers_ok = None, False
        bad.append(f"instance {inst.index}: {exc}")
    row["fibers_ok"] = fibers_ok
    if corona is not None:
        I, II = corona_I_II(S, f, g, sigma, w, r, corona)
        row["corona_I"], row["corona_II"] = I, II
        row["corona_ratio"] = bil / (2.0 ** (r + 1) * (I + II))
        row["corona_ok"] = bil <= 2.0 ** (r + 1) * (I + II) * (1 + CORONA_SLACK)
        if not row["corona_ok"]:
            bad.append(f"instance {inst.index}: corona inequality fails ({row['corona_ratio']!r})")
    row["qo_ratio"] = quasi_orthogonality_ratio(f, sigma, F, p)

    prod = w.averages * sigma.averages ** (p - 1)
    aps = slice_ap(S, w, sigma, p)
    ap_ok = _partition_ok(S, aps, S.mask & (prod > 0))
    for fam in aps:
        a = fam.coords[0]
        vals = prod[fam.mask]
        ap_ok &= bool(np.all((vals > 2.0 ** (a - 1) * (1 - 1e-12)) & (vals <= 2.0 ** a * (1 + 1e-12))))
    row["slice_ap_ok"] = ap_ok
    if not ap_ok:
        bad.append(f"instance {inst.index}: A_p buckets do not partition S")
    if p > r:
        ents = slice_entropy(S, w, sigma, p, r, eps, eta)
        ent_ok = _partition_ok(S, ents, S.mask) and all(fam.coords[1] >= 0 for fam in ents if fam.coords)
        row["slice_entropy_ok"] = ent_ok
        if not ent_ok:
            bad.append(f"instance {inst.index}: entropy slicing does not partition S")
    if eps.converges(1.0):
        row["carleson"] = carleson_ratio(f, sigma, S, p, eps)
    row["argmax_ap"] = _cube(bounds.argmax["ap"])
    row["argmax_ainf_w"] = _cube(bounds.argmax["ainf_w"])
    row["argmax_ainf_sigma"] = _cube(bounds.argmax["ainf_sigma"])
    return row, bad


VERIFY_COLUMNS = [
    "instance", "n", "L", "p", "r", "n_cubes", "ap_S", "ainf_w_S", "ainf_sigma_S", "ap_all", "ainf_w_all",
    "ainf_sigma_all", "bound_kind", "bound", "B_m1", "B_ent", "B_ent_all", "B_sep", "B_sep_all", "norm_lower",
    "ratio", "ratio_m1", "ratio_ent", "ratio_sep", "exact_22", "lower_le_exact", "bilinear", "corona_I",
    "corona_II", "corona_ratio", "corona_ok", "fibers_ok", "qo_ratio", "slice_ap_ok", "slice_entropy_ok",
    "carleson", "argmax_ap", "argmax_ainf_w", "argmax_ainf_sigma",
]


def _sup(rows, key):
    vals = [r[key] for r in rows if r.get(key) is not None]
    return max(vals) if vals else None


def run_verify(cfg: ExperimentConfig) -> Report:
    check_case_conditions(cfg)
    report = Report("verify", list(VERIFY_COLUMNS))
    for i in range(cfg.ensemble.instances):
        row, bad = verify_instance(build_instance(cfg, i), cfg)
        report.rows.append(row)
        report.violations.extend(bad)
    report.summary = {
        "instances": len(report.rows),
        "sup_ratio": _sup(report.rows, "ratio"),
        "sup_ratio_m1": _sup(report.rows, "ratio_m1"),
        "sup_ratio_ent": _sup(report.rows, "ratio_ent"),
        "sup_corona_ratio": _sup(report.rows, "corona_ratio"),
        "sup_qo_ratio": _sup(report.rows, "qo_ratio"),
        "sup_carleson": _sup(report.rows, "carleson"),
        "violations": len(report.violations),
    }
    return report


def sharpness_cases(spec: GridSpec, delta: float, orientations, families):
    """(label, w, sigma, S) for each requested orientation and sparse family at exponent delta."""
    power = make_power_weight(delta, spec)
    dual = dual_weight(power, 2.0)
    out = []
    for orient in orientations:
        w, sigma = (power, dual) if orient == "dual" else (dual, power)
        for fam in families:
            if fam == "chain":
                S = chain(spec, spec.L)
            elif fam == "stopping_w":
                S = stopping(w)
            else:
                S = stopping(sigma)
            out.append((f"{orient}/{fam}", w, sigma, S))
    return out


def run_sharpness(cfg: ExperimentConfig) -> Report:
    """p = r = 2 power-weight sweep: exact norm against [w,σ]_{A_2}, log-log slope of the best case."""
    if cfg.exponents.p != 2 or cfg.exponents.r != 2:
        raise ConfigError("exponents: the sharpness sweep needs p = 2 and r = 2 (exact oracle)")
    if cfg.grid.n != 1:
        raise ConfigError("grid.n: the sharpness sweep uses power weights, which need n = 1")
    spec = GridSpec(cfg.grid.n, cfg.grid.L)
    sw = cfg.sweep
    labels = [f"{o}/{f}" for o in sw.orientations for f in sw.families]
    report = Report("sharpness", ["delta", "ap2"] + [f"norm:{lab}" for lab in labels] + ["best_norm", "best_case"])
    for delta in sorted(sw.deltas, reverse=True):
        row = {"delta": float(delta)}
        best, best_lab = -1.0, None
        for lab, w, sigma, S in sharpness_cases(spec, delta, sw.orientations, sw.families):
            row.setdefault("ap2", ap_constant(w, sigma, 2.0).value)
            val = exact_norm_22(S, w, sigma)
            row[f"norm:{lab}"] = val
            if val > best:
                best, best_lab = val, lab
        row["best_norm"], row["best_case"] = best, best_lab
        report.rows.append(row)
    x = np.log([r_["ap2"] for r_ in report.rows])
    slopes = {lab: float(np.polyfit(x, np.log([r_[f"norm:{lab}"] for r_ in report.rows]), 1)[0]) for lab in labels}
    slope = float(np.polyfit(x, np.log([r_["best_norm"] for r_ in report.rows]), 1)[0])
    report.summary = {"slope": slope, "claimed_exponent": max(0.5, 1.0 / (cfg.exponents.p - 1.0)),
                      "slope_by_case": slopes, "L": cfg.grid.L}
    if slope > SHARP_SLOPE_MAX:
        report.violations.append(f"log-log slope {slope:.4f} exceeds {SHARP_SLOPE_MAX}")
    return report


ENTROPY_COLUMNS = ["instance", "beta_eps", "beta_eta", "norm_lower", "mult_status", "B_ent", "B_ent_all",
                   "ratio_ent", "sep_status", "B_sep", "B_sep_all", "ratio_sep"]


def run_entropy(cfg: ExperimentConfig) -> Report:
    """Entropy bounds against norm estimates over a list of bump exponents.

    Bumps failing an integrability hypothesis yield rows whose status names
    the hypothesis and whose bound columns stay empty.
    """
    p, r = cfg.exponents.p, cfg.exponents.r
    opt = cfg.optimizer
    report = Report("entropy", list(ENTROPY_COLUMNS))
    for i in range(cfg.ensemble.instances):
        inst = build_instance(cfg, i)
        est = op_norm_lower(inst.S, inst.w, inst.sigma, p, r, opt.restarts, opt.iters, opt.step, [opt.seed, i])
        for beta in cfg.entropy.betas:
            eps = BumpFunction(float(beta))
            eta = BumpFunction(float(cfg.bumps.beta_eta if cfg.bumps else beta))
            status = bump_hypotheses(p, r, eps, eta)
            b = theorem_rhs(inst.w, inst.sigma, p, r, inst.S, eps, eta, strict=False)
            report.rows.append({
                "instance": i, "beta_eps": float(beta), "beta_eta": eta.beta, "norm_lower": est.value,
                "mult_status": "ok" if status["mult"] is None else f"hypothesis violated: {status['mult']}",
                "B_ent": b.B_ent, "B_ent_all": b.B_ent_all, "ratio_ent": _ratio(est.value, b.B_ent),
                "sep_status": "ok" if status["sep"] is None else f"hypothesis violated: {status['sep']}",
                "B_sep": b.B_sep, "B_sep_all": b.B_sep_all, "ratio_sep": _ratio(est.value, b.B_sep),
            })
    report.summary = {"sup_ratio_ent": _sup(report.rows, "ratio_ent"), "sup_ratio_sep": _sup(report.rows, "ratio_sep"),
                      "rejected_rows": sum(1 for r_ in report.rows if r_["mult_status"] != "ok" or r_["sep_status"] != "ok")}
    return report


def run_constants(cfg: ExperimentConfig) -> Report:
    p, r = cfg.exponents.p, cfg.exponents.r
    cols = ["instance", "ap_all", "ap_cube", "ap_S", "ainf_w_all", "ainf_w_S", "ainf_sigma_all", "ainf_sigma_S",
            "B_ent", "B_ent_all", "B_sep", "B_sep_all"]
    check_case_conditions(cfg)
    report = Report("constants", cols)
    for i in range(cfg.ensemble.instances):
        inst = build_instance(cfg, i)
        eps, eta = bump_pair(cfg)
        b = theorem_rhs(inst.w, inst.sigma, p, r, inst.S, eps if cfg.bumps else None, eta if cfg.bumps else None)
        ap = ap_constant(inst.w, inst.sigma, p)
        report.rows.append({
            "instance": i, "ap_all": ap.value, "ap_cube": _cube(ap.cube), "ap_S": b.ap_S,
            "ainf_w_all": ainfty_constant(inst.w).value, "ainf_w_S": b.ainf_w_S,
            "ainf_sigma_all": ainfty_constant(inst.sigma).value, "ainf_sigma_S": b.ainf_sigma_S,
            "B_ent": b.B_ent, "B_ent_all": b.B_ent_all, "B_sep": b.B_sep, "B_sep_all": b.B_sep_all,
        })
    return report


def run_norm(cfg: ExperimentConfig) -> Report:
    p, r = cfg.exponents.p, cfg.exponents.r
    opt = cfg.optimizer
    report = Report("norm", ["instance", "n_cubes", "norm_lower", "exact_22", "best_per_restart_min",
                             "best_per_restart_max"])
    for i in range(cfg.ensemble.instances):
        inst = build_instance(cfg, i)
        est = op_norm_lower(inst.S, inst.w, inst.sigma, p, r, opt.restarts, opt.iters, opt.step, [opt.seed, i])
        runs = est.trace["best_per_restart"]
        report.rows.append({
            "instance": i, "n_cubes": len(inst.S), "norm_lower": est.value,
            "exact_22": exact_norm_22(inst.S, inst.w, inst.sigma) if p == 2 and r == 2 else None,
            "best_per_restart_min": min(runs), "best_per_restart_max": max(runs),
        })
    return report


def run_sparse(cfg: ExperimentConfig) -> tuple[Report, list]:
    inst = build_instance(cfg, 0)
    S = inst.S
    report = Report("sparse", ["k", "i", "cover_ratio"])
    for q in S.cubes:
        report.rows.append({"k": q.level, "i": "/".join(map(str, q.index)),
                            "cover_ratio": float(S.cover_ratios[S.spec.node_index(q)])})
    report.summary = {"cubes": len(S), "worst_ratio": max(r_["cover_ratio"] for r_ in report.rows)}
    return report, S.to_json()


def run_corona(cfg: ExperimentConfig):
    inst = build_instance(cfg, 0)
    F = principal_cubes(inst.f, inst.sigma, inst.S)
    G = principal_cubes(inst.g, inst.w, inst.S)
    corona = parallel_projection(inst.S, F, G)
    report = Report("corona", ["F", "G", "n_Q"])
    for (a, b), qs in sorted(corona.fibers.items()):
        report.rows.append({"F": _cube(inst.spec.node_cube(a)), "G": _cube(inst.spec.node_cube(b)), "n_Q": len(qs)})
    return report, corona


__all__ = [
    "HypothesisError", "Instance", "Report", "build_instance", "check_case_conditions", "dual_weight",
    "make_power_weight", "run_constants", "run_corona", "run_entropy", "run_norm", "run_sharpness", "run_sparse",
    "run_verify", "sharpness_cases", "lp_norm",
]
