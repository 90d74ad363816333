"""Command-line front end: run verification suites and write machine-readable reports."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import scenarios
from . import setmap as sm
from .errors import LipsetError
from .hausdorff import hausdorff_distance
from .ift import (certify, center_sweep, covering_inclusion_check, open_mapping_lower_check,
                  uniqueness_spread)
from .jacobian import affine, chain_rule_check, clarke_jacobian, mvt_certificate
from .matrixset import hull_distance
from .radius import delta_radius, jacobian_field, lsc_empirical_check

SUITES = ("cq", "delta", "ift", "hausdorff", "chain", "jacobian-props")
KIND_SUITES = {
    "setmap": SUITES,
    "ift": ("delta", "ift", "jacobian-props"),
    "openmap": ("delta", "ift", "jacobian-props"),
}
# parameter segments for the subdivision chain, inside each scenario's X
CHAIN_SPAN = {
    "sphere_latitude": (-0.5, 0.5),
    "circle_twopoint": (-0.5, 0.5),
    "circle_abs": (0.3, 0.7),
    "square_level": (-0.3, 0.3),
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    suite: str
    seed: int = 0
    cloud_size: int = 2000
    n_samples: int = 1000
    n_pairs: int = 20
    grid_step: Optional[float] = None
    output_path: Optional[str] = None
    format: str = "json"
    timings: bool = False

    def validate(self):
        if self.scenario not in scenarios.SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}")
        if self.suite != "all" and self.suite not in SUITES:
            raise UsageError(f"unknown suite {self.suite!r}")
        kind = scenarios.get(self.scenario).kind
        if self.suite != "all" and self.suite not in KIND_SUITES[kind]:
            raise UsageError(f"suite {self.suite!r} does not apply to {kind} scenario {self.scenario!r}")
        if min(self.cloud_size, self.n_samples, self.n_pairs) <= 0:
            raise UsageError("sample counts must be positive")
        if self.grid_step is not None and not self.grid_step > 0:
            raise UsageError("grid_step must be positive")
        if self.format not in ("json", "csv"):
            raise UsageError(f"unknown format {self.format!r}")

    def echo(self) -> dict:
        # the output path is left out so that reports written to different files compare equal
        out = asdict(self)
        out.pop("output_path")
        out.pop("timings")
        return out


class _Recorder:
    def __init__(self, timings: bool):
        self.checks = []
        self.sweep = None
        self.timings = timings
        self._mark = time.perf_counter()

    def add(self, name, anchor, passed, measured, bound=None, tol=None, started=None):
        # without an explicit start the check is timed from the previous one
        now = time.perf_counter()
        ms = round(1000 * (now - (started or self._mark)), 3) if self.timings else None
        self._mark = now
        self.checks.append({"name": name, "anchor": anchor, "pass": bool(passed),
                            "measured": measured, "bound": bound, "tol": tol, "ms": ms})


# ---------------------------------------------------------------------------
# suites for constraint systems


def _tau(system, cfg):
    return sm.tau_estimate(system, seed=cfg.seed)


def _suite_cq(system, cfg, rec):
    t0 = time.perf_counter()
    rep = _tau(system, cfg)
    rec.add("cq_tau_min_over_pi", "CQ: some column selection E(u,x,pi) invertible with ||E^-1|| <= tau",
            math.isfinite(rep.min_over_pi), {"tau": rep.tau, "min_over_pi": rep.min_over_pi,
                                             "points": rep.n_points}, started=t0)
    t0 = time.perf_counter()
    sup = sm.tau_estimate(system, seed=cfg.seed, mode="sup-over-pi")
    # informational: the literal sup reading is allowed to diverge
    rec.add("cq_tau_sup_over_pi", "CQ literal reading: sup over all invertible selections",
            True, {"sup_over_pi": sup.sup_over_pi, "refined": sup.sup_over_pi_refined,
                   "divergent": sup.divergent}, started=t0)
    t0 = time.perf_counter()
    chk = sm.lambda_bound_check(rep.tau, system.lip_c, system.lip_M, system.d, system.j,
                                n_matrices=1000, seed=cfg.seed)
    rec.add("cq_lambda_bound", "||H^-1|| <= lambda for H = [P; D_pi] with ||P_pi^-1|| < tau",
            chk.violations == 0, {"violations": chk.violations, "worst_ratio": chk.worst_ratio,
                                  "matrices": chk.n_matrices}, bound=1.0, started=t0)
    rec.add("cq_det_identity", "|det [P; D_pi]| = |det P_pi|", chk.det_error <= 1e-9,
            {"max_relative_error": chk.det_error}, tol=1e-9)


def _uniform(system, cfg, tau, lam, n_u, span=None):
    lo, hi = (None, None) if span is None else ([span[0]], [span[1]])
    return sm.uniform_radius(system, tau, lam, n_u=n_u, x_lo=lo, x_hi=hi)


def _suite_delta_setmap(system, cfg, rec):
    tau = _tau(system, cfg).tau
    const = sm.predicted_constants(system, tau)
    t0 = time.perf_counter()
    d1, arg, _ = _uniform(system, cfg, tau, const.lam, 8)
    d2, _, _ = _uniform(system, cfg, tau, const.lam, 16)
    rec.add("delta_uniform_positive", "uniform radius: minimum of the l.s.c. radius over a compact set is positive",
            d1 > 0, {"Delta0": d1, "argmin": arg.tolist()}, bound=0.0, started=t0)
    rel = abs(d2 - d1) / d1 if d1 > 0 else math.inf
    rec.add("delta_uniform_stable", "uniform radius stable under doubling of the sample",
            rel <= 0.1, {"Delta0": d1, "Delta0_doubled": d2, "relative_change": rel}, tol=0.1)
    t0 = time.perf_counter()
    D = sm.Delta_evaluator(system, tau, const.lam)
    bases = sm.omega_samples(system, 5, 1)
    ok, evaluated = True, 0
    for u, x in bases:
        seqs = sm.approach_sequences(system, u, x, n_sequences=4, seed=cfg.seed)
        omega = np.concatenate([u, x])
        slack = max(f.cap for f, _ in sm.radius_family(system, tau)(omega)) / 50
        ok &= lsc_empirical_check(D, omega, seqs, grid_slack=slack)
        evaluated += 1
    rec.add("delta_lsc_falsification", "radius function is lower semicontinuous", ok,
            {"base_points": evaluated, "sequences_per_point": 4}, started=t0)


def _suite_ift_setmap(system, cfg, rec):
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    violations, tracked = 0, 0
    for u, x in sm.omega_samples(system, 5, 2):
        e = sm.cq_check(system, u, x, seed=cfg.seed)
        k, pi = e.best_chart, e.best_pi()
        sol = certify(sm.build_F(system, u, x, k, pi), seed=cfg.seed)
        for _ in range(4):
            direction = rng.standard_normal(system.m)
            y = x + 0.99 * sol.domain_radius * rng.random() * direction / np.linalg.norm(direction)
            if np.any(y < system.x_lo) or np.any(y > system.x_hi):
                continue
            try:
                u2 = sm.selection_track(system, u, x, y, pi, k, sol=sol)
            except LipsetError:
                violations += 1
                continue
            bound = sol.s * system.lip_M * np.linalg.norm(y - x)
            violations += int(np.linalg.norm(u2 - u) > bound * (1 + 1e-12))
            tracked += 1
    rec.add("ift_selection_track", "tracked point u' in U(y) with |u'-u| <= s Lip_M |y-x|",
            violations == 0, {"tracked": tracked, "violations": violations}, started=t0)


def _suite_hausdorff(system, cfg, rec):
    t0 = time.perf_counter()
    tau = _tau(system, cfg).tau
    rep = sm.verify_lipschitz(system, cfg.n_pairs, cfg.cloud_size, cfg.seed, tau)
    rec.add("hausdorff_lipschitz", "d_H(U(x1), U(x2)) <= L |x1 - x2| on the parameter set",
            rep.passed, {"empirical_modulus": rep.empirical_modulus, "predicted_L": rep.predicted_L,
                         "slack": rep.slack, "spacing": rep.spacing, "pairs": len(rep.pairs)},
            bound=rep.predicted_L, tol=rep.slack, started=t0)
    rec.sweep = {"columns": ["dx", "dH", "ratio"],
                 "rows": rep.pairs[:, -3:].tolist()}
    x = np.array(system.x_lo) / 2 + np.array(system.x_hi) / 2
    c1 = sm.feasible_set(system, x, cfg.cloud_size)
    c2 = sm.feasible_set(system, x, cfg.cloud_size)
    dh = hausdorff_distance(c1, c2)
    rec.add("hausdorff_zero_diagonal", "d_H(U(x), U(x)) = 0", dh == 0.0, {"dH": dh}, bound=0.0)


def _suite_chain(system, cfg, rec):
    tau = _tau(system, cfg).tau
    const = sm.predicted_constants(system, tau)
    a, b = CHAIN_SPAN[system.name]
    t0 = time.perf_counter()
    d0, _, _ = _uniform(system, cfg, tau, const.lam, 8, (a, b))
    eta0 = d0 / 4
    res = sm.chain_subdivision_check(system, [a], [b], eta0, const.s, const.L, 64, cfg.seed)
    rec.add("chain_subdivision", "U(t_i) within L|x2-x1|/h of U(t_(i+1)) for h > 2s|x2-x1|/eta0",
            res.ok, {"h": res.h, "eta0": eta0, "step_radius": res.step_radius,
                     "worst_excess": res.worst_excess, "failing_step": res.failing_step}, started=t0)
    t0 = time.perf_counter()
    neg = sm.chain_subdivision_check(system, [a], [b], eta0, const.s, const.L / 10, 64, cfg.seed)
    # the control passes when the shrunken constant is caught
    rec.add("chain_negative_control", "chain with L/10 must fail somewhere", not neg.ok,
            {"h": neg.h, "step_radius": neg.step_radius, "worst_excess": neg.worst_excess,
             "failing_step": neg.failing_step}, started=t0)


# ---------------------------------------------------------------------------
# suites for implicit-function and open-mapping scenarios


def _suite_ift_problem(problem, cfg, rec):
    t0 = time.perf_counter()
    sol = certify(problem, grid_step=cfg.grid_step, seed=cfg.seed)
    sweep = center_sweep(sol, cfg.n_samples, cfg.seed)
    rec.add("ift_residual", "F(g(y), y) = 0 on the certified ball", float(sweep.residual.max()) <= 1e-10,
            {"max_residual": float(sweep.residual.max()), "samples": len(sweep.dy)}, tol=1e-10, started=t0)
    ratio = float(sweep.ratio.max())
    rec.add("ift_center_lipschitz", "|g(y) - g(y0)| <= s |y - y0|", ratio <= sol.s,
            {"max_ratio": ratio, "s": sol.s, "eta": sol.eta, "domain_radius": sol.domain_radius},
            bound=sol.s)
    rec.add("ift_eta_identity", "eta_s = delta((s-1)/(Lip(F)+1)) / 2",
            sol.eta == 0.5 * sol.radius_certificate.delta,
            {"eta": sol.eta, "delta": sol.radius_certificate.delta, "lam": sol.lam})
    spread = uniqueness_spread(sol, problem.y0 + 0.5 * sol.domain_radius, 16, cfg.seed)
    rec.add("ift_uniqueness", "solutions from perturbed starts in B(v0, eta) coincide", spread <= 1e-8,
            {"spread": spread}, tol=1e-8)
    rec.sweep = {"columns": ["dy", "dg", "ratio", "s"],
                 "rows": [[a, b, a and b / a, sol.s] for a, b in zip(sweep.dy.tolist(), sweep.dg.tolist())]}


def _openmap_field(sc):
    return jacobian_field(sc.f, sc.cap, name=sc.f.name)


def _suite_delta_openmap(sc, cfg, rec):
    field = _openmap_field(sc)
    t0 = time.perf_counter()
    c2 = delta_radius(field, sc.xi0, 2.0, grid_step=cfg.grid_step, seed=cfg.seed)
    rec.add("delta_lambda_2", "radius of hull{1, 0.25} slopes at lambda=2 equals 1",
            abs(c2.delta - 1.0) <= 0.05, {"delta": c2.delta, "grid_step": c2.grid_step}, bound=1.0,
            tol=0.05, started=t0)
    c5 = delta_radius(field, sc.xi0, 5.0, grid_step=cfg.grid_step, seed=cfg.seed)
    rec.add("delta_lambda_5", "radius at lambda=5 reaches the cap", c5.capped,
            {"delta": c5.delta, "cap": c5.cap}, bound=c5.cap)


def _suite_ift_openmap(sc, cfg, rec):
    field = _openmap_field(sc)
    t0 = time.perf_counter()
    total = 0
    for lam in (2.0, 5.0):
        cert = delta_radius(field, sc.xi0, lam, grid_step=cfg.grid_step, seed=cfg.seed)
        total += open_mapping_lower_check(sc.f, sc.xi0, lam, cert, 10 * cfg.n_samples, cfg.seed)
    rec.add("openmap_lower_bound", "|f(xi0+h) - f(xi0)| >= |h|/lambda for |h| < delta", total == 0,
            {"violations": total, "samples": 20 * cfg.n_samples}, bound=0, started=t0)
    t0 = time.perf_counter()
    misses = covering_inclusion_check(sc.f, sc.xi0, 5.0, 2.0, cfg.n_samples, seed=cfg.seed)
    rec.add("openmap_covering", "f(xi0) + (delta/2lambda)B inside f(xi0 + delta B)", misses == 0,
            {"misses": misses, "targets": cfg.n_samples}, bound=0, started=t0)


def _suite_delta_ift(problem, cfg, rec):
    t0 = time.perf_counter()
    sol = certify(problem, grid_step=cfg.grid_step, seed=cfg.seed)
    cert = sol.radius_certificate
    rec.add("delta_center_radius", "invertibility radius of the partial Jacobian at the base point",
            cert.delta > 0, {"delta": cert.delta, "lam": cert.lam, "capped": cert.capped}, bound=0.0,
            started=t0)


# ---------------------------------------------------------------------------
# scenario-independent calculus checks


def _suite_jacobian_props(cfg, rec):
    t0 = time.perf_counter()
    a = np.array([[1.0, 2.0], [-0.5, 3.0]])
    f = affine(a, [0.1, -0.2])
    est = clarke_jacobian(f, [0.3, -0.7], 0.1, 50, cfg.seed)
    err = float(np.abs(est.generators - a).max())
    rec.add("jacobian_affine_exact", "generalized Jacobian of an affine map is {A}",
            len(est.generators) == 1 and err < 1e-12, {"generators": len(est.generators), "error": err},
            tol=1e-12, started=t0)
    t0 = time.perf_counter()
    bank = scenarios.pl_bank()
    absj = clarke_jacobian(bank["abs"], [0.0], 0.1, 200, cfg.seed).generators
    target = np.array([[[-1.0]], [[1.0]]])
    dh = max(max(hull_distance(m, absj) for m in target), max(hull_distance(m, target) for m in absj))
    rec.add("jacobian_abs_hull", "generalized derivative of |x| at 0 is [-1, 1]", dh <= 0.05,
            {"hausdorff": dh}, tol=0.05, started=t0)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    worst_mvt, worst_chain = 0.0, 0.0
    names = sorted(bank)
    for i, name in enumerate(names):
        x, y = rng.uniform(-2, 2, 2)
        _, res = mvt_certificate(bank[name], [x], [y], 100, cfg.seed)
        worst_mvt = max(worst_mvt, res)
        g = bank[names[(i + 1) % len(names)]]
        worst_chain = max(worst_chain, chain_rule_check(g, bank[name], [rng.uniform(-2, 2)], 0.05, 200, cfg.seed))
    rec.add("jacobian_mean_value", "f(x) - f(y) = P(x - y) for some P in co of Jacobians on [x, y]",
            worst_mvt < 1e-8, {"max_residual": worst_mvt, "functions": len(bank)}, tol=1e-8, started=t0)
    rec.add("jacobian_chain_rule", "generalized Jacobian of g o f inside co(dg df)", worst_chain < 0.05,
            {"max_violation": worst_chain, "functions": len(bank)}, tol=0.05)


# ---------------------------------------------------------------------------


def _dispatch(cfg: RunConfig, rec: _Recorder):
    sc = scenarios.get(cfg.scenario)
    obj = sc.build()
    suites = KIND_SUITES[sc.kind] if cfg.suite == "all" else (cfg.suite,)
    for suite in suites:
        if suite == "jacobian-props":
            _suite_jacobian_props(cfg, rec)
        elif sc.kind == "setmap":
            {"cq": _suite_cq, "delta": _suite_delta_setmap, "ift": _suite_ift_setmap,
             "hausdorff": _suite_hausdorff, "chain": _suite_chain}[suite](obj, cfg, rec)
        elif sc.kind == "ift":
            {"delta": _suite_delta_ift, "ift": _suite_ift_problem}[suite](obj, cfg, rec)
        else:
            {"delta": _suite_delta_openmap, "ift": _suite_ift_openmap}[suite](obj, cfg, rec)


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return v


def run(cfg: RunConfig) -> dict:
    """Execute the configured suite and return the report (checks ordered by name)."""
    cfg.validate()
    rec = _Recorder(cfg.timings)
    _dispatch(cfg, rec)
    checks = sorted(rec.checks, key=lambda c: c["name"])
    n_pass = sum(c["pass"] for c in checks)
    report = {"config": cfg.echo(), "checks": checks,
              "summary": {"pass": n_pass, "fail": len(checks) - n_pass}}
    if rec.sweep is not None:
        report["sweep"] = rec.sweep
    return _clean(report)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "anchor", "pass", "measured", "bound", "tol", "ms"])
    for c in report["checks"]:
        w.writerow([c["name"], c["anchor"], c["pass"], json.dumps(c["measured"], sort_keys=True),
                    c["bound"], c["tol"], c["ms"]])
    return buf.getvalue()


def write_report(report: dict, path: str, fmt: str = "json") -> None:
    text = report_json(report) if fmt == "json" else report_csv(report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_plot_data(report: dict, path: str) -> None:
    """CSV of the pairwise sweep: dx,dH,ratio (Hausdorff) or dy,dg,ratio,s (implicit function)."""
    sweep = report.get("sweep") or {"columns": ["dx", "dH", "ratio"], "rows": []}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sweep["columns"])
        w.writerows(sweep["rows"])


def list_scenarios() -> list[tuple[str, str]]:
    return scenarios.list_scenarios()


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipset", description="Verification suites for Lipschitz set-valued maps.")
    p.add_argument("suite", help="list, all, or one of: " + ", ".join(SUITES))
    p.add_argument("--scenario", default="sphere_latitude")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cloud-size", type=int, default=2000)
    p.add_argument("--samples", type=int, default=1000, dest="n_samples")
    p.add_argument("--pairs", type=int, default=20, dest="n_pairs")
    p.add_argument("--grid-step", type=float, default=None)
    p.add_argument("--out", default=None, help="report path (stdout when omitted)")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--timings", action="store_true", help="record wall time per check (breaks byte-identity)")
    p.add_argument("--plot-data", default=None, help="also write the sweep as CSV")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.suite == "list":
        for name, desc in list_scenarios():
            print(f"{name}\t{desc}")
        return 0
    cfg = RunConfig(args.scenario, args.suite, args.seed, args.cloud_size, args.n_samples, args.n_pairs,
                    args.grid_step, args.out, args.format, args.timings)
    try:
        report = run(cfg)
    except UsageError as exc:
        print(f"lipset: error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        write_report(report, args.out, args.format)
    else:
        sys.stdout.write(report_json(report) if args.format == "json" else report_csv(report))
    if args.plot_data:
        emit_plot_data(report, args.plot_data)
    for c in report["checks"]:
        if not c["pass"]:
            print(f"FAIL {c['name']}: {c['anchor']}", file=sys.stderr)
    return 0 if report["summary"]["fail"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
