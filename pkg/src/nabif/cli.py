"""Command line front end: simulate, manifold, attractor, bifurcate, verify."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import time

import numpy as np

from . import checks
from .attractor import CloudFlow, NonautCloud, geometric_schedule, pullback_omega_limit
from .bifurcation import fitted_exponent, sweep, upper_semicontinuity_check
from .cocycle import DivergenceError, galerkin_system, trajectory
from .config import ConfigError, Experiment, load
from .hull import HullPoint, sample_hull
from .manifold import ContractionGateError, build_manifold, contraction_constant, lipschitz_constant
from .spectral import split

log = logging.getLogger("nabif")

SCHEMA = "1"


def _header(exp: Experiment, kind: str | None) -> str:
    """Timestamp line, schema (unless the body carries its own) and the resolved config."""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    cfg = json.dumps(exp.raw, sort_keys=True, default=str)
    schema = f"# schema: {kind}/{SCHEMA}\n" if kind else ""
    return f"# generated: {stamp}\n{schema}# config: {cfg}\n"


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def cmd_simulate(exp: Experiment, out: str) -> int:
    cfg = exp.model
    x0 = np.zeros(cfg.n_modes)
    x0[: len(exp.simulate["x0"])] = exp.simulate["x0"]
    p = HullPoint(tuple(exp.simulate["fiber"]))
    system = galerkin_system(cfg)
    status = "ok"
    try:
        t, X = trajectory(p, x0, float(exp.simulate["t_final"]), system, exp.integrator)
    except DivergenceError as exc:
        t, X = exc.path
        status = f"diverged at t={exc.time:.6g}"
    stride = int(exp.simulate["stride"])
    idx = np.unique(np.r_[np.arange(0, t.size, stride), t.size - 1])
    lines = [_header(exp, "trajectory") + f"# status: {status}\n",
             ",".join(["t"] + [f"a_{k + 1}" for k in range(cfg.n_modes)] + ["norm_alpha"]) + "\n"]
    norms = system.norm(X)
    for i in idx:
        lines.append(",".join(repr(float(v)) for v in (t[i], *X[i], norms[i])) + "\n")
    _write(os.path.join(out, "trajectory.csv"), "".join(lines))
    print(f"simulate: {idx.size} rows, status {status}")
    return 0 if status == "ok" else 3


def cmd_manifold(exp: Experiment, out: str) -> int:
    cfg = exp.model
    sp = split(cfg, k=exp.k)
    lp = exp.lp
    tc = exp.truncation
    try:
        M = contraction_constant(tc.rho, cfg.alpha, sp.eta, cfg)
    except ContractionGateError as exc:
        print(f"manifold: {exc}", file=sys.stderr)
        return 2
    p = HullPoint(tuple(exp.simulate["fiber"]))
    g = build_manifold(cfg, sp, tc, p, radius=float(lp["grid_radius"]), n_grid=int(lp["n_grid"]), T=lp["T"],
                       dt=float(lp["dt"]), tol=float(lp["tol"]))
    _write(os.path.join(out, "manifold.csv"), _header(exp, None) + g.to_csv())
    rep = [
        f"lambda = {g.lam}", f"lambda0 = {sp.lambda0}", f"eta = {sp.eta}", f"rho = {tc.rho}",
        f"k(rho) = {lipschitz_constant(tc.rho, cfg):.6g}", f"M_rho = {M:.6g}",
        f"L1 bound = {g.L1_bound:.6g}", f"L1 empirical = {g.L1_emp:.6g}",
        f"L2 empirical = {g.L2_emp:.6g}", f"grid radius = {g.radius:.6g}",
        f"Picard iterations = {g.iterations}", f"max Picard ratio = {g.max_ratio:.4g}",
        f"xi(0) = {float(np.max(np.abs(g.xi(0.0)))):.3e}",
    ]
    _write(os.path.join(out, "certification.txt"), _header(exp, "certification") + "\n".join(rep) + "\n")
    print("manifold: " + "; ".join(rep[4:9]))
    return 0


def cmd_attractor(exp: Experiment, out: str, rng: np.random.Generator) -> int:
    cfg = exp.model
    pb = exp.pullback
    flow = CloudFlow(galerkin_system(cfg), exp.integrator)
    U0 = checks.random_states(cfg, int(pb["cloud_size"]), rng, float(pb["cloud_radius"]))
    sched = geometric_schedule(float(pb["t0"]), int(pb["n_stages"]))
    fibers = sample_hull(cfg.forcing.m, int(pb["n_fibers"]))
    clouds, trace_lines, summary = {}, ["fiber_index,stage,time,distance"], []
    ok = True
    for i, p in enumerate(fibers):
        om = pullback_omega_limit(flow, U0, p, sched, float(pb["tol"]))
        clouds[p] = om.cloud
        for j, d in enumerate(om.trace):
            trace_lines.append(f"{i},{j + 1},{float(om.times[j + 1])!r},{float(d)!r}")
        amp = float(np.max(flow.system.norm(om.cloud)))
        summary.append(f"fiber {i} {p.phases}: converged={om.converged} stages={om.stages} "
                       f"invariant={om.invariant} max_norm={amp:.6g}")
        ok = ok and om.converged
    _write(os.path.join(out, "attractor.csv"), _header(exp, "attractor") + NonautCloud(clouds).to_csv())
    _write(os.path.join(out, "traces.csv"), _header(exp, "traces") + "\n".join(trace_lines) + "\n")
    _write(os.path.join(out, "attractor_report.txt"), _header(exp, "report") + "\n".join(summary) + "\n")
    print("attractor: " + " | ".join(summary))
    return 0 if ok else 4


def cmd_bifurcate(exp: Experiment, out: str, workers: int) -> int:
    cfg = exp.model
    d = sweep(cfg, exp.lambdas, k=exp.k, n_fibers=exp.n_fibers, params=exp.sweep, workers=workers)
    _write(os.path.join(out, "diagram.csv"), _header(exp, None) + d.to_csv())
    _write(os.path.join(out, "timings.csv"), _header(exp, "timings") + d.timings_csv())
    for i, arr in d.plot_data().items():
        body = "lambda,H_alpha\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in arr)
        _write(os.path.join(out, f"plot_fiber{i}.csv"), _header(exp, "plot-data") + body)
    usc = upper_semicontinuity_check(d, exp.tol_curve)
    lines = [usc.summary()]
    for p in d.fibers():
        side = [r for r in d.series(p) if d.bifurcating(r.lam) and not r.error]
        if len(side) >= 2:
            beta = fitted_exponent([r.lam - d.lambda0 for r in side], [r.H for r in side])
            lines.append(f"fiber {p.phases}: fitted exponent {beta:.4f}")
    errors = [r for r in d.rows if r.error]
    lines.append(f"rows with errors: {len(errors)}")
    _write(os.path.join(out, "bifurcation_report.txt"), _header(exp, "report") + "\n".join(lines) + "\n")
    print("bifurcate: " + " | ".join(lines))
    return 0 if not errors else 5


def cmd_verify(exp: Experiment, out: str, rng: np.random.Generator) -> int:
    cfg = exp.model
    results = [
        checks.cocycle_order_check(cfg, exp.integrator.scheme),
        checks.f1_check(cfg, rng),
        checks.semigroup_check(cfg, exp.k),
        checks.equivalence_check(rng),
        checks.benchmark_check(),
    ]
    sp = split(cfg, k=exp.k)
    M = contraction_constant(exp.truncation.rho, cfg.alpha, sp.eta, cfg, check=False)
    results.append(checks.CheckResult("contraction gate", M < 0.9, f"M_rho = {M:.4f} at rho = {exp.truncation.rho}"))
    lines = []
    for r in results:
        lines.append(r.line())
        if r.name == "semigroup bounds":
            lines.extend("    " + s for s in r.data["report"].summary().splitlines())
        for extra in r.data.get("lines", []) if isinstance(r.data.get("lines"), list) else []:
            lines.append("    " + extra)
    text = "\n".join(lines) + "\n"
    _write(os.path.join(out, "verify_report.txt"), _header(exp, "verify") + text)
    print(text, end="")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nabif", description=__doc__)
    ap.add_argument("command", choices=["simulate", "manifold", "attractor", "bifurcate", "verify"])
    ap.add_argument("--config", help="YAML experiment file (merged over the shipped defaults)")
    ap.add_argument("--out", help="output directory (default: output.dir from the config)")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for the lambda sweep")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--log-level", default="WARNING", help="logging level (DEBUG, INFO, WARNING, ...)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        exp = load(args.config, overrides={"seed": args.seed} if args.seed is not None else None)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return 2
    out = args.out or exp.out_dir
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(exp.seed)
    t0 = time.perf_counter()
    try:
        if args.command == "simulate":
            code = cmd_simulate(exp, out)
        elif args.command == "manifold":
            code = cmd_manifold(exp, out)
        elif args.command == "attractor":
            code = cmd_attractor(exp, out, rng)
        elif args.command == "bifurcate":
            code = cmd_bifurcate(exp, out, args.workers)
        else:
            code = cmd_verify(exp, out, rng)
    except Exception as exc:  # runtime module errors: nonzero exit, partial artifacts flagged
        log.exception("run failed")
        with open(os.path.join(out, "FAILED"), "w") as fh:
            fh.write(f"{args.command}: {type(exc).__name__}: {exc}\n")
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
