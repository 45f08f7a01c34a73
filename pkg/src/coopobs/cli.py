"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration,
3 the simulation diverged, 4 an output file could not be written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import builtin_scenario, config_hash, load_config
from .exceptions import NonFiniteState, ParseError, ValidationError
from .gains import certify, synthesize_gains
from .graph import build_matrices
from .metrics import metrics
from .observer import mu1_lower_bound
from .outputs import RunManifest, emit_csv, emit_plots, write_gainset, write_manifest
from .scenario import integrate

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


def _common(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="scenario file (YAML or JSON)")
    src.add_argument("--scenario", default=None, help="built-in scenario name (default paper_sec5)")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="coopobs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="certified graph gains for a scenario's graph")
    _common(p)

    p = sub.add_parser("run", help="simulate a scenario and write CSV and plots")
    _common(p)
    p.add_argument("--mode", default=None, help="override the scenario mode")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--linear-plots", action="store_true", help="linear instead of log axes")

    p = sub.add_parser("check", help="run the invariant checks on a scenario")
    _common(p)
    p.add_argument("--trials", type=int, default=200)

    p = sub.add_parser("bounds", help="report the sufficient coupling gain")
    _common(p)
    p.add_argument("--safety", type=float, default=1.25)

    p = sub.add_parser("sweep", help="grid of runs over mu1 and mu2, run concurrently")
    _common(p)
    p.add_argument("--mu1", type=str, required=True, help="comma-separated values")
    p.add_argument("--mu2", type=str, required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, default=None)
    return parser


def _load(args, mode=None):
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = builtin_scenario(args.scenario or "paper_sec5")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.step is not None:
        over["step"] = args.step
    if args.horizon is not None:
        over["horizon"] = args.horizon
    if mode is not None:
        over["mode"] = mode
    try:
        return cfg.with_overrides(**over) if over else cfg
    except ValueError as exc:
        raise ValidationError([("command line", str(exc))]) from exc


def _gainset(cfg):
    return synthesize_gains(build_matrices(cfg.graph).h, d=cfg.observer_gains.d, seed=cfg.seed)


def cmd_synthesize(args):
    cfg = _load(args)
    gs = _gainset(cfg)
    certs = certify(gs)
    path = write_gainset(gs, args.out_dir / "gains.yaml", certs)
    print(f"D diagonal: {np.round(np.diag(gs.d), 6).tolist()}")
    print(f"lambda_q={gs.lambda_q:.6g} lambda_h={gs.lambda_h:.6g}")
    print(f"certificates: {'all pass' if all(certs.values()) else certs}")
    print(f"wrote {path}")
    return EXIT_OK if all(certs.values()) else EXIT_CHECK


def _run_one(cfg, out_dir, plots=True, log_scale=True):
    res = integrate(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    if cfg.mode in ("observer_only", "closed_loop"):
        outputs["csv"] = str(emit_csv(res, out_dir / "series.csv"))
        if plots:
            outputs["plots"] = [str(p) for p in emit_plots(res, out_dir / "errors",
                                                           log_scale=log_scale)]
    else:
        path = out_dir / "series.csv"
        keys = list(res.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + keys)
            for r, t in enumerate(res.times):
                row = [format(float(t), ".12g")]
                for k in keys:
                    val = np.ravel(res.series[k][r])
                    row.append(";".join(format(float(x), ".12g") for x in val))
                w.writerow(row)
        outputs["csv"] = str(path)
    man = RunManifest(cfg.name, config_hash(cfg), cfg.seed, __version__, outputs)
    write_manifest(man, out_dir / "manifest.json")
    return res, man


def cmd_run(args):
    cfg = _load(args, args.mode)
    res, man = _run_one(cfg, args.out_dir, plots=not args.no_plots,
                        log_scale=not args.linear_plots)
    if cfg.mode in ("observer_only", "closed_loop"):
        rep = metrics(res)
        for name, val in rep.final.items():
            print(f"{name:10s} final={val:.3e} peak={rep.peak[name]:.3e} "
                  f"below 1e-2 after t={rep.time_below[name]:.3g}")
    else:
        for k, v in res.series.items():
            print(f"{k:10s} final={np.max(np.ravel(v[-1])):.3e}")
    print(f"config hash {man.config_hash}")
    print(f"wrote {man.outputs['csv']}")
    return EXIT_OK


def cmd_check(args):
    from .checks import run_checks

    cfg = _load(args)
    results = run_checks(cfg, trials=args.trials)
    width = max(len(k) for k in results)
    for name, (ok, detail) in results.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return EXIT_OK if all(ok for ok, _ in results.values()) else EXIT_CHECK


def cmd_bounds(args):
    cfg = _load(args, "observer_only")
    gs = _gainset(cfg)
    pilot = integrate(cfg.with_overrides(track_lyapunov=False))
    rep = mu1_lower_bound(gs, cfg.leader, pilot, safety=args.safety)
    for k, v in rep.as_dict().items():
        print(f"{k:20s} {v:.6g}")
    mu1 = cfg.observer_gains.mu1
    verdict = "meets" if mu1 >= rep.mu_max else "is below"
    print(f"configured mu1={mu1:g} {verdict} the sufficient bound")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "bounds.json").write_text(json.dumps(rep.as_dict(), indent=2) + "\n")
    return EXIT_OK


def _sweep_job(job):
    run_id, cfg, out_dir = job
    try:
        res, _ = _run_one(cfg, out_dir, plots=False)
    except NonFiniteState as exc:
        return run_id, None, f"diverged at t={exc.time:.4g}"
    rep = metrics(res)
    return run_id, rep.final, "ok"


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError([("command line", f"bad number list {text!r}")]) from exc


def cmd_sweep(args):
    from .observer import ObserverGains

    cfg = _load(args)
    jobs = []
    for a in _floats(args.mu1):
        for b in _floats(args.mu2):
            try:
                og = ObserverGains(a, b, cfg.observer_gains.d)
            except ValueError as exc:
                raise ValidationError([("command line", str(exc))]) from exc
            run_id = f"mu1={a:g}_mu2={b:g}"
            jobs.append((run_id, cfg.with_overrides(observer_gains=og),
                         args.out_dir / run_id))
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = dict((rid, (fin, status)) for rid, fin, status in pool.map(_sweep_job, jobs))
    families = ["err_eta", "err_omega", "err_E", "err_track"]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "mu1", "mu2", "status"] + [f"final_{f}" for f in families])
        for run_id, c, _ in jobs:
            fin, status = results[run_id]
            vals = [format(fin[f], ".12g") if fin and f in fin else "nan" for f in families]
            w.writerow([run_id, format(c.observer_gains.mu1, "g"),
                        format(c.observer_gains.mu2, "g"), status] + vals)
            print(f"{run_id:24s} {status}")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"synthesize": cmd_synthesize, "run": cmd_run, "check": cmd_check,
            "bounds": cmd_bounds, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        for path, msg in exc.errors:
            print(f"invalid: {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except ParseError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonFiniteState as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        # IoError from the writers, or a directory that cannot be created
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
