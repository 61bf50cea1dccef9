"""Command-line driver.

    homopt solve CONFIG
    homopt certify CONFIG FACTORS_DIR
    homopt oracle CONFIG
    homopt experiment NAME CONFIG

Exit status: 0 when the result is certified (or likely) global or an
experiment's expected property holds, 2 for Indeterminate / EscapeFound /
a failed expectation, 1 for any configuration or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .certificate import ESCAPE, check_global
from .config import ConfigError, load_config
from .experiments import EXPERIMENTS, degree_mismatch, omega_equivalence, path_sweep
from .meta import PATH_CONVENTION, run_meta
from .oracle import factor_oracle_solution, solve_convex_nuclear
from .regularizers import NormProduct, PowerSum

log = logging.getLogger("homopt")

OK, ERROR, UNRESOLVED = 0, 1, 2


class CLIError(Exception):
    pass


def _timestamp_header() -> str:
    return "# written: " + datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_certificate(out: Path, cert) -> None:
    (out / "certificate.txt").write_text(_timestamp_header() + "\n" + cert.to_text())


def _status_code(status: str) -> int:
    return OK if status in ("CertifiedGlobal", "LikelyGlobal") else UNRESOLVED


def cmd_solve(args) -> int:
    rc = load_config(args.config, _overrides(args))
    out = _outdir(rc.out)
    res = run_meta(rc.problem, cfg=rc.meta)
    io.write_factors(out, res.factors)
    io.write_tensor(out / "q.txt", res.Q)
    _write_certificate(out, res.certificate)
    (out / "events.log").write_text(f"# convention: {PATH_CONVENTION}\n" + res.event_log())
    for j, d in enumerate(res.descents, 1):
        io.write_csv(out / f"trace_{j:03d}.csv", ["iteration", "objective", "residual"], d.trace)
    sys.stdout.write(res.certificate.to_text())
    return _status_code(res.certificate.status)


def cmd_certify(args) -> int:
    rc = load_config(args.config, _overrides(args))
    prob = rc.problem
    try:
        fs = io.read_factors(args.factors, prob.map.K)
    except io.FormatError as e:
        raise CLIError(str(e)) from None
    for k, (f, s) in enumerate(zip(fs, prob.map.input_shapes)):
        if tuple(f.shape[:-1]) != tuple(s):
            raise CLIError(f"factor {k + 1} has slice shape {tuple(f.shape[:-1])}, "
                           f"expected {tuple(s)}")
    Q = None
    qpath = Path(args.factors) / "q.txt"
    if prob.h.active and qpath.exists():
        Q = io.read_tensor(qpath)
        if Q.shape != prob.output_shape:
            raise CLIError(f"q.txt has shape {Q.shape}, expected {prob.output_shape}")
    if not np.isfinite(prob.objective(fs, Q)):
        raise CLIError("factors violate a cone constraint (objective is infinite)")
    cert = check_global(prob, fs, Q, rc.meta.cert_tol, restarts=rc.meta.polar_restarts,
                        max_iter=rc.meta.polar_iters, seed=rc.seed)
    out = _outdir(rc.out)
    _write_certificate(out, cert)
    if cert.status == ESCAPE:
        for k, z in enumerate(cert.escape_direction):
            io.write_tensor(out / f"escape_{k + 1}.txt", z)
    sys.stdout.write(cert.to_text())
    return _status_code(cert.status)


def cmd_oracle(args) -> int:
    rc = load_config(args.config, _overrides(args))
    prob = rc.problem
    reg = prob.reg
    supported = (
        prob.map.kind == "matrix"
        and prob.loss.kind == "squared"
        and not prob.h.active
        and all(c is None for c in reg.cones)
        and all(n is not None and n.name == "l2" for n in reg.norms)
        and ((isinstance(reg, NormProduct) and all(a == 1 for a in reg.powers))
             or (isinstance(reg, PowerSum) and reg.power == 2))
    )
    if not supported:
        raise CLIError("the convex oracle covers only the matrix map with l2 norms, squared "
                       "loss and no Q term, where the induced regularizer is the nuclear norm")
    tol = args.tol if args.tol is not None else 1e-12
    res = solve_convex_nuclear(prob.loss.Y, prob.lam, tol=tol)
    out = _outdir(rc.out)
    io.write_tensor(out / "xstar.txt", res.Xstar)
    io.write_factors(out, factor_oracle_solution(res.Xstar))
    (out / "objective.txt").write_text(repr(res.objective) + "\n")
    sys.stdout.write(f"objective: {res.objective!r}\niterations: {res.iterations}\n"
                     f"converged: {str(res.converged).lower()}\n"
                     f"closed_form_gap: {res.closed_form_gap!r}\n")
    return OK if res.converged else UNRESOLVED


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        raise CLIError(f"unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}")
    rc = load_config(args.config, _overrides(args))
    prob = rc.problem
    if args.name in ("degree-mismatch", "omega-equivalence") and prob.map.kind != "matrix":
        raise CLIError(f"{args.name} needs the matrix map")
    if args.name == "degree-mismatch":
        table = degree_mismatch(prob.loss.Y, prob.lam, seed=rc.seed)
        ok = table.summary["mismatched_all_increase"] and table.summary["matched_descent_found"]
    elif args.name == "omega-equivalence":
        table = omega_equivalence(prob.loss.Y, prob.lam, prob.r_init, rc.meta)
        ok = table.summary["relative_difference"] <= 1e-4
    else:
        table = path_sweep(prob, rc.meta)
        ok = table.summary["relative_spread"] <= 1e-6
    out = _outdir(rc.out)
    stem = args.name.replace("-", "_")
    io.write_csv(out / f"{stem}.csv", table.header, table.rows)
    (out / f"{stem}_summary.txt").write_text("\n".join(table.summary_lines()) + "\n")
    sys.stdout.write("\n".join(table.summary_lines()) + "\n")
    return OK if ok else UNRESOLVED


def _overrides(args) -> dict:
    return {"seed": args.seed, "out": args.out, "tol": args.tol}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory (overrides the config)")
    common.add_argument("--tol", type=float, default=None,
                        help="stationarity tolerance (oracle: fixed-point tolerance)")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress lines on stderr")
    p = argparse.ArgumentParser(prog="homopt", description="Homogeneous factorization solver "
                                "with global-optimality certificates.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run the meta-algorithm")
    s.add_argument("config")
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("certify", parents=[common], help="certify a stored factorization")
    s.add_argument("config")
    s.add_argument("factors", help="directory holding factor_1.txt ... factor_K.txt")
    s.set_defaults(func=cmd_certify)
    s = sub.add_parser("oracle", parents=[common], help="solve the convex nuclear-norm problem")
    s.add_argument("config")
    s.set_defaults(func=cmd_oracle)
    s = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    s.add_argument("name", help=" | ".join(EXPERIMENTS))
    s.add_argument("config")
    s.set_defaults(func=cmd_experiment)
    return p


def _threads() -> int | None:
    raw = os.environ.get("HOMOPT_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise CLIError(f"HOMOPT_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else ERROR
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    log.propagate = False
    try:
        n = _threads()
        if n is None:
            return args.func(args)
        with threadpool_limits(limits=n):
            return args.func(args)
    except (ConfigError, CLIError, io.FormatError) as e:
        sys.stderr.write(f"error: {e}\n")
    except Exception as e:  # never let a traceback reach the shell
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
    except KeyboardInterrupt:
        sys.stderr.write("error: interrupted\n")
    return ERROR


if __name__ == "__main__":
    sys.exit(main())
