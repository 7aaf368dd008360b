"""Command-line front end.

Exit codes: 0 success, 1 evolution threshold not reached, 2 audit violation,
3 non-existence verdict, 64 usage or malformed config, 65 inconsistent
configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assumption_audit import audit
from .config import ConfigSyntaxError, RunConfig, build_problem, load_config
from .discretization import build_grid
from .eigensolver import (SolverConfig, Stage, continuation_solve, grid_study, make_schedule,
                          solve_stage, verify_bounds)
from .errors import (ConfigurationError, DomainError, InvalidSpecError, NonConvergenceError,
                     PositivityError, StepSizeError)
from .evolution import entropy_violations, evolution_operator, evolution_triple, evolve, pairing_drift
from .oracles import example_linear_tau
from .problem_model import KernelSpec, ProblemSpec, RateSpec

log = logging.getLogger("growthfrag")

EXIT_OK, EXIT_THRESHOLD, EXIT_AUDIT, EXIT_NONEXIST, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3, 64, 65
SCHEMA_VERSION = 1
CSV_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data: dict) -> None:
    data = {"schema_version": SCHEMA_VERSION, **data}
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, kind: str, columns: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# growthfrag {kind} csv v{CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with path.open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    r = csv.reader(lines)
    header = next(r)
    data = np.array([[float(v) for v in row] for row in r])
    return {h: data[:, i] for i, h in enumerate(header)}


def write_manifest(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> None:
    write_json(out / "manifest.json", {
        "command": command,
        "config": cfg.resolved(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        **(extra or {}),
    })


def _outdir(cfg: RunConfig, sub: str) -> Path:
    out = cfg.output_dir / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(shift_nu=cfg["solver.shift"], tol_lambda=cfg["solver.tol"],
                        max_iter=cfg["solver.max_iter"], seed=cfg["solver.seed"],
                        m_threshold=cfg["solver.m_threshold"])


def schedule_from(cfg: RunConfig) -> list[Stage]:
    n = cfg["schedule.stages"]
    if n < 1:
        raise ConfigurationError("empty schedule (schedule.stages < 1)")
    return make_schedule(cfg["grid.R"], cfg["grid.N"], cfg["schedule.eta"], n,
                         cfg["schedule.R_growth"], cfg["schedule.eta_decay"], cfg["schedule.N_growth"])


# ---------------------------------------------------------------- commands

def cmd_audit(cfg: RunConfig, args) -> int:
    problem = build_problem(cfg)
    report = audit(problem, R_probe=args.R_probe)
    out = _outdir(cfg, "audit")
    write_json(out / "audit.json", report.to_dict())
    write_manifest(out, "audit", cfg)
    print(f"{'id':<15} {'satisfied':<13} {'witness':>12}  detail")
    for e in report.entries:
        print(f"{e.id:<15} {str(e.satisfied):<13} {e.witness:>12.6g}  {e.detail}")
    print(f"second moment c = {report.second_moment_c:.12g}")
    if report.failing_ids:
        print("failing: " + ", ".join(report.failing_ids))
        return EXIT_AUDIT
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    problem = build_problem(cfg)
    out = _outdir(cfg, "solve")
    report = audit(problem)
    if report.failing_ids:
        log.warning("audit failures: %s", ", ".join(report.failing_ids))
        if cfg["solver.strict_audit"]:
            write_json(out / "summary.json", {"audit_failing": report.failing_ids})
            write_manifest(out, "solve", cfg)
            return EXIT_AUDIT
    schedule = schedule_from(cfg)
    kind, ratio = cfg["grid.kind"], cfg["grid.ratio"]
    res = continuation_solve(problem, schedule, solver_config(cfg), kind, ratio,
                             richardson=cfg["schedule.richardson"])
    summary = {"audit_failing": report.failing_ids, **res.summary()}
    if res.triples:
        tr = res.triples[-1]
        summary["lambda"] = tr.lam
        summary["final_stage"] = tr.summary()
        summary["bounds"] = verify_bounds(tr, problem)
        if "csv" in cfg["output.formats"]:
            write_csv(out / "eigentriple.csv", "eigentriple", ["x", "U", "phi", "tauU"],
                      zip(tr.x, tr.U, tr.phi, tr.tauU))
        if args.export_operator:
            from .discretization import assemble_adjoint, assemble_direct, make_truncation
            from .eigensolver import stage_grid
            st = schedule[len(res.triples) - 1]
            g = stage_grid(problem, st, kind, ratio)
            op = assemble_direct(problem, g, make_truncation(problem, g, st.eta))
            op.export_coo(out / "operator_direct.mtx")
            assemble_adjoint(op).export_coo(out / "operator_adjoint.mtx")
    write_json(out / "summary.json", summary)
    write_manifest(out, "solve", cfg)
    lam = summary.get("lambda", float("nan"))
    print(f"verdict: {res.verdict} ({res.reason})")
    print(f"lambda = {lam:.12g}   extrapolated = {res.extrapolated_lambda:.12g}")
    return EXIT_OK if res.verdict == "converged" else EXIT_NONEXIST


def _load_triple(path: Path, grid):
    data = read_csv(path / "eigentriple.csv")
    summ = json.loads((path / "summary.json").read_text())
    from .eigensolver import EigenTriple
    from .discretization import TruncationParams
    x = grid.centers
    U = np.interp(x, data["x"], data["U"], right=0.0)
    phi = np.interp(x, data["x"], data["phi"], right=0.0)
    dx = grid.widths
    U = U / np.dot(U, dx)
    phi = phi / np.dot(phi * U, dx)
    lam = float(summ["lambda"])
    return EigenTriple(lam, U, phi, grid, TruncationParams(grid.R, 0.0, 0.0, 0.0), U.copy(),
                       0.0, float("nan"), float("nan"), lam, (0.0, 0.0, 0.0))


def initial_profile(cfg: RunConfig, grid, triple=None) -> np.ndarray:
    kind = cfg["evolve.u0"]
    x = grid.centers
    if kind == "random":
        return np.random.default_rng(cfg["evolve.seed"]).uniform(0.1, 1.0, grid.N)
    if kind == "gaussian":
        c, w = cfg["evolve.u0_center"], cfg["evolve.u0_width"]
        return np.exp(-0.5 * ((x - c) / w) ** 2)
    if kind == "eigen":
        if triple is None:
            raise ConfigurationError("evolve.u0 = eigen needs an eigentriple")
        return triple.U.copy()
    raise ConfigSyntaxError(f"unknown evolve.u0 {kind!r}")


def cmd_evolve(cfg: RunConfig, args) -> int:
    problem = build_problem(cfg)
    grid = build_grid(cfg["grid.R"], cfg["grid.N"], cfg["grid.kind"],
                      ratio=cfg["grid.ratio"], x_min=problem.x_min)
    op = evolution_operator(problem, grid)
    if args.triple:
        tdir = Path(args.triple)
        if not (tdir / "eigentriple.csv").exists():
            raise ConfigurationError(f"no eigentriple.csv in {tdir}")
        triple = _load_triple(tdir, grid)
    elif cfg["evolve.solve"]:
        triple = evolution_triple(op, solver_config(cfg))
    else:
        raise ConfigurationError("no eigentriple: pass --triple or set evolve.solve = true")
    u0 = initial_profile(cfg, grid, triple)
    state = evolve(problem, grid, u0, cfg["evolve.T"], cfg["evolve.cfl"], triple=triple,
                   scheme=cfg["evolve.scheme"], stride=cfg["output.stride"], op=op)
    out = _outdir(cfg, "evolve")
    H = state.entropy_series[:, 1]
    # a start already on the eigenprofile has H(0) at roundoff; measure H(T) against the pairing then
    scale = abs(float(state.pairing_series[0, 1]))
    ref = float(H[0]) if H[0] > 1e-12 * scale else scale
    ratio = float(H[-1] / ref) if ref > 0 else 0.0
    if "csv" in cfg["output.formats"]:
        led = state.ledger
        write_csv(out / "ledger.csv", "evolution-ledger",
                  ["t", "H", "pairing", "mass", "first_moment", "int_beta_u", "int_tau_u"],
                  zip(led[:, 0], H, state.pairing_series[:, 1], led[:, 1], led[:, 2], led[:, 3], led[:, 4]))
        if state.snapshots:
            write_csv(out / "trajectory.csv", "trajectory", ["t", "x", "u"],
                      ((t, xx, uu) for t, u in state.snapshots for xx, uu in zip(grid.centers, u)))
    summary = {"lambda": triple.lam, "T": state.t, "dt": state.dt, "steps": state.steps,
               "H0": float(H[0]), "HT": float(H[-1]), "H_ratio": ratio,
               "max_entropy_increase": entropy_violations(state),
               "pairing_drift": pairing_drift(state), "threshold": cfg["evolve.threshold"]}
    write_json(out / "summary.json", summary)
    write_manifest(out, "evolve", cfg)
    print(f"H(T)/H(0) = {ratio:.3e}   pairing drift = {summary['pairing_drift']:.3e}")
    return EXIT_OK if ratio < cfg["evolve.threshold"] else EXIT_THRESHOLD


def _study_task(task):
    kind, raw, payload = task
    from .config import parse_mapping
    cfg = parse_mapping(raw)
    problem = build_problem(cfg)
    scfg = solver_config(cfg)
    if kind == "grid":
        N = payload
        st = Stage(cfg["grid.R"], cfg["schedule.eta"], N)
        tr, _ = solve_stage(problem, st, scfg, cfg["grid.kind"], cfg["grid.ratio"])
        return {"N": N, "h": tr.grid.max_width, "lambda": tr.lam}
    if kind == "schedule":
        res = continuation_solve(problem, schedule_from(cfg), scfg, cfg["grid.kind"], cfg["grid.ratio"],
                                 richardson=False)
        return res.summary()
    st = Stage(cfg["grid.R"], cfg["schedule.eta"], cfg["grid.N"])
    tr, _ = solve_stage(problem, st, scfg, cfg["grid.kind"], cfg["grid.ratio"])
    return {"value": payload, "lambda": tr.lam, "first_moment": tr.first_moment}


def cmd_study(cfg: RunConfig, args) -> int:
    build_problem(cfg)  # validate before fanning out
    schedule_from(cfg)
    Ns = list(cfg["study.N_list"])
    if not Ns:
        raise ConfigurationError("empty N list")
    raw = cfg.resolved()
    tasks = [("grid", raw, N) for N in Ns] + [("schedule", raw, None)]
    key = cfg["study.sweep_key"]
    if key:
        if key not in raw:
            raise ConfigSyntaxError(f"unknown sweep key {key}")
        for v in cfg["study.sweep_values"]:
            tasks.append(("sweep", {**raw, key: v}, v))
    workers = max(1, cfg["study.workers"])
    if workers == 1:
        results = [_study_task(t) for t in tasks]
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_task, tasks))
    out = _outdir(cfg, "study")
    grid_rows = results[: len(Ns)]
    sched = results[len(Ns)]
    sweep = results[len(Ns) + 1:]
    exact = cfg["study.exact_lambda"]
    lams = [r["lambda"] for r in grid_rows]
    from .eigensolver import observed_order, three_grid_order
    order_exact = observed_order([r["h"] for r in grid_rows], [l - exact for l in lams]) if exact is not None else None
    order_3 = three_grid_order(lams[-3:]) if len(lams) >= 3 else None
    write_csv(out / "study_grid.csv", "study-grid", ["N", "h", "lambda", "error"],
              ((r["N"], r["h"], r["lambda"], (r["lambda"] - exact) if exact is not None else float("nan"))
               for r in grid_rows))
    write_csv(out / "study_schedule.csv", "study-schedule",
              ["R", "eta", "N", "delta", "lambda", "first_moment", "balance_lambda"],
              ((s["R"], s["eta"], s["N"], s["delta"], s["lambda"], s["first_moment"], s["balance_lambda"])
               for s in sched["stages"]))
    if sweep:
        write_csv(out / "study_sweep.csv", "study-sweep", [key, "lambda", "first_moment"],
                  ((r["value"], r["lambda"], r["first_moment"]) for r in sweep))
    write_json(out / "summary.json", {"observed_order_exact": order_exact,
                                      "observed_order_three_grid": order_3,
                                      "schedule_verdict": sched["verdict"]})
    write_manifest(out, "study", cfg)
    print(f"observed order (vs exact): {order_exact}   three-grid: {order_3}")
    print(f"schedule verdict: {sched['verdict']}")
    return EXIT_OK


def cmd_table1(args) -> int:
    rows = [int(v) for v in args.rows.split(",")]
    cfg = SolverConfig()
    worst = {"lambda": 0.0, "U_l1": 0.0, "phi_slope_rel": 0.0}
    print(f"{'n':>3} {'lambda':>14} {'|dlambda|':>10} {'U L1 err':>10} {'slope rel err':>13}")
    for n in rows:
        problem = ProblemSpec(RateSpec.linear(args.tau0), RateSpec.power(args.beta0, n), KernelSpec.uniform())
        tr, _ = solve_stage(problem, Stage(args.R, args.eta, args.N), cfg)
        ex = example_linear_tau(args.tau0, args.beta0, n)
        d = table1_deviation(tr, ex)
        for k in worst:
            worst[k] = max(worst[k], d[k])
        print(f"{n:>3} {tr.lam:>14.10f} {d['lambda']:>10.3e} {d['U_l1']:>10.3e} {d['phi_slope_rel']:>13.3e}")
    print("max deviations: " + ", ".join(f"{k}={v:.3e}" for k, v in worst.items()))
    return EXIT_OK


def table1_deviation(tr, ex) -> dict:
    """Deviations of a computed triple from a linear-growth closed form."""
    x, dx = tr.x, tr.dx
    u_err = float(np.dot(np.abs(tr.U - ex.U(x)), dx))
    sel = x <= 0.5 * tr.grid.R
    slope = float(np.polyfit(x[sel], tr.phi[sel], 1)[0])
    exact_slope = float(ex.phi(1.0))
    return {"lambda": abs(tr.lam - ex.lam), "U_l1": u_err, "phi_slope": slope,
            "phi_slope_rel": abs(slope / exact_slope - 1.0)}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="growthfrag", description="Growth-fragmentation eigenelements")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    a = sub.add_parser("audit", help="check the standing hypotheses")
    a.add_argument("config")
    a.add_argument("--R-probe", type=float, default=1e4)
    s = sub.add_parser("solve", help="continuation solve of the eigenproblem")
    s.add_argument("config")
    s.add_argument("--export-operator", action="store_true",
                   help="write the final-stage operators as Matrix Market coordinate files")
    e = sub.add_parser("evolve", help="time evolution with relative-entropy tracking")
    e.add_argument("config")
    e.add_argument("--triple", help="directory holding eigentriple.csv and summary.json from solve")
    st = sub.add_parser("study", help="grid and schedule convergence tables")
    st.add_argument("config")
    t = sub.add_parser("table1", help="linear growth, power-law fragmentation closed forms")
    t.add_argument("--rows", default="1,2,3")
    t.add_argument("--tau0", type=float, default=1.0)
    t.add_argument("--beta0", type=float, default=1.0)
    t.add_argument("--R", type=float, default=20.0)
    t.add_argument("--N", type=int, default=2000)
    t.add_argument("--eta", type=float, default=1e-4)
    return p


COMMANDS = {"audit": cmd_audit, "solve": cmd_solve, "evolve": cmd_evolve, "study": cmd_study}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"growthfrag: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "table1":
            return cmd_table1(args)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigSyntaxError, InvalidSpecError, DomainError) as exc:
        print(f"growthfrag: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, StepSizeError) as exc:
        print(f"growthfrag: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, PositivityError) as exc:
        print(f"growthfrag: solver failure: {exc}", file=sys.stderr)
        return EXIT_NONEXIST


if __name__ == "__main__":
    sys.exit(main())
