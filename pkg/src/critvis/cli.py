"""Command-line driver: ``critvis {solve-lp,minimize,verify,export-mps,bench}``.

Settings come from an optional TOML file, overridden by flags::

    seed = 0
    solver = "ipm"            # default: simplex when m <= 729, ipm above
    timeout = 600             # seconds, 0 for none

    [experiment]
    observers = 4
    observables = 2           # or a list, one entry per observer
    state = "ghz"             # or a path to a state file

    [angles]
    mode = "reference"        # reference | random | values | file
    values = []               # flat (theta, phi) list for mode = "values"
    file = "run.json"         # a minimize output, for mode = "file"

    [ipm]                     # any IpmSettings field
    [simplex]                 # tol, refactor_every, max_iters, pricing
    [dsm]                     # any DsmSettings field
    [verify]
    samples = 100
    [bench]
    ladder = [4, 5, 6]
    solvers = ["ipm", "simplex"]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 timeout.
"""
from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import dataclasses
import json
import math
import signal
import sys
import time
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import dsm, mf_ipm, mps, reference
from .lp_builder import build_lp
from .quantum import (
    AngleVector,
    ConfigError,
    ExperimentConfig,
    make_ghz,
    probability_table,
    read_state_file,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TIMEOUT = 0, 2, 3, 4
SIMPLEX_MAX_ROWS = 729
VERIFY_GATE = 0.01

DEFAULTS = {
    "seed": 0,
    "solver": None,
    "timeout": 0,
    "experiment": {"observers": 2, "observables": 2, "state": "ghz"},
    "angles": {"mode": None, "values": [], "file": None},
    "ipm": {},
    "simplex": {},
    "dsm": {},
    "verify": {"samples": 100},
    "bench": {"ladder": [2, 3, 4], "solvers": ["ipm", "simplex"]},
    "output": {"out": None, "trace": None},
}
SIMPLEX_KEYS = {"tol", "refactor_every", "max_iters", "pricing"}


class SolverFailure(RuntimeError):
    pass


class RunTimeout(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    """Validated settings for one command; ``raw`` is the resolved dict."""

    raw: dict
    experiment: ExperimentConfig
    state: object
    seed: int
    solver: str
    ipm: mf_ipm.IpmSettings
    simplex: dict
    dsm: dsm.DsmSettings
    timeout: float
    out: Path | None
    trace: Path | None

    def streams(self):
        """Independent generators for angles, minimize, verify and bench."""
        children = np.random.SeedSequence(self.seed).spawn(4)
        return dict(zip(("angles", "dsm", "verify", "bench"), children))


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _flag_overrides(args) -> dict:
    over = {}

    def put(path, value):
        if value is None:
            return
        node = over
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value

    put(("seed",), args.seed)
    put(("solver",), args.solver)
    if args.solver is not None:
        put(("bench", "solvers"), [args.solver])
    put(("timeout",), args.timeout)
    put(("ipm", "chol_rank"), args.rank)
    put(("ipm", "objective_scale"), args.obj_scale)
    put(("dsm", "ftol"), args.ftol)
    put(("output", "out"), args.out)
    put(("output", "trace"), args.trace)
    put(("experiment", "observers"), args.observers)
    put(("experiment", "state"), args.state)
    put(("verify", "samples"), getattr(args, "samples", None))
    put(("bench", "ladder"), getattr(args, "ladder", None))
    if args.angles in ("reference", "random"):
        put(("angles", "mode"), args.angles)
    elif args.angles is not None:
        put(("angles", "mode"), "file")
        put(("angles", "file"), args.angles)
    return over


def load_config(args) -> RunConfig:
    """Merge defaults, the TOML file and flags, then validate everything."""
    raw = copy.deepcopy(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = _merge(raw, tomllib.loads(path.read_text()))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raw = _merge(raw, _flag_overrides(args))

    exp = raw["experiment"]
    obs = exp["observables"]
    if isinstance(obs, int):
        obs = [obs] * int(exp["observers"])
    elif len(obs) != int(exp["observers"]):
        raise ConfigError("experiment.observables must have one entry per observer")
    config = ExperimentConfig(tuple(obs))
    if exp["state"] == "ghz":
        state = make_ghz(config.n_observers)
    else:
        if not Path(exp["state"]).is_file():
            raise ConfigError(f"state file {exp['state']} does not exist")
        state = read_state_file(exp["state"])
    if state.n_observers != config.n_observers:
        raise ConfigError(f"state has {state.n_observers} observers, experiment has "
                          f"{config.n_observers}")

    solver = raw["solver"]
    if solver is None:
        solver = "simplex" if config.n_rows_reduced <= SIMPLEX_MAX_ROWS else "ipm"
    if solver not in ("ipm", "simplex"):
        raise ConfigError(f"solver must be ipm or simplex, not {solver!r}")
    raw["solver"] = solver

    try:
        ipm = mf_ipm.IpmSettings(**raw["ipm"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[ipm]: {exc}") from None
    raw["ipm"] = dataclasses.asdict(ipm)
    unknown = set(raw["simplex"]) - SIMPLEX_KEYS
    if unknown:
        raise ConfigError(f"[simplex]: unknown keys {sorted(unknown)}")

    seed = int(raw["seed"])
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in 64 bits")
    dsm_raw = dict(raw["dsm"])
    if "rng_seed" not in dsm_raw:
        child = np.random.SeedSequence(seed).spawn(4)[1]
        dsm_raw["rng_seed"] = int(child.generate_state(1, np.uint64)[0])
    try:
        dsm_settings = dsm.DsmSettings(**dsm_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[dsm]: {exc}") from None
    raw["dsm"] = dataclasses.asdict(dsm_settings)

    ang = raw["angles"]
    if ang["mode"] is None:
        ang["mode"] = "reference" if exp["state"] == "ghz" else "random"
    if ang["mode"] not in ("reference", "random", "values", "file"):
        raise ConfigError(f"unknown angles.mode {ang['mode']!r}")
    if ang["mode"] == "reference" and exp["state"] != "ghz":
        raise ConfigError("reference angles are defined for the GHZ state only")
    if ang["mode"] == "file" and not (ang["file"] and Path(ang["file"]).is_file()):
        raise ConfigError(f"angles file {ang['file']} does not exist")

    timeout = float(raw["timeout"] or 0)
    if timeout < 0:
        raise ConfigError("timeout must be non-negative")
    out = raw["output"]["out"]
    trace = raw["output"]["trace"]
    return RunConfig(raw, config, state, seed, solver, ipm, dict(raw["simplex"]),
                     dsm_settings, timeout, Path(out) if out else None,
                     Path(trace) if trace else None)


def resolve_angles(run: RunConfig) -> AngleVector:
    ang, cfg = run.raw["angles"], run.experiment
    mode = ang["mode"]
    if mode == "reference":
        if cfg.observables != (2,) * cfg.n_observers:
            raise ConfigError("reference angles need two observables per observer")
        return dsm.ghz_reference_angles(cfg.n_observers)
    if mode == "random":
        return AngleVector.random(cfg, np.random.default_rng(run.streams()["angles"]))
    if mode == "values":
        return AngleVector.from_flat(cfg, ang["values"])
    data = json.loads(Path(ang["file"]).read_text())
    flat = data.get("best_angles", data.get("angles"))
    if flat is None:
        raise ConfigError(f"{ang['file']} holds neither best_angles nor angles")
    return AngleVector.from_flat(cfg, flat)


@contextlib.contextmanager
def deadline(seconds: float):
    """Raise :class:`RunTimeout` in the main thread after ``seconds`` (0 = none)."""
    if not seconds or not hasattr(signal, "SIGALRM"):
        yield
        return

    expired = []

    def fire(signum, frame):
        expired.append(True)
        raise RunTimeout(f"timed out after {seconds:g} s")

    previous = signal.signal(signal.SIGALRM, fire)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    except Exception as exc:
        # compiled extensions may replace the alarm's exception with their own
        if expired and not isinstance(exc, RunTimeout):
            raise RunTimeout(f"timed out after {seconds:g} s") from exc
        raise
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)


def solve_one(lp, solver: str, run: RunConfig, trace_stream=None) -> dict:
    """Solve one LP; returns a report dict or raises :class:`SolverFailure`."""
    t0 = time.perf_counter()
    if solver == "ipm":
        res = mf_ipm.solve(lp, run.ipm, trace_stream)
        if res.status == "numerical-failure":
            raise SolverFailure("interior point solver broke down")
        report = dict(objective=res.objective, status=res.status,
                      iterations=res.ipm_iterations, cg_iterations=res.total_cg_iterations,
                      gap=res.final_gap, primal_infeasibility=res.primal_infeasibility)
    else:
        try:
            dense = reference.materialize_dense(lp)
        except reference.OracleError as exc:
            raise ConfigError(f"{exc}; use --solver ipm") from None
        res = reference.simplex_solve(dense, **run.simplex)
        if res.status != "optimal":
            raise SolverFailure(f"simplex ended with status {res.status}")
        report = dict(objective=res.objective, status=res.status, iterations=res.iterations)
    report["seconds"] = time.perf_counter() - t0
    report["solver"] = solver
    return report


def _build(run: RunConfig, angles: AngleVector, config=None, state=None):
    config = config or run.experiment
    state = state or run.state
    return build_lp(config, probability_table(state, config, angles))


def _write_json(run: RunConfig, payload: dict):
    payload = dict(payload, config=run.raw)
    if run.out:
        run.out.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@contextlib.contextmanager
def _maybe_open(path):
    if path is None:
        yield None
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_solve_lp(run: RunConfig) -> int:
    angles = resolve_angles(run)
    lp = _build(run, angles)
    with _maybe_open(run.trace if run.solver == "ipm" else None) as trace:
        report = solve_one(lp, run.solver, run, trace)
    print(f"n={run.experiment.n_observers} rows={lp.n_rows} solver={run.solver} "
          f"v_c={report['objective']:.6f} status={report['status']} "
          f"iterations={report['iterations']} time={report['seconds']:.2f}s")
    _write_json(run, dict(report, angles=angles.flat()))
    return EXIT_OK


def cmd_minimize(run: RunConfig) -> int:
    settings = run.ipm if run.solver == "ipm" else run.simplex
    objective = dsm.critical_visibility_objective(run.state, run.experiment, run.solver, settings)
    t0 = time.perf_counter()
    with _maybe_open(run.trace) as trace:
        res = dsm.minimize(objective, run.experiment, run.dsm, trace)
    elapsed = time.perf_counter() - t0
    print(f"{'restart':>7} {'value':>10} {'LPs':>6} {'seconds':>9}")
    done = [k for k in range(run.dsm.restarts) if k not in {a for a, _ in res.aborted}]
    for k, v, e, s in zip(done, res.per_restart_values, res.per_restart_evaluations,
                          res.per_restart_seconds):
        print(f"{k:>7} {v:>10.5f} {e:>6} {s:>9.2f}")
    for k, msg in res.aborted:
        print(f"{k:>7} aborted: {msg}")
    print(f"min v_c = {res.best_value:.6f} after {res.evaluations} LPs in {elapsed:.1f} s "
          f"({'converged' if res.converged else 'evaluation budget exhausted'})")
    _write_json(run, dict(
        best_value=res.best_value, best_angles=res.best_angles.flat(),
        evaluations=res.evaluations, converged=res.converged, seconds=elapsed,
        best_restart=res.best_restart, restarts=[
            dict(restart=k, value=v, evaluations=e, seconds=s) for k, v, e, s in
            zip(done, res.per_restart_values, res.per_restart_evaluations,
                res.per_restart_seconds)],
        aborted=[dict(restart=k, message=m) for k, m in res.aborted]))
    return EXIT_OK


def cmd_verify(run: RunConfig) -> int:
    samples = int(run.raw["verify"]["samples"])
    if samples < 1:
        raise ConfigError("verify.samples must be at least 1")
    rng = np.random.default_rng(run.streams()["verify"])
    rows = []
    for i in range(samples):
        lp = _build(run, AngleVector.random(run.experiment, rng))
        ipm = solve_one(lp, "ipm", run)
        ref = solve_one(lp, "simplex", run)
        rows.append(dict(sample=i, ipm=ipm["objective"], simplex=ref["objective"],
                         difference=abs(ipm["objective"] - ref["objective"]),
                         ipm_status=ipm["status"], ipm_seconds=ipm["seconds"],
                         simplex_seconds=ref["seconds"]))
    diffs = np.array([r["difference"] for r in rows])
    summary = dict(samples=samples, max_difference=float(diffs.max()),
                   mean_difference=float(diffs.mean()), gate=VERIFY_GATE,
                   within_gate=bool(diffs.max() <= VERIFY_GATE))
    print(f"n={run.experiment.n_observers} samples={samples} "
          f"max|ipm-simplex|={summary['max_difference']:.3e} "
          f"mean={summary['mean_difference']:.3e} gate={VERIFY_GATE} "
          f"{'ok' if summary['within_gate'] else 'EXCEEDED'}")
    _write_json(run, dict(summary, rows=rows))
    return EXIT_OK


def cmd_export_mps(run: RunConfig) -> int:
    if run.out is None:
        raise ConfigError("export-mps needs --out PATH")
    lp = _build(run, resolve_angles(run))
    mps.write_mps(lp, run.out)
    print(f"wrote {run.out} ({lp.n_rows} rows, {lp.n_cols} columns)")
    return EXIT_OK


BENCH_FIELDS = ("n", "rows", "columns", "solver", "seconds", "objective", "status")


def cmd_bench(run: RunConfig) -> int:
    bench = run.raw["bench"]
    ladder = [int(n) for n in bench["ladder"]]
    solvers = list(bench["solvers"])
    if not ladder or any(n < 2 for n in ladder):
        raise ConfigError("bench.ladder must list observer counts of at least 2")
    if set(solvers) - {"ipm", "simplex"}:
        raise ConfigError("bench.solvers may contain ipm and simplex only")
    if run.raw["experiment"]["state"] != "ghz":
        raise ConfigError("bench runs on the GHZ state")
    mode = run.raw["angles"]["mode"]
    if mode not in ("reference", "random"):
        raise ConfigError("bench supports reference or random angles")
    rng = np.random.default_rng(run.streams()["bench"])
    rows = []
    for n in ladder:
        cfg = ExperimentConfig.uniform(n)
        angles = (dsm.ghz_reference_angles(n) if mode == "reference"
                  else AngleVector.random(cfg, rng))
        lp = _build(run, angles, cfg, make_ghz(n))
        for solver in solvers:
            row = dict(n=n, rows=lp.n_rows, columns=lp.n_cols, solver=solver)
            try:
                with deadline(run.timeout):
                    rep = solve_one(lp, solver, run)
                row.update(seconds=rep["seconds"], objective=rep["objective"],
                           status=rep["status"])
            except RunTimeout:
                row.update(seconds=run.timeout, objective=math.nan, status="timeout")
            except (SolverFailure, ConfigError) as exc:
                row.update(seconds=math.nan, objective=math.nan, status=f"failed: {exc}")
            rows.append(row)
            print(f"n={n} rows={row['rows']} {solver:>7} {row['seconds']:>9.2f}s "
                  f"v_c={row['objective']:.6f} {row['status']}", flush=True)
    if run.out:
        with open(run.out, "w", newline="") as fh:
            fh.write("# config: " + json.dumps(run.raw, default=_json_default) + "\n")
            writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


COMMANDS = {
    "solve-lp": cmd_solve_lp,
    "minimize": cmd_minimize,
    "verify": cmd_verify,
    "export-mps": cmd_export_mps,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--solver", choices=("ipm", "simplex"))
    common.add_argument("--rank", type=int, help="partial Cholesky rank k")
    common.add_argument("--ftol", type=float, help="downhill simplex tolerance")
    common.add_argument("--obj-scale", type=float, help="IPM objective scaling")
    common.add_argument("--out", help="JSON report (CSV for bench)")
    common.add_argument("--trace", help="per-iteration CSV trace")
    common.add_argument("--timeout", type=float, help="seconds, 0 for none")
    common.add_argument("-n", "--observers", type=int)
    common.add_argument("--state", help="'ghz' or a state file")
    common.add_argument("--angles", help="'reference', 'random' or a minimize JSON report")
    parser = argparse.ArgumentParser(prog="critvis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve-lp", parents=[common], help="critical visibility at fixed angles")
    sub.add_parser("minimize", parents=[common], help="minimize over measurement angles")
    p = sub.add_parser("verify", parents=[common], help="compare IPM with the simplex oracle")
    p.add_argument("--samples", type=int)
    sub.add_parser("export-mps", parents=[common], help="write the LP in MPS format")
    p = sub.add_parser("bench", parents=[common], help="timing ladder over observer counts")
    p.add_argument("--ladder", type=int, nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args)
        timeout = 0 if args.command == "bench" else run.timeout
        with deadline(timeout):
            return COMMANDS[args.command](run)
    except (ConfigError, mps.MpsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, dsm.ObjectiveError, mf_ipm.NumericalFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RunTimeout as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
