"""Command line: ``ismoc run``, ``ismoc verify`` and ``ismoc bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESET_NAMES, ConfigError, build, load, preset_config, validate
from .controls import ControlField, PenaltySchedule, TimeGrid, write_csv
from .ism import IsmError, run_ism
from .models.base import DenseModel
from .objective import ControlProblem
from .problems import gpe_problem, initial_control, rotor_problem, spin_problem
from .runtime import EfficiencyReport, TaskError, efficiency_table, time_to_target
from .verify import gradient_check, norm_drift, theorem_check

__all__ = ["main", "cmd_run", "cmd_verify", "cmd_bench"]

log = logging.getLogger("ismoc")

SUMMARY_FORMAT = "ismoc-summary/1"
VERIFY_FORMAT = "ismoc-verify/1"


def _config_from_args(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("config", "give either --config or --preset, not both")
    if args.config:
        cfg = load(args.config)
    elif args.preset:
        cfg = preset_config(args.preset, quick=args.quick)
    else:
        raise ConfigError("config", "one of --config or --preset is required")
    if args.workers is not None:
        cfg.setdefault("ism", {})["workers"] = args.workers
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "max_iter", None) is not None:
        cfg.setdefault("ism", {})["max_iter"] = args.max_iter
    if getattr(args, "mode", None) is not None:
        cfg.setdefault("ism", {})["mode"] = args.mode
    if args.out_dir is not None:
        cfg.setdefault("output", {})["dir"] = args.out_dir
    return validate(cfg)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_one(cfg: dict, out_dir: Path, tag: str = "") -> tuple:
    problem, u0, ism_cfg = build(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"iterations{tag}.jsonl"
    echo = {"format_version": __version__, "input": cfg}
    try:
        u, record = run_ism(problem, u0, ism_cfg, config_echo=echo)
    except IsmError as exc:
        if exc.record is not None:
            log_path.write_text("\n".join(exc.record.log_lines()) + "\n", encoding="utf-8")
        raise
    log_path.write_text("\n".join(record.log_lines()) + "\n", encoding="utf-8")
    write_csv(u, out_dir / f"control{tag}.csv", config=record.config)
    summary = record.summary()
    summary["summary_format"] = SUMMARY_FORMAT
    summary["normalization"] = problem.normalization
    if record.iterations:
        summary["initial_J"] = record.iterations[0].J
    _write_json(out_dir / f"summary{tag}.json", summary)
    return problem, u, record


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(cfg["output"].get("dir", "out"))
    _, _, record = _run_one(cfg, out_dir)
    if record.iterations:
        first, last = record.iterations[0], record.iterations[-1]
        print(f"iterations: {last.k}  J: {first.J:.10g} -> {last.J:.10g}  Err: {last.err}")
    print(f"artifacts written to {out_dir}")
    return 0


# -- verify ---------------------------------------------------------------------------


def _random_fixture(rng, dim: int, steps: int = 64, channels: int = 1):
    def herm():
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return (a + a.conj().T) / 2

    def unit():
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return v / np.linalg.norm(v)

    model = DenseModel(herm(), np.array([herm() for _ in range(channels)]), name=f"random{dim}")
    grid = TimeGrid(0.0, float(rng.uniform(0.5, 2.0)), steps)
    problem = ControlProblem(model, unit(), unit(), grid,
                             PenaltySchedule.constant(float(rng.uniform(0.0, 1.0)), steps), name=f"random{dim}")
    return problem, ControlField(grid, rng.standard_normal((channels, steps)))


def _verify_theorems(rng) -> list[dict]:
    out = []
    for trial in range(5):
        problem, u = _random_fixture(rng, 2)
        for n in (1, 2):
            r = theorem_check(problem, u, n)
            out.append(dict(r, fixture=f"two-level #{trial}"))
    problem = spin_problem(3, 1.0 / 14.0, 2**7)
    u = initial_control(problem, "random", 100.0, int(rng.integers(1 << 31)))
    out.append(dict(theorem_check(problem, u, 8), fixture="spin3"))
    for r in out:
        r["pass"] = bool(r["theorem1_pass"] and r["theorem2_pass"])
    return out


def _verify_gradients(rng) -> list[dict]:
    out = []
    p = spin_problem(3, 1.0 / 14.0, 2**10)
    u = initial_control(p)
    u = u.with_samples(u.samples + 10.0 * rng.standard_normal(u.samples.shape))
    out.append(gradient_check(p, u))
    p = rotor_problem(10, 1e5, 2**9)
    out.append(gradient_check(p, ControlField(p.grid, 1e-3 * rng.standard_normal((1, p.grid.steps)))))
    p = gpe_problem()
    out.append(gradient_check(p, initial_control(p)))
    return out


def _verify_unitarity(rng) -> list[dict]:
    out = []
    for dim in (2, 4, 8):
        p, u = _random_fixture(rng, dim, 256)
        r = norm_drift(p, u)
        r["pass"] = r["max_step_drift"] <= 1e-13
        out.append(r)
    p = rotor_problem(10, 1e5, 2**9)
    r = norm_drift(p, ControlField(p.grid, 1e-3 * rng.standard_normal((1, p.grid.steps))))
    r["pass"] = r["max_step_drift"] <= 1e-13
    out.append(r)
    p = gpe_problem()
    r = norm_drift(p, initial_control(p))
    r["pass"] = r["total_drift"] <= 1e-10
    out.append(r)
    return out


SCOPES = {"theorems": _verify_theorems, "gradients": _verify_gradients, "unitarity": _verify_unitarity}


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    scopes = list(SCOPES) if args.scope == "all" else [args.scope]
    report = {"format": VERIFY_FORMAT, "version": __version__, "seed": args.seed, "results": {}}
    ok = True
    for scope in scopes:
        t0 = time.perf_counter()
        rows = SCOPES[scope](rng)
        passed = all(r["pass"] for r in rows)
        ok &= passed
        report["results"][scope] = {"pass": passed, "seconds": time.perf_counter() - t0, "checks": rows}
        print(f"{scope:10s} {'PASS' if passed else 'FAIL'}  ({len(rows)} checks)")
    report["pass"] = ok
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify.json", report)
    else:
        print(json.dumps(report, sort_keys=True, default=float))
    return 0 if ok else 1


# -- bench ------------------------------------------------------------------------------


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    n_list = sorted({int(x) for x in args.n_list.split(",")})
    if 1 not in n_list:
        raise ConfigError("n-list", "must include 1 (the sequential baseline)")
    out_dir = Path(cfg["output"].get("dir", "out"))
    records = {}
    for n in n_list:
        run_cfg = json.loads(json.dumps(cfg))
        run_cfg["ism"]["n"] = n
        if args.workers is None:
            run_cfg["ism"]["workers"] = n
        run_cfg = validate(run_cfg)
        _, _, record = _run_one(run_cfg, out_dir, tag=f"_N{n}")
        records[n] = record
        print(f"N={n}: {len(record) - 1} iterations, final J {record.J[-1]:.10g}, wall {record.total_wall:.3f}s")
    j_limit = args.j_limit if args.j_limit is not None else max(max(r.J) for r in records.values())
    j0 = records[1].J[0]
    eps = args.eps if args.eps is not None else 0.1 * max(j_limit - j0, 0.0) or 1e-12
    report = efficiency_table(records, eps, j_limit, config=cfg)
    report.to_csv(out_dir / "efficiency.csv")
    speedup = {
        "format": "ismoc-speedup/1",
        "config": cfg,
        "eps": eps,
        "j_limit": j_limit,
        "rows": [{"N": n, "t": t, "S": s, "Eff": e} for n, t, s, e in report.rows],
        "targets": {str(n): str(time_to_target(r, eps, j_limit)) for n, r in records.items()},
    }
    _write_json(out_dir / "speedup.json", speedup)
    _write_json(out_dir / "profile.json", {
        "format": "ismoc-profile/1",
        "config": cfg,
        "profiles": {str(n): r.profile() for n, r in records.items()},
    })
    print(report.to_table())
    return 0


# -- entry point ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--preset", choices=[n for n in PRESET_NAMES if not n.endswith("-quick")],
                   help="built-in benchmark configuration")
    p.add_argument("--quick", action="store_true", help="desk-scale variant of the preset")
    p.add_argument("--out-dir", help="directory for output artifacts")
    p.add_argument("--workers", type=int, help="worker pool size")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--mode", choices=["sequential", "thread", "process"], help="execution mode")
    p.add_argument("--max-iter", type=int, help="outer iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ismoc", description="Time-parallel quantum optimal control.")
    parser.add_argument("--version", action="version", version=f"ismoc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the outer loop on one configuration")
    _common(run)
    run.set_defaults(func=cmd_run)
    ver = sub.add_parser("verify", help="run the property checks")
    ver.add_argument("--scope", choices=["theorems", "gradients", "unitarity", "all"], default="all")
    ver.add_argument("--seed", type=int)
    ver.add_argument("--out-dir")
    ver.set_defaults(func=cmd_verify)
    bench = sub.add_parser("bench", help="speedup and efficiency over a list of N")
    _common(bench)
    bench.add_argument("--n-list", default="1,2,4,8", help="comma separated subinterval counts")
    bench.add_argument("--eps", type=float, help="target gap J_limit - J")
    bench.add_argument("--j-limit", type=float, help="converged figure of merit")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (IsmError, TaskError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
