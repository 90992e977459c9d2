"""``focqs`` command line: gen, run, sweep, replay and solve.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .controllers import ControlSchedule
from .experiment import (
    ALGORITHMS,
    ConfigError,
    SweepConfig,
    make_instance,
    replay_schedule,
    run_algorithm,
    run_batch,
)
from .problems import GenerationError, exact_ground_energy, format_bitstring, load_instance, save_instance
from .statevector import EvolutionScheme

log = logging.getLogger("focqs")

RUN_ALGORITHMS = tuple(a for a in ALGORITHMS if a != "replay")
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_scheme_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=["first-order", "second-order", "dense"], default=None)
    p.add_argument("--substeps", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focqs", description="Feedback-based quantum optimization simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log per-trial progress")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random instance")
    gen.add_argument("--kind", choices=["ising", "mis"], required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--lambda", dest="lam", type=float, default=2.0, help="MIS penalty weight")
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run one algorithm on a stored instance")
    run.add_argument("instance")
    run.add_argument("--config", help="YAML/JSON file of defaults; flags override it")
    run.add_argument("--algo", choices=RUN_ALGORITHMS)
    run.add_argument("--layers", type=int)
    run.add_argument("--dt", type=float)
    run.add_argument("--beta0", type=float)
    run.add_argument("--falloff", type=float)
    run.add_argument("--window", help="layer count or 'unbounded'")
    run.add_argument("--ordering", choices=["as-printed", "consistent"])
    run.add_argument("--inner-steps", dest="inner_steps", type=int)
    run.add_argument("--grad-tol", dest="grad_tolerance", type=float)
    run.add_argument("--warmup", dest="warmup_layers", type=int)
    run.add_argument("--u0", help="input schedule for focqs-iter")
    _add_scheme_flags(run)
    run.add_argument("--out", required=True, help="trace file (CSV)")
    run.add_argument("--schedule-out", help="final schedule file (JSON)")

    sweep = sub.add_parser("sweep", help="run a seeded batch from a config file")
    sweep.add_argument("config")
    sweep.add_argument("--out", required=True, help="summary file (JSON)")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--artifacts", help="directory for per-trial traces and schedules")

    replay = sub.add_parser("replay", help="evaluate a stored schedule without feedback")
    replay.add_argument("instance")
    replay.add_argument("schedule")
    _add_scheme_flags(replay)
    replay.add_argument("--out", required=True)

    solve = sub.add_parser("solve", help="exact ground energy by enumeration")
    solve.add_argument("instance")
    return parser


def _read_mapping(path: str) -> dict:
    p = Path(path)
    try:
        data = json.loads(p.read_text()) if p.suffix == ".json" else yaml.safe_load(p.read_text())
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a mapping")
    return data


def _scheme(args, defaults: dict | None = None) -> EvolutionScheme:
    defaults = defaults or {}
    kind = args.scheme or defaults.get("kind", "first-order")
    substeps = args.substeps if args.substeps is not None else defaults.get("substeps", 1)
    try:
        return EvolutionScheme(kind, substeps)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_instance(path: str):
    try:
        return load_instance(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from exc


def _load_schedule(path: str) -> ControlSchedule:
    try:
        return ControlSchedule.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read schedule {path}: {exc}") from exc


def cmd_gen(args) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be at least 2, got {args.n}")
    if args.seed < 0:
        raise UsageError(f"--seed must be non-negative, got {args.seed}")
    if not args.lam > 0:
        raise UsageError(f"--lambda must be positive, got {args.lam}")
    try:
        inst = make_instance(args.kind, args.n, args.seed, args.lam)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_instance(inst, args.out)
    log.info("wrote %s instance n=%d seed=%d to %s", args.kind, args.n, args.seed, args.out)
    return EXIT_OK


PARAM_KEYS = ("beta0", "falloff", "window", "ordering", "inner_steps", "grad_tolerance", "warmup_layers")


def cmd_run(args) -> int:
    defaults = _read_mapping(args.config) if args.config else {}
    algo = args.algo or defaults.get("algo")
    if algo not in RUN_ALGORITHMS:
        raise UsageError(f"--algo must be one of {', '.join(RUN_ALGORITHMS)}")
    layers = args.layers if args.layers is not None else int(defaults.get("layers", 100))
    dt = args.dt if args.dt is not None else float(defaults.get("dt", 0.1))
    if layers < 1 or not dt > 0:
        raise UsageError("--layers must be positive and --dt > 0")
    params = dict(defaults.get("params", {}))
    for key in PARAM_KEYS:
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    if algo.startswith("focqs"):
        params.setdefault("beta0", 10.0)
        params.setdefault("falloff", 2.0)
        params.setdefault("window", "unbounded")
        params.setdefault("ordering", "as-printed")
    if algo == "focqs-windowed":
        params.setdefault("inner_steps", 20)
        params.setdefault("grad_tolerance", 1e-4)
        params.setdefault("warmup_layers", 5)
    scheme = _scheme(args, defaults.get("scheme"))
    u0_path = args.u0 or defaults.get("u0")
    if algo == "focqs-iter" and not u0_path:
        raise UsageError("focqs-iter requires --u0 <schedule file>")
    inst = _load_instance(args.instance)
    u0 = _load_schedule(u0_path) if u0_path else None
    try:
        schedule, _ = run_algorithm(inst, algo, layers, dt, params, scheme, u0)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    header = {
        "instance": {"path": Path(args.instance).name, "kind": inst.kind, "n": inst.n, "seed": inst.seed},
        "algorithm": algo,
        "params": params,
        "layers": layers,
        "dt": dt,
    }
    if u0_path:
        header["u0"] = Path(u0_path).name
    schedule.provenance = {**schedule.provenance, **header}
    replay_schedule(inst, schedule, scheme, header).save(args.out)
    if args.schedule_out:
        schedule.save(args.schedule_out)
    log.info("%s: %d layers, wrote %s", algo, layers, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    try:
        config = SweepConfig.load(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc}") from exc
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    summary = run_batch(config, threads=args.threads, artifacts=args.artifacts)
    summary.save(args.out)
    for f in summary.failures:
        log.error("failed: cell %s n=%d seed=%d: %s", f["label"], f["n"], f["seed"], f["error"])
    if not args.quiet:
        for label, per_n in summary.cells.items():
            for n, cell in per_n.items():
                print(f"{label:>16} n={n:<3} best={_fmt(cell['mean_ratio_best'])} final={_fmt(cell['mean_ratio_final'])}")
    return EXIT_FAILURE if summary.failed else EXIT_OK


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.4f}"


def cmd_replay(args) -> int:
    inst = _load_instance(args.instance)
    schedule = _load_schedule(args.schedule)
    header = {
        "instance": {"path": Path(args.instance).name, "kind": inst.kind, "n": inst.n, "seed": inst.seed},
        "algorithm": "replay",
        "schedule": Path(args.schedule).name,
    }
    replay_schedule(inst, schedule, _scheme(args), header).save(args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    energy, bits = exact_ground_energy(inst)
    print("%.17g" % energy)
    print(format_bitstring(bits, inst.n))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "sweep": cmd_sweep, "replay": cmd_replay, "solve": cmd_solve}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    level = logging.ERROR if args.quiet else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"focqs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationError, ValueError, RuntimeError, OSError) as exc:
        print(f"focqs {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
