"""Command line: ``sim run``, ``sim report`` and ``sim gen``.

Output locations come from the experiment spec (or ``--out``); the
``SIM_OUTPUT_DIR`` environment variable overrides the output directory and
nothing else.  Invalid input exits with status 2.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..config import ConfigError, load_mapping
from ..isa import apps as app_lib
from ..isa.generators import (AlwaysTaken, NeverTaken, Periodic, Random, gen_branch_pattern,
                              gen_fork_join, gen_pointer_chase, gen_stream_triad)
from ..isa.trace import TraceError, Workload, multiprogrammed
from ..isa.traceio import write_workload
from . import reports
from .experiment import KERNELS, OUTPUT_ENV, ExperimentSpec, run_experiment, write_csv

EXIT_INVALID = 2


def _out_dir(flag, default) -> Path:
    """An explicit --out wins, then the environment, then the experiment spec or input location."""
    if flag:
        return Path(flag)
    return Path(os.environ.get(OUTPUT_ENV) or default)


def _progress(key, done, total):
    print(f"[{done}/{total}] {key.workload_id} {key.model} {key.policy} {key.predictor} "
          f"n={key.n_cores} seed={key.seed}", file=sys.stderr)


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.jobs:
        spec.jobs = args.jobs
    spec.validate()
    rows = run_experiment(spec, progress=None if args.quiet else _progress)
    out = _out_dir(args.out, spec.output_dir)
    path = write_csv(rows, out / f"{spec.name}.csv")
    print(path)
    if args.report:
        reports.REPORTS[spec.study](rows, out)
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args.out, Path(args.results).parent)
    rep = reports.report_from_csv(args.results, args.study, out)
    if rep.get("gaps"):
        print(f"warning: {len(rep['gaps'])} missing cells marked as gaps", file=sys.stderr)
    print(out / f"{args.study}_report.json")
    return 0


# --- workload specs for `sim gen` -----------------------------------------------------------

def _pattern(d: dict):
    kind = d.get("pattern")
    if kind == "always_taken":
        return AlwaysTaken()
    if kind == "never_taken":
        return NeverTaken()
    if kind == "periodic":
        return Periodic(int(d["k"]))
    if kind == "random":
        return Random(float(d.get("p", 0.5)), seed=int(d.get("seed", 0)))
    raise ConfigError(f"pattern: unknown branch pattern {kind!r}")


def build_generated(d: dict) -> Workload:
    """Workload described by a generator table (see ``scripts/workload_example.toml``)."""
    gen = d.get("generator")
    name = str(d.get("name", gen))
    try:
        if gen == "app":
            return app_lib.single_app_workload(d["app"], int(d.get("n_instrs", app_lib.DEFAULT_SLOT_INSTRS)))
        if gen == "mix":
            return app_lib.mix_workload(int(d["mix"]), int(d.get("n_instrs", app_lib.DEFAULT_SLOT_INSTRS)))
        if gen == "pointer_chase":
            tr = gen_pointer_chase(int(d.get("seed", 0)), int(d["buffer_bytes"]), int(d["n_instrs"]))
            return Workload(name=name, traces=[tr])
        if gen == "stream_triad":
            tr = gen_stream_triad(int(d["elem_count"]), int(d.get("elem_bytes", 4)),
                                  int(d.get("repetitions", 1)))
            return Workload(name=name, traces=[tr])
        if gen == "branch":
            tr = gen_branch_pattern(_pattern(d), int(d["n_branches"]))
            return Workload(name=name, traces=[tr])
        if gen == "fork_join":
            kernel = d.get("kernel")
            if kernel not in KERNELS:
                raise ConfigError(f"kernel: expected one of {sorted(KERNELS)}, got {kernel!r}")
            return gen_fork_join(int(d["threads"]), KERNELS[kernel], int(d["work_per_thread"]),
                                 int(d.get("barriers", 0)), seed=int(d.get("seed", 0)))
        if gen == "multiprogrammed":
            parts = d.get("slots")
            if not isinstance(parts, list) or not parts:
                raise ConfigError("slots: expected a non-empty list of generator tables")
            subs = [build_generated(p) for p in parts]
            if any(w.n_threads != 1 for w in subs):
                raise ConfigError("slots: every slot must be single-threaded")
            apps = [p.get("app", p.get("name", p.get("generator"))) for p in parts]
            return multiprogrammed(name, [w.traces[0] for w in subs], apps=apps)
    except KeyError as exc:
        raise ConfigError(f"{gen}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError, TraceError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{gen}: {exc}") from None
    raise ConfigError(f"generator: unknown generator {gen!r}")


def cmd_gen(args) -> int:
    try:
        data = load_mapping(args.workload_spec)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{args.workload_spec}: {exc}") from None
    wl = build_generated(data)
    default = Path(args.workload_spec).with_suffix(".trace").name
    target = Path(args.output) if args.output else _out_dir(None, ".") / default
    target.parent.mkdir(parents=True, exist_ok=True)
    write_workload(target, wl)
    print(target)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Trace-driven multicore simulator with two core models.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (TOML or JSON)")
    r.add_argument("spec")
    r.add_argument("--out", help="output directory (default: spec output_dir)")
    r.add_argument("--jobs", type=int, help="worker processes")
    r.add_argument("--report", action="store_true", help="also write the study report")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="build a report from a results CSV")
    rep.add_argument("results")
    rep.add_argument("--study", required=True, choices=sorted(reports.REPORTS))
    rep.add_argument("--out", help="output directory (default: next to the CSV)")
    rep.set_defaults(func=cmd_report)

    g = sub.add_parser("gen", help="write a trace file from a workload spec")
    g.add_argument("workload_spec")
    g.add_argument("-o", "--output", help="trace path (.trace or .trace.gz)")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, reports.ReportError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
