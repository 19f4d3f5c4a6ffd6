"""Command line entry point: ``idsbench <subcommand> ...``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 infrastructure
failure (IDS not ready, clock skew, replay lag).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from ._num import format_exact, parse_fraction
from .adapters.control import ExternalIds, MockIds
from .adapters.mock import SNORT_LIKE, SURICATA_LIKE, MockIdsConfig
from .defaults import default_mapping, default_priorities
from .errors import HarnessError, InfrastructureError, ValidationError
from .orchestrator import (
    DeploymentProfile, TraceLibrary, grid_plans, load_profile, run_dir_name, run_phase, run_test,
)
from .pipeline import build_report, process_run, write_processed
from .plan import (
    DEFAULT_ADDRESS_POOL, AttackType, generate_uniform_plan, load_mapping, load_plan,
    load_priorities, write_plan,
)
from .traceprep import prepare_trace, write_trace
from .traceprep.pcap import read_capture

log = logging.getLogger("idsbench")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INFRA = 0, 1, 2, 3
ARTIFACTS_ENV = "IDSBENCH_ARTIFACTS"


def _fraction(text: str) -> Fraction:
    try:
        return parse_fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction_list(text: str) -> list[Fraction]:
    return [_fraction(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_out() -> Path:
    return Path(os.environ.get(ARTIFACTS_ENV, "artifacts"))


def _jsonable(value):
    if isinstance(value, Fraction):
        return format_exact(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _dry_run(args, **resolved) -> int:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "dry_run")}
    config.update(resolved)
    print(json.dumps(_jsonable(config), indent=2, sort_keys=True, default=str))
    return EXIT_OK


# -- resolution helpers -----------------------------------------------------


def _expectations(args):
    profile = load_priorities(args.priorities) if args.priorities else default_priorities()
    mapping = load_mapping(args.mapping) if args.mapping else default_mapping()
    return profile, mapping


def _deployment(args) -> DeploymentProfile:
    profile = load_profile(args.profile) if args.profile else DeploymentProfile()
    return profile.with_overrides(
        time_compress=args.time_compress,
        mock_capacity_gbps=args.mock_capacity_gbps,
        mock_degradation=args.mock_degradation,
    )


def _adapter(deployment: DeploymentProfile, ids_id: str, priorities):
    if deployment.mode == "external":
        return ExternalIds(deployment.endpoints["ids_cmd"], ids_id)
    m = deployment.mock
    style = m.get("mock_stats_style") or (SNORT_LIKE if "snort" in ids_id.lower() else SURICATA_LIKE)
    kw = {}
    for key, name in (("mock_capacity_gbps", "capacity_gbps"),
                      ("mock_degradation", "detection_degradation"),
                      ("mock_knee", "degradation_knee"),
                      ("mock_memory_bytes", "memory_footprint"),
                      ("mock_base_cpu", "base_cpu"), ("mock_cores", "cores")):
        if key in m:
            kw[name] = m[key]
    if "mock_ready_delay" in m:
        delay = m["mock_ready_delay"]
        kw["ready_delay"] = None if delay < 0 else float(delay)
    if "mock_aliases" in m:
        kw["aliases"] = load_mapping(m["mock_aliases"])
    return MockIds(MockIdsConfig.from_profile(priorities, style, **kw), ids_id)


def _process_dir(directory: Path, profile, mapping) -> dict:
    run = process_run(directory, profile, mapping)
    write_processed(run, directory)
    m = run.result.metrics()
    return {"dir": str(directory), "tp": m.tp, "fp": m.fp, "fn": m.fn,
            "tpr": m.tpr, "far": m.far, "precision": m.precision}


def _summary_line(row: dict) -> str:
    def show(v):
        return "undefined" if v is None else f"{float(v):.4f}"
    return (f"{row['dir']}: tp={row['tp']} fp={row['fp']} fn={row['fn']} "
            f"tpr={show(row['tpr'])} far={show(row['far'])} precision={show(row['precision'])}")


# -- subcommands ------------------------------------------------------------


def cmd_prepare(args) -> int:
    attack_type = AttackType.parse(args.attack_type)
    if args.dry_run:
        return _dry_run(args, attack_type=attack_type.value)
    raw = Path(args.raw)
    if not raw.is_file():
        raise ValidationError(f"input capture {raw} does not exist")
    before = len(read_capture(raw))
    trace = prepare_trace(raw, attack_type, args.attacker, args.new_src, args.target,
                          trace_id=args.trace_id)
    write_trace(trace, args.out)
    print(f"{raw}: {before} packets read, {trace.packet_count} kept after stripping "
          f"responses; source rewritten to {trace.source_address}; wrote {args.out}")
    return EXIT_OK


def cmd_plan_gen(args) -> int:
    if args.dry_run:
        return _dry_run(args)
    plan = generate_uniform_plan(args.minutes, args.apm, args.bandwidth, args.ids,
                                 seed=args.seed, pool=args.pool)
    write_plan(plan, args.out)
    print(f"wrote {args.out}: {len(plan)} attacks over {args.minutes} minutes")
    return EXIT_OK


def cmd_run(args) -> int:
    plan = load_plan(args.plan)
    deployment = _deployment(args)
    profile, mapping = _expectations(args)
    out_dir = Path(args.out_dir) if args.out_dir else _default_out() / run_dir_name(0, plan)
    if args.dry_run:
        return _dry_run(args, deployment=vars(deployment) | {"endpoints": deployment.endpoints},
                        artifacts_dir=out_dir, attacks=len(plan))
    adapter = _adapter(deployment, plan.params.ids_id, profile)
    traces = TraceLibrary(args.traces, synthesize=deployment.mode == "mock")
    run_test(deployment, plan, adapter, out_dir, traces, seed=args.seed)
    print(_summary_line(_process_dir(out_dir, profile, mapping)))
    return EXIT_OK


def cmd_phase(args) -> int:
    deployment = _deployment(args)
    profile, mapping = _expectations(args)
    if args.plan:
        plans = [load_plan(p) for p in args.plan]
    else:
        plans = grid_plans(args.bandwidths, args.apms, args.minutes, args.ids, seed=args.seed,
                           pool=args.pool)
    root = Path(args.out_dir) if args.out_dir else _default_out()
    if args.dry_run:
        return _dry_run(args, plans=len(plans), artifacts_root=root,
                        deployment=vars(deployment) | {"endpoints": deployment.endpoints})
    ids_id = plans[0].params.ids_id if plans else args.ids
    adapter = _adapter(deployment, ids_id, profile)
    traces = TraceLibrary(args.traces, synthesize=deployment.mode == "mock")

    def processed(out):
        print(_summary_line(_process_dir(out.artifacts_dir, profile, mapping)))

    result = run_phase(deployment, plans, adapter, root, traces, seed=args.seed,
                       on_result=processed)
    if result.outputs:
        files = build_report([root], root / "report")
        print(f"report: {', '.join(str(p) for p in files.values())}")
    if result.error is not None:
        raise result.error
    return EXIT_OK


def cmd_process(args) -> int:
    profile, mapping = _expectations(args)
    if args.dry_run:
        return _dry_run(args)
    for d in args.dirs:
        print(_summary_line(_process_dir(Path(d), profile, mapping)))
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.roots[0]) / "report"
    if args.dry_run:
        return _dry_run(args, report_dir=out_dir)
    files = build_report(args.roots, out_dir)
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_expectation_flags(p):
    p.add_argument("--priorities", help="priority file (default: built-in)")
    p.add_argument("--mapping", help="message mapping file (default: built-in)")


def _add_run_flags(p):
    p.add_argument("--profile", help="deployment profile file (default: mock)")
    p.add_argument("--out-dir", help=f"artifacts directory (default: ${ARTIFACTS_ENV})")
    p.add_argument("--time-compress", type=_fraction, metavar="N",
                   help="real seconds per logical minute")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--traces", help="directory of prepared <trace_id>.pcap files")
    p.add_argument("--mock-capacity-gbps", type=_fraction)
    p.add_argument("--mock-degradation", type=_fraction)
    _add_expectation_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idsbench", description="IDS benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="turn a raw capture into a replayable attack trace")
    p.add_argument("raw")
    p.add_argument("--attack-type", required=True)
    p.add_argument("--attacker", required=True, help="attacker address in the raw capture")
    p.add_argument("--new-src", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--trace-id")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("plan-gen", help="generate a uniform attack plan")
    p.add_argument("--minutes", type=int, required=True)
    p.add_argument("--apm", type=int, required=True, help="attacks per minute")
    p.add_argument("--bandwidth", type=_fraction, required=True, help="Gbit/s")
    p.add_argument("--ids", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", default=DEFAULT_ADDRESS_POOL)
    p.add_argument("-o", "--out", "--plan", dest="out", required=True)
    p.set_defaults(func=cmd_plan_gen)

    p = sub.add_parser("run", help="run one test and process it")
    p.add_argument("--plan", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("phase", help="run a phase of tests and write the report")
    p.add_argument("--plan", action="append", help="plan file (repeatable); overrides the grid")
    p.add_argument("--bandwidths", type=_fraction_list, default=_fraction_list("1,2,3,4,5,6,7"))
    p.add_argument("--apms", type=_int_list, default=_int_list("10,15,20,25,30,35"))
    p.add_argument("--minutes", type=int, default=30)
    p.add_argument("--ids", default="suricata")
    p.add_argument("--pool", default=DEFAULT_ADDRESS_POOL)
    _add_run_flags(p)
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("process", help="(re)process artifacts directories offline")
    p.add_argument("dirs", nargs="+")
    _add_expectation_flags(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("report", help="pool processed tests into report CSVs")
    p.add_argument("roots", nargs="+")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)

    for action in sub.choices.values():
        action.add_argument("--dry-run", action="store_true",
                            help="print the resolved configuration and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfrastructureError as exc:
        print(f"infrastructure error: {exc}", file=sys.stderr)
        return EXIT_INFRA
    except (HarnessError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
