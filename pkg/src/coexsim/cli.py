"""Command-line entry point: `coexsim run|sweep|report`.

Failures print one machine-readable JSON line to stderr and exit nonzero.
"""

import argparse
import json
import sys

from . import runner
from . import scenario as scenario_mod


def _add_common(parser):
    parser.add_argument("--config", required=True,
                        help="scenario config file (INI)")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config entry; repeatable")
    parser.add_argument("--scheme", default="DoQL",
                        help="one of %s, or a comma list, or 'all'"
                        % (runner.SCHEMES,))
    parser.add_argument("--num-iot", type=int, default=None)
    parser.add_argument("--deadline", type=int, default=None)
    parser.add_argument("--training-frames", type=int, default=5000)
    parser.add_argument("--inference-frames", type=int, default=100000)
    parser.add_argument("--replications", type=int, default=100)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--reward-window", type=int, default=100)
    parser.add_argument("--irsa-placement", default="random",
                        choices=("random", "consecutive"))
    parser.add_argument("--doql-rule", default="as_printed",
                        choices=("as_printed", "cross_eval"))
    parser.add_argument("--outdir", required=True)


def _load_scenario(args):
    overrides = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise scenario_mod.ScenarioError(item, "expected KEY=VALUE")
        overrides[key.strip()] = value.strip()
    if args.num_iot is not None:
        overrides["system.num_iot"] = str(args.num_iot)
    if args.deadline is not None:
        overrides["system.latency_deadline"] = str(args.deadline)
    return scenario_mod.load_config(args.config, overrides=overrides)


def _schemes(args):
    if args.scheme.lower() == "all":
        return list(runner.SCHEMES)
    names = [s.strip() for s in args.scheme.split(",") if s.strip()]
    for name in names:
        if name not in runner.SCHEMES:
            raise runner.RunnerError(f"unknown scheme {name!r}")
    return names


def _spec(args, scenario, scheme):
    return runner.ExperimentSpec(
        scenario=scenario,
        scheme=scheme,
        training_frames=args.training_frames,
        inference_frames=args.inference_frames,
        replications=args.replications,
        base_seed=args.seed,
        reward_window=args.reward_window,
        irsa_placement=args.irsa_placement,
        doql_rule=args.doql_rule,
        workers=args.workers,
    )


def cmd_run(args):
    scenario = _load_scenario(args)
    schemes = _schemes(args)
    spec = _spec(args, scenario, schemes[0])
    runner.run_many(spec, schemes, outdir=args.outdir)
    print(f"wrote {args.outdir}")
    return 0


def cmd_sweep(args):
    scenario = _load_scenario(args)
    schemes = _schemes(args)
    spec = _spec(args, scenario, schemes[0])
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if args.axis == "b2":
        runner.sweep_b2(spec, values, schemes=schemes, outdir=args.outdir)
        if args.with_sharing_point:
            runner.sharing_operating_point(spec, schemes=schemes,
                                           outdir=args.outdir)
    elif args.axis == "deadline":
        runner.sweep_deadline(spec, [int(v) for v in values],
                              schemes=schemes, outdir=args.outdir)
    else:
        rows = runner.sweep_num_iot(spec, [int(v) for v in values],
                                    schemes=schemes)
        print(json.dumps(rows))
        return 0
    print(f"wrote {args.outdir}")
    return 0


def cmd_report(args):
    print(runner.report(args.outdir))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coexsim",
        description="grant-free IoT / broadband coexistence simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train + evaluate schemes")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep an experiment axis")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         choices=("b2", "deadline", "j"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--with-sharing-point", action="store_true",
                         help="append the full-band sharing operating point")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="summarize a run directory")
    p_report.add_argument("--outdir", required=True)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (scenario_mod.ScenarioError, runner.RunnerError, OSError,
            ValueError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
