"""Command-line entry points: run, sweep, suite and summarize.

Exit codes: 0 success, 1 at least one trial errored, 2 bad input
(malformed scenario file, bad arguments).
"""

import argparse
import glob
import json
import os
import sys
from dataclasses import replace

from .harness import run_sweep, run_trial, run_trials, summarize
from .scenario_io import (
    ScenarioFormatError,
    export_results,
    load_scenario,
    load_summary,
    resummarize,
    trial_record,
)


def _add_common_overrides(parser):
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--stop-on-breakage", action="store_true", help="stop the trial at the first break"
    )
    parser.add_argument(
        "--mode", choices=("point_mass", "arm"), default=None, help="end-effector model"
    )


def _apply_overrides(scenario, args):
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.stop_on_breakage:
        scenario = replace(scenario, stop_on_breakage=True)
    if args.mode is not None:
        scenario = replace(scenario, mode=args.mode)
    scenario.validate()
    return scenario


def _parse_wf(text):
    """'start:stop:count' -> evenly spaced values; a single number is allowed."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            if count == 1:
                return [start]
            step = (stop - start) / (count - 1)
            return [start + i * step for i in range(count)]
    except ValueError:
        pass
    raise argparse.ArgumentTypeError("expected WF as 'start:stop:count' or a single value")


def _print_trial(result):
    print(
        "%-24s reached=%-5s stop=%-18s broken=%d disturbance=%.4f deviation=%.4f"
        % (
            result.scenario_name or "(unnamed)",
            result.reached,
            result.stop_reason,
            result.broken_branch_count,
            result.total_disturbance,
            result.final_target_deviation,
        )
    )


def _cmd_run(args):
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    result = run_trial(scenario)
    _print_trial(result)
    if args.out:
        export_results(summarize([result]), args.out)
        print("results written to %s" % args.out)
    return 0


def _cmd_sweep(args):
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    results = run_sweep(scenario, args.wf, repeats=args.repeats)
    records = []
    for wf, summary in results:
        print(
            "wF=%-6.3f medianDisturbance=%.4f medianDeviation=%.4f noBreakReach=%.2f"
            % (
                wf,
                summary.median_disturbance,
                summary.median_target_deviation,
                summary.no_break_reach_rate,
            )
        )
        records.append(
            {
                "wF": wf,
                "medianDisturbance": summary.median_disturbance,
                "medianTargetDeviation": summary.median_target_deviation,
                "noBreakReachRate": summary.no_break_reach_rate,
                "trials": [trial_record(tr) for tr in summary.trials],
            }
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "sweep.json")
        with open(path, "w") as fh:
            json.dump(
                {"schemaVersion": 1, "scenario": scenario.name, "results": records},
                fh,
                indent=2,
            )
        print("sweep written to %s" % path)
    return 0


def _cmd_suite(args):
    paths = sorted(glob.glob(os.path.join(args.directory, "*.json")))
    if not paths:
        print("no scenario files in %s" % args.directory, file=sys.stderr)
        return 2
    scenarios = []
    for path in paths:
        scenario = _apply_overrides(load_scenario(path), args)
        if not scenario.name:
            scenario = replace(
                scenario, name=os.path.splitext(os.path.basename(path))[0]
            )
        scenarios.append(scenario)

    results, errors = [], []
    if args.jobs > 1:
        try:
            results = run_trials(scenarios, jobs=args.jobs)
        except Exception as exc:  # fall back to serial to localize the failure
            print("parallel run failed (%s); rerunning serially" % exc, file=sys.stderr)
            results = []
    if not results:
        for scenario in scenarios:
            try:
                results.append(run_trial(scenario))
            except Exception as exc:
                errors.append((scenario.name, exc))
                print("trial %r errored: %s" % (scenario.name, exc), file=sys.stderr)
    for result in results:
        _print_trial(result)
    if results:
        suite = summarize(results)
        print(
            "suite: trials=%d medianDisturbance=%.4f medianDeviation=%.4f noBreakReach=%.2f"
            % (
                len(results),
                suite.median_disturbance,
                suite.median_target_deviation,
                suite.no_break_reach_rate,
            )
        )
        if args.out:
            export_results(suite, args.out)
            print("results written to %s" % args.out)
    return 1 if errors else 0


def _cmd_summarize(args):
    data = load_summary(args.results)
    suite = resummarize(data)
    for result in suite.trials:
        _print_trial(result)
    print(
        "suite: trials=%d medianDisturbance=%.4f medianDeviation=%.4f noBreakReach=%.2f"
        % (
            len(suite.trials),
            suite.median_disturbance,
            suite.median_target_deviation,
            suite.no_break_reach_rate,
        )
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="canopynav",
        description="Tactile-guided canopy navigation simulator and controllers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario")
    _add_common_overrides(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep the force weight on a scenario")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument(
        "--wf", type=_parse_wf, default=_parse_wf("0.2:3.0:15"),
        help="force-weight values as start:stop:count (default 0.2:3.0:15)",
    )
    p_sweep.add_argument("--repeats", type=int, default=1)
    _add_common_overrides(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_suite = sub.add_parser("suite", help="run every scenario JSON in a directory")
    p_suite.add_argument("directory")
    p_suite.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    _add_common_overrides(p_suite)
    p_suite.set_defaults(func=_cmd_suite)

    p_sum = sub.add_parser("summarize", help="recompute statistics from exported results")
    p_sum.add_argument("results", help="summary.json or the directory containing it")
    p_sum.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioFormatError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
