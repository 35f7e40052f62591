"""Command-line entry point.

    fastpath --scenario swap_deadlock.yaml [--seed 7] [--trace-out t.log]
    fastpath --scenario swap_deadlock.yaml --explore 100
    fastpath --check-only recorded-trace.log

Exit status: 0 when every invariant checker passes, 1 on any violation,
2 when the scenario (or trace) cannot be loaded. The summary prints as
key=value lines; verdicts cover every registered checker exactly once.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

from .simnet.invariants import check_invariants, verdicts
from .simnet.runner import derive_seed, run
from .simnet.scenario import Scenario, ScenarioError
from .simnet.trace import Trace


def _summary_lines(trace: Trace, scenario_digest: str, seed: int) -> list[str]:
    lines = [
        f"scenario_digest={scenario_digest}",
        f"seed={seed}",
        f"ticks={trace.ticks}",
        f"quiesced={str(trace.quiesced).lower()}",
        f"messages_sent={trace.sent}",
        f"messages_dropped={trace.dropped}",
        f"events={len(trace.events)}",
    ]
    fast_rounds = [e["rounds"] for e in trace.select("fast_driver_finished")
                   if e["status"] == "finalized"]
    unlock_rounds = [e["rounds"] for e in trace.select("unlock_driver_finished")
                     if e["status"] in ("unlocked", "superseded")]
    lines.append(f"fast_path_round_trips={max(fast_rounds) if fast_rounds else 0}")
    lines.append(f"unlock_round_trips={max(unlock_rounds) if unlock_rounds else 0}")
    lines.append(f"unlocks_completed={len(trace.select('unlock_exec'))}")
    for name, verdict in verdicts(trace).items():
        lines.append(f"check.{name}={verdict}")
    return lines


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def cmd_run(scenario_path: str, seed_override: int | None,
            trace_out: str | None) -> int:
    try:
        scenario = Scenario.load(scenario_path)
        if seed_override is not None:
            scenario = scenario.with_seed(seed_override)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    trace = run(scenario)
    if trace_out:
        trace.write(trace_out)
    for line in _summary_lines(trace, _file_digest(scenario_path),
                               scenario.seed):
        print(line)
    violations = check_invariants(trace)
    for violation in violations:
        print(f"violation.{violation.checker}={violation.message}")
    return 1 if violations else 0


def cmd_explore(scenario_path: str, count: int,
                seed_override: int | None) -> int:
    try:
        scenario = Scenario.load(scenario_path)
        if seed_override is not None:
            scenario = scenario.with_seed(seed_override)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    first_bad = None
    bad = 0
    for i in range(count):
        seed = derive_seed(scenario.seed, i)
        trace = run(scenario.with_seed(seed))
        violations = check_invariants(trace)
        if violations:
            bad += 1
            if first_bad is None:
                first_bad = (seed, violations)
    print(f"runs={count}")
    print(f"violating_runs={bad}")
    if first_bad is not None:
        print(f"first_violating_seed={first_bad[0]}")
        for violation in first_bad[1]:
            print(f"violation.{violation.checker}={violation.message}")
        return 1
    return 0


def cmd_check_only(trace_path: str) -> int:
    try:
        trace = Trace.load(trace_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, verdict in verdicts(trace).items():
        print(f"check.{name}={verdict}")
    violations = check_invariants(trace)
    for violation in violations:
        print(f"violation.{violation.checker}={violation.message}")
    return 1 if violations else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fastpath",
        description="Run seeded protocol scenarios and check the recorded "
                    "traces against the protocol's safety and liveness claims.")
    parser.add_argument("--scenario", metavar="PATH",
                        help="scenario file (YAML or JSON)")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override the scenario seed")
    parser.add_argument("--trace-out", metavar="PATH",
                        help="write the trace as line-delimited records")
    parser.add_argument("--explore", type=int, metavar="K",
                        help="run K seeds derived from the base seed")
    parser.add_argument("--check-only", metavar="PATH",
                        help="re-check a recorded trace file")
    args = parser.parse_args(argv)

    if args.check_only:
        return cmd_check_only(args.check_only)
    if not args.scenario:
        parser.error("--scenario or --check-only is required")
    if args.explore is not None:
        if args.explore < 1:
            parser.error("--explore must be at least 1")
        return cmd_explore(args.scenario, args.explore, args.seed)
    return cmd_run(args.scenario, args.seed, args.trace_out)


if __name__ == "__main__":
    sys.exit(main())
