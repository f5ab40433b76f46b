"""Command-line entry point.

Exit codes: 0 on a converged run with a clean audit, 2 on non-convergence,
3 when the audit finds violations, 1 on bad input.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .atc_coordinator import DadpParams, run_dadp
from .baselines import MECHANISMS, compare_mechanisms
from .bus import BusRelay, MessageBus, audit, read_log
from .config import load_scenario, load_sweep, scenario_to_toml
from .errors import DadpError, NonConvergenceError
from .generator import random_scenario
from .harness import RunArtifacts, emit_outputs, run_scene_sweep

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_AUDIT = 3


def _scenario_from_args(args):
    if args.scenario:
        return load_scenario(args.scenario, market=args.market)
    market = args.market or "electricity"
    return random_scenario(args.seed, args.las, args.esps, market, scene_id=f"seed{args.seed}"), \
        DadpParams()


def cmd_run(args):
    scenario, params = _scenario_from_args(args)
    artifacts = RunArtifacts()
    relay = bus = None
    if not args.no_bus:
        bus = MessageBus([la.id for la in scenario.las], [e.id for e in scenario.esps])
        relay = BusRelay(bus, [la.id for la in scenario.las], [e.id for e in scenario.esps])
    code = EXIT_OK
    try:
        outcome = run_dadp(scenario, params, relay=relay)
    except NonConvergenceError as exc:
        outcome = exc.best
        code = EXIT_NONCONVERGED
        print(f"not converged: {exc}", file=sys.stderr)
    if outcome is not None:
        artifacts.outcomes.append(outcome)
    if bus is not None:
        artifacts.violations = audit(bus.log)
        artifacts.messages = bus.log
        if artifacts.violations and code == EXIT_OK:
            code = EXIT_AUDIT
    if args.out:
        emit_outputs(artifacts, args.out)
    if outcome is not None:
        print(f"scene={scenario.scene_id or '-'} market={scenario.market_kind.value} "
              f"converged={outcome.converged} SW={outcome.sw:.6f} "
              f"demand={outcome.total_demand:.6f} supply={outcome.total_supply:.6f} "
              f"outer={outcome.outer_iterations}")
    if artifacts.violations:
        print(f"audit: {len(artifacts.violations)} violation(s)")
    return code


def cmd_sweep(args):
    scenes, params = load_sweep(args.scenes, market=args.market)
    report = run_scene_sweep(scenes, params)
    if args.out:
        emit_outputs(RunArtifacts(sweep=report), args.out)
    code = EXIT_OK
    for sid, out, err in zip(report.scene_ids, report.outcomes, report.errors):
        if out is None:
            print(f"scene={sid} failed: {err}")
            if "NonConvergence" in (err or ""):
                code = EXIT_NONCONVERGED
        else:
            print(f"scene={sid} SW={out.sw:.6f} demand={out.total_demand:.6f} "
                  f"outer={out.outer_iterations}")
    return code


def cmd_compare(args):
    scenario, params = _scenario_from_args(args)
    wanted = [m.strip().upper() for m in args.mechanisms.split(",") if m.strip()]
    reports = compare_mechanisms(scenario, params, wanted)
    if args.out:
        emit_outputs(RunArtifacts(comparison=reports), args.out)
    code = EXIT_OK
    print(f"{'mechanism':<10}{'energy':>14}{'cost':>14}{'value':>14}{'sw':>14}{'surplus':>14}")
    for rep in reports:
        if rep.error:
            print(f"{rep.mechanism:<10} error: {rep.error}")
            if "NonConvergence" in rep.error:
                code = EXIT_NONCONVERGED
            continue
        print(f"{rep.mechanism:<10}{rep.energy:14.4f}{rep.cost:14.4f}{rep.value:14.4f}"
              f"{rep.sw:14.4f}{rep.budget_surplus:14.4f}")
    return code


def cmd_audit(args):
    log = read_log(args.log)
    violations = audit(log)
    for v in violations:
        print(v)
    if args.out:
        emit_outputs(RunArtifacts(violations=violations), args.out)
    print(f"{len(log)} messages, {len(violations)} violation(s)")
    return EXIT_AUDIT if violations else EXIT_OK


def cmd_generate(args):
    scenario = random_scenario(args.seed, args.las, args.esps, args.market or "electricity",
                               floors=args.floors, scene_id=f"seed{args.seed}")
    text = scenario_to_toml(scenario)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dadp", description="Discriminatory double auction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def market_opt(p):
        p.add_argument("--market", choices=["power", "electricity", "heat"])

    def instance_opts(p):
        p.add_argument("--scenario", help="TOML scenario file")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for a random instance when no scenario is given")
        p.add_argument("--las", type=int, default=3)
        p.add_argument("--esps", type=int, default=4)
        market_opt(p)

    p = sub.add_parser("run", help="clear one market")
    instance_opts(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-bus", action="store_true", help="skip the message bus and audit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="clear every scene of a sweep file")
    p.add_argument("--scenes", required=True)
    market_opt(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare mechanisms on one market")
    instance_opts(p)
    p.add_argument("--mechanisms", default="dadp,kel,pool,vcg",
                   help=f"comma list from {','.join(m.lower() for m in MECHANISMS)}")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("audit", help="audit a saved message log")
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("generate", help="write a random scenario file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--las", type=int, default=3)
    p.add_argument("--esps", type=int, default=4)
    p.add_argument("--floors", action="store_true")
    market_opt(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DadpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
