"""Command-line entry point.

Subcommands:
  run       simulate one scenario and write metrics.csv / summary.json
  compare   numeric deltas between two summary.json files
  presets   list the built-in scenarios (--json for full parameter tables)
  schema    machine-readable scenario file format

Exit codes: 0 on success, 2 for invalid flags or configuration, 1 when a
runtime invariant fails mid-simulation. RTCNETLAB_LOG sets the logging
level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .bridge import DEFAULT_ACTION_TIMEOUT_S, serve
from .engine import ConfigError, SimulationError
from .metrics import compare_summaries, rows_to_csv, summary_to_json
from .scenario import export, preset_names, preset_table, schema
from .session import run_scenario

log = logging.getLogger("rtcnetlab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtcnetlab",
        description="Deterministic real-time media transport simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    run_p.add_argument("--scenario", required=True,
                       help="preset name or scenario file path")
    run_p.add_argument("--seed", type=int, default=None,
                       help="simulation seed (default: scenario's)")
    run_p.add_argument("--duration", type=float, default=None,
                       help="override duration in seconds")
    run_p.add_argument("--controller", default=None,
                       choices=("gcc", "fixed", "scripted", "bridge"),
                       help="override the scenario's controller kind")
    run_p.add_argument("--transport", default=None, choices=("udp", "tcp"),
                       help="override the scenario's transport")
    run_p.add_argument("--out", default=None,
                       help="directory for metrics.csv / summary.json / "
                            "scenario.json")
    run_p.add_argument("--bridge-listen", default=None, metavar="ADDR:PORT",
                       help="serve the control bridge instead of running "
                            "locally; episodes are configured by clients")
    run_p.add_argument("--action-timeout", type=float,
                       default=DEFAULT_ACTION_TIMEOUT_S,
                       help="bridge action timeout in seconds")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare",
                           help="delta between two summary.json files")
    cmp_p.add_argument("summary_a")
    cmp_p.add_argument("summary_b")
    cmp_p.set_defaults(func=cmd_compare)

    pre_p = sub.add_parser("presets", help="list built-in scenarios")
    pre_p.add_argument("--json", action="store_true",
                       help="full parameter tables as JSON")
    pre_p.set_defaults(func=cmd_presets)

    sch_p = sub.add_parser("schema", help="scenario file format")
    sch_p.set_defaults(func=cmd_schema)
    return parser


def cmd_run(args) -> int:
    if args.bridge_listen is not None:
        log.info("serving control bridge on %s", args.bridge_listen)
        try:
            serve(args.bridge_listen, args.action_timeout)
        except KeyboardInterrupt:
            pass
        return 0
    out = run_scenario(args.scenario, seed=args.seed,
                       duration_s=args.duration,
                       controller_kind=args.controller,
                       transport=args.transport)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(rows_to_csv(out.rows))
        with open(os.path.join(args.out, "summary.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(summary_to_json(out.summary))
        with open(os.path.join(args.out, "scenario.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(export(out.scenario) + "\n")
    agg = out.summary["aggregates"]
    print(f"{out.summary['scenario']} seed={out.summary['seed']} "
          f"controller={out.summary['controller']} "
          f"transport={out.summary['transport']}: "
          f"rx {agg['rx_rate_mbps_mean']:.3f} Mbps, "
          f"rtt {agg['rtt_ms_mean']:.1f} ms, "
          f"playout plr {agg['playout_plr_pct']:.2f}% "
          f"({agg['playout_plr_band']}), "
          f"stall {agg['stall_ms_total']:.0f} ms, "
          f"frames {agg['frames_played']}/{agg['frames_skipped']} "
          f"played/skipped")
    if not out.summary["conservation"]["identity_holds"]:
        raise SimulationError(
            "packet conservation identity violated: "
            f"{out.summary['conservation']}")
    return 0


def cmd_compare(args) -> int:
    with open(args.summary_a, "r", encoding="utf-8") as fh:
        a = json.load(fh)
    with open(args.summary_b, "r", encoding="utf-8") as fh:
        b = json.load(fh)
    print(json.dumps(compare_summaries(a, b), indent=2, sort_keys=True))
    return 0


def cmd_presets(args) -> int:
    if args.json:
        print(json.dumps(preset_table(), indent=2, sort_keys=True))
        return 0
    table = preset_table()
    width = max(len(n) for n in table)
    for name in preset_names():
        sc = table[name]
        links = "+".join(
            f"{ls['name']}({ls['capacity_mbps']:g}Mbps,{ls['delay_ms']:g}ms)"
            for ls in sc["forward_links"])
        rel = sc["reliability"]
        flags = []
        if rel["nack_enabled"]:
            flags.append("nack")
        if rel["fec_enabled"]:
            flags.append("fec")
        print(f"{name:<{width}}  {sc['duration_s']:>4g}s  "
              f"{sc['transport']}  {sc['controller']['kind']:<8s}  "
              f"{links}  {'+'.join(flags) or 'plain'}")
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(schema(), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    level = os.environ.get("RTCNETLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
