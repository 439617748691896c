"""Command-line interface.

Subcommands:

* ``run`` — batch scenario run, writing metrics.csv / audit.jsonl /
  events.jsonl to the output directory;
* ``status`` — summarize a finished run directory or query a running
  control endpoint;
* ``inject`` — append a scenario event to a scenario file (batch edit);
* ``serve`` — start the paced simulation with the HTTP control endpoint.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.request
from pathlib import Path

from ..errors import QkdNetError
from .control import ControlServer
from .scenario import ScenarioEvent, load_scenario
from .sim import Simulation, run_scenario
from .topology import load_topology


def _cmd_run(args) -> int:
    network = load_topology(args.topology)
    scenario = load_scenario(args.scenario)
    result = run_scenario(network, scenario, seed=args.seed,
                          duration_s=args.duration, out_dir=args.out)
    summary = result.audit
    print(f"run complete: {len(result.metrics)} metrics rows -> {args.out}")
    for key, value in sorted(summary.items()):
        print(f"  {key}: {value}")
    return 0


def _cmd_status(args) -> int:
    if args.url:
        with urllib.request.urlopen(f"{args.url.rstrip('/')}/state") as resp:
            doc = json.load(resp)
        print(f"t={doc['t_s']}s policy={doc['policy']} "
              f"alarms={len(doc['alarms_open'])}")
        for link in doc["links"]:
            latest = link.get("latest") or {}
            print(f"  {link['link_id']:<12} {link['status']:<6} "
                  f"qber={latest.get('qber', 0):.4f} "
                  f"buffer={latest.get('buffer_bits', 0)}")
        return 0
    metrics = Path(args.out) / "metrics.csv"
    if not metrics.is_file():
        print(f"no metrics.csv under {args.out}", file=sys.stderr)
        return 1
    lines = metrics.read_text().strip().splitlines()
    header = lines[0].split(",")
    last_by_link = {}
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        last_by_link[row["link_id"]] = row
    for link_id in sorted(last_by_link):
        row = last_by_link[link_id]
        print(f"  {link_id:<12} {row['status']:<6} t={row['t_s']} "
              f"qber={row['qber']} buffer={row['buffer_bits']}")
    return 0


def _cmd_inject(args) -> int:
    scenario = load_scenario(args.scenario)
    params = dict(json.loads(args.params)) if args.params else {}
    if args.link:
        params.setdefault("link_id", args.link)
    scenario.events.append(ScenarioEvent(args.at, args.kind, params,
                                         order=len(scenario.events)))
    scenario.__post_init__()     # re-sort
    out = Path(args.out or args.scenario)
    out.write_text(json.dumps(scenario.to_json(), indent=2) + "\n")
    print(f"added {args.kind} at t={args.at} -> {out}")
    return 0


def _cmd_serve(args) -> int:
    network = load_topology(args.topology)
    scenario = load_scenario(args.scenario)
    sim = Simulation(network, scenario, seed=args.seed,
                     duration_s=float("inf"))
    server = ControlServer(sim, port=args.port, pace_s=args.pace)
    server.start()
    print(f"control endpoint on http://127.0.0.1:{server.port} "
          f"(pace {args.pace}s/tick); Ctrl-C to stop")
    try:
        while True:
            server._stop.wait(3600)
            if server._stop.is_set():
                break
    except KeyboardInterrupt:
        pass
    server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdnet",
        description="Trusted-node QKD network simulator and key-management stack")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario in batch mode")
    run_p.add_argument("--topology", default=None, help="topology JSON (default: bundled)")
    run_p.add_argument("--scenario", default=None, help="scenario JSON (default: empty)")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--duration", type=float, default=None,
                       help="override scenario duration (seconds)")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.set_defaults(func=_cmd_run)

    status_p = sub.add_parser("status", help="summarize a run or a live endpoint")
    status_p.add_argument("--out", default=None, help="finished run directory")
    status_p.add_argument("--url", default=None, help="control endpoint URL")
    status_p.set_defaults(func=_cmd_status)

    inject_p = sub.add_parser("inject", help="append an event to a scenario file")
    inject_p.add_argument("--scenario", required=True)
    inject_p.add_argument("--kind", required=True)
    inject_p.add_argument("--at", type=float, required=True)
    inject_p.add_argument("--link", default=None)
    inject_p.add_argument("--params", default=None, help="extra params as JSON")
    inject_p.add_argument("--out", default=None, help="write to this file instead")
    inject_p.set_defaults(func=_cmd_inject)

    serve_p = sub.add_parser("serve", help="start the paced control endpoint")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--topology", default=None)
    serve_p.add_argument("--scenario", default=None)
    serve_p.add_argument("--seed", type=int, default=0)
    serve_p.add_argument("--pace", type=float, default=1.0,
                         help="wall seconds per simulated tick")
    serve_p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QkdNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
