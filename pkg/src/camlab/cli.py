"""Command line entry point.

Subcommands: `run` replays a scenario into an artifacts directory, `report`
summarizes one, `cvss` scores a vector string, and `relay` runs the
encrypting relay (or its decrypt shim) over real UDP sockets.
"""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from .core import ParseError
from .cvss import score_vector_string
from .fixguard import UdpRelay, load_key_file, parse_hostport
from .scenarios import BUILTIN_SCENARIOS, LabRun, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camlab",
        description="Deterministic desk-scale security lab for a consumer IP camera.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="replay a scenario and write its artifacts")
    run_p.add_argument("scenario",
                       help="bundled scenario name or path to a config file "
                            f"(bundled: {', '.join(sorted(BUILTIN_SCENARIOS))})")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")
    run_p.add_argument("--out", required=True, help="artifacts directory")

    report_p = sub.add_parser("report", help="summarize an artifacts directory")
    report_p.add_argument("artifacts", help="directory written by `run`")

    cvss_p = sub.add_parser("cvss", help="score a CVSS v3.1 base vector")
    cvss_p.add_argument("vector", help="e.g. CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H")

    relay_p = sub.add_parser("relay", help="run the encrypting relay on real UDP sockets")
    relay_p.add_argument("--listen", required=True, help="host:port to bind")
    relay_p.add_argument("--forward", required=True, help="host:port to send to")
    relay_p.add_argument("--key-file", required=True, help="file holding 64 hex chars")
    relay_p.add_argument("--mtu", type=int, default=2048)
    relay_p.add_argument("--mode", choices=("encrypt", "decrypt"), default="encrypt")
    return parser


def cmd_run(args) -> int:
    from . import report as report_mod    # defers the matplotlib import

    try:
        scenario = load_scenario(args.scenario)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    run = LabRun(scenario, seed=args.seed)
    run.run()
    ok = report_mod.write_artifacts(run, args.out)
    for name, passed, detail in run.checks:
        print(f"{'ok  ' if passed else 'FAIL'} {name} ({detail})")
    print(f"artifacts: {args.out}")
    print(f"result: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    from . import report as report_mod

    print(report_mod.format_report(args.artifacts), end="")
    return 0


def cmd_cvss(args) -> int:
    try:
        score, sev = score_vector_string(args.vector)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{score} {sev}")
    return 0


def cmd_relay(args) -> int:
    try:
        listen = parse_hostport(args.listen)
        forward = parse_hostport(args.forward)
        key = load_key_file(args.key_file)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    relay = UdpRelay(listen, forward, key, mtu=args.mtu, mode=args.mode)
    try:
        relay.start()
    except OSError as exc:
        print(f"error: cannot bind {args.listen}: {exc}", file=sys.stderr)
        return 2
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)
    print(f"relay {args.mode} {args.listen} -> {args.forward}", flush=True)
    relay.run_forever(stop)
    print(relay.stats.line())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    commands = {
        "run": cmd_run,
        "report": cmd_report,
        "cvss": cmd_cvss,
        "relay": cmd_relay,
    }
    return commands[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
