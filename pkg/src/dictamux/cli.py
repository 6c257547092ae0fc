"""Command-line entry points: dictamux-server and dictamux-bench."""

from __future__ import annotations

import argparse
import json
import sys

import uvicorn

from dictamux.bench import ScenarioConfig, ScenarioError, run_scenario, scenario_from_dict
from dictamux.report import (
    compare_modes,
    comparison_table,
    emit_report,
    report_from_json,
)
from dictamux.server import (
    DictationServer,
    ServerConfig,
    create_app,
    load_server_config,
)
from dictamux.wallclient import WallSessionError


def server_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dictamux-server",
        description="Multi-user dictation server (websocket + stats HTTP)")
    parser.add_argument("--config", metavar="PATH",
                        help="JSON server config file")
    parser.add_argument("--listen", metavar="HOST:PORT",
                        help="bind address, overrides config")
    parser.add_argument("--mode", choices=["multiplexed", "sequential"],
                        help="serving discipline, overrides config")
    parser.add_argument("--backend", choices=["sim", "remote"],
                        help="transcription backend, overrides config")
    parser.add_argument("--console", metavar="DIR",
                        help="serve a web console from this directory at /console")
    args = parser.parse_args(argv)

    config = load_server_config(args.config) if args.config else ServerConfig()
    if args.listen:
        config.listen_address = args.listen
    if args.mode:
        config.mode = args.mode
    if args.backend:
        config.backend_kind = args.backend
        if config.backend_kind == "remote" and config.remote_backend is None:
            parser.error("remote backend requires remote_backend in --config")

    host, _, port = config.listen_address.rpartition(":")
    server = DictationServer(config)
    server.start()
    app = create_app(server, console_dir=args.console)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port),
                    log_level="info")
    finally:
        server.stop()
    return 0


def _bench_run(args: argparse.Namespace) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = scenario_from_dict(json.load(fh))
    else:
        cfg = ScenarioConfig()
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.concurrency is not None:
        overrides["concurrency"] = args.concurrency
    if args.clock:
        overrides["clock"] = args.clock
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.server_url:
        overrides["server_url"] = args.server_url
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    try:
        report = run_scenario(cfg)
    except (ScenarioError, WallSessionError) as exc:
        print(f"benchmark aborted: {exc}", file=sys.stderr)
        return 1
    text = emit_report(report, fmt=args.format, out_path=args.out)
    if args.out:
        print(f"wrote {args.format} report to {args.out}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


def _bench_compare(args: argparse.Namespace) -> int:
    with open(args.report_a) as fh:
        a = report_from_json(fh.read())
    with open(args.report_b) as fh:
        b = report_from_json(fh.read())
    rows = compare_modes(a, b)
    print(comparison_table(rows, a.mode, b.mode), end="")
    if args.json_out:
        payload = [vars(r) for r in rows]
        with open(args.json_out, "w") as fh:
            json.dump(payload, fh, indent=2)
    return 0


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dictamux-bench",
        description="Latency benchmark: virtual users vs the serving stack")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario to a report")
    run_p.add_argument("--config", metavar="PATH",
                       help="JSON scenario config file")
    run_p.add_argument("--mode", choices=["multiplexed", "sequential"])
    run_p.add_argument("--concurrency", type=int)
    run_p.add_argument("--clock", choices=["virtual", "wall"])
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--server-url", dest="server_url",
                       help="live server websocket URL (wall clock)")
    run_p.add_argument("--out", metavar="PATH", help="write report here")
    run_p.add_argument("--format", choices=["csv", "json", "table"],
                       default="table")
    run_p.set_defaults(func=_bench_run)

    cmp_p = sub.add_parser("compare", help="compare two JSON reports")
    cmp_p.add_argument("report_a")
    cmp_p.add_argument("report_b")
    cmp_p.add_argument("--json-out", dest="json_out", metavar="PATH")
    cmp_p.set_defaults(func=_bench_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(bench_main())
