"""Operator command line: serve the API, replay and inspect logs, run
scenario scripts, and fuzz the protocol.

Exit codes: 0 success, 1 assertion or invariant failure, 2 usage/parse error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

from . import fuzz, scenario
from .engine import Engine
from .model import MalformedEvent, check_invariants, format_ts
from .outbox import Outbox, stdout_transport, webhook_transport
from .service import ApiServer, ApiService, TokenStore
from .store import CorruptLog, EventLog

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _bundled_script(name: str) -> str | None:
    candidate = resources.files("asncoord").joinpath("data", f"{name}.script")
    if candidate.is_file():
        return candidate.read_text(encoding="utf-8")
    return None


def cmd_serve(args: argparse.Namespace) -> int:
    host, _, port_text = args.listen.rpartition(":")
    log_path = Path(args.log)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    transport = stdout_transport
    if args.outbox == "webhook":
        if not args.webhook_url:
            print("error: --outbox webhook requires --webhook-url", file=sys.stderr)
            return EXIT_USAGE
        transport = webhook_transport(args.webhook_url)
    engine = Engine(
        log=EventLog(log_path),
        snapshot_path=log_path.with_suffix(log_path.suffix + ".snap"),
        snapshot_interval=args.snapshot_interval,
    )
    tokens = TokenStore(args.users_file or log_path.with_suffix(log_path.suffix + ".users.json"))
    service = ApiService(engine, tokens=tokens, outbox=Outbox(transport))
    server = ApiServer(service, host=host or "127.0.0.1", port=int(port_text), outbox_interval=1.0)
    server.start()
    print(f"listening on {server.url}, log at {log_path}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
        engine.close()
    return EXIT_OK


def _load_log(path: str) -> list:
    log = EventLog(path)
    try:
        return log.events
    finally:
        log.close()


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        events = _load_log(args.log)
    except (CorruptLog, MalformedEvent, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    from .model import replay

    state = replay(events)
    violations = check_invariants(state)
    print(f"events: {state.cursor}")
    print(f"tasks: {len(state.tasks)}")
    print(f"users: {len(state.users)}")
    print(f"violations: {len(violations)}")
    for violation in violations:
        print(f"  {violation.task_id}: {violation.rule} {violation.detail}")
    return EXIT_FAILURE if violations else EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        events = _load_log(args.log)
    except (CorruptLog, MalformedEvent, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    from .model import replay

    state = replay(events)
    if args.task:
        task = state.tasks.get(args.task)
        if task is None:
            print(f"error: no task {args.task}", file=sys.stderr)
            return EXIT_USAGE
        print(f"{task.task_id}: {task.title}")
        print(f"  owner: {task.owner}  status: {task.status}")
        print(f"  created: {format_ts(task.created_at)}  parent: {task.parent or '-'}")
        if task.depends_on:
            print(f"  depends on: {', '.join(sorted(task.depends_on))}")
        if task.participants:
            print(f"  participants: {', '.join(sorted(task.participants))}")
        if task.pending_handoff:
            print(f"  pending handoff to {task.pending_handoff.to}")
        for invitation in task.pending_invitations:
            print(f"  pending invitation to {invitation.user}")
        for comment in task.comments:
            print(f"  comment by {comment.author}: {comment.text}")
        return EXIT_OK
    roots = [t for t in state.tasks.values() if t.parent is None]
    roots.sort(key=lambda t: (t.created_at, t.task_id))

    def show(task, depth: int) -> None:
        marker = {"active": " ", "completed": "x", "abandoned": "-"}[task.status]
        print(f"{'  ' * depth}[{marker}] {task.task_id} {task.title} (owner {task.owner})")
        children = [t for t in state.tasks.values() if t.parent == task.task_id]
        children.sort(key=lambda t: (t.created_at, t.task_id))
        for child in children:
            show(child, depth + 1)

    for root in roots:
        show(root, 0)
    return EXIT_OK


def cmd_script(args: argparse.Namespace) -> int:
    path = Path(args.file)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        text = _bundled_script(args.file)
        if text is None:
            print(f"error: no script file {args.file}", file=sys.stderr)
            return EXIT_USAGE
    try:
        result = scenario.run_script(text)
    except scenario.ScriptParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"commands: {result.commands_run}  checks: {result.checks_run}")
    for failure in result.failures:
        print(f"FAIL {failure}")
    if result.failures:
        return EXIT_FAILURE
    print("all checks passed")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        report, engine = fuzz.simulate(args.users, args.commands, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(report.to_dict(), indent=2))
    if args.log_out:
        from .model import serialize_log

        Path(args.log_out).write_text(serialize_log(engine.events), encoding="utf-8")
    return EXIT_OK if report.ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asncoord", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP API service")
    serve.add_argument("--listen", default=os.environ.get("ASNCOORD_LISTEN", "127.0.0.1:8640"))
    serve.add_argument("--log", default=os.environ.get("ASNCOORD_LOG", "asncoord.log"))
    serve.add_argument(
        "--snapshot-interval",
        type=int,
        default=int(os.environ.get("ASNCOORD_SNAPSHOT_INTERVAL", "100")),
        help="events between snapshots (0 disables)",
    )
    serve.add_argument("--outbox", choices=["stdout", "webhook"], default="stdout")
    serve.add_argument("--webhook-url", default=os.environ.get("ASNCOORD_WEBHOOK_URL"))
    serve.add_argument("--users-file", default=os.environ.get("ASNCOORD_USERS_FILE"))
    serve.set_defaults(func=cmd_serve)

    replay_cmd = sub.add_parser("replay", help="fold a log and report state summary")
    replay_cmd.add_argument("log")
    replay_cmd.set_defaults(func=cmd_replay)

    inspect_cmd = sub.add_parser("inspect", help="show the task tree of a log")
    inspect_cmd.add_argument("log")
    inspect_cmd.add_argument("--task", help="show one task in detail")
    inspect_cmd.set_defaults(func=cmd_inspect)

    script_cmd = sub.add_parser("script", help="run a scenario script")
    script_cmd.add_argument("file", help="script path, or a bundled name like 'walkthrough'")
    script_cmd.set_defaults(func=cmd_script)

    simulate_cmd = sub.add_parser("simulate", help="fuzz the protocol with random agents")
    simulate_cmd.add_argument("--users", type=int, required=True)
    simulate_cmd.add_argument("--commands", type=int, required=True)
    simulate_cmd.add_argument("--seed", type=int, default=0)
    simulate_cmd.add_argument("--log-out", help="write the generated event log here")
    simulate_cmd.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
