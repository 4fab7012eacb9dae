"""Plain-text scenario scripts: commands plus assertions, one per line.

The script language mirrors the protocol verbs so a coordination walkthrough
can live in a diffable text file and double as an executable test::

    user stan
    user alex
    stan create "Create presentation" as pres
    stan offer pres to=alex
    alex accept-handoff pres
    assert owner pres alex

Tasks are referred to by the symbolic name bound with ``as <name>`` (or by
their literal engine id). Commands run against a fresh engine with a
deterministic clock; ``assert`` lines check the state right where they stand
in the script, so ordering-sensitive claims (an agenda before a decision, a
feed after a completion) read naturally.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .engine import Engine, FixedClock
from .model import SharingPolicy, UPDATE_KINDS, ALL_PARTICIPANTS
from .protocol import Rejection, visible_updates

SCRIPT_EPOCH = datetime(2025, 1, 6, 9, 0, 0, tzinfo=timezone.utc)

AGENDA_KINDS = ("pending_handoff", "pending_invitation", "actionable_task", "watched_update")


class ScriptParseError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AssertionFailed(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class ScriptResult:
    commands_run: int = 0
    checks_run: int = 0
    failures: list[str] = field(default_factory=list)
    engine: Engine | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _parse_kv(tokens: list[str], line_no: int, allowed: set[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for token in tokens:
        if "=" not in token:
            raise ScriptParseError(line_no, f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        if key not in allowed:
            raise ScriptParseError(line_no, f"unknown option {key!r}")
        out[key] = value
    return out


class _Runner:
    def __init__(self, engine: Engine):
        self.engine = engine
        self.names: dict[str, str] = {}  # symbolic name -> task id
        self.result = ScriptResult(engine=engine)

    def task_ref(self, ref: str, line_no: int) -> str:
        if ref in self.names:
            return self.names[ref]
        if ref in self.engine.state.tasks:
            return ref
        raise ScriptParseError(line_no, f"unknown task reference {ref!r}")

    def run_line(self, line_no: int, tokens: list[str]) -> None:
        head = tokens[0]
        if head == "user":
            if len(tokens) != 2:
                raise ScriptParseError(line_no, "usage: user <name>")
            self.engine.register_user(tokens[1])
            return
        if head == "assert":
            self.result.checks_run += 1
            try:
                self.check(line_no, tokens[1:])
            except AssertionFailed as exc:
                self.result.failures.append(str(exc))
            except IndexError:
                raise ScriptParseError(line_no, "assertion is missing arguments") from None
            return
        if not self.engine.is_known(head):
            raise ScriptParseError(line_no, f"actor {head!r} not declared with 'user'")
        try:
            self.command(line_no, head, tokens[1:])
        except IndexError:
            raise ScriptParseError(line_no, "command is missing arguments") from None
        self.result.commands_run += 1

    def command(self, line_no: int, actor: str, tokens: list[str]) -> None:
        if not tokens:
            raise ScriptParseError(line_no, "missing verb")
        verb, args = tokens[0], tokens[1:]
        try:
            self._dispatch(line_no, actor, verb, args)
        except Rejection as exc:
            raise AssertionFailed(
                line_no, f"command rejected: {exc.name} ({exc.detail})"
            ) from exc

    def _dispatch(self, line_no: int, actor: str, verb: str, args: list[str]) -> None:
        engine = self.engine
        if verb == "create":
            if not args:
                raise ScriptParseError(line_no, "usage: <actor> create \"title\" [parent=ref] [after=ref,...] [as name]")
            title = args[0]
            name = None
            rest = args[1:]
            if len(rest) >= 2 and rest[-2] == "as":
                name = rest[-1]
                rest = rest[:-2]
            options = _parse_kv(rest, line_no, {"parent", "after"})
            parent = self.task_ref(options["parent"], line_no) if "parent" in options else None
            depends_on = [
                self.task_ref(ref, line_no)
                for ref in options.get("after", "").split(",")
                if ref
            ]
            event = engine.create_task(actor, title, parent, depends_on)
            if name is not None:
                self.names[name] = event.task_id
        elif verb == "offer":
            options = _parse_kv(args[1:], line_no, {"to"})
            if len(args) < 1 or "to" not in options:
                raise ScriptParseError(line_no, "usage: <actor> offer <task> to=<user>")
            engine.offer_handoff(actor, self.task_ref(args[0], line_no), options["to"])
        elif verb in ("accept-handoff", "decline-handoff"):
            decision = "accept" if verb == "accept-handoff" else "decline"
            engine.respond_handoff(actor, self.task_ref(args[0], line_no), decision)
        elif verb == "invite":
            options = _parse_kv(args[1:], line_no, {"user"})
            if len(args) < 1 or "user" not in options:
                raise ScriptParseError(line_no, "usage: <actor> invite <task> user=<user>")
            engine.invite_participant(actor, self.task_ref(args[0], line_no), options["user"])
        elif verb in ("accept-invitation", "decline-invitation"):
            decision = "accept" if verb == "accept-invitation" else "decline"
            engine.respond_invitation(actor, self.task_ref(args[0], line_no), decision)
        elif verb == "complete":
            engine.complete_task(actor, self.task_ref(args[0], line_no))
        elif verb == "abandon":
            engine.abandon_task(actor, self.task_ref(args[0], line_no))
        elif verb == "comment":
            if len(args) != 2:
                raise ScriptParseError(line_no, "usage: <actor> comment <task> \"text\"")
            engine.add_comment(actor, self.task_ref(args[0], line_no), args[1])
        elif verb == "share":
            if not args:
                raise ScriptParseError(line_no, "usage: <actor> share <task> <kind>=all|none|u1,u2 ...")
            options = _parse_kv(args[1:], line_no, set(UPDATE_KINDS))
            kwargs: dict[str, frozenset[str] | None] = {}
            for kind, value in options.items():
                if value == ALL_PARTICIPANTS:
                    kwargs[kind] = None
                elif value == "none":
                    kwargs[kind] = frozenset()
                else:
                    kwargs[kind] = frozenset(value.split(","))
            engine.set_sharing_policy(actor, self.task_ref(args[0], line_no), SharingPolicy(**kwargs))
        elif verb == "schedule":
            if not args:
                raise ScriptParseError(line_no, "usage: <actor> schedule HH:MM,... [tz=+HH:MM]")
            times = [] if args[0] == "none" else args[0].split(",")
            options = _parse_kv(args[1:], line_no, {"tz"})
            engine.set_schedule(actor, times, options.get("tz", "+00:00"))
        elif verb == "engage":
            options = _parse_kv(args, line_no, {"slot", "opened", "resolved"})
            try:
                slot = int(options["slot"])
                opened = options.get("opened", "true") == "true"
                resolved = int(options.get("resolved", "0"))
            except (KeyError, ValueError) as exc:
                raise ScriptParseError(line_no, f"bad engage options: {exc}") from exc
            engine.record_engagement(actor, slot, opened, resolved)
        else:
            raise ScriptParseError(line_no, f"unknown verb {verb!r}")

    # -- assertions --------------------------------------------------------

    def check(self, line_no: int, tokens: list[str]) -> None:
        if not tokens:
            raise ScriptParseError(line_no, "empty assertion")
        query, args = tokens[0], tokens[1:]
        state = self.engine.state

        def fail(message: str) -> None:
            raise AssertionFailed(line_no, message)

        if query == "owner":
            task = state.tasks.get(self.task_ref(args[0], line_no))
            if task is None or task.owner != args[1]:
                fail(f"owner({args[0]}) = {task.owner if task else None}, expected {args[1]}")
        elif query == "status":
            task = state.tasks.get(self.task_ref(args[0], line_no))
            if task is None or task.status != args[1]:
                fail(f"status({args[0]}) = {task.status if task else None}, expected {args[1]}")
        elif query == "participant":
            task = state.tasks.get(self.task_ref(args[0], line_no))
            if task is None or args[1] not in task.participants:
                fail(f"{args[1]} is not a participant of {args[0]}")
        elif query == "no-participant":
            task = state.tasks.get(self.task_ref(args[0], line_no))
            if task is not None and args[1] in task.participants:
                fail(f"{args[1]} unexpectedly a participant of {args[0]}")
        elif query in ("visible", "not-visible"):
            user, kind, ref = args[0], args[1], self.task_ref(args[2], line_no)
            events = visible_updates(self.engine.events, user, 0, final_state=state)
            present = any(e.kind == kind and e.task_id == ref for e in events)
            if query == "visible" and not present:
                fail(f"{user} cannot see {kind} on {args[2]}")
            if query == "not-visible" and present:
                fail(f"{user} unexpectedly sees {kind} on {args[2]}")
        elif query == "agenda":
            user, mode, kind, ref = args[0], args[1], args[2], self.task_ref(args[3], line_no)
            if mode not in ("has", "lacks") or kind not in AGENDA_KINDS:
                raise ScriptParseError(line_no, "usage: assert agenda <user> has|lacks <kind> <task>")
            items = self.engine.agenda(user)
            present = any(i.kind == kind and i.task_id == ref for i in items)
            if mode == "has" and not present:
                fail(f"agenda({user}) lacks {kind} {args[3]}")
            if mode == "lacks" and present:
                fail(f"agenda({user}) unexpectedly has {kind} {args[3]}")
        elif query == "events":
            expected = int(args[0])
            actual = state.cursor
            if actual != expected:
                fail(f"log has {actual} events, expected {expected}")
        else:
            raise ScriptParseError(line_no, f"unknown assertion {query!r}")


def run_script(text: str, engine: Engine | None = None) -> ScriptResult:
    """Execute a script against a fresh deterministic engine."""
    if engine is None:
        engine = Engine(clock=FixedClock(SCRIPT_EPOCH))
    runner = _Runner(engine)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ScriptParseError(line_no, str(exc)) from exc
        if not tokens:
            continue
        try:
            runner.run_line(line_no, tokens)
        except AssertionFailed as exc:
            runner.result.failures.append(str(exc))
            break  # a rejected command invalidates everything downstream
    return runner.result
