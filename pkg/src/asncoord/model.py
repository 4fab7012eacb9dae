"""Activity-graph data model: events, tasks, and the pure fold deriving state.

The append-only event log is the source of truth. Everything else — the task
graph, per-user schedules, engagement statistics — is a deterministic left
fold of immutable events. Nothing in this module reads a clock, touches I/O,
or mutates a value in place; state transitions produce successor states.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from typing import Any, Iterable, Mapping, Sequence

TASK_ACTIVE = "active"
TASK_COMPLETED = "completed"
TASK_ABANDONED = "abandoned"
TASK_STATUSES = (TASK_ACTIVE, TASK_COMPLETED, TASK_ABANDONED)

EVENT_KINDS = (
    "TaskCreated",
    "HandoffOffered",
    "HandoffAccepted",
    "HandoffDeclined",
    "InvitationSent",
    "InvitationAccepted",
    "InvitationDeclined",
    "TaskCompleted",
    "TaskAbandoned",
    "CommentAdded",
    "SharingPolicySet",
    "ScheduleSet",
    "EngagementRecorded",
    "TemplateLaunched",
)

# Update-kind families a sharing policy can restrict, and the task-scoped
# event kinds each family governs.
UPDATE_KINDS = (
    "creation",
    "handoff_and_response",
    "status_change",
    "completion",
    "comment",
)

EVENT_UPDATE_KIND = {
    "TaskCreated": "creation",
    "HandoffOffered": "handoff_and_response",
    "HandoffAccepted": "handoff_and_response",
    "HandoffDeclined": "handoff_and_response",
    "InvitationSent": "handoff_and_response",
    "InvitationAccepted": "handoff_and_response",
    "InvitationDeclined": "handoff_and_response",
    "TaskCompleted": "completion",
    "TaskAbandoned": "status_change",
    "CommentAdded": "comment",
    "SharingPolicySet": "status_change",
}

# Event kinds that are user-scoped rather than task-scoped (task_id is null).
USER_SCOPED_KINDS = frozenset({"ScheduleSet", "EngagementRecorded", "TemplateLaunched"})

ENGAGEMENT_SLOTS = 48
ENGAGEMENT_DECAY = 0.9

TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

_HHMM_RE = re.compile(r"^([01][0-9]|2[0-3]):([0-5][0-9])$")
_OFFSET_RE = re.compile(r"^([+-])(0[0-9]|1[0-4]):([0-5][0-9])$")


class SequenceGap(Exception):
    """An event's seq does not continue the log it is applied to."""

    name = "SequenceGap"

    def __init__(self, expected: int, got: int):
        super().__init__(f"expected seq {expected}, got {got}")
        self.expected = expected
        self.got = got


class MalformedEvent(Exception):
    """An event fails its kind's fixed payload schema."""

    name = "MalformedEvent"


class UnknownTask(Exception):
    """A task id does not exist in the state."""

    name = "UnknownTask"

    def __init__(self, task_id: str):
        super().__init__(f"unknown task {task_id!r}")
        self.task_id = task_id


def as_utc_seconds(ts: datetime) -> datetime:
    """Normalize a timestamp to aware UTC at seconds precision."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_ts(ts: datetime) -> str:
    return as_utc_seconds(ts).strftime(TS_FORMAT)


def parse_ts(text: str) -> datetime:
    try:
        naive = datetime.strptime(text, TS_FORMAT)
    except (ValueError, TypeError) as exc:
        raise MalformedEvent(f"bad timestamp {text!r}") from exc
    return naive.replace(tzinfo=timezone.utc)


def is_valid_hhmm(text: str) -> bool:
    return isinstance(text, str) and _HHMM_RE.match(text) is not None


def parse_offset(designator: str) -> timedelta:
    """Parse a fixed-offset timezone designator like ``+05:30`` or ``-08:00``."""
    match = _OFFSET_RE.match(designator) if isinstance(designator, str) else None
    if match is None:
        raise ValueError(f"bad timezone offset {designator!r}")
    sign = 1 if match.group(1) == "+" else -1
    return sign * timedelta(hours=int(match.group(2)), minutes=int(match.group(3)))


# ---------------------------------------------------------------------------
# Domain values


ALL_PARTICIPANTS = "all"  # JSON marker for an unrestricted sharing rule


@dataclass(frozen=True)
class SharingPolicy:
    """Which participants receive each update kind; ``None`` means all of them.

    The owner always receives everything regardless of the policy.
    """

    creation: frozenset[str] | None = None
    handoff_and_response: frozenset[str] | None = None
    status_change: frozenset[str] | None = None
    completion: frozenset[str] | None = None
    comment: frozenset[str] | None = None

    def rule(self, update_kind: str) -> frozenset[str] | None:
        return getattr(self, update_kind)

    def referenced_users(self) -> frozenset[str]:
        users: set[str] = set()
        for kind in UPDATE_KINDS:
            rule = self.rule(kind)
            if rule is not None:
                users.update(rule)
        return frozenset(users)

    def permits(self, user: str, update_kind: str, task: "Task") -> bool:
        """True when `user` receives `update_kind` events on `task`."""
        if user == task.owner:
            return True
        if user not in task.participants:
            return False
        rule = self.rule(update_kind)
        return rule is None or user in rule

    def to_payload(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for kind in UPDATE_KINDS:
            rule = self.rule(kind)
            out[kind] = ALL_PARTICIPANTS if rule is None else sorted(rule)
        return out

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "SharingPolicy":
        kwargs: dict[str, frozenset[str] | None] = {}
        for kind in UPDATE_KINDS:
            rule = payload[kind]
            kwargs[kind] = None if rule == ALL_PARTICIPANTS else frozenset(rule)
        return cls(**kwargs)


DEFAULT_SHARING = SharingPolicy()


@dataclass(frozen=True)
class PendingHandoff:
    to: str
    offered_at: datetime
    seq: int


@dataclass(frozen=True)
class PendingInvitation:
    user: str
    sent_at: datetime
    seq: int


@dataclass(frozen=True)
class Comment:
    author: str
    text: str
    at: datetime
    seq: int


@dataclass(frozen=True)
class Task:
    """One node of the activity graph."""

    task_id: str
    title: str
    owner: str
    created_at: datetime
    parent: str | None = None
    participants: frozenset[str] = frozenset()
    depends_on: frozenset[str] = frozenset()
    status: str = TASK_ACTIVE
    pending_handoffs: tuple[PendingHandoff, ...] = ()
    pending_invitations: tuple[PendingInvitation, ...] = ()
    sharing: SharingPolicy = DEFAULT_SHARING
    comments: tuple[Comment, ...] = ()

    @property
    def pending_handoff(self) -> PendingHandoff | None:
        return self.pending_handoffs[0] if self.pending_handoffs else None

    @property
    def is_active(self) -> bool:
        return self.status == TASK_ACTIVE

    @property
    def is_terminal(self) -> bool:
        return self.status in (TASK_COMPLETED, TASK_ABANDONED)

    @property
    def members(self) -> frozenset[str]:
        return self.participants | {self.owner}

    def invitation_for(self, user: str) -> PendingInvitation | None:
        for inv in self.pending_invitations:
            if inv.user == user:
                return inv
        return None


@dataclass(frozen=True)
class Schedule:
    """Daily engagement-session times in a fixed-offset local timezone."""

    times: tuple[str, ...] = ()
    tz: str = "+00:00"

    def tzinfo(self) -> timezone:
        return timezone(parse_offset(self.tz))


def _zero_slots() -> tuple[float, ...]:
    return (0.0,) * ENGAGEMENT_SLOTS


@dataclass(frozen=True)
class EngagementHistory:
    """Decayed per-half-hour-slot counts of prompts sent, opened, resolved."""

    sent: tuple[float, ...] = field(default_factory=_zero_slots)
    opened: tuple[float, ...] = field(default_factory=_zero_slots)
    resolved: tuple[float, ...] = field(default_factory=_zero_slots)
    last_decay: date | None = None

    def decayed_to(self, day: date) -> "EngagementHistory":
        """Apply the daily decay factor up to `day` (once per calendar day)."""
        if self.last_decay is None:
            return replace(self, last_decay=day)
        days = (day - self.last_decay).days
        if days <= 0:
            return self
        factor = ENGAGEMENT_DECAY**days
        return EngagementHistory(
            sent=tuple(v * factor for v in self.sent),
            opened=tuple(v * factor for v in self.opened),
            resolved=tuple(v * factor for v in self.resolved),
            last_decay=day,
        )

    def record(self, slot: int, opened: bool, resolved: int, day: date) -> "EngagementHistory":
        hist = self.decayed_to(day)
        sent = list(hist.sent)
        sent[slot] += 1.0
        opened_counts = list(hist.opened)
        resolved_counts = list(hist.resolved)
        if opened:
            opened_counts[slot] += 1.0
            resolved_counts[slot] += float(resolved)
        return EngagementHistory(
            sent=tuple(sent),
            opened=tuple(opened_counts),
            resolved=tuple(resolved_counts),
            last_decay=hist.last_decay,
        )


EMPTY_ENGAGEMENT = EngagementHistory()


@dataclass(frozen=True)
class UserState:
    """Per-user prompter data derived from the log."""

    schedule: Schedule | None = None
    engagement: EngagementHistory = EMPTY_ENGAGEMENT
    watch_cursor: int = 0  # seq of the last event covered by an opened session


EMPTY_USER = UserState()


@dataclass(frozen=True)
class Event:
    """An immutable protocol fact; the log is a gap-free sequence of these."""

    seq: int
    ts: datetime
    actor: str
    kind: str
    task_id: str | None
    payload: Mapping[str, Any]


@dataclass(frozen=True)
class GraphState:
    """Materialized view of the activity graph after events [1..cursor]."""

    tasks: Mapping[str, Task] = field(default_factory=dict)
    users: Mapping[str, UserState] = field(default_factory=dict)
    cursor: int = 0

    def task(self, task_id: str) -> Task:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(task_id) from None

    def user(self, user_id: str) -> UserState:
        return self.users.get(user_id, EMPTY_USER)

    def children(self, task_id: str) -> list[Task]:
        return [t for t in self.tasks.values() if t.parent == task_id]


EMPTY_STATE = GraphState()


# ---------------------------------------------------------------------------
# Event payload schemas

_SLOT_RANGE = range(ENGAGEMENT_SLOTS)


def _is_str_list(value: Any) -> bool:
    return isinstance(value, list) and all(isinstance(u, str) and u for u in value)


def _check_policy(value: Any) -> bool:
    if not isinstance(value, dict) or set(value) != set(UPDATE_KINDS):
        return False
    return all(rule == ALL_PARTICIPANTS or _is_str_list(rule) for rule in value.values())


def _check_payload(kind: str, p: Mapping[str, Any]) -> str | None:
    """Return an error description when `p` fails `kind`'s schema, else None."""
    expected: dict[str, tuple[str, ...]] = {
        "TaskCreated": ("title", "parent", "depends_on"),
        "HandoffOffered": ("to",),
        "InvitationSent": ("user",),
        "CommentAdded": ("text",),
        "SharingPolicySet": ("policy",),
        "ScheduleSet": ("times", "tz"),
        "EngagementRecorded": ("slot", "opened", "resolved"),
        "TemplateLaunched": ("template", "binding", "root", "steps"),
    }
    keys = expected.get(kind, ())
    if set(p) != set(keys):
        return f"payload keys {sorted(p)} do not match schema {sorted(keys)}"
    if kind == "TaskCreated":
        if not (isinstance(p["title"], str) and p["title"]):
            return "title must be a non-empty string"
        if not (p["parent"] is None or isinstance(p["parent"], str)):
            return "parent must be a task id or null"
        if not _is_str_list(p["depends_on"]):
            return "depends_on must be a list of task ids"
    elif kind == "HandoffOffered":
        if not (isinstance(p["to"], str) and p["to"]):
            return "to must be a user id"
    elif kind == "InvitationSent":
        if not (isinstance(p["user"], str) and p["user"]):
            return "user must be a user id"
    elif kind == "CommentAdded":
        if not (isinstance(p["text"], str) and p["text"]):
            return "text must be a non-empty string"
    elif kind == "SharingPolicySet":
        if not _check_policy(p["policy"]):
            return "policy must map every update kind to 'all' or a user list"
    elif kind == "ScheduleSet":
        times = p["times"]
        if not isinstance(times, list) or not all(is_valid_hhmm(t) for t in times):
            return "times must be a list of HH:MM strings"
        if len(set(times)) != len(times):
            return "times must be distinct"
        try:
            parse_offset(p["tz"])
        except ValueError:
            return "tz must be a fixed offset like +00:00"
    elif kind == "EngagementRecorded":
        if not (isinstance(p["slot"], int) and not isinstance(p["slot"], bool) and p["slot"] in _SLOT_RANGE):
            return "slot must be an integer in 0..47"
        if not isinstance(p["opened"], bool):
            return "opened must be a boolean"
        resolved = p["resolved"]
        if not (isinstance(resolved, int) and not isinstance(resolved, bool) and resolved >= 0):
            return "resolved must be a non-negative integer"
        if not p["opened"] and resolved != 0:
            return "resolved must be 0 when the session was not opened"
    elif kind == "TemplateLaunched":
        if not (isinstance(p["template"], str) and p["template"]):
            return "template must be a non-empty name"
        binding = p["binding"]
        if not isinstance(binding, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in binding.items()
        ):
            return "binding must map role names to user ids"
        if not (isinstance(p["root"], str) and p["root"]):
            return "root must be a task id"
        steps = p["steps"]
        if not isinstance(steps, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in steps.items()
        ):
            return "steps must map step ids to task ids"
    return None


def validate_event(event: Event) -> None:
    """Raise MalformedEvent unless the event satisfies its kind's schema."""
    if event.kind not in EVENT_KINDS:
        raise MalformedEvent(f"unknown event kind {event.kind!r}")
    if not isinstance(event.seq, int) or event.seq < 1:
        raise MalformedEvent(f"seq must be a positive integer, got {event.seq!r}")
    if not (isinstance(event.actor, str) and event.actor):
        raise MalformedEvent("actor must be a non-empty user id")
    if event.kind in USER_SCOPED_KINDS:
        if event.task_id is not None:
            raise MalformedEvent(f"{event.kind} must not carry a task_id")
    else:
        if not (isinstance(event.task_id, str) and event.task_id):
            raise MalformedEvent(f"{event.kind} requires a task_id")
    problem = _check_payload(event.kind, event.payload)
    if problem is not None:
        raise MalformedEvent(f"{event.kind}: {problem}")


# ---------------------------------------------------------------------------
# The fold


def apply_event(state: GraphState, event: Event) -> GraphState:
    """Apply one event, returning the unique successor state.

    Events are trusted to have been validated by the protocol layer against
    the state they extend; only sequencing and payload shape are re-checked.
    """
    if event.seq != state.cursor + 1:
        raise SequenceGap(state.cursor + 1, event.seq)
    validate_event(event)

    kind = event.kind
    tasks = state.tasks
    users = state.users

    if kind == "TaskCreated":
        task = Task(
            task_id=event.task_id,
            title=event.payload["title"],
            owner=event.actor,
            created_at=event.ts,
            parent=event.payload["parent"],
            depends_on=frozenset(event.payload["depends_on"]),
        )
        tasks = dict(tasks)
        tasks[task.task_id] = task
    elif kind == "HandoffOffered":
        task = tasks[event.task_id]
        offer = PendingHandoff(to=event.payload["to"], offered_at=event.ts, seq=event.seq)
        tasks = dict(tasks)
        tasks[task.task_id] = replace(task, pending_handoffs=(offer,))
    elif kind == "HandoffAccepted":
        task = tasks[event.task_id]
        previous_owner = task.owner
        participants = set(task.participants)
        participants.discard(event.actor)
        participants.add(previous_owner)
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task,
            owner=event.actor,
            participants=frozenset(participants),
            pending_handoffs=(),
            # an invitation addressed to the new owner is moot
            pending_invitations=tuple(
                inv for inv in task.pending_invitations if inv.user != event.actor
            ),
        )
    elif kind == "HandoffDeclined":
        task = tasks[event.task_id]
        tasks = dict(tasks)
        tasks[task.task_id] = replace(task, pending_handoffs=())
    elif kind == "InvitationSent":
        task = tasks[event.task_id]
        invitation = PendingInvitation(user=event.payload["user"], sent_at=event.ts, seq=event.seq)
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task, pending_invitations=task.pending_invitations + (invitation,)
        )
    elif kind == "InvitationAccepted":
        task = tasks[event.task_id]
        participants = set(task.participants)
        if event.actor != task.owner:
            participants.add(event.actor)
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task,
            participants=frozenset(participants),
            pending_invitations=tuple(
                inv for inv in task.pending_invitations if inv.user != event.actor
            ),
        )
    elif kind == "InvitationDeclined":
        task = tasks[event.task_id]
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task,
            pending_invitations=tuple(
                inv for inv in task.pending_invitations if inv.user != event.actor
            ),
        )
    elif kind == "TaskCompleted":
        task = tasks[event.task_id]
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task, status=TASK_COMPLETED, pending_handoffs=(), pending_invitations=()
        )
    elif kind == "TaskAbandoned":
        task = tasks[event.task_id]
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task, status=TASK_ABANDONED, pending_handoffs=(), pending_invitations=()
        )
    elif kind == "CommentAdded":
        task = tasks[event.task_id]
        comment = Comment(author=event.actor, text=event.payload["text"], at=event.ts, seq=event.seq)
        tasks = dict(tasks)
        tasks[task.task_id] = replace(task, comments=task.comments + (comment,))
    elif kind == "SharingPolicySet":
        task = tasks[event.task_id]
        tasks = dict(tasks)
        tasks[task.task_id] = replace(
            task, sharing=SharingPolicy.from_payload(event.payload["policy"])
        )
    elif kind == "ScheduleSet":
        user = state.user(event.actor)
        schedule = Schedule(times=tuple(sorted(event.payload["times"])), tz=event.payload["tz"])
        users = dict(users)
        users[event.actor] = replace(user, schedule=schedule)
    elif kind == "EngagementRecorded":
        user = state.user(event.actor)
        engagement = user.engagement.record(
            slot=event.payload["slot"],
            opened=event.payload["opened"],
            resolved=event.payload["resolved"],
            day=as_utc_seconds(event.ts).date(),
        )
        cursor = event.seq if event.payload["opened"] else user.watch_cursor
        users = dict(users)
        users[event.actor] = replace(user, engagement=engagement, watch_cursor=cursor)
    elif kind == "TemplateLaunched":
        pass  # the TaskCreated / HandoffOffered events that follow carry the changes

    return GraphState(tasks=tasks, users=users, cursor=event.seq)


def replay(events: Iterable[Event]) -> GraphState:
    """Left-fold a gap-free log (from seq 1) into a state."""
    state = EMPTY_STATE
    for event in events:
        state = apply_event(state, event)
    return state


def subtask_closure(state: GraphState, task_id: str) -> set[str]:
    """The task plus all descendants reachable via parent edges."""
    state.task(task_id)
    children_of: dict[str, list[str]] = {}
    for task in state.tasks.values():
        if task.parent is not None:
            children_of.setdefault(task.parent, []).append(task.task_id)
    closure = {task_id}
    frontier = [task_id]
    while frontier:
        current = frontier.pop()
        for child in children_of.get(current, ()):
            if child not in closure:
                closure.add(child)
                frontier.append(child)
    return closure


# ---------------------------------------------------------------------------
# Invariant checking


@dataclass(frozen=True)
class Violation:
    task_id: str
    rule: str
    detail: str = ""


def check_invariants(state: GraphState) -> list[Violation]:
    """Total check of every task invariant; empty list means the graph is sound."""
    violations: list[Violation] = []
    tasks = state.tasks

    for task in tasks.values():
        tid = task.task_id
        if not task.owner:
            violations.append(Violation(tid, "missing_owner"))
        if task.owner in task.participants:
            violations.append(Violation(tid, "owner_in_participants", task.owner))
        if task.status not in TASK_STATUSES:
            violations.append(Violation(tid, "bad_status", str(task.status)))
        if len(task.pending_handoffs) > 1:
            violations.append(
                Violation(tid, "multiple_pending_handoffs", str(len(task.pending_handoffs)))
            )
        if task.is_terminal and (task.pending_handoffs or task.pending_invitations):
            violations.append(Violation(tid, "terminal_with_pending"))
        if task.parent is not None and task.parent not in tasks:
            violations.append(Violation(tid, "unknown_parent", task.parent))
        for dep in task.depends_on:
            dep_task = tasks.get(dep)
            if dep_task is None:
                violations.append(Violation(tid, "unknown_dependency", dep))
            elif dep_task.parent != task.parent:
                violations.append(Violation(tid, "dependency_not_sibling", dep))

    # Parent edges must form a forest: walk each chain with memoized colors.
    color: dict[str, int] = {}  # 1 = on current path, 2 = known acyclic
    for task in tasks.values():
        if color.get(task.task_id):
            continue
        path: list[str] = []
        current: str | None = task.task_id
        while current is not None and current in tasks and color.get(current) is None:
            color[current] = 1
            path.append(current)
            current = tasks[current].parent
        if current is not None and color.get(current) == 1:
            violations.append(Violation(current, "parent_cycle"))
        for tid in path:
            color[tid] = 2

    # Sibling depends_on edges must form a DAG within each parent group.
    groups: dict[str | None, list[Task]] = {}
    for task in tasks.values():
        if task.depends_on:
            groups.setdefault(task.parent, []).append(task)
    for parent, members in groups.items():
        # Kahn's algorithm over the group's dependency subgraph
        nodes: set[str] = set()
        for task in members:
            nodes.add(task.task_id)
            nodes.update(d for d in task.depends_on if d in tasks)
        indegree = {n: 0 for n in nodes}
        dependents: dict[str, list[str]] = {n: [] for n in nodes}
        for task in members:
            for dep in task.depends_on:
                if dep in nodes:
                    indegree[task.task_id] += 1
                    dependents[dep].append(task.task_id)
        ready = [n for n, d in indegree.items() if d == 0]
        seen = 0
        while ready:
            node = ready.pop()
            seen += 1
            for dependent in dependents[node]:
                indegree[dependent] -= 1
                if indegree[dependent] == 0:
                    ready.append(dependent)
        if seen != len(nodes):
            cyclic = sorted(n for n, d in indegree.items() if d > 0)
            violations.append(
                Violation(cyclic[0], "dependency_cycle", ",".join(cyclic))
            )

    return violations


# ---------------------------------------------------------------------------
# Serialization: one event per line, fixed field order, bit-exact round trip


def event_to_line(event: Event) -> str:
    """Serialize to the canonical log line (no trailing newline)."""
    record = {
        "seq": event.seq,
        "ts": format_ts(event.ts),
        "actor": event.actor,
        "kind": event.kind,
        "task_id": event.task_id,
        "payload": dict(event.payload),
    }
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False)


def event_from_line(line: str) -> Event:
    """Parse a log line; raises MalformedEvent on any schema failure."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedEvent(f"not valid JSON: {exc}") from exc
    if not isinstance(record, dict) or list(record) != ["seq", "ts", "actor", "kind", "task_id", "payload"]:
        raise MalformedEvent("event object must have exactly (seq, ts, actor, kind, task_id, payload)")
    if not isinstance(record["payload"], dict):
        raise MalformedEvent("payload must be an object")
    event = Event(
        seq=record["seq"],
        ts=parse_ts(record["ts"]),
        actor=record["actor"],
        kind=record["kind"],
        task_id=record["task_id"],
        payload=record["payload"],
    )
    validate_event(event)
    return event


def serialize_log(events: Iterable[Event]) -> str:
    return "".join(event_to_line(e) + "\n" for e in events)


def parse_log_text(text: str) -> list[Event]:
    return [event_from_line(line) for line in text.splitlines() if line]


# ---------------------------------------------------------------------------
# State serialization (canonical; used by snapshots and equality checks)


def _task_to_dict(task: Task) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "title": task.title,
        "owner": task.owner,
        "created_at": format_ts(task.created_at),
        "parent": task.parent,
        "participants": sorted(task.participants),
        "depends_on": sorted(task.depends_on),
        "status": task.status,
        "pending_handoffs": [
            {"to": h.to, "offered_at": format_ts(h.offered_at), "seq": h.seq}
            for h in task.pending_handoffs
        ],
        "pending_invitations": [
            {"user": i.user, "sent_at": format_ts(i.sent_at), "seq": i.seq}
            for i in task.pending_invitations
        ],
        "sharing": task.sharing.to_payload(),
        "comments": [
            {"author": c.author, "text": c.text, "at": format_ts(c.at), "seq": c.seq}
            for c in task.comments
        ],
    }


def _task_from_dict(data: Mapping[str, Any]) -> Task:
    return Task(
        task_id=data["task_id"],
        title=data["title"],
        owner=data["owner"],
        created_at=parse_ts(data["created_at"]),
        parent=data["parent"],
        participants=frozenset(data["participants"]),
        depends_on=frozenset(data["depends_on"]),
        status=data["status"],
        pending_handoffs=tuple(
            PendingHandoff(to=h["to"], offered_at=parse_ts(h["offered_at"]), seq=h["seq"])
            for h in data["pending_handoffs"]
        ),
        pending_invitations=tuple(
            PendingInvitation(user=i["user"], sent_at=parse_ts(i["sent_at"]), seq=i["seq"])
            for i in data["pending_invitations"]
        ),
        sharing=SharingPolicy.from_payload(data["sharing"]),
        comments=tuple(
            Comment(author=c["author"], text=c["text"], at=parse_ts(c["at"]), seq=c["seq"])
            for c in data["comments"]
        ),
    )


def _user_to_dict(user: UserState) -> dict[str, Any]:
    return {
        "schedule": None
        if user.schedule is None
        else {"times": list(user.schedule.times), "tz": user.schedule.tz},
        "engagement": {
            "sent": list(user.engagement.sent),
            "opened": list(user.engagement.opened),
            "resolved": list(user.engagement.resolved),
            "last_decay": None
            if user.engagement.last_decay is None
            else user.engagement.last_decay.isoformat(),
        },
        "watch_cursor": user.watch_cursor,
    }


def _user_from_dict(data: Mapping[str, Any]) -> UserState:
    schedule = data["schedule"]
    engagement = data["engagement"]
    return UserState(
        schedule=None
        if schedule is None
        else Schedule(times=tuple(schedule["times"]), tz=schedule["tz"]),
        engagement=EngagementHistory(
            sent=tuple(engagement["sent"]),
            opened=tuple(engagement["opened"]),
            resolved=tuple(engagement["resolved"]),
            last_decay=None
            if engagement["last_decay"] is None
            else date.fromisoformat(engagement["last_decay"]),
        ),
        watch_cursor=data["watch_cursor"],
    )


def state_to_json(state: GraphState) -> str:
    """Canonical JSON for a state; equal states serialize to equal bytes."""
    record = {
        "cursor": state.cursor,
        "tasks": {tid: _task_to_dict(t) for tid, t in sorted(state.tasks.items())},
        "users": {uid: _user_to_dict(u) for uid, u in sorted(state.users.items())},
    }
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False, sort_keys=True)


def state_from_json(text: str) -> GraphState:
    record = json.loads(text)
    return GraphState(
        tasks={tid: _task_from_dict(t) for tid, t in record["tasks"].items()},
        users={uid: _user_from_dict(u) for uid, u in record["users"].items()},
        cursor=record["cursor"],
    )
