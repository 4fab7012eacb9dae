"""Coordination protocol: validates commands against state and emits events.

Each command either returns exactly one event (or, for template launches, one
atomic batch) or raises :class:`Rejection` naming the violated precondition.
Command functions are pure; appending the event and swapping the state is the
engine's job.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from .model import (
    DEFAULT_SHARING,
    EMPTY_STATE,
    EVENT_UPDATE_KIND,
    Event,
    GraphState,
    SharingPolicy,
    Task,
    apply_event,
    as_utc_seconds,
    replay,
)
from datetime import datetime

# The closed taxonomy of precondition names a command can be rejected with.
REJECTION_NAMES = frozenset(
    {
        "UnknownTask",
        "UnknownUser",
        "NotOwner",
        "TerminalTask",
        "EmptyTitle",
        "OfferPending",
        "SelfHandoff",
        "NoPendingOffer",
        "NotOfferee",
        "AlreadyParticipant",
        "InvitationPending",
        "NoPendingInvitation",
        "OpenSubtasks",
        "NotParticipant",
        "EmptyText",
        "UnknownParticipantInPolicy",
        "InvalidDependency",
        "InvalidTime",
        "DuplicateTime",
        "InvalidSlot",
        "InconsistentRecord",
        "InvalidK",
        "InvalidTemplate",
        "UnboundRole",
    }
)


class Rejection(Exception):
    """A command failed a precondition; the state is unchanged."""

    def __init__(self, name: str, message: str = ""):
        if name not in REJECTION_NAMES:
            raise ValueError(f"not a known rejection name: {name!r}")
        super().__init__(f"{name}: {message}" if message else name)
        self.name = name
        self.detail = message


_TASK_ID_RE = re.compile(r"^t(\d+)$")


def next_task_id(state: GraphState) -> str:
    """Next id in the service's monotonic ``t<N>`` scheme, derived from state."""
    highest = 0
    for task_id in state.tasks:
        match = _TASK_ID_RE.match(task_id)
        if match:
            highest = max(highest, int(match.group(1)))
    return f"t{highest + 1}"


def allocate_task_ids(state: GraphState, count: int) -> list[str]:
    first = int(_TASK_ID_RE.match(next_task_id(state)).group(1))
    return [f"t{n}" for n in range(first, first + count)]


def _require_task(state: GraphState, task_id: str) -> Task:
    task = state.tasks.get(task_id)
    if task is None:
        raise Rejection("UnknownTask", task_id)
    return task


def _require_owner(task: Task, actor: str) -> None:
    if actor != task.owner:
        raise Rejection("NotOwner", f"{actor} does not own {task.task_id}")


def _require_active(task: Task) -> None:
    if not task.is_active:
        raise Rejection("TerminalTask", f"{task.task_id} is {task.status}")


def _event(state: GraphState, ts: datetime, actor: str, kind: str, task_id: str | None, payload: dict) -> Event:
    return Event(
        seq=state.cursor + 1,
        ts=as_utc_seconds(ts),
        actor=actor,
        kind=kind,
        task_id=task_id,
        payload=payload,
    )


# ---------------------------------------------------------------------------
# Commands


def create_task(
    state: GraphState,
    known_users: frozenset[str] | set[str],
    actor: str,
    title: str,
    parent: str | None,
    now: datetime,
    depends_on: Iterable[str] = (),
) -> Event:
    """Create a task, optionally as a subtask with sibling dependencies."""
    if not isinstance(title, str) or not title.strip():
        raise Rejection("EmptyTitle")
    if parent is not None:
        parent_task = _require_task(state, parent)
        _require_owner(parent_task, actor)
        _require_active(parent_task)
    deps = sorted(set(depends_on))
    for dep in deps:
        dep_task = state.tasks.get(dep)
        if dep_task is None:
            raise Rejection("UnknownTask", f"dependency {dep}")
        if dep_task.parent != parent:
            raise Rejection("InvalidDependency", f"{dep} is not a sibling under {parent}")
    return _event(
        state,
        now,
        actor,
        "TaskCreated",
        next_task_id(state),
        {"title": title, "parent": parent, "depends_on": deps},
    )


def offer_handoff(
    state: GraphState,
    known_users: frozenset[str] | set[str],
    actor: str,
    task_id: str,
    to: str,
    now: datetime,
) -> Event:
    task = _require_task(state, task_id)
    _require_owner(task, actor)
    _require_active(task)
    if task.pending_handoffs:
        raise Rejection("OfferPending", task_id)
    if to not in known_users:
        raise Rejection("UnknownUser", to)
    if to == task.owner:
        raise Rejection("SelfHandoff", to)
    return _event(state, now, actor, "HandoffOffered", task_id, {"to": to})


def respond_handoff(state: GraphState, actor: str, task_id: str, decision: str, now: datetime) -> Event:
    if decision not in ("accept", "decline"):
        raise ValueError(f"decision must be accept or decline, got {decision!r}")
    task = _require_task(state, task_id)
    offer = task.pending_handoff
    if offer is None:
        raise Rejection("NoPendingOffer", task_id)
    if actor != offer.to:
        raise Rejection("NotOfferee", f"offer addressed to {offer.to}")
    kind = "HandoffAccepted" if decision == "accept" else "HandoffDeclined"
    return _event(state, now, actor, kind, task_id, {})


def invite_participant(
    state: GraphState,
    known_users: frozenset[str] | set[str],
    actor: str,
    task_id: str,
    user: str,
    now: datetime,
) -> Event:
    task = _require_task(state, task_id)
    _require_owner(task, actor)
    _require_active(task)
    if user not in known_users:
        raise Rejection("UnknownUser", user)
    if user == task.owner or user in task.participants:
        raise Rejection("AlreadyParticipant", user)
    if task.invitation_for(user) is not None:
        raise Rejection("InvitationPending", user)
    return _event(state, now, actor, "InvitationSent", task_id, {"user": user})


def respond_invitation(state: GraphState, actor: str, task_id: str, decision: str, now: datetime) -> Event:
    if decision not in ("accept", "decline"):
        raise ValueError(f"decision must be accept or decline, got {decision!r}")
    task = _require_task(state, task_id)
    if task.invitation_for(actor) is None:
        raise Rejection("NoPendingInvitation", f"{actor} on {task_id}")
    kind = "InvitationAccepted" if decision == "accept" else "InvitationDeclined"
    return _event(state, now, actor, kind, task_id, {})


def complete_task(state: GraphState, actor: str, task_id: str, now: datetime) -> Event:
    task = _require_task(state, task_id)
    _require_owner(task, actor)
    _require_active(task)
    if task.pending_handoffs:
        raise Rejection("OfferPending", task_id)
    open_children = [t.task_id for t in state.tasks.values() if t.parent == task_id and t.is_active]
    if open_children:
        raise Rejection("OpenSubtasks", ",".join(sorted(open_children)))
    return _event(state, now, actor, "TaskCompleted", task_id, {})


def abandon_task(state: GraphState, actor: str, task_id: str, now: datetime) -> Event:
    task = _require_task(state, task_id)
    _require_owner(task, actor)
    _require_active(task)
    if task.pending_handoffs:
        raise Rejection("OfferPending", task_id)
    return _event(state, now, actor, "TaskAbandoned", task_id, {})


def add_comment(state: GraphState, actor: str, task_id: str, text: str, now: datetime) -> Event:
    task = _require_task(state, task_id)
    if actor not in task.members:
        raise Rejection("NotParticipant", actor)
    if not isinstance(text, str) or not text.strip():
        raise Rejection("EmptyText")
    return _event(state, now, actor, "CommentAdded", task_id, {"text": text})


def set_sharing_policy(
    state: GraphState, actor: str, task_id: str, policy: SharingPolicy, now: datetime
) -> Event:
    task = _require_task(state, task_id)
    _require_owner(task, actor)
    _require_active(task)
    strangers = policy.referenced_users() - task.participants
    if strangers:
        raise Rejection("UnknownParticipantInPolicy", ",".join(sorted(strangers)))
    return _event(state, now, actor, "SharingPolicySet", task_id, {"policy": policy.to_payload()})


# ---------------------------------------------------------------------------
# Update visibility


def event_audience(event: Event, state: GraphState) -> dict[str, set[str]]:
    """Who receives a task event, mapped to the task ids granting delivery.

    `state` must be the state just after the event was applied, so the
    sharing policies consulted are the ones in force at event time. Delivery
    paths: membership in the task itself; membership in an ancestor — people
    watching a goal track activity on the subtasks it was broken into; and,
    for completions and abandonments, membership in a task that depends on
    the finished one — the people waiting on the outcome. Each path is gated
    by the sharing policy of the task granting it.
    """
    if event.task_id is None:
        return {}
    task = state.tasks.get(event.task_id)
    if task is None:
        return {}
    update_kind = EVENT_UPDATE_KIND[event.kind]
    audience: dict[str, set[str]] = {}

    def grant(via: Task) -> None:
        audience.setdefault(via.owner, set()).add(via.task_id)
        for user in via.participants:
            if via.sharing.permits(user, update_kind, via):
                audience.setdefault(user, set()).add(via.task_id)

    grant(task)
    seen = {task.task_id}
    ancestor = task.parent
    while ancestor is not None and ancestor not in seen:
        ancestor_task = state.tasks.get(ancestor)
        if ancestor_task is None:
            break
        grant(ancestor_task)
        seen.add(ancestor)
        ancestor = ancestor_task.parent
    if event.kind in ("TaskCompleted", "TaskAbandoned"):
        for other in state.tasks.values():
            if event.task_id in other.depends_on:
                grant(other)
    return audience


def _via_tasks(event: Event, state: GraphState) -> list[str]:
    """Tasks whose members may receive the event: the task itself, its
    ancestors, and (for completions/abandonments) the tasks depending on it."""
    task = state.tasks.get(event.task_id)
    if task is None:
        return []
    vias = [task.task_id]
    seen = {task.task_id}
    ancestor = task.parent
    while ancestor is not None and ancestor not in seen:
        ancestor_task = state.tasks.get(ancestor)
        if ancestor_task is None:
            break
        vias.append(ancestor)
        seen.add(ancestor)
        ancestor = ancestor_task.parent
    if event.kind in ("TaskCompleted", "TaskAbandoned"):
        for other in state.tasks.values():
            if event.task_id in other.depends_on and other.task_id not in seen:
                vias.append(other.task_id)
    return vias


def feed_vias(
    event: Event, user: str, policy_state: GraphState, final_state: GraphState
) -> list[str]:
    """Via-tasks through which `user`'s feed receives the event.

    Membership is judged against the current graph — joining a task catches
    you up on its history — while each via-task's sharing policy is the one
    in force when the event happened (policies are not retroactive).
    """
    update_kind = EVENT_UPDATE_KIND[event.kind]
    granted: list[str] = []
    for via in _via_tasks(event, final_state):
        current = final_state.tasks[via]
        if user == current.owner:
            granted.append(via)
            continue
        if user not in current.participants:
            continue
        then = policy_state.tasks.get(via)
        rule = (then.sharing if then is not None else DEFAULT_SHARING).rule(update_kind)
        if rule is None or user in rule:
            granted.append(via)
    return granted


def visible_updates(
    events: Sequence[Event],
    user: str,
    since_seq: int = 0,
    final_state: GraphState | None = None,
) -> list[Event]:
    """Events after `since_seq` the user is entitled to see, in seq order.

    Covers every task the user currently owns or participates in (directly,
    via an ancestor they watch, or via a dependent waiting on a completion),
    gated by the sharing policies in force when each event happened; plus
    still-pending handoff offers and invitations addressed to the user.
    """
    if final_state is None:
        final_state = replay(events)
    out: list[Event] = []
    state = EMPTY_STATE
    for event in events:
        state = apply_event(state, event)
        if event.seq <= since_seq or event.task_id is None:
            continue
        if feed_vias(event, user, state, final_state):
            out.append(event)
        elif event.kind == "HandoffOffered" and event.payload["to"] == user:
            task = final_state.tasks.get(event.task_id)
            offer = task.pending_handoff if task else None
            if offer is not None and offer.seq == event.seq:
                out.append(event)
        elif event.kind == "InvitationSent" and event.payload["user"] == user:
            task = final_state.tasks.get(event.task_id)
            invitation = task.invitation_for(user) if task else None
            if invitation is not None and invitation.seq == event.seq:
                out.append(event)
    return out
