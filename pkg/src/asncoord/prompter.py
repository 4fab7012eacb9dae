"""Personal prompter: session schedules, agendas, and engagement timing.

A user's prompter surfaces, at their self-chosen times, the items that need
their attention: offers and invitations awaiting a decision, tasks that are
ready to act on, and fresh updates on tasks they are watching. Engagement
statistics feed a recommender that ranks the half-hour slots where sessions
have historically paid off.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any, Sequence

from .model import (
    EMPTY_STATE,
    ENGAGEMENT_SLOTS,
    Event,
    EngagementHistory,
    GraphState,
    Schedule,
    Task,
    apply_event,
    as_utc_seconds,
    is_valid_hhmm,
    parse_offset,
)
from .protocol import Rejection, feed_vias

MAX_SESSION_TIMES = 24

AGENDA_PENDING_HANDOFF = "pending_handoff"
AGENDA_PENDING_INVITATION = "pending_invitation"
AGENDA_ACTIONABLE = "actionable_task"
AGENDA_WATCHED = "watched_update"


@dataclass(frozen=True)
class AgendaItem:
    kind: str
    task_id: str
    detail: dict[str, Any]
    rank: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "task_id": self.task_id, "detail": dict(self.detail), "rank": self.rank}


def canonical_tz(designator: str) -> str:
    """Normalize a timezone designator; raises Rejection(InvalidTime) if bad."""
    if designator in ("UTC", "utc", "Z", ""):
        return "+00:00"
    try:
        parse_offset(designator)
    except ValueError:
        raise Rejection("InvalidTime", f"bad timezone {designator!r}") from None
    return designator


def set_schedule(
    state: GraphState, actor: str, times: Sequence[str], tz: str, now: datetime
) -> Event:
    """Replace the user's daily session times atomically."""
    from .protocol import _event  # shared event constructor

    seen: set[str] = set()
    for t in times:
        if not is_valid_hhmm(t):
            raise Rejection("InvalidTime", repr(t))
        if t in seen:
            raise Rejection("DuplicateTime", t)
        seen.add(t)
    if len(seen) > MAX_SESSION_TIMES:
        raise Rejection("InvalidTime", f"{len(seen)} session times exceeds {MAX_SESSION_TIMES}")
    return _event(
        state, now, actor, "ScheduleSet", None, {"times": sorted(seen), "tz": canonical_tz(tz)}
    )


def next_session(schedule: Schedule | None, now: datetime) -> datetime | None:
    """Earliest session start strictly after `now`, or None without a schedule."""
    if schedule is None or not schedule.times:
        return None
    local_now = as_utc_seconds(now).astimezone(schedule.tzinfo())
    for day_offset in (0, 1):
        day = (local_now + timedelta(days=day_offset)).date()
        for hhmm in sorted(schedule.times):
            hour, minute = int(hhmm[:2]), int(hhmm[3:])
            candidate = datetime(
                day.year, day.month, day.day, hour, minute, tzinfo=schedule.tzinfo()
            )
            if candidate > local_now:
                return candidate.astimezone(timezone.utc)
    return None  # unreachable: tomorrow always has a candidate


def record_engagement(
    state: GraphState, actor: str, session_slot: int, opened: bool, items_resolved: int, now: datetime
) -> Event:
    from .protocol import _event

    if not isinstance(session_slot, int) or isinstance(session_slot, bool) or not (
        0 <= session_slot < ENGAGEMENT_SLOTS
    ):
        raise Rejection("InvalidSlot", repr(session_slot))
    if items_resolved < 0 or (not opened and items_resolved != 0):
        raise Rejection(
            "InconsistentRecord", f"opened={opened} resolved={items_resolved}"
        )
    return _event(
        state,
        now,
        actor,
        "EngagementRecorded",
        None,
        {"slot": session_slot, "opened": bool(opened), "resolved": int(items_resolved)},
    )


def slot_score(history: EngagementHistory, slot: int) -> float:
    """Expected usefulness of prompting in a slot: open rate times resolution lift."""
    sent = history.sent[slot]
    opened = history.opened[slot]
    resolved = history.resolved[slot]
    return ((opened + 1.0) / (sent + 2.0)) * (1.0 + resolved / (opened + 1.0))


def recommend_schedule(history: EngagementHistory, k: int) -> list[int]:
    """The k half-hour slots with the best engagement scores, best first."""
    if not isinstance(k, int) or isinstance(k, bool) or not (1 <= k <= ENGAGEMENT_SLOTS):
        raise Rejection("InvalidK", repr(k))
    ranked = sorted(range(ENGAGEMENT_SLOTS), key=lambda s: (-slot_score(history, s), s))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Agendas


def is_actionable(state: GraphState, task: Task, user: str) -> bool:
    """Owned, active, no active child, and every dependency completed."""
    if task.owner != user or not task.is_active:
        return False
    for other in state.tasks.values():
        if other.parent == task.task_id and other.is_active:
            return False
    for dep in task.depends_on:
        dep_task = state.tasks.get(dep)
        if dep_task is None or dep_task.status != "completed":
            return False
    return True


def _watched_updates(
    events: Sequence[Event], final_state: GraphState, user: str, cursor: int
) -> list[tuple[Event, str]]:
    """Events after `cursor` visible to the user via a task they participate
    in but do not own, excluding their own actions. Returns (event, via)."""
    out: list[tuple[Event, str]] = []
    state = EMPTY_STATE
    for event in events:
        state = apply_event(state, event)
        if event.seq <= cursor or event.task_id is None or event.actor == user:
            continue
        if final_state.tasks[event.task_id].owner == user:
            continue  # the user's own task, not something they merely watch
        for via in feed_vias(event, user, state, final_state):
            via_task = final_state.tasks[via]
            if via_task.owner != user and user in via_task.participants:
                out.append((event, via))
                break
    return out


def build_agenda(
    state: GraphState, events: Sequence[Event], user: str, now: datetime
) -> list[AgendaItem]:
    """The user's session agenda: decisions first, then actionable work, then
    watched updates. Ties broken by ascending task id."""
    entries: list[tuple[str, str, dict[str, Any]]] = []

    offers = [
        t for t in state.tasks.values() if t.pending_handoff and t.pending_handoff.to == user
    ]
    offers.sort(key=lambda t: (t.pending_handoff.offered_at, t.task_id))
    for task in offers:
        entries.append(
            (
                AGENDA_PENDING_HANDOFF,
                task.task_id,
                {
                    "title": task.title,
                    "from": task.owner,
                    "offered_at": task.pending_handoff.offered_at.isoformat(),
                },
            )
        )

    invitations = [
        (t, t.invitation_for(user)) for t in state.tasks.values() if t.invitation_for(user)
    ]
    invitations.sort(key=lambda pair: (pair[1].sent_at, pair[0].task_id))
    for task, invitation in invitations:
        entries.append(
            (
                AGENDA_PENDING_INVITATION,
                task.task_id,
                {
                    "title": task.title,
                    "from": task.owner,
                    "sent_at": invitation.sent_at.isoformat(),
                },
            )
        )

    actionable = [t for t in state.tasks.values() if is_actionable(state, t, user)]
    actionable.sort(key=lambda t: (t.created_at, t.task_id))
    for task in actionable:
        entries.append(
            (AGENDA_ACTIONABLE, task.task_id, {"title": task.title, "parent": task.parent})
        )

    for event, via in _watched_updates(events, state, user, state.user(user).watch_cursor):
        entries.append(
            (
                AGENDA_WATCHED,
                event.task_id,
                {"seq": event.seq, "kind": event.kind, "actor": event.actor, "via": via},
            )
        )

    return [
        AgendaItem(kind=kind, task_id=task_id, detail=detail, rank=rank)
        for rank, (kind, task_id, detail) in enumerate(entries)
    ]
