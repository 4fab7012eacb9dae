"""The command serialization point: one lock, one log, one materialized state.

Every mutation enters here, is validated by the pure protocol layer against
the current state, is appended durably (when a log file is attached), and
only then becomes the new state. Rejections leave both log and state
untouched. Reads hand out immutable snapshots.
"""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import prompter, protocol, templates
from .model import Event, GraphState, SharingPolicy, apply_event, replay
from .protocol import Rejection
from .store import ChecksumMismatch, EventLog, read_snapshot, replay_with_snapshot, write_snapshot


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc).replace(microsecond=0)


class FixedClock:
    """Deterministic clock: starts at `start`, advances `step` per reading."""

    def __init__(self, start: datetime, step: timedelta = timedelta(seconds=1)):
        self._next = start
        self._step = step

    def now(self) -> datetime:
        current = self._next
        self._next = current + self._step
        return current


class Engine:
    """Holds the event log, its fold, and the registry of known users."""

    def __init__(
        self,
        log: EventLog | None = None,
        clock=None,
        snapshot_path: str | Path | None = None,
        snapshot_interval: int = 0,
    ):
        self._lock = threading.RLock()
        self._log = log
        self._clock = clock if clock is not None else SystemClock()
        self._snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._snapshot_interval = snapshot_interval
        self._users: set[str] = set()
        if log is not None:
            self._events: list[Event] = log.events
            self._state = self._recover(self._events)
        else:
            self._events = []
            self._state = GraphState()

    def _recover(self, events: Sequence[Event]) -> GraphState:
        if self._snapshot_path is not None and self._snapshot_path.exists():
            try:
                snapshot = read_snapshot(self._snapshot_path)
                return replay_with_snapshot(events, snapshot)
            except ChecksumMismatch:
                pass
        return replay(events)

    # -- reads ------------------------------------------------------------

    @property
    def state(self) -> GraphState:
        return self._state

    @property
    def clock(self):
        return self._clock

    @property
    def events(self) -> list[Event]:
        with self._lock:
            return list(self._events)

    @property
    def known_users(self) -> frozenset[str]:
        return frozenset(self._users)

    def register_user(self, user_id: str) -> None:
        if not isinstance(user_id, str) or not user_id.strip():
            raise ValueError("user id must be a non-empty string")
        with self._lock:
            self._users.add(user_id)

    def is_known(self, user_id: str) -> bool:
        return user_id in self._users

    def agenda(self, user: str, now: datetime | None = None):
        with self._lock:
            state, events = self._state, list(self._events)
        return prompter.build_agenda(state, events, user, now or self._clock.now())

    def updates_for(self, user: str, since_seq: int = 0) -> list[Event]:
        with self._lock:
            state, events = self._state, list(self._events)
        return protocol.visible_updates(events, user, since_seq, final_state=state)

    # -- writes -----------------------------------------------------------

    def _require_actor(self, actor: str) -> None:
        if actor not in self._users:
            raise Rejection("UnknownUser", f"actor {actor}")

    def _commit(self, events: Sequence[Event]) -> None:
        state = self._state
        for event in events:
            state = apply_event(state, event)
        if self._log is not None:
            self._log.append_batch(events)
        self._events.extend(events)
        self._state = state
        self._maybe_snapshot()

    def _maybe_snapshot(self) -> None:
        if (
            self._snapshot_path is not None
            and self._snapshot_interval > 0
            and self._state.cursor > 0
            and self._state.cursor % self._snapshot_interval == 0
        ):
            write_snapshot(self._snapshot_path, self._state)

    def execute(self, build) -> Event:
        """Validate and commit a single-event command under the lock."""
        with self._lock:
            event = build(self._state, self._clock.now())
            self._commit([event])
            return event

    def create_task(
        self, actor: str, title: str, parent: str | None = None, depends_on: Iterable[str] = ()
    ) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.create_task(
                    s, self._users, actor, title, parent, now, depends_on
                )
            )

    def offer_handoff(self, actor: str, task_id: str, to: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.offer_handoff(s, self._users, actor, task_id, to, now)
            )

    def respond_handoff(self, actor: str, task_id: str, decision: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.respond_handoff(s, actor, task_id, decision, now)
            )

    def invite_participant(self, actor: str, task_id: str, user: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.invite_participant(s, self._users, actor, task_id, user, now)
            )

    def respond_invitation(self, actor: str, task_id: str, decision: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.respond_invitation(s, actor, task_id, decision, now)
            )

    def complete_task(self, actor: str, task_id: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(lambda s, now: protocol.complete_task(s, actor, task_id, now))

    def abandon_task(self, actor: str, task_id: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(lambda s, now: protocol.abandon_task(s, actor, task_id, now))

    def add_comment(self, actor: str, task_id: str, text: str) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(lambda s, now: protocol.add_comment(s, actor, task_id, text, now))

    def set_sharing_policy(self, actor: str, task_id: str, policy: SharingPolicy) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: protocol.set_sharing_policy(s, actor, task_id, policy, now)
            )

    def set_schedule(self, actor: str, times: Sequence[str], tz: str = "+00:00") -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(lambda s, now: prompter.set_schedule(s, actor, times, tz, now))

    def record_engagement(self, actor: str, slot: int, opened: bool, resolved: int = 0) -> Event:
        with self._lock:
            self._require_actor(actor)
            return self.execute(
                lambda s, now: prompter.record_engagement(s, actor, slot, opened, resolved, now)
            )

    def launch_template(
        self, actor: str, template: templates.Template, roles: dict[str, str]
    ) -> list[Event]:
        with self._lock:
            self._require_actor(actor)
            binding = templates.Binding(roles=dict(roles), launcher=actor)
            events = templates.instantiate(
                self._state, self._users, template, binding, self._clock.now()
            )
            self._commit(events)
            return events

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
