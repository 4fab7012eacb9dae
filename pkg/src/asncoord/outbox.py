"""Notification outbox: session prompts, offers, invitations, watched updates.

Message creation is deterministic given (state, events, now) and the delivery
ledgers; transports are pluggable and may fail, in which case messages stay
queued and are retried on the next run (at-least-once, per-user order).
"""

from __future__ import annotations

import json
import logging
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Sequence

from .model import EMPTY_STATE, Event, GraphState, Schedule, apply_event, as_utc_seconds
from .protocol import event_audience

logger = logging.getLogger(__name__)

MSG_SESSION_PROMPT = "session_prompt"
MSG_HANDOFF_OFFER = "handoff_offer"
MSG_INVITATION = "invitation"
MSG_WATCHED_UPDATE = "watched_update"


class DeliveryFailure(Exception):
    name = "DeliveryFailure"


@dataclass
class OutboxMessage:
    user: str
    kind: str
    body: str
    created_at: datetime
    delivered: bool = False

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "kind": self.kind,
            "body": self.body,
            "created_at": self.created_at.isoformat(),
            "delivered": self.delivered,
        }


def stdout_transport(message: OutboxMessage) -> None:
    print(f"[outbox] to={message.user} kind={message.kind} {message.body}")


def webhook_transport(url: str) -> Callable[[OutboxMessage], None]:
    def deliver(message: OutboxMessage) -> None:
        data = json.dumps(message.to_dict()).encode("utf-8")
        request = urllib.request.Request(
            url, data=data, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=5) as response:
                if response.status >= 400:
                    raise DeliveryFailure(f"webhook returned {response.status}")
        except DeliveryFailure:
            raise
        except Exception as exc:
            raise DeliveryFailure(str(exc)) from exc

    return deliver


def latest_session_at_or_before(schedule: Schedule, now: datetime) -> datetime | None:
    """Most recent scheduled session occurrence not after `now`."""
    if not schedule.times:
        return None
    local_now = as_utc_seconds(now).astimezone(schedule.tzinfo())
    for day_offset in (0, -1):
        day = (local_now + timedelta(days=day_offset)).date()
        for hhmm in sorted(schedule.times, reverse=True):
            hour, minute = int(hhmm[:2]), int(hhmm[3:])
            candidate = datetime(
                day.year, day.month, day.day, hour, minute, tzinfo=schedule.tzinfo()
            )
            if candidate <= local_now:
                return candidate
    return None


def _describe(event: Event, state: GraphState) -> str:
    task = state.tasks.get(event.task_id) if event.task_id else None
    title = f"'{task.title}' ({task.task_id})" if task else event.task_id
    verb = {
        "TaskCreated": "created",
        "HandoffOffered": "offered a handoff of",
        "HandoffAccepted": "accepted ownership of",
        "HandoffDeclined": "declined a handoff of",
        "InvitationSent": "sent an invitation on",
        "InvitationAccepted": "joined",
        "InvitationDeclined": "declined to join",
        "TaskCompleted": "completed",
        "TaskAbandoned": "abandoned",
        "CommentAdded": "commented on",
        "SharingPolicySet": "changed sharing for",
    }.get(event.kind, event.kind)
    return f"{event.actor} {verb} {title}"


class Outbox:
    """Delivery ledger plus transport; owns no engine state."""

    def __init__(self, transport: Callable[[OutboxMessage], None] | None = None):
        self.transport = transport if transport is not None else stdout_transport
        self.messages: list[OutboxMessage] = []  # full history, per-user order
        self._prompted: set[tuple[str, str]] = set()
        self._offer_keys: set[tuple[str, str, int]] = set()
        self._invitation_keys: set[tuple[str, str, int]] = set()
        self._fold_state: GraphState = EMPTY_STATE

    def undelivered(self) -> list[OutboxMessage]:
        return [m for m in self.messages if not m.delivered]

    def run(self, state: GraphState, events: Sequence[Event], now: datetime) -> list[OutboxMessage]:
        """Create messages due at `now` and attempt delivery; idempotent."""
        now = as_utc_seconds(now)
        created: list[OutboxMessage] = []

        for user_id in sorted(state.users):
            schedule = state.users[user_id].schedule
            if schedule is None or not schedule.times:
                continue
            due = latest_session_at_or_before(schedule, now)
            if due is None:
                continue
            key = (user_id, due.isoformat())
            if key in self._prompted:
                continue
            self._prompted.add(key)
            created.append(
                OutboxMessage(
                    user=user_id,
                    kind=MSG_SESSION_PROMPT,
                    body=f"engagement session scheduled for {due.strftime('%H:%M')}",
                    created_at=now,
                )
            )

        for task_id in sorted(state.tasks):
            task = state.tasks[task_id]
            offer = task.pending_handoff
            if offer is not None:
                key = (task_id, offer.to, offer.seq)
                if key not in self._offer_keys:
                    self._offer_keys.add(key)
                    created.append(
                        OutboxMessage(
                            user=offer.to,
                            kind=MSG_HANDOFF_OFFER,
                            body=f"{task.owner} offers you '{task.title}' ({task_id})",
                            created_at=now,
                        )
                    )
            for invitation in task.pending_invitations:
                key = (task_id, invitation.user, invitation.seq)
                if key not in self._invitation_keys:
                    self._invitation_keys.add(key)
                    created.append(
                        OutboxMessage(
                            user=invitation.user,
                            kind=MSG_INVITATION,
                            body=f"{task.owner} invites you to '{task.title}' ({task_id})",
                            created_at=now,
                        )
                    )

        for event in events[self._fold_state.cursor :]:
            self._fold_state = apply_event(self._fold_state, event)
            if event.task_id is None:
                continue
            audience = event_audience(event, self._fold_state)
            for user_id in sorted(audience):
                if user_id == event.actor:
                    continue
                created.append(
                    OutboxMessage(
                        user=user_id,
                        kind=MSG_WATCHED_UPDATE,
                        body=_describe(event, self._fold_state),
                        created_at=now,
                    )
                )

        self.messages.extend(created)
        self._deliver_pending()
        return created

    def _deliver_pending(self) -> None:
        blocked: set[str] = set()  # keep per-user order on failure
        for message in self.messages:
            if message.delivered or message.user in blocked:
                continue
            try:
                self.transport(message)
                message.delivered = True
            except DeliveryFailure as exc:
                logger.warning("delivery to %s failed, will retry: %s", message.user, exc)
                blocked.add(message.user)
