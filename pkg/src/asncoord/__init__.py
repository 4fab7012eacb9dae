"""Coordination engine for active support networks.

An activity graph of tasks coordinated through explicit offers and
acceptances, a personal prompter that schedules short engagement sessions,
and a library of parametric plan templates — all derived from an append-only
event log.
"""

from .engine import Engine, FixedClock, SystemClock
from .model import (
    Event,
    GraphState,
    Schedule,
    SharingPolicy,
    Task,
    apply_event,
    check_invariants,
    replay,
    subtask_closure,
)
from .protocol import Rejection, visible_updates
from .prompter import AgendaItem, build_agenda, next_session, recommend_schedule
from .templates import Binding, Template, parse_template, serialize_template, validate_template

__all__ = [
    "AgendaItem",
    "Binding",
    "Engine",
    "Event",
    "FixedClock",
    "GraphState",
    "Rejection",
    "Schedule",
    "SharingPolicy",
    "SystemClock",
    "Task",
    "Template",
    "apply_event",
    "build_agenda",
    "check_invariants",
    "next_session",
    "parse_template",
    "recommend_schedule",
    "replay",
    "serialize_template",
    "subtask_closure",
    "validate_template",
    "visible_updates",
]
