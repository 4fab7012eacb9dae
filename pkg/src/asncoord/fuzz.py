"""Seeded protocol fuzzing: random agents issue valid and invalid commands.

Every accepted event is followed by a full invariant check of the folded
state; every rejection is checked to have left the state untouched; and
deliberately unauthorized commands (non-owner mutations) are checked to be
rejected. A non-empty violation list is a build failure, not a test skip.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .engine import Engine, FixedClock
from .model import SharingPolicy, check_invariants
from .protocol import Rejection
from .templates import Step, Template

FUZZ_EPOCH = datetime(2024, 3, 4, 8, 0, 0, tzinfo=timezone.utc)

_OWNER_VERBS = ("offer", "invite", "complete", "abandon", "share", "subtask")


@dataclass
class SimulationReport:
    users: int
    commands: int
    seed: int
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    events: int = 0
    tasks: int = 0
    invariant_violations: list[str] = field(default_factory=list)
    authorization_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invariant_violations and not self.authorization_violations

    def to_dict(self) -> dict:
        return {
            "users": self.users,
            "commands": self.commands,
            "seed": self.seed,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "events": self.events,
            "tasks": self.tasks,
            "invariant_violations": list(self.invariant_violations),
            "authorization_violations": list(self.authorization_violations),
        }


class _Fuzzer:
    def __init__(self, users: int, commands: int, seed: int):
        self.rng = random.Random(seed)
        self.engine = Engine(clock=FixedClock(FUZZ_EPOCH))
        self.user_ids = [f"u{i}" for i in range(1, users + 1)]
        for uid in self.user_ids:
            self.engine.register_user(uid)
        self.report = SimulationReport(users=users, commands=commands, seed=seed)
        self.counter = 0

    def run(self) -> SimulationReport:
        for _ in range(self.report.commands):
            self.step()
        self.report.events = self.engine.state.cursor
        self.report.tasks = len(self.engine.state.tasks)
        return self.report

    # -- helpers -----------------------------------------------------------

    def user(self) -> str:
        return self.rng.choice(self.user_ids)

    def any_task(self):
        tasks = self.engine.state.tasks
        if not tasks:
            return None
        return tasks[self.rng.choice(sorted(tasks))]

    def active_task(self):
        active = [t for t in self.engine.state.tasks.values() if t.is_active]
        if not active:
            return None
        return self.rng.choice(sorted(active, key=lambda t: t.task_id))

    def fresh_title(self) -> str:
        self.counter += 1
        return f"Task {self.counter}"

    # -- one fuzz step -----------------------------------------------------

    def step(self) -> None:
        roll = self.rng.random()
        if roll < 0.12:
            verb = "create"
        elif roll < 0.20:
            verb = "subtask"
        elif roll < 0.34:
            verb = "offer"
        elif roll < 0.46:
            verb = "respond_handoff"
        elif roll < 0.56:
            verb = "invite"
        elif roll < 0.64:
            verb = "respond_invitation"
        elif roll < 0.76:
            verb = "complete"
        elif roll < 0.81:
            verb = "abandon"
        elif roll < 0.88:
            verb = "comment"
        elif roll < 0.93:
            verb = "share"
        elif roll < 0.96:
            verb = "schedule"
        elif roll < 0.98:
            verb = "engage"
        else:
            verb = "template"
        getattr(self, f"fuzz_{verb}")()

    def attempt(self, forged: bool, thunk) -> None:
        """Run a command; record outcome; verify rejection purity and, for
        forged (non-owner) commands, that the engine refused them."""
        state_before = self.engine.state
        events_before = self.engine.state.cursor
        try:
            thunk()
        except Rejection as exc:
            self.report.rejected[exc.name] = self.report.rejected.get(exc.name, 0) + 1
            if self.engine.state is not state_before or self.engine.state.cursor != events_before:
                self.report.invariant_violations.append(
                    f"rejection {exc.name} mutated state at cursor {events_before}"
                )
            return
        if forged:
            self.report.authorization_violations.append(
                f"non-owner command accepted at seq {self.engine.state.cursor}"
            )
        self.report.accepted += 1
        violations = check_invariants(self.engine.state)
        if violations:
            seq = self.engine.state.cursor
            for v in violations:
                self.report.invariant_violations.append(f"seq {seq}: {v.task_id} {v.rule}")

    def forge_actor(self, owner: str) -> tuple[str, bool]:
        """Usually the owner; sometimes deliberately someone else."""
        if self.rng.random() < 0.25:
            others = [u for u in self.user_ids if u != owner]
            if others:
                return self.rng.choice(others), True
        return owner, False

    # -- verbs ---------------------------------------------------------------

    def fuzz_create(self) -> None:
        if self.rng.random() < 0.05:
            self.attempt(False, lambda: self.engine.create_task(self.user(), ""))
        else:
            self.attempt(False, lambda: self.engine.create_task(self.user(), self.fresh_title()))

    def fuzz_subtask(self) -> None:
        parent = self.any_task()
        if parent is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(parent.owner)
        deps: list[str] = []
        siblings = [t.task_id for t in self.engine.state.tasks.values() if t.parent == parent.task_id]
        if siblings and self.rng.random() < 0.5:
            deps = self.rng.sample(sorted(siblings), k=min(len(siblings), self.rng.randint(1, 2)))
        roll = self.rng.random()
        if roll < 0.05:
            deps = [f"t{self.rng.randint(900, 999)}"]  # likely unknown
        elif roll < 0.1:
            deps = [parent.task_id]  # never a sibling of its own child
        self.attempt(
            forged,
            lambda: self.engine.create_task(actor, self.fresh_title(), parent.task_id, deps),
        )

    def fuzz_offer(self) -> None:
        task = self.any_task()
        if task is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(task.owner)
        to = self.rng.choice(self.user_ids + ["ghost"]) if self.rng.random() < 0.1 else self.user()
        self.attempt(forged, lambda: self.engine.offer_handoff(actor, task.task_id, to))

    def fuzz_respond_handoff(self) -> None:
        pending = [t for t in self.engine.state.tasks.values() if t.pending_handoffs]
        decision = self.rng.choice(["accept", "decline"])
        if pending and self.rng.random() > 0.1:
            task = self.rng.choice(sorted(pending, key=lambda t: t.task_id))
            offeree = task.pending_handoff.to
            actor = offeree if self.rng.random() > 0.2 else self.user()
            self.attempt(False, lambda: self.engine.respond_handoff(actor, task.task_id, decision))
        else:
            task = self.any_task()
            if task is None:
                return self.fuzz_create()
            self.attempt(False, lambda: self.engine.respond_handoff(self.user(), task.task_id, decision))

    def fuzz_invite(self) -> None:
        task = self.any_task()
        if task is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(task.owner)
        invitee = self.user()
        self.attempt(forged, lambda: self.engine.invite_participant(actor, task.task_id, invitee))

    def fuzz_respond_invitation(self) -> None:
        invited = [t for t in self.engine.state.tasks.values() if t.pending_invitations]
        decision = self.rng.choice(["accept", "decline"])
        if invited and self.rng.random() > 0.1:
            task = self.rng.choice(sorted(invited, key=lambda t: t.task_id))
            invitation = self.rng.choice(sorted(task.pending_invitations, key=lambda i: i.seq))
            actor = invitation.user if self.rng.random() > 0.2 else self.user()
            self.attempt(False, lambda: self.engine.respond_invitation(actor, task.task_id, decision))
        else:
            task = self.any_task()
            if task is None:
                return self.fuzz_create()
            self.attempt(False, lambda: self.engine.respond_invitation(self.user(), task.task_id, decision))

    def fuzz_complete(self) -> None:
        task = self.active_task() if self.rng.random() > 0.15 else self.any_task()
        if task is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(task.owner)
        self.attempt(forged, lambda: self.engine.complete_task(actor, task.task_id))

    def fuzz_abandon(self) -> None:
        task = self.any_task()
        if task is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(task.owner)
        self.attempt(forged, lambda: self.engine.abandon_task(actor, task.task_id))

    def fuzz_comment(self) -> None:
        task = self.any_task()
        if task is None:
            return self.fuzz_create()
        actor = self.user()
        text = "" if self.rng.random() < 0.05 else f"note {self.rng.randint(0, 999)}"
        self.attempt(False, lambda: self.engine.add_comment(actor, task.task_id, text))

    def fuzz_share(self) -> None:
        task = self.any_task()
        if task is None:
            return self.fuzz_create()
        actor, forged = self.forge_actor(task.owner)
        participants = sorted(task.participants)
        kwargs = {}
        for kind in ("status_change", "completion", "comment"):
            roll = self.rng.random()
            if roll < 0.5:
                continue  # leave at all-participants
            if roll < 0.8 and participants:
                kwargs[kind] = frozenset(
                    self.rng.sample(participants, k=self.rng.randint(0, len(participants)))
                )
            elif roll < 0.85:
                kwargs[kind] = frozenset({self.user()})  # may reference a stranger
            else:
                kwargs[kind] = frozenset()
        self.attempt(
            forged,
            lambda: self.engine.set_sharing_policy(actor, task.task_id, SharingPolicy(**kwargs)),
        )

    def fuzz_schedule(self) -> None:
        count = self.rng.randint(0, 4)
        times = sorted(
            {f"{self.rng.randint(0, 23):02d}:{self.rng.choice(['00', '15', '30', '45'])}" for _ in range(count)}
        )
        if self.rng.random() < 0.05:
            times = ["25:61"]
        self.attempt(False, lambda: self.engine.set_schedule(self.user(), times))

    def fuzz_engage(self) -> None:
        slot = self.rng.randint(0, 47) if self.rng.random() > 0.05 else 99
        opened = self.rng.random() < 0.7
        resolved = self.rng.randint(0, 3) if opened else (0 if self.rng.random() > 0.1 else 2)
        self.attempt(False, lambda: self.engine.record_engagement(self.user(), slot, opened, resolved))

    def fuzz_template(self) -> None:
        steps = []
        n = self.rng.randint(1, 3)
        for i in range(1, n + 1):
            after = (f"s{i - 1}",) if i > 1 and self.rng.random() < 0.7 else ()
            steps.append(Step(id=f"s{i}", title=f"Step {i}", owner_role=f"R{i}", after=after))
        template = Template(
            name=f"Plan {self.rng.randint(0, 99)}",
            roles=tuple(f"R{i}" for i in range(1, n + 1)),
            steps=tuple(steps),
        )
        binding = {f"R{i}": self.user() for i in range(1, n + 1)}
        self.attempt(False, lambda: self.engine.launch_template(self.user(), template, binding))


def simulate(users: int, commands: int, seed: int) -> tuple[SimulationReport, Engine]:
    """Run one seeded simulation; returns the report and the final engine."""
    if users < 1 or commands < 0:
        raise ValueError("need users >= 1 and commands >= 0")
    fuzzer = _Fuzzer(users, commands, seed)
    report = fuzzer.run()
    return report, fuzzer.engine
