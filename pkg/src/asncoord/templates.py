"""Parametric plan templates: a line-oriented DSL, validation, instantiation.

A template names a plan fragment, declares the roles involved, and lists the
steps with their owning role and ordering constraints::

    template "Job search presentation"
    role Coach
    role Client
    step s1 "Draft presentation outline" owner=Client
    step s2 "Create presentation" owner=Client after=s1

Launching a template binds every role to a user and turns the fragment into
live tasks: one root plus one child per step, all owned by the launcher, with
a handoff offer to each step's bound user. Nobody is assigned work — they are
offered it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from typing import Mapping

from .model import Event, GraphState, as_utc_seconds
from .protocol import Rejection, allocate_task_ids

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*")


class TemplateError(Exception):
    """Base for template parse failures; carries the rule name and line."""

    def __init__(self, name: str, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.name = name
        self.line = line


class TemplateSyntaxError(TemplateError):
    def __init__(self, line: int, column: int, expected: str):
        super().__init__("SyntaxError", f"column {column}: expected {expected}", line)
        self.column = column
        self.expected = expected


@dataclass(frozen=True)
class Step:
    id: str
    title: str
    owner_role: str
    after: tuple[str, ...] = ()


@dataclass(frozen=True)
class Template:
    name: str
    roles: tuple[str, ...]
    steps: tuple[Step, ...]

    def step_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.steps)


@dataclass(frozen=True)
class Binding:
    """Role-name-to-user assignment chosen at launch time."""

    roles: Mapping[str, str]
    launcher: str


@dataclass(frozen=True)
class TemplateViolation:
    rule: str  # UnknownRole | UnknownStepRef | CyclicDependency | DuplicateStep | DuplicateRole
    subject: str
    detail: str = ""


class _LineScanner:
    """Single-line cursor with 1-based column error reporting."""

    def __init__(self, text: str, line_no: int):
        self.text = text
        self.pos = 0
        self.line_no = line_no

    def fail(self, expected: str) -> TemplateSyntaxError:
        return TemplateSyntaxError(self.line_no, self.pos + 1, expected)

    def skip_spaces(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_spaces()
        return self.pos >= len(self.text)

    def literal(self, token: str) -> None:
        if self.text[self.pos : self.pos + len(token)] != token:
            raise self.fail(token)
        self.pos += len(token)

    def ident(self, what: str, skip: bool = True) -> str:
        if skip:
            self.skip_spaces()
        match = IDENT_RE.match(self.text, self.pos)
        if match is None:
            raise self.fail(what)
        self.pos = match.end()
        return match.group(0)

    def quoted(self, what: str) -> str:
        self.skip_spaces()
        if self.pos >= len(self.text) or self.text[self.pos] != '"':
            raise self.fail(f'"{what}"')
        closing = self.text.find('"', self.pos + 1)
        if closing < 0:
            raise self.fail("closing quote")
        value = self.text[self.pos + 1 : closing]
        if not value:
            raise self.fail(f"non-empty {what}")
        self.pos = closing + 1
        return value

    def end(self) -> None:
        if not self.at_end():
            raise self.fail("end of line")


def _strip_comment(raw: str) -> str:
    """Remove a `#` comment, honoring quotes around titles."""
    in_quote = False
    for i, ch in enumerate(raw):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return raw[:i]
    return raw


def parse_template(text: str) -> Template:
    """Parse DSL text; raises TemplateError on malformed or duplicated lines."""
    name: str | None = None
    roles: list[str] = []
    steps: list[Step] = []
    seen_step = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw)
        if not stripped.strip():
            continue
        scanner = _LineScanner(stripped, line_no)
        if name is None:
            if scanner.ident("template") != "template":
                raise TemplateSyntaxError(line_no, 1, "template")
            name = scanner.quoted("template name")
            scanner.end()
            continue
        scanner.skip_spaces()
        declaration_col = scanner.pos + 1
        word = scanner.ident("role or step declaration")
        if word == "role":
            if seen_step:
                raise TemplateSyntaxError(line_no, declaration_col, "step (roles must precede steps)")
            role = scanner.ident("role name")
            scanner.end()
            if role in roles:
                raise TemplateError("DuplicateRole", f"role {role!r} declared twice", line_no)
            roles.append(role)
        elif word == "step":
            seen_step = True
            step_id = scanner.ident("step id")
            title = scanner.quoted("step title")
            scanner.skip_spaces()
            scanner.literal("owner=")
            owner_role = scanner.ident("role name", skip=False)
            after: list[str] = []
            if not scanner.at_end():
                scanner.literal("after=")
                after.append(scanner.ident("step id", skip=False))
                while scanner.pos < len(scanner.text) and scanner.text[scanner.pos] == ",":
                    scanner.pos += 1
                    after.append(scanner.ident("step id", skip=False))
            scanner.end()
            if any(s.id == step_id for s in steps):
                raise TemplateError("DuplicateStep", f"step {step_id!r} declared twice", line_no)
            steps.append(Step(id=step_id, title=title, owner_role=owner_role, after=tuple(after)))
        else:
            raise TemplateSyntaxError(line_no, declaration_col, "role or step declaration")

    if name is None:
        raise TemplateSyntaxError(1, 1, "template declaration")
    return Template(name=name, roles=tuple(roles), steps=tuple(steps))


def serialize_template(template: Template) -> str:
    """Canonical form: declarations only, one per line, sorted after-lists."""
    lines = [f'template "{template.name}"']
    lines.extend(f"role {role}" for role in template.roles)
    for step in template.steps:
        line = f'step {step.id} "{step.title}" owner={step.owner_role}'
        if step.after:
            line += " after=" + ",".join(sorted(step.after))
        lines.append(line)
    return "\n".join(lines) + "\n"


def validate_template(template: Template) -> list[TemplateViolation]:
    """Structural soundness check; empty list means launchable."""
    violations: list[TemplateViolation] = []
    seen_roles: set[str] = set()
    for role in template.roles:
        if role in seen_roles:
            violations.append(TemplateViolation("DuplicateRole", role))
        seen_roles.add(role)

    ids: set[str] = set()
    for step in template.steps:
        if step.id in ids:
            violations.append(TemplateViolation("DuplicateStep", step.id))
        ids.add(step.id)

    for step in template.steps:
        if step.owner_role not in seen_roles:
            violations.append(
                TemplateViolation("UnknownRole", step.id, step.owner_role)
            )
        for ref in step.after:
            if ref not in ids:
                violations.append(TemplateViolation("UnknownStepRef", step.id, ref))

    # Kahn's algorithm over after-edges; leftovers are on or behind a cycle.
    indegree = {s.id: 0 for s in template.steps}
    dependents: dict[str, list[str]] = {s.id: [] for s in template.steps}
    for step in template.steps:
        for ref in step.after:
            if ref in indegree and ref != step.id:
                indegree[step.id] += 1
                dependents[ref].append(step.id)
            elif ref == step.id:
                indegree[step.id] += 1  # self-loop: never becomes ready
    ready = [sid for sid, deg in indegree.items() if deg == 0]
    ordered = 0
    while ready:
        node = ready.pop()
        ordered += 1
        for dep in dependents[node]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                ready.append(dep)
    if ordered != len(indegree):
        stuck = sorted(sid for sid, deg in indegree.items() if deg > 0)
        violations.append(TemplateViolation("CyclicDependency", stuck[0], ",".join(stuck)))

    return violations


def instantiate(
    state: GraphState,
    known_users: frozenset[str] | set[str],
    template: Template,
    binding: Binding,
    now: datetime,
) -> list[Event]:
    """Turn a template into one atomic batch of events.

    The batch is a TemplateLaunched marker, a root task titled after the
    template, one child task per step (dependencies mapped to sibling task
    ids), and a handoff offer for every step bound to someone other than the
    launcher.
    """
    violations = validate_template(template)
    if violations:
        first = violations[0]
        raise Rejection("InvalidTemplate", f"{first.rule}: {first.subject}")
    missing = [role for role in template.roles if role not in binding.roles]
    if missing:
        raise Rejection("UnboundRole", ",".join(missing))
    if binding.launcher not in known_users:
        raise Rejection("UnknownUser", binding.launcher)
    for role in template.roles:
        if binding.roles[role] not in known_users:
            raise Rejection("UnknownUser", binding.roles[role])

    ids = allocate_task_ids(state, 1 + len(template.steps))
    root_id, step_ids = ids[0], ids[1:]
    id_of = dict(zip(template.step_ids(), step_ids))
    ts = as_utc_seconds(now)
    launcher = binding.launcher
    seq = state.cursor + 1

    events = [
        Event(
            seq=seq,
            ts=ts,
            actor=launcher,
            kind="TemplateLaunched",
            task_id=None,
            payload={
                "template": template.name,
                "binding": {role: binding.roles[role] for role in sorted(template.roles)},
                "root": root_id,
                "steps": {s.id: id_of[s.id] for s in template.steps},
            },
        )
    ]
    events.append(
        Event(
            seq=seq + 1,
            ts=ts,
            actor=launcher,
            kind="TaskCreated",
            task_id=root_id,
            payload={"title": template.name, "parent": None, "depends_on": []},
        )
    )
    offset = 2
    for step in template.steps:
        events.append(
            Event(
                seq=seq + offset,
                ts=ts,
                actor=launcher,
                kind="TaskCreated",
                task_id=id_of[step.id],
                payload={
                    "title": step.title,
                    "parent": root_id,
                    "depends_on": sorted(id_of[ref] for ref in step.after),
                },
            )
        )
        offset += 1
    for step in template.steps:
        assignee = binding.roles[step.owner_role]
        if assignee != launcher:
            events.append(
                Event(
                    seq=seq + offset,
                    ts=ts,
                    actor=launcher,
                    kind="HandoffOffered",
                    task_id=id_of[step.id],
                    payload={"to": assignee},
                )
            )
            offset += 1
    return events
