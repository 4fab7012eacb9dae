"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they print.
"""

from __future__ import annotations

import random
import time
from datetime import datetime, timedelta, timezone

import pytest
import requests

from asncoord.engine import Engine, FixedClock
from asncoord.fuzz import simulate
from asncoord.model import EngagementHistory, Schedule, replay, serialize_log, state_to_json
from asncoord.outbox import Outbox
from asncoord.prompter import next_session, recommend_schedule
from asncoord.scenario import run_script
from asncoord.service import ApiServer, ApiService
from asncoord.store import replay_with_snapshot
from asncoord.templates import instantiate  # noqa: F401  (surface exercised below)
from asncoord import templates

from conftest import T0, corpus_entries, data_text

FUZZ_SEEDS = range(20)
FUZZ_USERS = 5
FUZZ_COMMANDS = 2000


def report(criterion: str, ok: bool, detail: str = "") -> None:
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {verdict}: {criterion}{suffix}")


@pytest.fixture(scope="module")
def fuzz_runs():
    """The 20 seeded simulations, run once and timed."""
    started = time.perf_counter()
    runs = [simulate(FUZZ_USERS, FUZZ_COMMANDS, seed) for seed in FUZZ_SEEDS]
    elapsed = time.perf_counter() - started
    return runs, elapsed


def test_walkthrough_scenario_reconstruction():
    """Bundled scenario: schedule, handoff, breakdown, invitation, feed."""
    started = time.perf_counter()
    result = run_script(data_text("walkthrough.script"))
    elapsed = time.perf_counter() - started
    ok = result.ok and result.commands_run == 14 and elapsed < 1.0
    report(
        "scenario walkthrough reconstruction",
        ok,
        f"{result.checks_run} checks, {elapsed * 1000:.0f} ms",
    )
    assert result.failures == []
    assert result.commands_run == 14
    assert elapsed < 1.0


def test_invariant_fuzz(fuzz_runs):
    """20 seeds x 2000 commands: no invariant or authorization violations."""
    runs, elapsed = fuzz_runs
    invariant_violations = [v for report_, _ in runs for v in report_.invariant_violations]
    auth_violations = [v for report_, _ in runs for v in report_.authorization_violations]
    ok = not invariant_violations and not auth_violations and elapsed < 10.0
    report(
        "invariant fuzz (20 seeds x 2000 commands)",
        ok,
        f"{sum(r.accepted for r, _ in runs)} events, {elapsed:.1f} s",
    )
    assert invariant_violations == []
    assert auth_violations == []
    assert elapsed < 10.0


def test_replay_determinism(fuzz_runs):
    """Every fuzz log: two full replays and a snapshot-assisted replay agree
    bit for bit."""
    runs, _ = fuzz_runs
    checked = 0
    for report_, engine in runs:
        events = engine.events
        first = state_to_json(replay(events))
        second = state_to_json(replay(events))
        midpoint = replay(events[: len(events) // 2])
        assisted = state_to_json(replay_with_snapshot(events, midpoint))
        assert first == second == assisted, f"seed {report_.seed} diverged"
        checked += 1
    report("replay determinism with snapshots", checked == len(runs), f"{checked} logs")
    assert checked == len(runs)


def test_template_suite():
    """Corpus of 12 valid + 2 invalid templates: counting oracle, named
    rejections, parse/serialize idempotence."""
    entries = corpus_entries()
    valid = [(n, t) for n, t in entries if not n.startswith("bad_")]
    invalid = [(n, t) for n, t in entries if n.startswith("bad_")]
    assert len(valid) >= 10
    assert any(n == "job_search.tpl" for n, _ in valid)

    users = ["stan", "alex", "jennifer"]
    launches = 0
    for name, text in valid:
        template = templates.parse_template(text)
        assert templates.validate_template(template) == []

        once = templates.serialize_template(template)
        assert templates.serialize_template(templates.parse_template(once)) == once

        engine = Engine(clock=FixedClock(T0))
        for user in users:
            engine.register_user(user)
        binding = {role: users[i % 3] for i, role in enumerate(template.roles)}
        events = engine.launch_template("stan", template, binding)
        created = [e for e in events if e.kind == "TaskCreated"]
        offered = [e for e in events if e.kind == "HandoffOffered"]
        expected_offers = sum(1 for s in template.steps if binding[s.owner_role] != "stan")
        assert len(created) == len(template.steps) + 1, name
        assert len(offered) == expected_offers, name
        launches += 1

    names = {}
    for name, text in invalid:
        template = templates.parse_template(text)
        violations = templates.validate_template(template)
        assert violations, name
        names[name] = violations[0].rule
    assert names["bad_cycle.tpl"] == "CyclicDependency"
    assert names["bad_role.tpl"] == "UnknownRole"

    report(
        "template suite (parse/validate/instantiate corpus)",
        True,
        f"{launches} launched, {len(invalid)} rejected",
    )


def test_scheduler_oracle():
    """recommend_schedule equals brute force on 100 random histories;
    next_session behaves on 1000 random schedule/instant pairs."""
    rng = random.Random(1234)

    def oracle(history: EngagementHistory) -> list[int]:
        remaining = list(range(48))
        ranked: list[int] = []

        def score(slot: int) -> float:
            sent, opened, resolved = (
                history.sent[slot],
                history.opened[slot],
                history.resolved[slot],
            )
            return ((opened + 1) / (sent + 2)) * (1 + resolved / (opened + 1))

        while remaining:
            best = remaining[0]
            for slot in remaining[1:]:
                if score(slot) > score(best):
                    best = slot
            ranked.append(best)
            remaining.remove(best)
        return ranked

    for _ in range(100):
        sent = [0.0] * 48
        opened = [0.0] * 48
        resolved = [0.0] * 48
        for slot in rng.sample(range(48), k=rng.randint(0, 20)):
            sent[slot] = round(rng.uniform(0, 40), 3)
            opened[slot] = round(rng.uniform(0, sent[slot]), 3)
            resolved[slot] = round(rng.uniform(0, 30), 3)
        history = EngagementHistory(sent=tuple(sent), opened=tuple(opened), resolved=tuple(resolved))
        k = rng.randint(1, 48)
        assert recommend_schedule(history, k) == oracle(history)[:k]

    for _ in range(1000):
        count = rng.randint(0, 5)
        times = sorted({f"{rng.randrange(24):02d}:{rng.randrange(60):02d}" for _ in range(count)})
        offset = 15 * rng.randrange(-56, 57)
        sign = "+" if offset >= 0 else "-"
        tz = f"{sign}{abs(offset) // 60:02d}:{abs(offset) % 60:02d}"
        schedule = Schedule(times=tuple(times), tz=tz)
        now = datetime(2025, 1, 1, tzinfo=timezone.utc) + timedelta(
            minutes=rng.randrange(0, 365 * 24 * 60)
        )
        first = next_session(schedule, now)
        if not times:
            assert first is None
            continue
        assert first > now
        local = first.astimezone(schedule.tzinfo())
        assert f"{local.hour:02d}:{local.minute:02d}" in schedule.times
        assert next_session(schedule, first) > first

    report("scheduler oracle equivalence", True, "100 histories, 1000 schedule pairs")


def _drive_walkthrough_direct() -> Engine:
    engine = Engine(clock=FixedClock(T0, timedelta(seconds=1)))
    for user in ("stan", "alex", "jennifer"):
        engine.register_user(user)
    engine.set_schedule("alex", ["11:00", "13:00", "18:00"])
    engine.create_task("stan", "Create presentation")  # t1
    engine.offer_handoff("stan", "t1", "alex")
    engine.respond_handoff("alex", "t1", "accept")
    engine.create_task("alex", "Draft slides", "t1")  # t2
    engine.create_task("alex", "Review slides", "t1", ["t2"])  # t3
    engine.create_task("alex", "Deliver presentation", "t1", ["t3"])  # t4
    engine.invite_participant("alex", "t3", "jennifer")
    engine.respond_invitation("jennifer", "t3", "accept")
    engine.complete_task("alex", "t2")
    engine.add_comment("jennifer", "t3", "Slide 3 is too dense - split it.")
    engine.complete_task("alex", "t3")
    engine.complete_task("alex", "t4")
    engine.complete_task("alex", "t1")
    return engine


def _drive_walkthrough_http() -> Engine:
    engine = Engine(clock=FixedClock(T0, timedelta(seconds=1)))
    service = ApiService(engine, outbox=Outbox(transport=lambda m: None))
    server = ApiServer(service)
    server.start()
    try:
        session = requests.Session()
        tokens = {
            user: session.post(f"{server.url}/users", json={"user": user}).json()["token"]
            for user in ("stan", "alex", "jennifer")
        }

        def call(method, user, path, body=None):
            response = session.request(
                method,
                server.url + path,
                json=body,
                headers={"Authorization": f"Bearer {tokens[user]}"},
            )
            assert response.status_code in (200, 201), (path, response.status_code, response.text)
            return response.json()

        call("PUT", "alex", "/users/me/schedule", {"times": ["11:00", "13:00", "18:00"]})
        call("POST", "stan", "/tasks", {"title": "Create presentation"})
        call("POST", "stan", "/tasks/t1/handoff", {"to": "alex"})
        call("POST", "alex", "/tasks/t1/handoff/response", {"decision": "accept"})
        call("POST", "alex", "/tasks", {"title": "Draft slides", "parent": "t1"})
        call("POST", "alex", "/tasks", {"title": "Review slides", "parent": "t1", "depends_on": ["t2"]})
        call("POST", "alex", "/tasks", {"title": "Deliver presentation", "parent": "t1", "depends_on": ["t3"]})
        call("POST", "alex", "/tasks/t3/invitations", {"user": "jennifer"})
        call("POST", "jennifer", "/tasks/t3/invitations/response", {"decision": "accept"})
        call("POST", "alex", "/tasks/t2/complete")
        call("POST", "jennifer", "/tasks/t3/comments", {"text": "Slide 3 is too dense - split it."})
        call("POST", "alex", "/tasks/t3/complete")
        call("POST", "alex", "/tasks/t4/complete")
        call("POST", "alex", "/tasks/t1/complete")
        session.close()
    finally:
        server.stop()
    return engine


def test_api_equivalence():
    """The walkthrough over HTTP writes the same event log, byte for byte,
    as direct protocol commands under the same fixed clock."""
    direct = serialize_log(_drive_walkthrough_direct().events)
    via_http = serialize_log(_drive_walkthrough_http().events)
    ok = direct == via_http
    report("API/engine log equivalence", ok, f"{direct.count(chr(10))} events")
    assert ok
    assert direct.count("\n") == 14
