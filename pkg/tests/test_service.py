"""HTTP routes, auth, error mapping, and the notification outbox."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
import requests

from asncoord.engine import Engine, FixedClock
from asncoord.outbox import DeliveryFailure, Outbox, OutboxMessage
from asncoord.service import ApiServer, ApiService

from conftest import T0, data_text


class Client:
    """requests wrapper bound to one bearer token."""

    def __init__(self, base: str, session: requests.Session, token: str | None = None):
        self.base = base
        self.session = session
        self.token = token

    def _headers(self):
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def get(self, path, **kwargs):
        return self.session.get(self.base + path, headers=self._headers(), **kwargs)

    def post(self, path, json=None):
        return self.session.post(self.base + path, json=json, headers=self._headers())

    def put(self, path, json=None):
        return self.session.put(self.base + path, json=json, headers=self._headers())


@pytest.fixture
def server():
    engine = Engine(clock=FixedClock(T0, timedelta(seconds=1)))
    service = ApiService(engine, outbox=Outbox(transport=lambda m: None))
    api = ApiServer(service)
    api.start()
    yield api
    api.stop()


@pytest.fixture
def api(server):
    session = requests.Session()

    def client_for(user: str) -> Client:
        response = session.post(f"{server.url}/users", json={"user": user})
        assert response.status_code == 201
        return Client(server.url, session, response.json()["token"])

    yield type("Api", (), {"user": staticmethod(client_for), "url": server.url, "session": session})
    session.close()


class TestRoutes:
    def test_create_task(self, api):
        stan = api.user("stan")
        response = stan.post("/tasks", json={"title": "Create presentation"})
        assert response.status_code == 201
        body = response.json()
        assert body["task_id"] == "t1"
        assert body["event"]["kind"] == "TaskCreated"

    def test_handoff_flow(self, api):
        stan, alex = api.user("stan"), api.user("alex")
        tid = stan.post("/tasks", json={"title": "Goal"}).json()["task_id"]
        assert stan.post(f"/tasks/{tid}/handoff", json={"to": "alex"}).status_code == 200
        agenda = alex.get("/users/me/agenda").json()["items"]
        assert [(i["kind"], i["task_id"]) for i in agenda] == [("pending_handoff", tid)]
        response = alex.post(f"/tasks/{tid}/handoff/response", json={"decision": "accept"})
        assert response.status_code == 200
        task = alex.get(f"/tasks/{tid}").json()["task"]
        assert task["owner"] == "alex"
        assert task["participants"] == ["stan"]

    def test_protocol_rejection_passes_name_through(self, api):
        stan, alex = api.user("stan"), api.user("alex")
        tid = stan.post("/tasks", json={"title": "Goal"}).json()["task_id"]
        response = alex.post(f"/tasks/{tid}/complete")
        assert response.status_code == 409
        assert response.json()["error"] == "NotOwner"

    def test_auth_required(self, api):
        anon = Client(api.url, api.session)
        assert anon.post("/tasks", json={"title": "x"}).status_code == 401
        assert anon.get("/users/me/agenda").status_code == 401
        forged = Client(api.url, api.session, token="deadbeef")
        assert forged.get("/users/me/agenda").status_code == 401

    def test_malformed_requests(self, api):
        stan = api.user("stan")
        response = api.session.post(
            f"{api.url}/tasks",
            data=b"{not json",
            headers={"Authorization": f"Bearer {stan.token}", "Content-Type": "application/json"},
        )
        assert response.status_code == 400
        assert stan.post("/tasks", json={"nope": 1}).status_code == 400
        assert stan.post("/tasks", json={"title": 4}).status_code == 400
        response = stan.post("/tasks/t9/handoff/response", json={"decision": "maybe"})
        assert response.status_code == 400

    def test_unknown_route_and_method(self, api):
        stan = api.user("stan")
        assert stan.get("/nope").status_code == 404
        assert api.session.delete(f"{api.url}/tasks").status_code in (404, 405, 501)

    def test_schedule_round_trip(self, api):
        alex = api.user("alex")
        response = alex.put("/users/me/schedule", json={"times": ["18:00", "11:00", "13:00"]})
        assert response.status_code == 200
        stored = alex.get("/users/me/schedule").json()
        assert stored["times"] == ["11:00", "13:00", "18:00"]
        assert alex.put("/users/me/schedule", json={"times": ["25:00"]}).status_code == 409

    def test_comments_sharing_and_updates(self, api):
        alex, jen = api.user("alex"), api.user("jennifer")
        tid = alex.post("/tasks", json={"title": "Review"}).json()["task_id"]
        alex.post(f"/tasks/{tid}/invitations", json={"user": "jennifer"})
        jen.post(f"/tasks/{tid}/invitations/response", json={"decision": "accept"})
        assert jen.post(f"/tasks/{tid}/comments", json={"text": "hi"}).status_code == 200
        response = alex.put(f"/tasks/{tid}/sharing", json={"completion": []})
        assert response.status_code == 200
        alex.post(f"/tasks/{tid}/complete")
        seqs = [e["kind"] for e in jen.get("/users/me/updates?since=0").json()["events"]]
        assert "CommentAdded" in seqs
        assert "TaskCompleted" not in seqs  # revoked before it happened

    def test_updates_pagination(self, api):
        stan = api.user("stan")
        for i in range(205):
            stan.post("/tasks", json={"title": f"Task {i}"})
        first = stan.get("/users/me/updates?since=0").json()
        assert len(first["events"]) == 200
        assert first["next"] == first["events"][-1]["seq"]
        rest = stan.get(f"/users/me/updates?since={first['next']}").json()
        assert len(rest["events"]) == 5
        assert rest["next"] is None

    def test_engagement_route(self, api):
        alex = api.user("alex")
        response = alex.post("/engagement", json={"slot": 36, "opened": True, "resolved": 2})
        assert response.status_code == 200
        assert alex.post("/engagement", json={"slot": 99, "opened": True}).status_code == 409

    def test_template_parse_and_launch(self, api):
        stan = api.user("stan")
        api.user("alex")
        api.user("jennifer")
        text = data_text("templates", "job_search.tpl")
        parsed = stan.post("/templates/parse", json={"text": text}).json()
        assert parsed["template"]["name"] == "Job search presentation"
        assert parsed["violations"] == []
        bad = stan.post("/templates/parse", json={"text": 'template "T"\nstep s1 x\n'})
        assert bad.status_code == 400
        assert bad.json()["error"] == "SyntaxError"
        launch = stan.post(
            "/templates/launch",
            json={"text": text, "binding": {"Coach": "stan", "Client": "alex", "Reviewer": "jennifer"}},
        )
        assert launch.status_code == 201
        body = launch.json()
        assert len([e for e in body["events"] if e["kind"] == "TaskCreated"]) == 5
        missing = stan.post("/templates/launch", json={"text": text, "binding": {"Coach": "stan"}})
        assert missing.status_code == 409
        assert missing.json()["error"] == "UnboundRole"

    def test_task_list_visibility(self, api):
        stan, alex = api.user("stan"), api.user("alex")
        stan.post("/tasks", json={"title": "Mine"})
        listed = alex.get("/tasks").json()["tasks"]
        assert listed == []
        stan.post("/tasks/t1/handoff", json={"to": "alex"})
        listed = alex.get("/tasks").json()["tasks"]
        assert [t["task_id"] for t in listed] == ["t1"]
        assert alex.get("/tasks/t1").status_code == 200

    def test_token_regeneration_invalidates_old(self, api, server):
        session = requests.Session()
        first = session.post(f"{server.url}/users", json={"user": "stan"}).json()["token"]
        second = session.post(f"{server.url}/users", json={"user": "stan"}).json()["token"]
        assert first != second
        old = Client(server.url, session, first)
        new = Client(server.url, session, second)
        assert old.get("/users/me/agenda").status_code == 401
        assert new.get("/users/me/agenda").status_code == 200
        session.close()

    def test_token_never_in_event_log(self, api, server):
        stan = api.user("stan")
        stan.post("/tasks", json={"title": "Goal"})
        from asncoord.model import serialize_log

        text = serialize_log(server.service.engine.events)
        assert stan.token not in text


class TestOutbox:
    def engine_with_schedule(self):
        engine = Engine(clock=FixedClock(T0, timedelta(seconds=1)))
        engine.register_user("alex")
        engine.register_user("stan")
        engine.set_schedule("alex", ["18:00"])
        return engine

    def test_session_prompt_when_due(self):
        engine = self.engine_with_schedule()
        outbox = Outbox(transport=lambda m: None)
        six_pm = datetime(2025, 1, 6, 18, 0, tzinfo=timezone.utc)
        messages = outbox.run(engine.state, engine.events, six_pm)
        prompts = [m for m in messages if m.kind == "session_prompt"]
        assert [m.user for m in prompts] == ["alex"]
        assert prompts[0].delivered

    def test_no_duplicate_prompt_same_instant(self):
        engine = self.engine_with_schedule()
        outbox = Outbox(transport=lambda m: None)
        six_pm = datetime(2025, 1, 6, 18, 0, tzinfo=timezone.utc)
        outbox.run(engine.state, engine.events, six_pm)
        assert outbox.run(engine.state, engine.events, six_pm) == []
        # the next day's occurrence is a fresh prompt
        next_day = six_pm + timedelta(days=1)
        assert [m.kind for m in outbox.run(engine.state, engine.events, next_day)] == [
            "session_prompt"
        ]

    def test_nothing_due_nothing_sent(self):
        engine = Engine(clock=FixedClock(T0))
        outbox = Outbox(transport=lambda m: None)
        assert outbox.run(engine.state, engine.events, T0) == []

    def test_offer_and_invitation_messages(self):
        engine = self.engine_with_schedule()
        engine.create_task("stan", "Goal")
        engine.offer_handoff("stan", "t1", "alex")
        outbox = Outbox(transport=lambda m: None)
        early = datetime(2025, 1, 6, 9, 30, tzinfo=timezone.utc)
        messages = outbox.run(engine.state, engine.events, early)
        kinds = {(m.kind, m.user) for m in messages}
        assert ("handoff_offer", "alex") in kinds
        # second run adds nothing for the same pending offer
        assert not [m for m in outbox.run(engine.state, engine.events, early) if m.kind == "handoff_offer"]

    def test_watched_update_messages_reach_participants(self):
        engine = self.engine_with_schedule()
        engine.create_task("alex", "Review")
        engine.invite_participant("alex", "t1", "stan")
        engine.respond_invitation("stan", "t1", "accept")
        outbox = Outbox(transport=lambda m: None)
        now = datetime(2025, 1, 6, 9, 30, tzinfo=timezone.utc)
        outbox.run(engine.state, engine.events, now)
        engine.complete_task("alex", "t1")
        messages = outbox.run(engine.state, engine.events, now + timedelta(seconds=5))
        assert any(m.kind == "watched_update" and m.user == "stan" for m in messages)

    def test_failed_delivery_retried_in_order(self):
        engine = self.engine_with_schedule()
        attempts: list[str] = []
        broken = {"on": True}

        def transport(message: OutboxMessage) -> None:
            attempts.append(message.body)
            if broken["on"]:
                raise DeliveryFailure("offline")

        outbox = Outbox(transport=transport)
        six_pm = datetime(2025, 1, 6, 18, 0, tzinfo=timezone.utc)
        messages = outbox.run(engine.state, engine.events, six_pm)
        assert messages and not messages[0].delivered
        assert outbox.undelivered()
        broken["on"] = False
        outbox.run(engine.state, engine.events, six_pm)
        assert not outbox.undelivered()
        assert len(attempts) == 2  # one failure, one successful retry
