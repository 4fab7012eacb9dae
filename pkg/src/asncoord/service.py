"""HTTP/JSON front door mapping API routes onto protocol commands.

Plain stdlib server: a threading HTTP server whose mutating routes funnel
into the engine's single serialization point. Protocol rejections surface as
409 with the precondition name; malformed requests as 400; missing or bad
bearer tokens as 401.
"""

from __future__ import annotations

import json
import logging
import re
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable
from urllib.parse import parse_qs, urlsplit

logger = logging.getLogger(__name__)

from . import prompter, templates
from .engine import Engine
from .model import Event, GraphState, SharingPolicy, UPDATE_KINDS, ALL_PARTICIPANTS, event_to_line
from .model import _task_to_dict  # canonical task JSON
from .outbox import Outbox
from .protocol import Rejection
from .templates import TemplateError, TemplateSyntaxError

UPDATES_PAGE_SIZE = 200


class BadRequest(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


def event_to_dict(event: Event) -> dict[str, Any]:
    return json.loads(event_to_line(event))


class TokenStore:
    """Bearer token per user; regenerating invalidates the old token."""

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._by_user: dict[str, str] = {}
        self._by_token: dict[str, str] = {}
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            stored = json.loads(self._path.read_text("utf-8"))
            for user, token in stored.items():
                self._by_user[user] = token
                self._by_token[token] = user

    def issue(self, user: str) -> str:
        with self._lock:
            old = self._by_user.get(user)
            if old is not None:
                del self._by_token[old]
            token = secrets.token_hex(16)
            self._by_user[user] = token
            self._by_token[token] = user
            if self._path is not None:
                self._path.write_text(json.dumps(self._by_user, indent=0), "utf-8")
            return token

    def user_for(self, token: str) -> str | None:
        return self._by_token.get(token)

    @property
    def users(self) -> list[str]:
        return sorted(self._by_user)


def _body_field(body: dict, key: str, kind: type, required: bool = True, default=None):
    if key not in body:
        if required:
            raise BadRequest(f"missing field {key!r}")
        return default
    value = body[key]
    if kind is int and isinstance(value, bool):
        raise BadRequest(f"field {key!r} must be an integer")
    if not isinstance(value, kind):
        raise BadRequest(f"field {key!r} must be {kind.__name__}")
    return value


def _parse_policy(body: dict) -> SharingPolicy:
    kwargs: dict[str, frozenset[str] | None] = {}
    for kind in UPDATE_KINDS:
        if kind not in body:
            continue
        rule = body[kind]
        if rule == ALL_PARTICIPANTS:
            kwargs[kind] = None
        elif isinstance(rule, list) and all(isinstance(u, str) for u in rule):
            kwargs[kind] = frozenset(rule)
        else:
            raise BadRequest(f"sharing rule {kind!r} must be 'all' or a list of users")
    return SharingPolicy(**kwargs)


class ApiService:
    """Routing core, independent of the HTTP plumbing (testable directly)."""

    def __init__(self, engine: Engine, tokens: TokenStore | None = None, outbox: Outbox | None = None):
        self.engine = engine
        self.tokens = tokens if tokens is not None else TokenStore()
        self.outbox = outbox
        for user in self.tokens.users:
            engine.register_user(user)
        self._routes: list[tuple[str, re.Pattern, bool, Callable]] = [
            ("GET", re.compile(r"^/health$"), False, self._health),
            ("POST", re.compile(r"^/users$"), False, self._create_user),
            ("PUT", re.compile(r"^/users/me/schedule$"), True, self._set_schedule),
            ("GET", re.compile(r"^/users/me/schedule$"), True, self._get_schedule),
            ("GET", re.compile(r"^/users/me/agenda$"), True, self._agenda),
            ("GET", re.compile(r"^/users/me/updates$"), True, self._updates),
            ("POST", re.compile(r"^/tasks$"), True, self._create_task),
            ("GET", re.compile(r"^/tasks$"), True, self._list_tasks),
            ("GET", re.compile(r"^/tasks/([^/]+)$"), True, self._get_task),
            ("POST", re.compile(r"^/tasks/([^/]+)/handoff$"), True, self._offer_handoff),
            ("POST", re.compile(r"^/tasks/([^/]+)/handoff/response$"), True, self._respond_handoff),
            ("POST", re.compile(r"^/tasks/([^/]+)/invitations$"), True, self._invite),
            ("POST", re.compile(r"^/tasks/([^/]+)/invitations/response$"), True, self._respond_invitation),
            ("POST", re.compile(r"^/tasks/([^/]+)/complete$"), True, self._complete),
            ("POST", re.compile(r"^/tasks/([^/]+)/abandon$"), True, self._abandon),
            ("POST", re.compile(r"^/tasks/([^/]+)/comments$"), True, self._comment),
            ("PUT", re.compile(r"^/tasks/([^/]+)/sharing$"), True, self._set_sharing),
            ("POST", re.compile(r"^/templates/parse$"), False, self._parse_template),
            ("POST", re.compile(r"^/templates/launch$"), True, self._launch_template),
            ("POST", re.compile(r"^/engagement$"), True, self._engagement),
        ]

    def handle(self, method: str, path: str, headers: dict[str, str], raw_body: bytes):
        """Dispatch one request; returns (status, json-serializable body)."""
        split = urlsplit(path)
        query = {k: v[-1] for k, v in parse_qs(split.query).items()}
        for route_method, pattern, needs_auth, handler in self._routes:
            match = pattern.match(split.path)
            if match is None or route_method != method:
                continue
            user = None
            if needs_auth:
                auth = headers.get("authorization", "")
                token = auth[7:] if auth.startswith("Bearer ") else None
                user = self.tokens.user_for(token) if token else None
                if user is None:
                    return 401, {"error": "Unauthorized"}
            body: dict[str, Any] = {}
            if method in ("POST", "PUT") and raw_body:
                try:
                    body = json.loads(raw_body.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    return 400, {"error": "BadRequest", "detail": f"invalid JSON: {exc}"}
                if not isinstance(body, dict):
                    return 400, {"error": "BadRequest", "detail": "body must be a JSON object"}
            try:
                return handler(user, match, body, query)
            except Rejection as exc:
                return 409, {"error": exc.name, "detail": exc.detail}
            except TemplateSyntaxError as exc:
                return 400, {
                    "error": "SyntaxError",
                    "line": exc.line,
                    "column": exc.column,
                    "expected": exc.expected,
                }
            except TemplateError as exc:
                return 400, {"error": exc.name, "line": exc.line, "detail": str(exc)}
            except BadRequest as exc:
                return 400, {"error": "BadRequest", "detail": exc.detail}
        if any(pattern.match(split.path) for _, pattern, _, _ in self._routes):
            return 405, {"error": "MethodNotAllowed"}
        return 404, {"error": "NotFound"}

    # -- route handlers ----------------------------------------------------

    def _health(self, user, match, body, query):
        return 200, {"status": "ok", "cursor": self.engine.state.cursor}

    def _create_user(self, user, match, body, query):
        user_id = _body_field(body, "user", str).strip()
        if not user_id:
            raise BadRequest("user must be non-empty")
        self.engine.register_user(user_id)
        token = self.tokens.issue(user_id)
        return 201, {"user": user_id, "token": token}

    def _set_schedule(self, user, match, body, query):
        times = _body_field(body, "times", list)
        tz = _body_field(body, "tz", str, required=False, default="+00:00")
        if not all(isinstance(t, str) for t in times):
            raise BadRequest("times must be strings")
        event = self.engine.set_schedule(user, times, tz)
        return 200, {"event": event_to_dict(event)}

    def _get_schedule(self, user, match, body, query):
        schedule = self.engine.state.user(user).schedule
        if schedule is None:
            return 200, {"times": [], "tz": "+00:00"}
        return 200, {"times": list(schedule.times), "tz": schedule.tz}

    def _agenda(self, user, match, body, query):
        items = self.engine.agenda(user)
        return 200, {"items": [item.to_dict() for item in items]}

    def _updates(self, user, match, body, query):
        try:
            since = int(query.get("since", "0"))
        except ValueError:
            raise BadRequest("since must be an integer") from None
        events = self.engine.updates_for(user, since)
        page = events[:UPDATES_PAGE_SIZE]
        next_cursor = page[-1].seq if len(events) > len(page) else None
        return 200, {"events": [event_to_dict(e) for e in page], "next": next_cursor}

    def _create_task(self, user, match, body, query):
        title = _body_field(body, "title", str)
        parent = _body_field(body, "parent", str, required=False)
        depends_on = _body_field(body, "depends_on", list, required=False, default=[])
        if not all(isinstance(d, str) for d in depends_on):
            raise BadRequest("depends_on must be task ids")
        event = self.engine.create_task(user, title, parent, depends_on)
        return 201, {"event": event_to_dict(event), "task_id": event.task_id}

    def _visible_task(self, user: str, task_id: str):
        state = self.engine.state
        task = state.tasks.get(task_id)
        if task is None:
            return None
        if user in task.members or task.invitation_for(user) is not None:
            return task
        offer = task.pending_handoff
        if offer is not None and offer.to == user:
            return task
        return None

    def _task_view(self, state: GraphState, task, user: str) -> dict[str, Any]:
        view = _task_to_dict(task)
        view["actionable"] = prompter.is_actionable(state, task, user)
        return view

    def _list_tasks(self, user, match, body, query):
        state = self.engine.state
        tasks = [t for t in state.tasks.values() if self._visible_task(user, t.task_id)]
        tasks.sort(key=lambda t: (t.created_at, t.task_id))
        return 200, {"tasks": [self._task_view(state, t, user) for t in tasks]}

    def _get_task(self, user, match, body, query):
        task = self._visible_task(user, match.group(1))
        if task is None:
            return 404, {"error": "NotFound"}
        return 200, {"task": self._task_view(self.engine.state, task, user)}

    def _offer_handoff(self, user, match, body, query):
        to = _body_field(body, "to", str)
        event = self.engine.offer_handoff(user, match.group(1), to)
        return 200, {"event": event_to_dict(event)}

    def _decision(self, body) -> str:
        decision = _body_field(body, "decision", str)
        if decision not in ("accept", "decline"):
            raise BadRequest("decision must be 'accept' or 'decline'")
        return decision

    def _respond_handoff(self, user, match, body, query):
        event = self.engine.respond_handoff(user, match.group(1), self._decision(body))
        return 200, {"event": event_to_dict(event)}

    def _invite(self, user, match, body, query):
        invitee = _body_field(body, "user", str)
        event = self.engine.invite_participant(user, match.group(1), invitee)
        return 200, {"event": event_to_dict(event)}

    def _respond_invitation(self, user, match, body, query):
        event = self.engine.respond_invitation(user, match.group(1), self._decision(body))
        return 200, {"event": event_to_dict(event)}

    def _complete(self, user, match, body, query):
        event = self.engine.complete_task(user, match.group(1))
        return 200, {"event": event_to_dict(event)}

    def _abandon(self, user, match, body, query):
        event = self.engine.abandon_task(user, match.group(1))
        return 200, {"event": event_to_dict(event)}

    def _comment(self, user, match, body, query):
        text = _body_field(body, "text", str)
        event = self.engine.add_comment(user, match.group(1), text)
        return 200, {"event": event_to_dict(event)}

    def _set_sharing(self, user, match, body, query):
        policy = _parse_policy(body)
        event = self.engine.set_sharing_policy(user, match.group(1), policy)
        return 200, {"event": event_to_dict(event)}

    def _parse_template(self, user, match, body, query):
        text = _body_field(body, "text", str)
        template = templates.parse_template(text)
        violations = templates.validate_template(template)
        return 200, {
            "template": {
                "name": template.name,
                "roles": list(template.roles),
                "steps": [
                    {
                        "id": s.id,
                        "title": s.title,
                        "owner_role": s.owner_role,
                        "after": sorted(s.after),
                    }
                    for s in template.steps
                ],
            },
            "canonical": templates.serialize_template(template),
            "violations": [
                {"rule": v.rule, "subject": v.subject, "detail": v.detail} for v in violations
            ],
        }

    def _launch_template(self, user, match, body, query):
        text = _body_field(body, "text", str)
        binding = _body_field(body, "binding", dict)
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in binding.items()):
            raise BadRequest("binding must map role names to user ids")
        template = templates.parse_template(text)
        events = self.engine.launch_template(user, template, binding)
        return 201, {
            "events": [event_to_dict(e) for e in events],
            "root": events[0].payload["root"],
        }

    def _engagement(self, user, match, body, query):
        slot = _body_field(body, "slot", int)
        opened = _body_field(body, "opened", bool)
        resolved = _body_field(body, "resolved", int, required=False, default=0)
        event = self.engine.record_engagement(user, slot, opened, resolved)
        return 200, {"event": event_to_dict(event)}


class _Handler(BaseHTTPRequestHandler):
    service: ApiService  # set on the subclass built in ApiServer

    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # quiet by default
        pass

    def _respond(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        raw_body = self.rfile.read(length) if length else b""
        headers = {k.lower(): v for k, v in self.headers.items()}
        status, body = self.service.handle(method, self.path, headers, raw_body)
        self._respond(status, body)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_OPTIONS(self):
        self._respond(204, {})


class ApiServer:
    """Threaded HTTP server wrapping an ApiService; start()/stop() lifecycle."""

    def __init__(
        self,
        service: ApiService,
        host: str = "127.0.0.1",
        port: int = 0,
        outbox_interval: float = 0.0,
        clock=None,
    ):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        self.service = service
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None
        self._outbox_interval = outbox_interval
        self._outbox_stop = threading.Event()
        self._outbox_thread: threading.Thread | None = None
        self._clock = clock if clock is not None else service.engine.clock

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def _outbox_loop(self) -> None:
        while not self._outbox_stop.wait(self._outbox_interval):
            try:
                self.service.outbox.run(
                    self.service.engine.state, self.service.engine.events, self._clock.now()
                )
            except Exception:
                logger.exception("outbox run failed")

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        if self._outbox_interval > 0 and self.service.outbox is not None:
            self._outbox_thread = threading.Thread(target=self._outbox_loop, daemon=True)
            self._outbox_thread.start()

    def stop(self) -> None:
        self._outbox_stop.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
