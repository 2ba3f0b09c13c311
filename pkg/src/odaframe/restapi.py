"""REST control plane: a thin JSON adapter over the daemon's subsystems.

Every mutation is equivalent to the corresponding in-process call; handlers
hold no state of their own. Bound to loopback by default; no streaming
endpoints (bulk data stays on the binary protocol).

Routes:
    GET  /sensors?prefix=P
    GET  /data?sensor=T&rel=NS | &t0=NS&t1=NS
    GET  /operators
    PUT  /operators/{plugin}/{op}/{action}      start | stop | custom action
    GET  /compute/{plugin}/{op}/{block-path}    on-demand block computation
    POST /plugins/{name}/load                   operator sections in the body
    GET  /jobs            POST /jobs            job registry injection
    GET  /status
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

import yaml

from .blocks import InstantiationError
from .jobs import JobInfo
from .operators import (
    ConfigError,
    UnknownActionError,
    UnknownBlockError,
    UnknownOperatorError,
    UnknownPluginError,
    WrongModeError,
)
from .query import FeatureUnavailableError, QueryRequest, UnknownSensorError

log = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        super().__init__(message)
        self.http_status = http_status
        self.code = code


def _error_for(exc: Exception) -> ApiError:
    mapping = [
        (UnknownSensorError, 404, "unknown-sensor"),
        (UnknownPluginError, 404, "unknown-plugin"),
        (UnknownOperatorError, 404, "unknown-operator"),
        (UnknownBlockError, 404, "unknown-block"),
        (UnknownActionError, 404, "unknown-action"),
        (WrongModeError, 400, "wrong-mode"),
        (FeatureUnavailableError, 400, "feature-unavailable"),
        (InstantiationError, 400, "instantiation-failed"),
        (ConfigError, 400, "config-error"),
        (ValueError, 400, "invalid-request"),
        (KeyError, 404, "not-found"),
    ]
    for klass, status, code in mapping:
        if isinstance(exc, klass):
            return ApiError(status, code, str(exc))
    log.exception("unhandled API error")
    return ApiError(500, "internal", str(exc))


class RestServer:
    """HTTP facade over a daemon; start() binds and serves on a thread."""

    def __init__(self, daemon, address: tuple[str, int]):
        self.daemon = daemon
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                log.debug("rest: " + fmt, *args)

            def _reply(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _dispatch(self, method: str) -> None:
                try:
                    url = urlparse(self.path)
                    segments = [unquote(s) for s in url.path.split("/") if s != ""]
                    query = {k: v[-1] for k, v in parse_qs(url.query).items()}
                    length = int(self.headers.get("Content-Length") or 0)
                    body = self.rfile.read(length) if length else b""
                    payload = outer._route(method, segments, query, body)
                    self._reply(200, {"status": "ok", **payload})
                except ApiError as exc:
                    self._reply(exc.http_status, {
                        "status": "error", "code": exc.code, "message": str(exc)})
                except Exception as exc:  # noqa: BLE001 - adapter boundary
                    err = _error_for(exc)
                    self._reply(err.http_status, {
                        "status": "error", "code": err.code, "message": str(err)})

            def do_GET(self):
                self._dispatch("GET")

            def do_PUT(self):
                self._dispatch("PUT")

            def do_POST(self):
                self._dispatch("POST")

        self._httpd = ThreadingHTTPServer(address, Handler)
        self._httpd.daemon_threads = True
        self.address = self._httpd.server_address
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="oda-rest", daemon=True)

    def start(self) -> None:
        self._thread.start()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    # -- routing ---------------------------------------------------------------

    def _route(self, method: str, seg: list[str], query: dict, body: bytes) -> dict:
        d = self.daemon
        if method == "GET" and seg == ["sensors"]:
            prefix = query.get("prefix", "/")
            from .transport import topic_matches_prefix
            topics = [t for t in d.registry.topics()
                      if topic_matches_prefix(t, prefix)]
            return {"topics": topics}

        if method == "GET" and seg == ["data"]:
            return self._data(query)

        if method == "GET" and seg == ["operators"]:
            return {"plugins": d.manager.describe()}

        if method == "PUT" and len(seg) == 4 and seg[0] == "operators":
            _, plugin, op, action = seg
            if action == "start":
                return {"result": d.manager.start(plugin, op)}
            if action == "stop":
                return {"result": d.manager.stop(plugin, op)}
            params = {k: v for k, v in query.items()}
            return {"result": d.manager.custom_action(plugin, op, action, params)}

        if method == "GET" and len(seg) >= 3 and seg[0] == "compute":
            plugin, op = seg[1], seg[2]
            block = "/" + "/".join(seg[3:]) if len(seg) > 3 else ""
            outputs = d.manager.on_demand(plugin, op, block)
            return {"outputs": [
                {"topic": t, "value": r.value, "timestamp": r.timestamp}
                for t, r in outputs]}

        if method == "POST" and len(seg) == 3 and seg[0] == "plugins" \
                and seg[2] == "load":
            sections = _parse_sections(body)
            report = d.manager.load_plugin(seg[1], sections)
            return {"plugin": report.plugin, "operators": report.operators}

        if seg == ["jobs"]:
            if method == "GET":
                return {"jobs": [j.to_dict() for j in d.jobs.all()]}
            if method == "POST":
                job = JobInfo.from_dict(json.loads(body.decode("utf-8")))
                d.jobs.add(job)
                return {"added": job.job_id}

        if method == "GET" and seg == ["status"]:
            return d.status()

        raise ApiError(404, "no-such-route",
                       f"{method} /{'/'.join(seg)} is not a route")

    def _data(self, query: dict) -> dict:
        if "sensor" not in query:
            raise ApiError(400, "invalid-request", "missing sensor parameter")
        topic = query["sensor"]
        has_rel = "rel" in query
        has_abs = "t0" in query or "t1" in query
        if has_rel == has_abs:
            raise ApiError(400, "invalid-request",
                           "exactly one of rel / (t0, t1) must be given")
        try:
            if has_rel:
                req = QueryRequest(topic, offset_ns=int(query["rel"]))
            else:
                req = QueryRequest(topic, t0=int(query["t0"]), t1=int(query["t1"]))
        except (KeyError, ValueError) as exc:
            raise ApiError(400, "invalid-range", str(exc)) from None
        res = self.daemon.query.query(req)
        return {
            "sensor": topic,
            "partial": res.partial,
            "source": res.source,
            "scale": self.daemon.query.scale_of(topic),
            "readings": [{"t": r.timestamp, "v": r.value} for r in res.readings],
        }


def _parse_sections(body: bytes) -> list[dict]:
    """Plugin-load body: YAML/JSON list of sections or {operators: [...]}."""
    try:
        doc = yaml.safe_load(body.decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ApiError(400, "parse-error", f"bad config body{where}: {exc}") from None
    if isinstance(doc, dict) and "operators" in doc:
        doc = doc["operators"]
    if not isinstance(doc, list):
        raise ApiError(400, "parse-error",
                       "body must be a list of operator sections")
    return [dict(s) for s in doc]
