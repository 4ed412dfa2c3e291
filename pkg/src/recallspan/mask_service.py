"""Local mask service: decode sessions over HTTP or stdio framing.

Requests and responses are newline-delimited JSON objects. Operations:

  create   {"op": "create", "session": id, "context": [ids], "config":
            {"r_start_id": int, "r_end_id": int, "vocab_size": int}}
  observe  {"op": "observe", "session": id, "token": int}
  mask     {"op": "mask", "session": id}
  close    {"op": "close", "session": id}

Mask responses use the compact form {"mode": "allow"|"deny", "tokens": [...]}:
"deny" lists the few forbidden ids (outside spans), "allow" lists the whole
allowed set (inside spans). Close returns the session's span records. Errors
come back as {"ok": false, "error": ...}; the connection stays usable.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO, Optional

from .decode import (
    DecoderConfig,
    GenerationState,
    RecallSpan,
    allowed_token_ids,
    extract_spans,
    new_state,
    observe_token,
)
from .errors import RecallSpanError


def span_to_dict(span: RecallSpan) -> dict:
    return {
        "tokens": span.tokens,
        "generation_interval": list(span.generation_interval),
        "context_start_positions": sorted(span.context_start_positions),
        "context_snapshot_len": span.context_snapshot_len,
        "char_interval": list(span.char_interval) if span.char_interval else None,
        "truncated": span.truncated,
    }


class MaskService:
    """Session registry with per-session serialization.

    Session ids are unique for the service lifetime; closing a session does
    not free its id for reuse.
    """

    def __init__(self) -> None:
        self._states: dict[str, GenerationState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._ever_created: set[str] = set()
        self._registry_lock = threading.Lock()

    def handle_line(self, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"ok": False, "error": f"bad_json: {exc}"}
        if not isinstance(obj, dict):
            return {"ok": False, "error": "bad_request: expected a JSON object"}
        return self.handle(obj)

    def handle(self, obj: dict) -> dict:
        op = obj.get("op")
        session_id = obj.get("session")
        base = {"op": op, "session": session_id}
        if not isinstance(session_id, str) or not session_id:
            return {**base, "ok": False, "error": "bad_request: missing session id"}
        try:
            if op == "create":
                return {**base, **self._create(session_id, obj)}
            lock = self._session_lock(session_id)
            if lock is None:
                return {**base, "ok": False, "error": f"unknown_session: {session_id}"}
            with lock:
                state = self._states.get(session_id)
                if state is None:
                    return {**base, "ok": False, "error": f"unknown_session: {session_id}"}
                if op == "observe":
                    return {**base, **self._observe(state, obj)}
                if op == "mask":
                    return {**base, **self._mask(state)}
                if op == "close":
                    return {**base, **self._close(session_id, state)}
            return {**base, "ok": False, "error": f"bad_request: unknown op {op!r}"}
        except RecallSpanError as exc:
            return {**base, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
        except Exception as exc:  # defensive: the service must never crash
            return {**base, "ok": False, "error": f"internal: {type(exc).__name__}: {exc}"}

    def _session_lock(self, session_id: str) -> Optional[threading.Lock]:
        with self._registry_lock:
            return self._locks.get(session_id)

    def _create(self, session_id: str, obj: dict) -> dict:
        cfg_obj = obj.get("config") or {}
        missing = [k for k in ("r_start_id", "r_end_id", "vocab_size") if k not in cfg_obj]
        if missing:
            return {"ok": False, "error": f"bad_request: config missing {missing}"}
        config = DecoderConfig(
            r_start_id=int(cfg_obj["r_start_id"]),
            r_end_id=int(cfg_obj["r_end_id"]),
            vocab_size=int(cfg_obj["vocab_size"]),
            include_prior_spans_in_context=bool(
                cfg_obj.get("include_prior_spans_in_context", True)
            ),
            include_delimiters_in_context=bool(
                cfg_obj.get("include_delimiters_in_context", True)
            ),
        )
        context = obj.get("context", [])
        state = new_state(context, config)
        with self._registry_lock:
            if session_id in self._ever_created:
                return {"ok": False, "error": f"duplicate_session: {session_id}"}
            self._ever_created.add(session_id)
            self._states[session_id] = state
            self._locks[session_id] = threading.Lock()
        return {"ok": True, "context_len": len(state.context)}

    @staticmethod
    def _observe(state: GenerationState, obj: dict) -> dict:
        if "token" not in obj:
            return {"ok": False, "error": "bad_request: observe needs a token"}
        observe_token(state, int(obj["token"]))
        return {"ok": True, "mode": state.mode.value}

    @staticmethod
    def _mask(state: GenerationState) -> dict:
        kind, tokens = allowed_token_ids(state)
        return {
            "ok": True,
            "mode": kind,
            "tokens": sorted(tokens),
            "vocab_size": state.config.vocab_size,
        }

    def _close(self, session_id: str, state: GenerationState) -> dict:
        spans = [span_to_dict(s) for s in extract_spans(state)]
        with self._registry_lock:
            self._states.pop(session_id, None)
        return {"ok": True, "spans": spans}


def make_http_server(host: str, port: int) -> ThreadingHTTPServer:
    """Configured HTTP server; each POST body holds newline-delimited requests.

    The caller drives ``serve_forever`` (directly or on a thread) and owns
    shutdown. Port 0 binds an ephemeral port.
    """
    service = MaskService()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:
            pass

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length).decode("utf-8")
            responses = [
                json.dumps(service.handle_line(line))
                for line in raw.splitlines()
                if line.strip()
            ]
            body = ("\n".join(responses) + "\n").encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/jsonl")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return ThreadingHTTPServer((host, port), Handler)


def serve_stdio(stdin: Optional[IO[str]] = None, stdout: Optional[IO[str]] = None) -> None:
    """Low-latency framing for in-host integration: one JSON line in, one out."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    service = MaskService()
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(service.handle_line(line)) + "\n")
        stdout.flush()
