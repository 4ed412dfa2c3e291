"""Local OpenAI-compatible stub endpoint for offline evaluation and tests."""

from __future__ import annotations

import json
import math
import threading
import time
import zlib
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

StubBehavior = Callable[[dict, int], str]


def default_stub_behavior(payload: dict, index: int) -> str:
    """Deterministic canned completion derived from the user prompt.

    Three of every four prompts (by content hash) get a completion with one
    recall span quoting a slice of the prompt; the fourth gets a span-free
    completion. The split gives recall-usage summaries something to count.
    """
    prompt = payload["messages"][-1]["content"]
    h = zlib.crc32(prompt.encode("utf-8"))
    if h % 4 == 3:
        return f"<think>\nNo lookup needed here.\n</think>\nAnswer: stub-{h % 1000}"
    mid = len(prompt) // 2
    quote = prompt[mid : mid + 60]
    return (
        f"<think>\nLooking in the text, I see <|start_recall|>{quote}<|end_recall|> "
        f"which settles it.\n</think>\nAnswer: stub-{h % 1000}"
    )


def stub_uses_recall(prompt: str) -> bool:
    """Hand-countable predicate matching :func:`default_stub_behavior`."""
    return zlib.crc32(prompt.encode("utf-8")) % 4 != 3


class StubChatServer:
    """Threaded chat-completions stub bound to an ephemeral loopback port.

    Supports failure injection (``fail_first`` requests answer 500) and
    tracks the peak number of concurrently open requests so tests can assert
    the client's concurrency bound.
    """

    def __init__(
        self,
        behavior: Optional[StubBehavior] = None,
        fail_first: int = 0,
        latency_s: float = 0.0,
    ) -> None:
        self.behavior = behavior or default_stub_behavior
        self.fail_first = fail_first
        self.latency_s = latency_s
        self.total_calls = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://127.0.0.1:{port}"

    def start(self) -> "StubChatServer":
        owner = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                with owner._lock:
                    owner.total_calls += 1
                    call_index = owner.total_calls
                    owner.in_flight += 1
                    owner.max_in_flight = max(owner.max_in_flight, owner.in_flight)
                    fail = call_index <= owner.fail_first
                try:
                    if owner.latency_s:
                        time.sleep(owner.latency_s)
                    if fail:
                        self.send_response(500)
                        self.end_headers()
                        self.wfile.write(b'{"error": "injected failure"}')
                        return
                    payload = json.loads(raw)
                    content = owner.behavior(payload, call_index)
                    prompt = payload["messages"][-1]["content"]
                    body = json.dumps(
                        {
                            "id": f"stub-{call_index}",
                            "object": "chat.completion",
                            "model": payload.get("model", "stub"),
                            "choices": [
                                {
                                    "index": 0,
                                    "message": {"role": "assistant", "content": content},
                                    "finish_reason": "stop",
                                }
                            ],
                            "usage": {
                                "prompt_tokens": math.ceil(len(prompt) / 4),
                                "completion_tokens": math.ceil(len(content) / 4),
                                "total_tokens": math.ceil((len(prompt) + len(content)) / 4),
                            },
                        }
                    ).encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                finally:
                    with owner._lock:
                        owner.in_flight -= 1

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "StubChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
