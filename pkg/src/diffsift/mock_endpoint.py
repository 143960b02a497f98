"""A small in-process OpenAI-compatible chat-completions server with scripted
answers, for exercising the sampling pipeline without a real model.

The script maps each prompt to how many of the g requested completions
should be correct, so downstream difficulty bucketing has a known ground
truth.  The server counts requests and tracks the in-flight high-water mark,
which is how tests assert the client's concurrency bound, and can inject
transient failures, permanent failures, and auth rejection.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .core import GoldAnswer, Sample, TaskKind


@dataclass(slots=True)
class ScriptedPrompt:
    """What the mock returns for one prompt: of n requested completions, the
    first n_correct are correct_text, the rest wrong_text.  fail_times makes
    the first that many requests fail with fail_status; always_fail makes
    every request fail."""

    correct_text: str
    wrong_text: str
    n_correct: int
    fail_times: int = 0
    fail_status: int = 500
    always_fail: bool = False


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt: str, *args) -> None:  # silence per-request stderr noise
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 - http.server naming
        mock: MockEndpoint = self.server.mock  # type: ignore[attr-defined]
        mock._enter()
        try:
            if mock.latency:
                time.sleep(mock.latency)
            if not self.path.endswith("/chat/completions"):
                self._send_json(404, {"error": {"message": f"no route {self.path}"}})
                return
            if mock.api_key is not None:
                if self.headers.get("Authorization") != f"Bearer {mock.api_key}":
                    self._send_json(401, {"error": {"message": "invalid api key"}})
                    return
            length = int(self.headers.get("Content-Length", "0"))
            request = json.loads(self.rfile.read(length))
            prompt = _prompt_of(request)
            entry = mock.script.get(prompt)
            if entry is None:
                self._send_json(400, {"error": {"message": f"unscripted prompt: {prompt[:80]}"}})
                return
            if entry.always_fail or mock._consume_failure(prompt):
                self._send_json(entry.fail_status, {"error": {"message": "scripted failure"}})
                return
            n = int(request.get("n", 1))
            served = mock._serve_count(prompt)
            choices = []
            for k in range(n):
                # With n = g one request covers the whole pattern; with n = 1
                # the per-prompt serve counter walks the same pattern.
                position = k if n > 1 else served
                text = entry.correct_text if position < entry.n_correct else entry.wrong_text
                choices.append(
                    {
                        "index": k,
                        "message": {"role": "assistant", "content": text},
                        "finish_reason": "stop",
                    }
                )
            self._send_json(
                200,
                {
                    "id": "mock-completion",
                    "object": "chat.completion",
                    "model": request.get("model", "mock"),
                    "choices": choices,
                },
            )
        finally:
            mock._exit()


def _prompt_of(request: dict) -> str:
    content = request["messages"][-1]["content"]
    if isinstance(content, str):
        return content
    texts = [part["text"] for part in content if part.get("type") == "text"]
    return texts[-1] if texts else ""


class MockEndpoint:
    """Run with `with MockEndpoint(script) as mock:` and point an
    EndpointConfig at mock.base_url."""

    def __init__(
        self,
        script: dict[str, ScriptedPrompt],
        api_key: str | None = None,
        latency: float = 0.0,
    ):
        self.script = dict(script)
        self.api_key = api_key
        self.latency = latency
        self.request_count = 0
        self.max_in_flight_seen = 0
        self._in_flight = 0
        self._failures_left = {p: e.fail_times for p, e in self.script.items()}
        self._served = {p: 0 for p in self.script}
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._server.mock = self  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockEndpoint":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "MockEndpoint":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def reset_counters(self) -> None:
        with self._lock:
            self.request_count = 0
            self.max_in_flight_seen = 0

    def _enter(self) -> None:
        with self._lock:
            self.request_count += 1
            self._in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)

    def _exit(self) -> None:
        with self._lock:
            self._in_flight -= 1

    def _consume_failure(self, prompt: str) -> bool:
        with self._lock:
            if self._failures_left.get(prompt, 0) > 0:
                self._failures_left[prompt] -= 1
                return True
            return False

    def _serve_count(self, prompt: str) -> int:
        with self._lock:
            count = self._served[prompt]
            self._served[prompt] += 1
            return count


def make_fixture(
    n_samples: int = 50, g: int = 8
) -> tuple[list[Sample], dict[str, ScriptedPrompt], dict[str, int]]:
    """Classification samples plus a script whose correctness pattern walks
    0..g correct responses cyclically, and the difficulty histogram that
    pattern implies at group size g."""
    samples: list[Sample] = []
    script: dict[str, ScriptedPrompt] = {}
    expected = {"easy": 0, "medium": 0, "hard": 0}
    for i in range(n_samples):
        prompt = f"Name the category of item {i:03d}."
        label = f"category-{i % 7}"
        n_correct = i % (g + 1)
        samples.append(
            Sample(
                id=f"fx-{i:03d}",
                task_kind=TaskKind.CLASSIFICATION,
                prompt=prompt,
                gold=GoldAnswer(label=label),
            )
        )
        script[prompt] = ScriptedPrompt(
            correct_text=f"Answer: {label}", wrong_text="Answer: none of these", n_correct=n_correct
        )
        if n_correct == g:
            expected["easy"] += 1
        elif n_correct == 0:
            expected["hard"] += 1
        else:
            expected["medium"] += 1
    return samples, script, expected
