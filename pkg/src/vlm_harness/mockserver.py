"""Deterministic chat-completions test double driven by a fixture file.

Fixture format: one record per line, six pipe-separated fields::

    image_name | column | run_index_or_* | generated_tokens | echo(0/1) | response text

``\\n`` escapes in the response text become newlines.  Blank lines and lines
starting with ``#`` are skipped.  A response text of ``!http_error <status>``
makes the server answer that HTTP status instead of a completion, which is
how always-failing backends are scripted.

Request resolution (all deterministic, independent of arrival order):

* image — the known image name found inside the decoded payload; synthetic
  test images embed their own file name in their bytes.
* column — the fixture column for that image whose name occurs in the prompt
  text (longest match wins).  If none matches, a stable hash of the prompt's
  first line picks a bucket among the image's columns.
* run — requests are otherwise identical across consensus runs, so the n-th
  arrival for one (image, column, prompt, seed) key selects the entry with
  run index n; ``*`` entries match any index, and indexes past the last
  explicit entry reuse the highest one.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

log = logging.getLogger(__name__)

ERROR_DIRECTIVE = "!http_error"


class FixtureError(ValueError):
    """Raised for malformed fixture files; message includes the line number."""


@dataclass(frozen=True)
class FixtureEntry:
    image: str
    column: str
    run_index: int | None  # None for '*'
    generated_tokens: int
    echo: bool
    text: str


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def parse_fixtures(text: str) -> list[FixtureEntry]:
    entries: list[FixtureEntry] = []
    seen: set[tuple[str, str, int | None]] = set()
    for line_no, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = raw.split("|", 5)
        if len(fields) != 6:
            raise FixtureError(f"line {line_no}: expected 6 pipe-separated fields")
        image, column, run_raw, tokens_raw, echo_raw, response = (
            field.strip() for field in fields
        )
        if not image or not column:
            raise FixtureError(f"line {line_no}: image and column must be non-empty")
        if run_raw == "*":
            run_index = None
        else:
            try:
                run_index = int(run_raw)
            except ValueError:
                raise FixtureError(
                    f"line {line_no}: run index must be an integer or '*' "
                    f"(got {run_raw!r})"
                ) from None
            if run_index < 0:
                raise FixtureError(f"line {line_no}: run index must be >= 0")
        try:
            tokens = int(tokens_raw)
        except ValueError:
            raise FixtureError(
                f"line {line_no}: generated_tokens must be an integer "
                f"(got {tokens_raw!r})"
            ) from None
        if tokens < 0:
            raise FixtureError(f"line {line_no}: generated_tokens must be >= 0")
        if echo_raw not in ("0", "1"):
            raise FixtureError(f"line {line_no}: echo flag must be 0 or 1")
        key = (image, column, run_index)
        if key in seen:
            raise FixtureError(
                f"line {line_no}: duplicate fixture for {image}/{column}/"
                f"{'*' if run_index is None else run_index}"
            )
        seen.add(key)
        entries.append(
            FixtureEntry(image, column, run_index, tokens, echo_raw == "1", _unescape(response))
        )
    return entries


def load_fixtures(path: Path | str) -> list[FixtureEntry]:
    return parse_fixtures(Path(path).read_text(encoding="utf-8"))


def _bucket(text: str, size: int) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % size


class MockBackend:
    """Request resolution logic, HTTP-free so it is unit-testable."""

    def __init__(self, entries: list[FixtureEntry]):
        self._by_key: dict[tuple[str, str], dict[int | None, FixtureEntry]] = {}
        self._columns_by_image: dict[str, list[str]] = {}
        for entry in entries:
            self._by_key.setdefault((entry.image, entry.column), {})[
                entry.run_index
            ] = entry
            columns = self._columns_by_image.setdefault(entry.image, [])
            if entry.column not in columns:
                columns.append(entry.column)
        # Longest name first so embedded prefixes cannot shadow a full match.
        self._image_names = sorted(self._columns_by_image, key=len, reverse=True)
        self._counters: dict[tuple, int] = {}
        self._lock = threading.Lock()

    def resolve_image(self, payload: bytes) -> str | None:
        haystack = payload.decode("utf-8", errors="ignore")
        for name in self._image_names:
            if name in haystack:
                return name
        return None

    def resolve_column(self, image: str, prompt_text: str) -> str:
        columns = self._columns_by_image[image]
        matches = [column for column in columns if column in prompt_text]
        if matches:
            return max(matches, key=lambda column: (len(column), column))
        first_line = prompt_text.split("\n", 1)[0]
        return columns[_bucket(first_line, len(columns))]

    def _next_ordinal(self, image: str, column: str, prompt_text: str, seed) -> int:
        key = (
            image,
            column,
            hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()[:16],
            str(seed),
        )
        with self._lock:
            ordinal = self._counters.get(key, 0)
            self._counters[key] = ordinal + 1
        return ordinal

    def lookup(self, image: str, column: str, ordinal: int) -> FixtureEntry | None:
        runs = self._by_key.get((image, column))
        if not runs:
            return None
        if ordinal in runs:
            return runs[ordinal]
        if None in runs:
            return runs[None]
        explicit = [index for index in runs if index is not None]
        return runs[max(explicit)]

    def respond(self, request_body: bytes) -> tuple[int, dict]:
        """Map one wire request to (HTTP status, JSON payload)."""
        try:
            request = json.loads(request_body)
            message = request["messages"][0]
            prompt_text = ""
            image_payload = b""
            for part in message["content"]:
                if part.get("type") == "text":
                    prompt_text = part["text"]
                elif part.get("type") == "image_url":
                    url = part["image_url"]["url"]
                    image_payload = base64.b64decode(url.split(",", 1)[1])
            model = request.get("model", "mock")
            max_tokens = int(request.get("max_tokens", 1))
            seed = request.get("seed")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            return 400, {"error": {"message": f"malformed request: {exc}"}}

        image = self.resolve_image(image_payload)
        if image is None:
            return 404, {"error": {"message": "no fixture matches the image payload"}}
        column = self.resolve_column(image, prompt_text)
        ordinal = self._next_ordinal(image, column, prompt_text, seed)
        entry = self.lookup(image, column, ordinal)
        if entry is None:
            return 404, {"error": {"message": f"no fixture for {image}/{column}"}}

        if entry.text.startswith(ERROR_DIRECTIVE):
            try:
                status = int(entry.text[len(ERROR_DIRECTIVE):].strip())
            except ValueError:
                status = 500
            return status, {"error": {"message": "fixture-scripted failure"}}

        content = entry.text
        if entry.echo:
            content = f"{prompt_text} [/INST] {entry.text}"
        completion_tokens = entry.generated_tokens
        payload = {
            "id": f"mock-{image}-{column}-{ordinal}",
            "object": "chat.completion",
            "model": model,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "length"
                    if completion_tokens >= max_tokens
                    else "stop",
                }
            ],
            "usage": {
                "prompt_tokens": max(1, len(prompt_text) // 4),
                "completion_tokens": completion_tokens,
                "total_tokens": max(1, len(prompt_text) // 4) + completion_tokens,
            },
        }
        return 200, payload


class _Handler(BaseHTTPRequestHandler):
    backend: MockBackend  # set by serve_mock on the handler subclass

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if self.path != "/v1/chat/completions":
            self._reply(404, {"error": {"message": f"unknown path {self.path}"}})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        status, payload = self.backend.respond(body)
        self._reply(status, payload)

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args) -> None:
        log.debug("mock server: " + fmt, *args)


@dataclass
class MockServerHandle:
    server: ThreadingHTTPServer
    thread: threading.Thread
    backend: MockBackend

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self.server.shutdown()
        self.thread.join()
        self.server.server_close()


def serve_mock(fixtures: Path | str | list[FixtureEntry], port: int = 0) -> MockServerHandle:
    """Start the mock server on ``port`` (0 picks a free one) and return a handle."""
    entries = fixtures if isinstance(fixtures, list) else load_fixtures(fixtures)
    backend = MockBackend(entries)
    handler = type("BoundHandler", (_Handler,), {"backend": backend})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, name="mock-backend", daemon=True)
    thread.start()
    return MockServerHandle(server=server, thread=thread, backend=backend)
