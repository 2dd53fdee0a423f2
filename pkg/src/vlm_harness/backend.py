"""HTTP inference client and backend-specific output cleaning.

The harness never loads model weights; it talks to a chat-completions style
endpoint (``POST <url>/v1/chat/completions``) with one user message holding a
base64 data-URL image part and a text part.  Transport failures are retried
with exponential backoff; HTTP error statuses and malformed bodies are not
retried — they describe a server that answered.
"""

from __future__ import annotations

import base64
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .config import BackendSpec, GenerationParams
from .prompt import PromptText

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
_MIME_BY_EXTENSION = {".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".png": "image/png"}

# Chat-template residue stripped from llava-style replies, in match order.
# The text after the *last* occurrence is the reply, which survives prompts
# that themselves quote a marker.
LLAVA_MARKERS = ("[/INST]", "ASSISTANT:", "assistant\n")


class BackendError(Exception):
    """A request that could not produce usable output (task-level failure)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class TransportError(BackendError):
    """Connection-level failure after all retries."""


@dataclass(frozen=True)
class ImageRef:
    """One image on disk, with its payload already read."""

    file_name: str
    path: Path
    data: bytes

    def __post_init__(self) -> None:
        if self.extension not in IMAGE_EXTENSIONS:
            raise ValueError(
                f"unsupported image extension for {self.file_name!r}; "
                f"expected one of {', '.join(IMAGE_EXTENSIONS)}"
            )

    @property
    def extension(self) -> str:
        dot = self.file_name.rfind(".")
        return self.file_name[dot:].lower() if dot >= 0 else ""

    @classmethod
    def from_path(cls, path: Path) -> "ImageRef":
        return cls(file_name=path.name, path=path, data=path.read_bytes())


@dataclass(frozen=True)
class RawInference:
    """Verbatim backend reply plus the token accounting for it."""

    raw_text: str
    generated_tokens: int
    token_limit: int
    prompt_echoed: bool
    kind: str

    def __post_init__(self) -> None:
        if self.token_limit < 1:
            raise ValueError(f"token_limit must be >= 1 (got {self.token_limit})")
        if not 0 <= self.generated_tokens <= self.token_limit:
            raise ValueError(
                f"generated_tokens must be in [0,{self.token_limit}] "
                f"(got {self.generated_tokens})"
            )

    def truncated(self) -> bool:
        # The endpoint reports only consumed tokens; hitting the limit is the
        # only observable truncation signal.
        return self.generated_tokens == self.token_limit


def clean_output(raw: RawInference, prompt: PromptText) -> str:
    """Strip prompt echo and chat-template residue from a reply.

    llava-style replies may repeat the prompt and emit template markers;
    everything up to and including the last occurrence of the prompt or any
    marker is dropped.  Other backends only need trimming.  Idempotent.
    """
    text = raw.raw_text
    if raw.kind != "llava-style":
        return text.strip()
    cut = 0
    needles = list(LLAVA_MARKERS)
    if prompt.text:
        needles.append(prompt.text)
    for needle in needles:
        idx = text.rfind(needle)
        if idx >= 0:
            cut = max(cut, idx + len(needle))
    return text[cut:].strip()


class InferenceClient:
    """Thin chat-completions client; safe to share across worker threads."""

    def __init__(
        self,
        spec: BackendSpec,
        *,
        backoff_base: float = 1.0,
        session: requests.Session | None = None,
    ):
        self.spec = spec
        self._backoff_base = backoff_base
        self._session = session or requests.Session()

    @property
    def endpoint(self) -> str:
        return self.spec.url.rstrip("/") + "/v1/chat/completions"

    def infer(
        self,
        prompt: PromptText,
        image: ImageRef,
        params: GenerationParams,
        token_limit: int,
    ) -> RawInference:
        """Run one generation request and return the raw reply.

        Raises :class:`TransportError` when the endpoint stays unreachable
        after ``max_retries`` retries, and :class:`BackendError` for HTTP
        error statuses or malformed reply bodies.
        """
        if not image.data:
            raise ValueError(f"image {image.file_name!r} has an empty payload")
        mime = _MIME_BY_EXTENSION[image.extension]
        data_url = f"data:{mime};base64,{base64.b64encode(image.data).decode('ascii')}"
        body = {
            "model": self.spec.model_name,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": data_url}},
                        {"type": "text", "text": prompt.text},
                    ],
                }
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": token_limit,
            "seed": params.seed,
        }

        attempts = self.spec.max_retries + 1
        response = None
        for attempt in range(attempts):
            try:
                response = self._session.post(
                    self.endpoint, json=body, timeout=self.spec.request_timeout
                )
                break
            except requests.RequestException as exc:
                if attempt + 1 >= attempts:
                    raise TransportError(
                        f"backend unreachable after {attempts} attempt(s): {exc}"
                    ) from exc
                delay = self._backoff_base * 2**attempt
                log.warning(
                    "transport failure (%s), retrying in %.1fs", exc, delay
                )
                time.sleep(delay)

        if response.status_code >= 400:
            raise BackendError(
                f"backend returned HTTP {response.status_code}",
                status=response.status_code,
            )
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
            used = int(payload["usage"]["completion_tokens"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed reply body: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("malformed reply body: message content is not text")
        # Some servers report usage past the requested cap; clamp so the
        # limit-hit truncation signal stays well defined.
        used = max(0, min(used, token_limit))
        echoed = bool(prompt.text) and prompt.text in content
        return RawInference(content, used, token_limit, echoed, self.spec.kind)
