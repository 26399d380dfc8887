"""Single choke point for model interactions.

Every language/vision call in the system goes through a Gateway holding one
of three backends: a scripted rule table (pure, for tests and desk runs), a
transcript replayer, or an OpenAI-compatible HTTP endpoint. Prompts are
text files with {{placeholder}} substitution; each call is appended to a
transcript log keyed by a request hash so any episode can be replayed
byte-for-byte.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import httpx

from .config import BackendConfig

ROLES = ("planner", "detector", "collector", "answerer", "judge", "stopper")

DEFAULT_PROMPT_DIR = Path(__file__).parent / "prompts"

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class GatewayError(RuntimeError):
    pass


class ScoreParseError(ValueError):
    pass


@dataclass(frozen=True)
class ModelRequest:
    role: str
    template_id: str
    variables: dict[str, str] = field(default_factory=dict)
    # PNG bytes for live backends, or the structured visible-entity summary
    # for the scripted backend; None for text-only calls.
    image_payload: Optional[bytes | list] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown model role: {self.role}")


def request_hash(request: ModelRequest) -> str:
    if isinstance(request.image_payload, bytes):
        image_key = hashlib.sha256(request.image_payload).hexdigest()
    elif request.image_payload is None:
        image_key = None
    else:
        image_key = request.image_payload
    blob = json.dumps(
        {
            "role": request.role,
            "template_id": request.template_id,
            "variables": request.variables,
            "image": image_key,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class PromptLibrary:
    """Loads {{placeholder}} templates from a directory, one .txt per id."""

    def __init__(self, directory: str | Path = DEFAULT_PROMPT_DIR):
        self.directory = Path(directory)
        self._cache: dict[str, str] = {}

    def template(self, template_id: str) -> str:
        if template_id not in self._cache:
            path = self.directory / f"{template_id}.txt"
            if not path.exists():
                raise GatewayError(f"unknown prompt template: {template_id}")
            self._cache[template_id] = path.read_text()
        return self._cache[template_id]

    def fill(self, template_id: str, variables: dict[str, str]) -> str:
        text = self.template(template_id)
        missing = [name for name in _PLACEHOLDER.findall(text) if name not in variables]
        if missing:
            raise GatewayError(f"template {template_id} missing variables: {missing}")
        return _PLACEHOLDER.sub(lambda m: str(variables[m.group(1)]), text)


class ScriptedRules:
    """Per-role deterministic handlers; must cover every role it is asked."""

    def __init__(self, handlers: dict[str, Callable[[ModelRequest], str]]):
        self.handlers = dict(handlers)

    def reply(self, request: ModelRequest) -> str:
        handler = self.handlers.get(request.role)
        if handler is None:
            raise GatewayError(f"no scripted rule for role {request.role}")
        return handler(request)

    def with_overrides(self, **handlers: Callable[[ModelRequest], str]) -> "ScriptedRules":
        merged = dict(self.handlers)
        merged.update(handlers)
        return ScriptedRules(merged)


class ScriptedBackend:
    def __init__(self, rules: ScriptedRules):
        self.rules = rules

    def complete(self, request: ModelRequest, filled_prompt: str) -> str:
        return self.rules.reply(request)


class ReplayBackend:
    """Serves recorded replies in order; diverging requests are an error."""

    def __init__(self, entries: list[dict]):
        self.entries = entries
        self._pos = 0
        self._lock = threading.Lock()

    @staticmethod
    def from_file(path: str | Path) -> "ReplayBackend":
        entries = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        return ReplayBackend(entries)

    def complete(self, request: ModelRequest, filled_prompt: str) -> str:
        with self._lock:
            if self._pos >= len(self.entries):
                raise GatewayError("replay transcript exhausted")
            entry = self.entries[self._pos]
            self._pos += 1
        expected = entry["request_hash"]
        actual = request_hash(request)
        if expected != actual:
            raise GatewayError(
                f"replay divergence at call {self._pos}: expected {expected[:12]}, got {actual[:12]}"
            )
        return entry["reply"]


class HttpBackend:
    """OpenAI-compatible chat completions with retry and timeout."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def complete(self, request: ModelRequest, filled_prompt: str) -> str:
        content: list[dict] = [{"type": "text", "text": filled_prompt}]
        if isinstance(request.image_payload, bytes):
            b64 = base64.b64encode(request.image_payload).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
        elif request.image_payload is not None:
            content.append({"type": "text", "text": json.dumps(request.image_payload)})
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
        }
        headers = {}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.config.retries):
            try:
                resp = httpx.post(url, json=payload, headers=headers, timeout=self.config.timeout_s)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.config.retries - 1:
                    time.sleep(2.0**attempt)
        raise GatewayError(f"model call failed after {self.config.retries} attempts: {last_error}")


class Gateway:
    """Prompt templating + backend dispatch + transcript logging."""

    def __init__(self, backend, prompts: PromptLibrary | None = None, transcript_path: str | Path | None = None):
        self.backend = backend
        self.prompts = prompts or PromptLibrary()
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self.transcript: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest) -> str:
        filled = self.prompts.fill(request.template_id, request.variables)
        reply = self.backend.complete(request, filled)
        entry = {
            "index": None,
            "role": request.role,
            "template_id": request.template_id,
            "request_hash": request_hash(request),
            "reply": reply,
        }
        with self._lock:
            entry["index"] = len(self.transcript)
            self.transcript.append(entry)
            if self.transcript_path:
                with self.transcript_path.open("a") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return reply

    def reset_transcript(self) -> None:
        with self._lock:
            self.transcript = []


_SCORE_AFTER_TOKEN = re.compile(r"score[^0-9]*?([1-5])", re.IGNORECASE)
_STANDALONE = re.compile(r"(?<![\d.])([1-5])(?![\d.])")


def parse_score(reply: str) -> int:
    """Extract a 1..5 judge score from free text.

    The first digit after the last "score" token wins; without a score
    token, the last standalone 1-5 digit in the text is used.
    """
    matches = list(_SCORE_AFTER_TOKEN.finditer(reply))
    if matches:
        return int(matches[-1].group(1))
    bare = list(_STANDALONE.finditer(reply))
    if bare:
        return int(bare[-1].group(1))
    raise ScoreParseError(f"no score found in reply: {reply[:120]!r}")
