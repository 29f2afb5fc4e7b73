"""Text-generation clients.

One HTTP client speaking the common chat-completions JSON protocol, plus
deterministic offline stubs that cover the three generation tasks (query
rewriting, chunk atomization, question writing) so the whole pipeline runs
hermetically in tests and demos. Prompt templates for the three tasks live
here as the single source of truth.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Protocol

import requests

from .errors import ConfigError, GenerationError, ProtocolError, TransportError
from .text import split_sentences

logger = logging.getLogger(__name__)

PROMPT_TEMPLATES = {
    "rewrite": "Please write a full sentence answer to the following question. {query}",
    "atomize": (
        "Please breakdown the following paragraph into stand-alone atomic facts. "
        "Return each fact on a new line. {chunk}"
    ),
    "question": (
        "Generate a single closed-answer question using: {chunk}\n"
        "The answer should be present in: {atom}"
    ),
}

_REQUIRED_SLOTS = {
    "rewrite": ("query",),
    "atomize": ("chunk",),
    "question": ("chunk", "atom"),
}

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


def render_prompt(task: str, slots: Mapping[str, str]) -> str:
    """Fill the template for `task` with `slots`; unknown task or missing
    slot raises ConfigError naming the problem."""
    template = PROMPT_TEMPLATES.get(task)
    if template is None:
        raise ConfigError(f"unknown prompt task {task!r}")
    out = template
    for name in _REQUIRED_SLOTS[task]:
        if name not in slots:
            raise ConfigError(f"prompt task {task!r} is missing slot {name!r}")
        out = out.replace("{" + name + "}", slots[name])
    return out


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.0
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ConfigError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class ClientConfig:
    endpoint_url: str
    model_name: str
    api_key_env: str = "ATOMLITH_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if not self.endpoint_url:
            raise ConfigError("endpoint_url must be non-empty")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.backoff_base < 0:
            raise ConfigError("backoff_base must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")


class GenerationClient(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


def post_json_with_retries(
    url: str,
    payload: Mapping[str, Any],
    *,
    headers: Mapping[str, str],
    timeout: float,
    max_retries: int,
    backoff_base: float,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    """POST JSON and return the decoded response body.

    Connection errors, timeouts, and retryable statuses (429 and 5xx) are
    retried up to `max_retries` times with geometrically growing delays
    (base, 2*base, 4*base, ...). Other non-2xx statuses fail immediately
    with a TransportError carrying the status code.
    """
    attempt = 0
    while True:
        retryable = True
        try:
            resp = requests.post(url, json=payload, headers=dict(headers), timeout=timeout)
        except requests.Timeout as exc:
            err: TransportError = TransportError(f"request to {url} timed out after {timeout}s")
            err.__cause__ = exc
        except requests.RequestException as exc:
            err = TransportError(f"request to {url} failed: {exc}")
            err.__cause__ = exc
        else:
            if 200 <= resp.status_code < 300:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"non-JSON response from {url}") from exc
            err = TransportError(
                f"{url} returned HTTP {resp.status_code}", status=resp.status_code
            )
            retryable = resp.status_code in RETRYABLE_STATUSES
        if not retryable or attempt >= max_retries:
            raise err
        delay = backoff_base * (2 ** attempt)
        logger.warning("retrying %s in %.2fs (%s)", url, delay, err)
        sleep(delay)
        attempt += 1


class HttpGenerationClient:
    """Chat-completions client for an OpenAI-style endpoint.

    The API key is read from the environment variable named in the config
    and sent as a bearer token. At most `max_in_flight` requests are in
    flight at once across threads sharing this client.
    """

    def __init__(self, config: ClientConfig, *, sleep: Callable[[float], None] = time.sleep):
        self._config = config
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)

    def generate(self, request: GenerationRequest) -> str:
        cfg = self._config
        payload: dict[str, Any] = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = cfg.endpoint_url.rstrip("/") + "/chat/completions"
        with self._semaphore:
            body = post_json_with_retries(
                url,
                payload,
                headers=headers,
                timeout=cfg.timeout,
                max_retries=cfg.max_retries,
                backoff_base=cfg.backoff_base,
                sleep=self._sleep,
            )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat-completions response from {url}") from exc
        if not isinstance(content, str):
            raise ProtocolError(f"chat-completions content from {url} is not a string")
        return content


@dataclass(frozen=True)
class FixedResponseClient:
    """Pure lookup stub mapping exact prompts to canned responses."""

    table: Mapping[str, str]
    default: str | None = None

    def generate(self, request: GenerationRequest) -> str:
        if request.prompt in self.table:
            return self.table[request.prompt]
        if self.default is not None:
            return self.default
        raise GenerationError(f"no canned response for prompt {request.prompt[:80]!r}")


_ATOMIZE_PREFIX = PROMPT_TEMPLATES["atomize"].split("{chunk}")[0]
_REWRITE_PREFIX = PROMPT_TEMPLATES["rewrite"].split("{query}")[0]
_QUESTION_PREFIX = PROMPT_TEMPLATES["question"].split("{chunk}")[0]
_QUESTION_SEP = "\nThe answer should be present in: "

DEFAULT_QUESTION_TEMPLATES = (
    "What does the passage say about {topic}?",
    "Which part of the passage mentions {topic}?",
    "According to the passage, what is stated about {topic}?",
)


class StubGenerationClient:
    """Deterministic offline client covering all three pipeline tasks.

    Atomization prompts echo the chunk's sentences one per line. Rewrite
    prompts echo the query in declarative form. Question prompts cycle
    through template variants built from the atom's leading tokens; the
    cycle position is tracked per prompt, so a fresh client replayed over
    the same store emits byte-identical artifacts.
    """

    def __init__(self, question_templates: tuple[str, ...] = DEFAULT_QUESTION_TEMPLATES):
        if not question_templates:
            raise ConfigError("at least one question template is required")
        self._templates = tuple(question_templates)
        self._cursors: defaultdict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> str:
        prompt = request.prompt
        if prompt.startswith(_ATOMIZE_PREFIX):
            chunk = prompt[len(_ATOMIZE_PREFIX):]
            return "\n".join(split_sentences(chunk))
        if prompt.startswith(_REWRITE_PREFIX):
            query = prompt[len(_REWRITE_PREFIX):].strip()
            return f"The answer is: {query.rstrip('?')}."
        if prompt.startswith(_QUESTION_PREFIX) and _QUESTION_SEP in prompt:
            atom = prompt.split(_QUESTION_SEP, 1)[1]
            topic = " ".join(atom.split()[:6])
            with self._lock:
                cursor = self._cursors[prompt]
                self._cursors[prompt] = cursor + 1
            return self._templates[cursor % len(self._templates)].replace("{topic}", topic)
        raise GenerationError(f"stub cannot answer prompt {prompt[:80]!r}")
