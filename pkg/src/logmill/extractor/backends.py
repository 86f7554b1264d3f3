"""Chat-completion backends: remote endpoint, ground-truth oracle, replay.

All backends expose ``complete(prompt) -> str``.  The oracle and replay
backends exist so the whole pipeline can run offline: the oracle answers
prompts from a labeled content->template map in the same textual format a
served model would, and the replay backend returns previously recorded
responses keyed by a hash of the exact prompt bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import httpx
import numpy as np

from ..model import AllVariableTemplateWarning, normalize_template

DEFAULT_API_KEY_ENV = "LOGMILL_API_KEY"
DEFAULT_CHAT_PATH = "/v1/chat/completions"
DEFAULT_EMBEDDINGS_PATH = "/v1/embeddings"

_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class ChatBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


class ExtractionUnavailable(RuntimeError):
    """The backend could not produce a response after all retries."""


class OracleMiss(KeyError):
    """The ground-truth oracle has no label for a queried log."""


class ReplayMiss(KeyError):
    """The replay file has no response for this prompt hash."""


class ReplayCorrupt(ValueError):
    """A replay file line is not a valid record."""


def request_hash(prompt: str) -> str:
    """Lowercase hex SHA-256 of the exact prompt string."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# ---- remote endpoint ----


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    jitter: float = 0.1


class _RetryingEndpoint:
    """POSTs JSON with exponential backoff; shared by chat and embeddings."""

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 30.0,
        retry: RetryPolicy | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.retry = retry or RetryPolicy()
        self._client = httpx.Client(
            base_url=base_url, timeout=timeout, transport=transport
        )
        self._headers = {}
        api_key = os.environ.get(api_key_env)
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _delay(self, attempt: int) -> float:
        base = min(
            self.retry.backoff_cap, self.retry.backoff_base * 2 ** (attempt - 1)
        )
        return base + self._rng.uniform(0.0, self.retry.jitter)

    def post_json(
        self, path: str, payload: dict, parse: Callable[[Any], Any]
    ) -> Any:
        last_error: Exception | None = None
        for attempt in range(self.retry.max_attempts):
            if attempt:
                self._sleep(self._delay(attempt))
            try:
                response = self._client.post(
                    path, json=payload, headers=self._headers
                )
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = RuntimeError(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                # Auth/requests errors will not heal by retrying.
                raise ExtractionUnavailable(
                    f"endpoint returned HTTP {response.status_code}: "
                    f"{response.text[:200]}"
                )
            try:
                return parse(response.json())
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = exc
                continue
        raise ExtractionUnavailable(
            f"no usable response after {self.retry.max_attempts} attempts: "
            f"{last_error!r}"
        )


class RemoteChatBackend:
    """Chat-completion HTTP endpoint, called at temperature 0."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        path: str = DEFAULT_CHAT_PATH,
        temperature: float = 0.0,
        **endpoint_kwargs,
    ):
        self.model = model
        self.path = path
        self.temperature = temperature
        self._endpoint = _RetryingEndpoint(base_url, **endpoint_kwargs)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        return self._endpoint.post_json(
            self.path,
            payload,
            parse=lambda data: data["choices"][0]["message"]["content"],
        )


class RemoteEmbedder:
    """Embedding HTTP endpoint; returns unit-norm float64 vectors."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        path: str = DEFAULT_EMBEDDINGS_PATH,
        **endpoint_kwargs,
    ):
        self.model = model
        self.path = path
        self._endpoint = _RetryingEndpoint(base_url, **endpoint_kwargs)

    def embed(self, text: str) -> np.ndarray:
        payload = {"model": self.model, "input": text}
        raw = self._endpoint.post_json(
            self.path, payload, parse=lambda data: data["data"][0]["embedding"]
        )
        vec = np.asarray(raw, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm else vec


# ---- ground-truth oracle ----

_CHECK_TEMPLATE_RE = re.compile(
    r'Does the template: "(.*)" apply to the following logs\?'
)
_NUMBERED_LOG_RE = re.compile(r"Log_\d+: (.*)")


def _normalized(text: str) -> str:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllVariableTemplateWarning)
        return normalize_template(text).text


class OracleBackend:
    """Answers prompts from a content -> ground-truth-template map.

    Behaves like a perfect model: extraction prompts get the labeled template
    of the query log, merge prompts get Yes/No according to whether all listed
    logs share one normalized ground-truth template.  Parsing the prompt is
    safe because this package built it.
    """

    def __init__(self, labels: Mapping[str, str]):
        self._labels = dict(labels)

    def _lookup(self, content: str) -> str:
        try:
            return self._labels[content]
        except KeyError:
            raise OracleMiss(f"no ground-truth template for {content!r}") from None

    def _numbered_logs(self, prompt: str) -> list[str]:
        logs = []
        for block in prompt.split("\n\n"):
            match = _NUMBERED_LOG_RE.fullmatch(block)
            if match:
                logs.append(match.group(1))
        return logs

    def complete(self, prompt: str) -> str:
        check = _CHECK_TEMPLATE_RE.search(prompt)
        if check:
            template = check.group(1)
            same = all(
                _normalized(self._lookup(log)) == _normalized(template)
                for log in self._numbered_logs(prompt)
            )
            return "Answer: Yes" if same else "Answer: No"
        if "Given the following logs" in prompt:
            labels = [self._lookup(log) for log in self._numbered_logs(prompt)]
            normalized = {_normalized(label) for label in labels}
            same = len(normalized) == 1
            parts = [
                f"EventTemplate_{i}: {label}"
                for i, label in enumerate(labels, start=1)
            ]
            parts.append("Reason: compared against ground truth labels")
            parts.append(f"Answer: {'Yes' if same else 'No'}")
            parts.append(f"Unified Template: {labels[0] if same else 'None'}")
            return "\n\n".join(parts)
        # Extraction prompt: the query is the last Log:/Parsed Log: pair.
        tail = prompt.rsplit("\n\nLog: ", 1)[-1]
        query = tail.split("\n\nParsed Log: ", 1)[0]
        return self._lookup(query)


# ---- replay ----


class ReplayBackend:
    """Replays recorded responses; any unknown prompt is a hard miss."""

    def __init__(self, path: str | Path):
        self._responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    self._responses[record["request_hash"]] = record[
                        "response_text"
                    ]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ReplayCorrupt(
                        f"{path}:{lineno}: not a replay record: {exc}"
                    ) from None

    def __len__(self) -> int:
        return len(self._responses)

    def complete(self, prompt: str) -> str:
        digest = request_hash(prompt)
        try:
            return self._responses[digest]
        except KeyError:
            raise ReplayMiss(
                f"no recorded response for prompt hash {digest}"
            ) from None


class ReplayRecorder:
    """Wraps any backend and records (hash, response) pairs as JSON Lines."""

    def __init__(self, inner: ChatBackend, path: str | Path):
        self._inner = inner
        self._path = Path(path)
        self._seen: set[str] = set()
        if self._path.exists():
            self._seen = set(ReplayBackend(self._path)._responses)
        self._file = open(self._path, "a", encoding="utf-8")

    def complete(self, prompt: str) -> str:
        response = self._inner.complete(prompt)
        digest = request_hash(prompt)
        if digest not in self._seen:
            self._seen.add(digest)
            line = json.dumps(
                {"request_hash": digest, "response_text": response},
                sort_keys=True,
            )
            self._file.write(line + "\n")
            self._file.flush()
        return response

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "ReplayRecorder":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
