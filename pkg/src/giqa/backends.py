"""Model backend interfaces: HTTP clients for the four model roles, plus
deterministic mocks keyed by request digest.

Roles:
    TextCompleter  -- free-text completion (tag extraction, QA generation)
    Detector       -- phrase-conditioned object detection
    QualityVerifier -- yes/no quality check on an image patch
    ScoreJudge     -- 0..4 rubric scoring of a candidate vs reference
"""
from __future__ import annotations

import base64
import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Protocol, Sequence

import requests

from .coords import NormBox


class BackendError(Exception):
    pass


class TransportError(BackendError):
    pass


class TimeoutExceeded(BackendError):
    pass


class RateLimited(BackendError):
    pass


class UnparseableScore(BackendError):
    pass


class Verdict(Enum):
    YES = "Yes"
    NO = "No"
    UNPARSEABLE = "Unparseable"


@dataclass(frozen=True)
class Detection:
    box: NormBox
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of range: {self.confidence}")


@dataclass
class BackendConfig:
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    concurrency: int = 4
    request_seed: int = 0
    api_key_env: str = "GIQA_API_KEY"
    box_threshold: float = 0.35

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


class TextCompleter(Protocol):
    def complete(self, prompt: str) -> str: ...


class Detector(Protocol):
    def detect(self, image: bytes, phrase: str) -> list[Detection]: ...


class QualityVerifier(Protocol):
    def verify_quality(self, patch: bytes, question: str) -> Verdict: ...


class ScoreJudge(Protocol):
    def judge_score(self, instruction: str) -> int: ...


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_SCORE_RE = re.compile(r"\b([0-4])\b")


def parse_yes_no(text: str) -> Verdict:
    """First standalone yes/no word, case-insensitive."""
    m = _YES_NO_RE.search(text)
    if m is None:
        return Verdict.UNPARSEABLE
    return Verdict.YES if m.group(1).lower() == "yes" else Verdict.NO


def parse_score(text: str) -> Optional[int]:
    """First standalone integer 0..4, or None."""
    m = _SCORE_RE.search(text)
    return int(m.group(1)) if m else None


def request_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ChatCompletionsClient:
    """Chat-completions-style HTTP client with retry, backoff, and a
    per-client concurrency bound."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None):
        self.config = config
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(config.concurrency)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_messages(self, messages: list[dict]) -> str:
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": 0,
            "seed": self.config.request_seed,
        }
        last: Exception = TransportError("no attempt made")
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            with self._slots:
                try:
                    resp = self._session.post(
                        self.config.endpoint,
                        json=payload,
                        headers=self._headers(),
                        timeout=self.config.timeout,
                    )
                except requests.Timeout as e:
                    last = TimeoutExceeded(str(e))
                    continue
                except requests.RequestException as e:
                    last = TransportError(str(e))
                    continue
            if resp.status_code == 429:
                last = RateLimited(f"HTTP 429 from {self.config.endpoint}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise TransportError(f"malformed completion response: {e}")
        raise last

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        return self._post_messages([{"role": "user", "content": prompt}])

    def complete_with_image(self, prompt: str, image: bytes) -> str:
        content = [
            {"type": "text", "text": prompt},
            {
                "type": "image_url",
                "image_url": {
                    "url": "data:image/png;base64," + base64.b64encode(image).decode("ascii")
                },
            },
        ]
        return self._post_messages([{"role": "user", "content": content}])


class HttpVerifier:
    def __init__(self, client: ChatCompletionsClient):
        self._client = client

    def verify_quality(self, patch: bytes, question: str) -> Verdict:
        return parse_yes_no(self._client.complete_with_image(question, patch))


class HttpJudge:
    """Judge over a chat client; one retry on an unparseable score."""

    def __init__(self, client: ChatCompletionsClient):
        self._client = client

    def judge_score(self, instruction: str) -> int:
        if not instruction:
            raise ValueError("instruction must be nonempty")
        for _ in range(2):
            score = parse_score(self._client.complete(instruction))
            if score is not None:
                return score
        raise UnparseableScore("judge reply contained no integer 0..4")


class HttpDetector:
    """Detector over an HTTP JSON endpoint:
    request {image: base64, phrase, box_threshold},
    reply {detections: [{box: [x1,y1,x2,y2], score}]}."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None):
        self.config = config
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(config.concurrency)

    def detect(self, image: bytes, phrase: str) -> list[Detection]:
        if not phrase:
            raise ValueError("phrase must be nonempty")
        payload = {
            "image": base64.b64encode(image).decode("ascii"),
            "phrase": phrase,
            "box_threshold": self.config.box_threshold,
        }
        last: Exception = TransportError("no attempt made")
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            with self._slots:
                try:
                    resp = self._session.post(
                        self.config.endpoint, json=payload, timeout=self.config.timeout
                    )
                except requests.Timeout as e:
                    last = TimeoutExceeded(str(e))
                    continue
                except requests.RequestException as e:
                    last = TransportError(str(e))
                    continue
            if resp.status_code == 429:
                last = RateLimited("HTTP 429")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                raw = resp.json()["detections"]
                dets = [
                    Detection(NormBox(*d["box"]), float(d["score"])) for d in raw
                ]
            except (ValueError, KeyError, TypeError) as e:
                raise TransportError(f"malformed detector response: {e}")
            dets = [d for d in dets if d.confidence >= self.config.box_threshold]
            return sorted(dets, key=lambda d: -d.confidence)
        raise last


# ---------------------------------------------------------------------------
# Deterministic mocks. Each is a pure function of (fixtures, request digest),
# so identical runs reproduce identical outputs end to end.


@dataclass
class MockCompleter:
    """Replies from a digest(prompt) -> text map, with an optional default."""

    fixtures: Mapping[str, str] = field(default_factory=dict)
    default: Optional[str] = None
    fail_unknown: bool = True

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        digest = request_digest(prompt)
        if digest in self.fixtures:
            return self.fixtures[digest]
        if self.default is not None:
            return self.default
        if self.fail_unknown:
            raise TransportError(f"no fixture for prompt digest {digest[:12]}")
        return ""


@dataclass
class MockDetector:
    """Detections from a phrase -> [[x1,y1,x2,y2,score], ...] map."""

    fixtures: Mapping[str, Sequence[Sequence[float]]] = field(default_factory=dict)
    box_threshold: float = 0.35

    def detect(self, image: bytes, phrase: str) -> list[Detection]:
        if not phrase:
            raise ValueError("phrase must be nonempty")
        rows = self.fixtures.get(phrase, [])
        dets = [Detection(NormBox(*r[:4]), float(r[4])) for r in rows]
        dets = [d for d in dets if d.confidence >= self.box_threshold]
        return sorted(dets, key=lambda d: -d.confidence)


@dataclass
class MockVerifier:
    """Replies by question text (falling back to `default`), or from a
    scripted reply sequence consumed in call order when `script` is set."""

    fixtures: Mapping[str, str] = field(default_factory=dict)
    default: str = "Yes"
    script: Optional[list[str]] = None

    def verify_quality(self, patch: bytes, question: str) -> Verdict:
        if self.script is not None:
            if not self.script:
                raise TransportError("mock verifier script exhausted")
            return parse_yes_no(self.script.pop(0))
        return parse_yes_no(self.fixtures.get(question, self.default))


@dataclass
class MockJudge:
    """Scores from a digest(instruction) -> int map with a default score."""

    fixtures: Mapping[str, int] = field(default_factory=dict)
    default: int = 4

    def judge_score(self, instruction: str) -> int:
        if not instruction:
            raise ValueError("instruction must be nonempty")
        score = self.fixtures.get(request_digest(instruction), self.default)
        if not (0 <= score <= 4):
            raise UnparseableScore(f"fixture score {score} outside 0..4")
        return score
