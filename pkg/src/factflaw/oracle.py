"""Text-completion client contract shared by distillation and judge scoring.

A client is anything with ``send(prompt, params) -> str``. The package ships
deterministic implementations for testing and offline runs: a callable
wrapper, a fixture store keyed by prompt hash, and content-derived mocks that
emit parseable aspect/flaw/score responses. Hosted APIs or local models plug
in behind the same contract.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

logger = logging.getLogger(__name__)


class OracleTransportError(Exception):
    """The client could not produce a response (network, missing fixture...)."""


@dataclass(frozen=True)
class DecodingParams:
    # Temperature 0 keeps distillation reproducible.
    temperature: float = 0.0
    max_tokens: int = 512


@dataclass(frozen=True)
class OracleRequest:
    prompt: str
    params: DecodingParams


@dataclass(frozen=True)
class OracleResponse:
    text: str
    finish_status: str = "complete"


class Oracle(Protocol):
    def send(self, prompt: str, params: DecodingParams) -> str: ...


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass
class CallableOracle:
    fn: Callable[[str, DecodingParams], str]

    def send(self, prompt: str, params: DecodingParams) -> str:
        return self.fn(prompt, params)


class FixtureOracle:
    """Replays recorded responses keyed by a hash of the exact prompt."""

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureOracle":
        responses = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    responses[entry["prompt_sha"]] = entry["response"]
        return cls(responses)

    def send(self, prompt: str, params: DecodingParams) -> str:
        key = prompt_key(prompt)
        try:
            return self.responses[key]
        except KeyError:
            raise OracleTransportError(f"no fixture response for prompt {key[:12]}") from None


class RecordingOracle:
    """Wraps another client, retaining every exchange verbatim for audit."""

    def __init__(self, inner: Oracle):
        self.inner = inner
        self.exchanges: list[tuple[OracleRequest, OracleResponse]] = []

    def send(self, prompt: str, params: DecodingParams) -> str:
        text = self.inner.send(prompt, params)
        self.exchanges.append((OracleRequest(prompt, params), OracleResponse(text)))
        return text


class RateLimitedOracle:
    """Enforces a minimum interval between calls to the wrapped client.

    Thread-safe: when a worker pool shares one hosted-API client, wrap it in
    this so the pool as a whole respects the provider's rate limit.
    """

    def __init__(self, inner: Oracle, min_interval_s: float):
        if min_interval_s < 0:
            raise ValueError("min_interval_s must be >= 0")
        self.inner = inner
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def send(self, prompt: str, params: DecodingParams) -> str:
        while True:
            with self._lock:
                now = time.monotonic()
                if now >= self._next_allowed:
                    self._next_allowed = now + self.min_interval_s
                    break
                wait = self._next_allowed - now
            time.sleep(wait)
        return self.inner.send(prompt, params)


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


_CLAIM_LINE = re.compile(r"^Claim:\s*$", re.MULTILINE)
_CHECKLIST_ITEM = re.compile(r"^- (?P<name>[A-Za-z]+):", re.MULTILINE)

_MOCK_ASPECT_TITLES = (
    "Source reliability",
    "Numerical accuracy",
    "Timeline consistency",
    "Expert consensus",
    "Context completeness",
    "Causal attribution",
    "Legal standing",
    "Financial records",
)


def _claim_from_prompt(prompt: str) -> str:
    match = _CLAIM_LINE.search(prompt)
    if not match:
        return prompt[:80]
    rest = prompt[match.end():].lstrip("\n")
    return rest.split("\n", 1)[0].strip()


class DeterministicMockOracle:
    """Content-derived mock for aspect and flaw prompts.

    Responses depend only on the claim text found in the prompt (and, for
    flaw prompts, on the checklist the prompt carries), so reruns are
    byte-identical. ``present_every`` controls how often a flaw is judged
    present (every n-th hash bucket).
    """

    def __init__(self, present_every: int = 3, n_aspects: int | None = None):
        self.present_every = present_every
        self.n_aspects = n_aspects
        self.calls = 0

    def send(self, prompt: str, params: DecodingParams) -> str:
        self.calls += 1
        claim = _claim_from_prompt(prompt)
        checklist = _CHECKLIST_ITEM.findall(prompt)
        if checklist:
            return self._flaw_response(claim, checklist)
        if "ASPECT" in prompt:
            return self._aspect_response(claim)
        return self._justification_response(claim, prompt)

    def _aspect_response(self, claim: str) -> str:
        seed = _stable_int("aspects:" + claim)
        count = self.n_aspects or (1 + seed % 4)
        lines = []
        for i in range(count):
            title = _MOCK_ASPECT_TITLES[(seed + i) % len(_MOCK_ASPECT_TITLES)]
            lines.append(
                f"ASPECT {i + 1}: {title}: Whether the available records on "
                f"{title.lower()} bear out the claim that {claim.rstrip('.')}."
            )
        return "\n".join(lines)

    def _flaw_response(self, claim: str, checklist: list[str]) -> str:
        lines = []
        for name in checklist:
            bucket = _stable_int(f"flaw:{name}:{claim}") % self.present_every
            if bucket == 0:
                lines.append(
                    f"FLAW {name}: PRESENT - The review of this claim shows "
                    f"{name.lower()} issues once checked against the record."
                )
            else:
                lines.append(f"FLAW {name}: ABSENT")
        return "\n".join(lines)

    def _justification_response(self, claim: str, prompt: str) -> str:
        present = re.findall(r"PRESENT - (.+)", prompt)
        parts = [f"The claim that {claim.rstrip('.')} was checked against the evidence."]
        if present:
            parts.append("Problems found: " + " ".join(present))
        else:
            parts.append("No defect in the claim was identified; the record supports it.")
        return " ".join(parts)


class MockJudge:
    """Deterministic judge: the score is a hash of the graded pair."""

    def __init__(self) -> None:
        self.calls = 0

    def send(self, prompt: str, params: DecodingParams) -> str:
        self.calls += 1
        value = (_stable_int("judge:" + prompt) % 1001) / 1000.0
        return f"{value:.3f}"
