"""Text-generation evaluation: ROUGE-1/2/L, embedder-based greedy token
matching (BERTScore-style), judge scoring, and per-label aggregation.

ROUGE is computed with exact rational arithmetic (clipped counts, F-measure
with beta = 1, sentence-agnostic LCS) so scores can be compared exactly
against independent oracles. Baseline rescaling of the embedding score is
deliberately off: rescaling constants are embedder-specific and the embedder
is pluggable.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import LABEL_ORDER, VeracityLabel
from .oracle import DecodingParams, Oracle
from .templates import load_template

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize_for_rouge(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation, dropping the punctuation."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    """Precision/recall/F1 as exact rationals in [0, 1]."""

    precision: Fraction
    recall: Fraction
    f1: Fraction

    @classmethod
    def from_counts(cls, overlap: int, n_candidate: int, n_reference: int) -> "RougeScore":
        p = Fraction(overlap, n_candidate) if n_candidate else Fraction(0)
        r = Fraction(overlap, n_reference) if n_reference else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        return cls(p, r, f)

    def as_floats(self) -> tuple[float, float, float]:
        return float(self.precision), float(self.recall), float(self.f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap score; n must be 1 or 2."""
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cand = _ngrams(tokenize_for_rouge(candidate), n)
    ref = _ngrams(tokenize_for_rouge(reference), n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence score over the whole token sequences."""
    cand = tokenize_for_rouge(candidate)
    ref = tokenize_for_rouge(reference)
    lcs = _lcs_length(cand, ref)
    return RougeScore.from_counts(lcs, len(cand), len(ref))


# --------------------------------------------------------------------------
# Embedding-based score


class TokenEmbedder(Protocol):
    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        """Map a token sequence to an array of shape (len(tokens), dim)."""
        ...


class HashedRandomEmbedder:
    """Deterministic per-token gaussian vectors; a lightweight stand-in for a
    pretrained embedder. The same token always gets the same unit vector."""

    def __init__(self, dim: int = 64, seed: int = 13):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            material = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(material[:8], "big")))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(t) for t in tokens])


class OneHotEmbedder:
    """Orthogonal one-hot vectors, assigning an index to each new token."""

    def __init__(self, dim: int = 1024):
        self.dim = dim
        self._index: dict[str, int] = {}

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for row, token in enumerate(tokens):
            idx = self._index.setdefault(token, len(self._index))
            if idx >= self.dim:
                raise ValueError(f"OneHotEmbedder vocabulary exceeded dim={self.dim}")
            out[row, idx] = 1.0
        return out


def bertscore(candidate: str, reference: str, embedder: TokenEmbedder) -> float:
    """Greedy cosine token matching F1 in [0, 1].

    Recall averages, over reference tokens, the best cosine against any
    candidate token; precision is symmetric; F1 is their harmonic mean.
    Either side empty scores 0 with a warning.
    """
    cand_tokens = tokenize_for_rouge(candidate)
    ref_tokens = tokenize_for_rouge(reference)
    if not cand_tokens or not ref_tokens:
        logger.warning("bertscore: empty %s side, scoring 0",
                       "candidate" if not cand_tokens else "reference")
        return 0.0
    cand = np.asarray(embedder.embed(cand_tokens), dtype=np.float64)
    ref = np.asarray(embedder.embed(ref_tokens), dtype=np.float64)
    cand_norm = np.linalg.norm(cand, axis=1, keepdims=True)
    ref_norm = np.linalg.norm(ref, axis=1, keepdims=True)
    cand = np.divide(cand, cand_norm, out=np.zeros_like(cand), where=cand_norm > 0)
    ref = np.divide(ref, ref_norm, out=np.zeros_like(ref), where=ref_norm > 0)
    sim = cand @ ref.T  # (n_cand, n_ref)
    # Negative mean similarity floors at 0: anti-correlated best matches
    # carry no support, and the score contract is [0, 1].
    precision = max(0.0, float(sim.max(axis=1).mean()))
    recall = max(0.0, float(sim.max(axis=0).mean()))
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# --------------------------------------------------------------------------
# Judge scoring


@dataclass(frozen=True)
class JudgeScore:
    """Correctness/completeness in [0, 1] plus the verbatim judge responses."""

    correctness: float
    completeness: float
    raw_correctness: str
    raw_completeness: str


_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)")

CORRECTNESS_TEMPLATE_ID = "judge_correctness_v1"
COMPLETENESS_TEMPLATE_ID = "judge_completeness_v1"

_FORMAT_REMINDER = (
    "\nReminder: respond with only one decimal number between 0 and 1."
)


def _parse_score(response: str) -> float | None:
    match = _NUMBER_RE.search(response)
    return float(match.group()) if match else None


def _clamp_score(value: float, dimension: str) -> float:
    if not 0.0 <= value <= 1.0:
        clamped = min(1.0, max(0.0, value))
        logger.warning("judge %s score %s out of [0, 1]; clamped to %s",
                       dimension, value, clamped)
        return clamped
    return value


def _ask_judge(judge: Oracle, prompt: str, params: DecodingParams,
               dimension: str) -> tuple[float | None, str]:
    response = judge.send(prompt, params)
    score = _parse_score(response)
    if score is None:
        response = judge.send(prompt + _FORMAT_REMINDER, params)
        score = _parse_score(response)
    if score is None:
        logger.warning("judge %s response unparseable after retry: %r",
                       dimension, response[:120])
        return None, response
    return _clamp_score(score, dimension), response


def judge_justification(
    justification: str,
    reference_review: str,
    judge: Oracle,
    params: DecodingParams | None = None,
) -> JudgeScore | None:
    """Score a justification for correctness and completeness on [0, 1].

    Sends two separate prompts (one per dimension). Returns None when either
    score is unparseable after one retry, leaving the record unjudged.
    """
    params = params or DecodingParams()
    scores = {}
    raws = {}
    for dimension, template_id in (
        ("correctness", CORRECTNESS_TEMPLATE_ID),
        ("completeness", COMPLETENESS_TEMPLATE_ID),
    ):
        template = load_template(template_id)
        prompt = template.render(reference=reference_review, candidate=justification)
        score, raw = _ask_judge(judge, prompt, params, dimension)
        if score is None:
            return None
        scores[dimension] = score
        raws[dimension] = raw
    return JudgeScore(
        correctness=scores["correctness"],
        completeness=scores["completeness"],
        raw_correctness=raws["correctness"],
        raw_completeness=raws["completeness"],
    )


# --------------------------------------------------------------------------
# Per-label aggregation


def per_label_report(
    items: Iterable[tuple[VeracityLabel, Mapping[str, float]]],
) -> dict[str, dict[VeracityLabel, float]]:
    """Arithmetic mean per (metric, gold label) cell.

    Cells with no contributing items are absent from the result rather than
    zero-filled. Means use math.fsum, so the report is invariant under input
    permutation.
    """
    sums: dict[str, dict[VeracityLabel, list[float]]] = {}
    for label, metric_values in items:
        for metric, value in metric_values.items():
            sums.setdefault(metric, {}).setdefault(label, []).append(float(value))
    report: dict[str, dict[VeracityLabel, float]] = {}
    for metric, per_label in sums.items():
        report[metric] = {
            label: math.fsum(values) / len(values)
            for label, values in per_label.items()
        }
    return report


def format_metric_table(
    report: Mapping[str, Mapping[VeracityLabel, float]],
    metrics: Sequence[str] | None = None,
) -> str:
    """Aligned plain-text table: one row per metric, one column per label."""
    metric_names = list(metrics) if metrics is not None else sorted(report)
    headers = ["metric"] + [label.display for label in LABEL_ORDER]
    rows = []
    for name in metric_names:
        cells = [name]
        for label in LABEL_ORDER:
            value = report.get(name, {}).get(label)
            cells.append("-" if value is None else f"{value:.4f}")
        rows.append(cells)
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
