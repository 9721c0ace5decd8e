"""Silver-label construction from (claim, review article) pairs.

An external text-completion client distills each expert review into up to
four evaluation aspects and one finding per flaw type in scope. Raw client
responses are retained verbatim in the output records for audit. Corpus-level
distillation is resumable: already-distilled claim ids are skipped, each
record is appended as one atomic line, and a single bad record never aborts
the run.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import ArticleStore, ClaimRecord, CorpusError, split_sentences
from .generation import build_flaw_checklist
from .oracle import DecodingParams, Oracle, OracleTransportError
from .taxonomy import (
    AspectParseError,
    AspectSet,
    FlawParseError,
    FlawReport,
    FlawScope,
    aspects_from_json,
    aspects_to_json,
    findings_from_json,
    findings_to_json,
    parse_aspects,
    parse_flaw_report,
)
from .templates import load_template

logger = logging.getLogger(__name__)

ASPECT_DISTILL_TEMPLATE_ID = "distill_aspects_v1"
FLAW_DISTILL_TEMPLATE_ID = "distill_flaws_v1"


class DistillError(Exception):
    pass


class UndistilledError(DistillError):
    """The oracle response stayed unparseable after the retry."""


@dataclass(frozen=True)
class DistillConfig:
    scope: FlawScope = FlawScope.F7
    # Reviews longer than this are cut down to a prefix ending at a sentence
    # boundary before prompting.
    max_review_chars: int = 6000
    params: DecodingParams = DecodingParams()


def truncate_at_sentence(text: str, max_chars: int) -> str:
    """Longest sentence-boundary prefix of ``text`` within ``max_chars``.

    Falls back to a hard character cut when even the first sentence is over
    budget.
    """
    if len(text) <= max_chars:
        return text
    kept: list[str] = []
    used = 0
    for sentence in split_sentences(text):
        cost = len(sentence.text) + (1 if kept else 0)
        if used + cost > max_chars:
            break
        kept.append(sentence.text)
        used += cost
    if not kept:
        return text[:max_chars]
    return " ".join(kept)


def build_aspect_distill_prompt(
    claim: str, review: str, config: DistillConfig | None = None
) -> str:
    config = config or DistillConfig()
    if not claim.strip() or not review.strip():
        raise DistillError("claim and review must be non-empty")
    template = load_template(ASPECT_DISTILL_TEMPLATE_ID)
    return template.render(
        claim=claim.strip(), review=truncate_at_sentence(review, config.max_review_chars)
    )


def build_flaw_distill_prompt(
    claim: str, review: str, scope: FlawScope, config: DistillConfig | None = None
) -> str:
    config = config or DistillConfig()
    if not claim.strip() or not review.strip():
        raise DistillError("claim and review must be non-empty")
    template = load_template(FLAW_DISTILL_TEMPLATE_ID)
    return template.render(
        claim=claim.strip(),
        review=truncate_at_sentence(review, config.max_review_chars),
        flaw_checklist=build_flaw_checklist(scope),
    )


_FORMAT_REMINDER = (
    "\nReminder: answer using only the exact line format requested above."
)


def _send_with_retry(oracle: Oracle, prompt: str, params: DecodingParams) -> str:
    try:
        return oracle.send(prompt, params)
    except OracleTransportError as exc:
        logger.warning("oracle transport failure, retrying once: %s", exc)
        return oracle.send(prompt, params)


def extract_aspects(
    claim: str,
    review: str,
    oracle: Oracle,
    config: DistillConfig | None = None,
) -> tuple[AspectSet, list[str]]:
    """Distill up to four aspects; returns them with the raw responses.

    Over-generation is truncated to the first four aspects (the client's own
    ranking is preserved); zero parseable aspects triggers one retry with a
    format reminder, then :class:`UndistilledError`.
    """
    config = config or DistillConfig()
    prompt = build_aspect_distill_prompt(claim, review, config)
    raw: list[str] = []
    response = _send_with_retry(oracle, prompt, config.params)
    raw.append(response)
    try:
        return parse_aspects(response), raw
    except AspectParseError:
        response = _send_with_retry(oracle, prompt + _FORMAT_REMINDER, config.params)
        raw.append(response)
        try:
            return parse_aspects(response), raw
        except AspectParseError as exc:
            raise UndistilledError(f"aspects unparseable after retry: {exc}") from exc


def extract_flaws(
    claim: str,
    review: str,
    oracle: Oracle,
    scope: FlawScope | None = None,
    config: DistillConfig | None = None,
) -> tuple[FlawReport, list[str]]:
    """Distill one finding per in-scope flaw type, plus the raw responses.

    Flaw types the response never mentions default to absent, so downstream
    training always sees definite targets.
    """
    config = config or DistillConfig()
    scope = scope or config.scope
    prompt = build_flaw_distill_prompt(claim, review, scope, config)
    raw: list[str] = []
    response = _send_with_retry(oracle, prompt, config.params)
    raw.append(response)
    try:
        return parse_flaw_report(response, scope), raw
    except FlawParseError:
        response = _send_with_retry(oracle, prompt + _FORMAT_REMINDER, config.params)
        raw.append(response)
        try:
            return parse_flaw_report(response, scope), raw
        except FlawParseError as exc:
            raise UndistilledError(f"flaws unparseable after retry: {exc}") from exc


# --------------------------------------------------------------------------
# Corpus-level distillation


@dataclass(frozen=True)
class SilverRecord:
    claim_id: str
    aspects: AspectSet
    report: FlawReport
    raw_responses: tuple[str, ...]


def silver_to_json(record: SilverRecord) -> dict:
    return {
        "claim_id": record.claim_id,
        "aspects": aspects_to_json(record.aspects),
        "findings": findings_to_json(record.report),
        "scope": record.report.scope.value,
        "raw_responses": list(record.raw_responses),
    }


def silver_from_json(data: Mapping) -> SilverRecord:
    scope = FlawScope(data["scope"])
    return SilverRecord(
        claim_id=data["claim_id"],
        aspects=aspects_from_json(data["aspects"]),
        report=findings_from_json(data["findings"], scope),
        raw_responses=tuple(data.get("raw_responses", ())),
    )


def read_silver(path: str | Path) -> dict[str, SilverRecord]:
    out: dict[str, SilverRecord] = {}
    path = Path(path)
    if not path.exists():
        return out
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = silver_from_json(json.loads(line))
                out[record.claim_id] = record
    return out


@dataclass
class DistillSummary:
    written: int
    skipped: int
    failures: list[tuple[str, str]]


def distill_record(
    record: ClaimRecord,
    review_text: str,
    oracle: Oracle,
    config: DistillConfig,
) -> SilverRecord:
    aspects, raw_a = extract_aspects(record.text, review_text, oracle, config)
    report, raw_f = extract_flaws(record.text, review_text, oracle, config.scope, config)
    return SilverRecord(
        claim_id=record.id,
        aspects=aspects,
        report=report,
        raw_responses=tuple(raw_a + raw_f),
    )


def distill_corpus(
    records: Sequence[ClaimRecord],
    store: ArticleStore,
    oracle: Oracle,
    out_path: str | Path,
    config: DistillConfig | None = None,
    workers: int = 1,
    oracle_factory: Callable[[], Oracle] | None = None,
) -> DistillSummary:
    """Distill every record with a review article into silver labels.

    Resumable: claim ids already in ``out_path`` are skipped without any
    client call. Output is appended one full line per record (single write,
    flushed), so an interrupted run resumes cleanly. Per-record failures are
    collected into the summary and written next to the output; they never
    abort the run. With ``workers > 1`` records are distilled concurrently
    (``oracle_factory`` provides one client per worker; the default shares
    the given client, which must then be thread-safe) while a single consumer
    writes results.
    """
    config = config or DistillConfig()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    done = set(read_silver(out_path))
    failures: list[tuple[str, str]] = []
    pending: list[tuple[ClaimRecord, str]] = []
    skipped = 0
    for record in records:
        if record.id in done:
            skipped += 1
            continue
        if record.review_article is None:
            failures.append((record.id, "no review article"))
            continue
        try:
            review = store.load(record.review_article).clean_text
        except (FileNotFoundError, CorpusError) as exc:
            failures.append((record.id, f"review unusable: {exc}"))
            continue
        pending.append((record, review))

    written = 0
    write_lock = threading.Lock()
    with out_path.open("a", encoding="utf-8") as fh:

        def emit(silver: SilverRecord) -> None:
            nonlocal written
            line = json.dumps(silver_to_json(silver), ensure_ascii=False) + "\n"
            with write_lock:
                fh.write(line)
                fh.flush()
                written += 1

        if workers <= 1 or len(pending) <= 1:
            for record, review in pending:
                try:
                    emit(distill_record(record, review, oracle, config))
                except (DistillError, OracleTransportError) as exc:
                    failures.append((record.id, str(exc)))
        else:
            local = threading.local()

            def get_oracle() -> Oracle:
                if oracle_factory is None:
                    return oracle
                if not hasattr(local, "oracle"):
                    local.oracle = oracle_factory()
                return local.oracle

            def work(item: tuple[ClaimRecord, str]) -> tuple[str, str] | None:
                record, review = item
                try:
                    emit(distill_record(record, review, get_oracle(), config))
                    return None
                except (DistillError, OracleTransportError) as exc:
                    return (record.id, str(exc))

            with ThreadPoolExecutor(max_workers=workers) as pool:
                for failure in pool.map(work, pending):
                    if failure is not None:
                        failures.append(failure)

    if failures:
        failures_path = out_path.with_suffix(".failures.json")
        failures_path.write_text(
            json.dumps([{"claim_id": cid, "reason": why} for cid, why in failures], indent=2),
            encoding="utf-8",
        )
        logger.warning("distillation failures: %d (see %s)", len(failures), failures_path)
    return DistillSummary(written=written, skipped=skipped, failures=failures)
