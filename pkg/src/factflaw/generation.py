"""The three sequence-to-sequence pipeline stages.

Prompt rendering for the aspect generator, the flaw checker, and the
justification generator (plus the two no-flaw baseline variants), response
parsing into structured objects, and adapter-only fine-tuning of a generative
backend on (prompt, target) pairs.

The flaw-based justification prompt deliberately takes the flaw findings but
never the aspects: the findings were produced from the aspects already, so
repeating them would only spend input budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from .backends import GenerativeBackend, TinyLMBackend
from .retriever import EvidenceSet
from .taxonomy import (
    AspectParseError,
    AspectSet,
    FLAW_DEFINITIONS,
    FlawParseError,
    FlawReport,
    FlawScope,
    parse_aspects,
    parse_flaw_report,
    serialize_aspects,
    serialize_flaw_report,
)
from .templates import PromptTemplate, TemplateError, load_template

logger = logging.getLogger(__name__)

ASPECTS_TEMPLATE_ID = "aspects_v1"
FLAWS_TEMPLATE_ID = "flaws_v1"
JUSTIFY_TEMPLATE_ID = "justify_v1"
JUSTIFY_BASELINE_TEMPLATE_ID = "justify_baseline_v1"
JUSTIFY_ASPECTS_TEMPLATE_ID = "justify_aspects_v1"


class GenerationError(Exception):
    pass


class PromptError(GenerationError):
    """A template slot is missing, forbidden, or over budget."""


@dataclass(frozen=True)
class EvidenceBudget:
    """Whole-sentence evidence truncation limits for a prompt."""

    max_sentences: int = 50
    max_chars: int = 8000


@dataclass(frozen=True)
class Justification:
    claim_id: str
    text: str
    scope: str
    evidence_ids: tuple[str, ...]
    template_id: str


def format_evidence(
    evidence: EvidenceSet | Sequence[str] | None,
    budget: EvidenceBudget | None = None,
) -> str:
    """Render evidence sentences in their given (retrieval score) order.

    Truncation keeps whole sentences: the highest-ranked sentences that fit
    both the sentence and character budget survive.
    """
    budget = budget or EvidenceBudget()
    if evidence is None:
        texts: list[str] = []
    elif isinstance(evidence, EvidenceSet):
        texts = [item.text for item in evidence]
    else:
        texts = list(evidence)
    lines: list[str] = []
    used = 0
    for i, text in enumerate(texts[: budget.max_sentences], start=1):
        line = f"[{i}] {text}"
        if lines and used + len(line) > budget.max_chars:
            break
        lines.append(line)
        used += len(line) + 1
    if not lines:
        return "(no evidence retrieved)"
    return "\n".join(lines)


def build_flaw_checklist(scope: FlawScope) -> str:
    return "\n".join(
        f"- {flaw.serialized_name}: {FLAW_DEFINITIONS[flaw]}" for flaw in scope.flaw_types
    )


def render_prompt(
    template: PromptTemplate | str,
    claim: str,
    *,
    aspects: AspectSet | None = None,
    flaw_report: FlawReport | None = None,
    evidence: EvidenceSet | Sequence[str] | None = None,
    scope: FlawScope | None = None,
    budget: EvidenceBudget | None = None,
    max_prompt_chars: int | None = None,
) -> str:
    """Fill a stage template's slots; deterministic for identical inputs.

    Every slot the template declares must be supplied, and supplying a value
    the template has no slot for is an error (e.g. aspects passed to the
    flaw-based justification template). ``max_prompt_chars`` enforces the
    backend's context limit after evidence truncation.
    """
    if not claim or not claim.strip():
        raise PromptError("claim must be non-empty")
    if isinstance(template, str):
        template = load_template(template)
    values: dict[str, str] = {"claim": claim.strip()}
    provided = {
        "aspects": aspects,
        "flaw_report": flaw_report,
        "scope": scope,
    }
    if aspects is not None:
        values["aspects"] = serialize_aspects(aspects)
    if flaw_report is not None:
        values["flaw_report"] = serialize_flaw_report(flaw_report)
    if scope is not None:
        values["flaw_checklist"] = build_flaw_checklist(scope)
    if "evidence" in template.slots:
        values["evidence"] = format_evidence(evidence, budget)
    elif evidence is not None:
        raise PromptError(f"template {template.template_id} takes no evidence")
    slot_for = {"aspects": "aspects", "flaw_report": "flaw_report", "scope": "flaw_checklist"}
    for name, value in provided.items():
        if value is not None and slot_for[name] not in template.slots:
            raise PromptError(
                f"template {template.template_id} does not accept {name}"
            )
    try:
        prompt = template.render(**values)
    except TemplateError as exc:
        raise PromptError(str(exc)) from exc
    if max_prompt_chars is not None and len(prompt) > max_prompt_chars:
        raise PromptError(
            f"rendered prompt of {len(prompt)} chars exceeds limit {max_prompt_chars}"
        )
    return prompt


# --------------------------------------------------------------------------
# Stage operations

_FORMAT_REMINDER = (
    "\nReminder: answer using only the exact line format requested above."
)


def generate_aspects(
    backend: GenerativeBackend,
    claim: str,
    evidence: EvidenceSet | Sequence[str] | None,
    budget: EvidenceBudget | None = None,
) -> AspectSet:
    """Run the aspect generator; one retry with a format reminder on parse failure."""
    prompt = render_prompt(ASPECTS_TEMPLATE_ID, claim, evidence=evidence, budget=budget)
    response = backend.generate(prompt)
    try:
        return parse_aspects(response)
    except AspectParseError:
        logger.warning("aspect response unparseable, retrying once")
        response = backend.generate(prompt + _FORMAT_REMINDER)
        return parse_aspects(response)


def check_flaws(
    backend: GenerativeBackend,
    claim: str,
    aspects: AspectSet,
    evidence: EvidenceSet | Sequence[str] | None,
    scope: FlawScope,
    budget: EvidenceBudget | None = None,
) -> FlawReport:
    """Run the flaw checker for the given scope (one retry on parse failure)."""
    prompt = render_prompt(
        FLAWS_TEMPLATE_ID, claim, aspects=aspects, evidence=evidence, scope=scope, budget=budget
    )
    response = backend.generate(prompt)
    try:
        return parse_flaw_report(response, scope)
    except FlawParseError:
        logger.warning("flaw response unparseable, retrying once")
        response = backend.generate(prompt + _FORMAT_REMINDER)
        return parse_flaw_report(response, scope)


def _generate_nonempty(backend: GenerativeBackend, prompt: str) -> str:
    text = backend.generate(prompt).strip()
    if not text:
        logger.warning("empty justification, retrying once")
        text = backend.generate(prompt + _FORMAT_REMINDER).strip()
    if not text:
        raise GenerationError("backend produced empty justification twice")
    return text


def _evidence_ids(evidence: EvidenceSet | Sequence[str] | None) -> tuple[str, ...]:
    if isinstance(evidence, EvidenceSet):
        return tuple(f"{item.article_uri}#{item.sentence_index}" for item in evidence)
    return ()


def generate_justification(
    backend: GenerativeBackend,
    claim: str,
    flaw_report: FlawReport,
    evidence: EvidenceSet | Sequence[str] | None,
    budget: EvidenceBudget | None = None,
) -> Justification:
    """Run the flaw-based justification generator (aspects are not an input)."""
    prompt = render_prompt(
        JUSTIFY_TEMPLATE_ID, claim, flaw_report=flaw_report, evidence=evidence, budget=budget
    )
    text = _generate_nonempty(backend, prompt)
    return Justification(
        claim_id=evidence.claim_id if isinstance(evidence, EvidenceSet) else "",
        text=text,
        scope=flaw_report.scope.value,
        evidence_ids=_evidence_ids(evidence),
        template_id=JUSTIFY_TEMPLATE_ID,
    )


def generate_baseline_justification(
    backend: GenerativeBackend,
    claim: str,
    evidence: EvidenceSet | Sequence[str] | None,
    aspects: AspectSet | None = None,
    budget: EvidenceBudget | None = None,
) -> Justification:
    """Justify without flaw findings: claim+evidence only, or with aspects."""
    if aspects is None:
        template_id, scope_name = JUSTIFY_BASELINE_TEMPLATE_ID, "baseline"
        prompt = render_prompt(template_id, claim, evidence=evidence, budget=budget)
    else:
        template_id, scope_name = JUSTIFY_ASPECTS_TEMPLATE_ID, "baseline-aspects"
        prompt = render_prompt(template_id, claim, aspects=aspects, evidence=evidence, budget=budget)
    text = _generate_nonempty(backend, prompt)
    return Justification(
        claim_id=evidence.claim_id if isinstance(evidence, EvidenceSet) else "",
        text=text,
        scope=scope_name,
        evidence_ids=_evidence_ids(evidence),
        template_id=template_id,
    )


# --------------------------------------------------------------------------
# Adapter fine-tuning


@dataclass(frozen=True)
class FineTuneExample:
    input: str
    target: str

    def __post_init__(self) -> None:
        if not self.input or not self.target:
            raise ValueError("fine-tune examples need non-empty input and target")


@dataclass(frozen=True)
class FinetuneConfig:
    rank: int = 8
    epochs: int = 50
    lr: float = 5e-3
    seed: int = 13
    # 0 means full-batch training.
    batch_size: int = 0
    alpha: float | None = None


def finetune_adapter(
    backend: TinyLMBackend,
    examples: Sequence[FineTuneExample],
    config: FinetuneConfig | None = None,
) -> tuple[TinyLMBackend, list[float]]:
    """Adapter-only fine-tuning on (input, target) pairs.

    Maximizes the token-level log likelihood of each target given its input
    (equivalently minimizes the mean negative log likelihood, which is what
    the returned per-epoch loss curve records). Base parameters are frozen
    and never touched; only the freshly initialized adapter matrices train.
    """
    if not examples:
        raise GenerationError("no fine-tune examples")
    config = config or FinetuneConfig()
    if config.rank < 1:
        raise GenerationError(f"rank must be >= 1, got {config.rank}")
    backend.init_adapters(config.rank, seed=config.seed, alpha=config.alpha)
    torch.manual_seed(config.seed)
    pairs = [(ex.input, ex.target) for ex in examples]
    batch_size = config.batch_size or len(pairs)
    batches = [
        backend.prepare_batch(pairs[start : start + batch_size])
        for start in range(0, len(pairs), batch_size)
    ]
    optimizer = torch.optim.Adam(backend.adapter_parameters(), lr=config.lr)
    curve: list[float] = []
    backend.model.train()
    for epoch in range(config.epochs):
        epoch_losses = []
        for batch, mask in batches:
            optimizer.zero_grad()
            loss = -backend.batch_log_likelihood(batch, mask)
            if not torch.isfinite(loss):
                raise GenerationError(f"non-finite fine-tune loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        curve.append(sum(epoch_losses) / len(epoch_losses))
    backend.model.eval()
    return backend, curve
