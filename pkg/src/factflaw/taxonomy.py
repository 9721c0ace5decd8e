"""Aspect and flaw vocabulary shared by the distillation and generation stages.

Aspects and flaw findings travel through generative models as plain text, so
this module also owns their wire format: a labeled-line layout (one item per
line) with forgiving parsers that tolerate case and numbering variation and
ignore surrounding prose.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

MAX_ASPECTS = 4


class TaxonomyError(ValueError):
    """Invalid aspect or flaw structure."""


class AspectParseError(TaxonomyError):
    """No aspects could be recovered from a model response."""


class FlawParseError(TaxonomyError):
    """No flaw findings could be recovered from a model response."""


class FlawType(str, Enum):
    """The seven claim defect types, in canonical (category) order."""

    CONTRADICTING_FACTS = "contradicting_facts"
    EXAGGERATION = "exaggeration"
    UNDERSTATEMENT = "understatement"
    OCCASIONAL_FALTERING = "occasional_faltering"
    INSUFFICIENT_SUPPORT = "insufficient_support"
    PROBLEMATIC_ASSUMPTIONS = "problematic_assumptions"
    ALTERNATIVE_EXPLANATIONS = "alternative_explanations"

    @property
    def serialized_name(self) -> str:
        """CamelCase name used in the labeled-line wire format."""
        return "".join(part.capitalize() for part in self.value.split("_"))

    @property
    def display_name(self) -> str:
        return self.value.replace("_", " ").capitalize()

    @property
    def category(self) -> int:
        return FLAW_CATEGORY[self]


CATEGORY_ONE = (
    FlawType.CONTRADICTING_FACTS,
    FlawType.EXAGGERATION,
    FlawType.UNDERSTATEMENT,
)
CATEGORY_TWO = (
    FlawType.OCCASIONAL_FALTERING,
    FlawType.INSUFFICIENT_SUPPORT,
)
CATEGORY_THREE = (
    FlawType.PROBLEMATIC_ASSUMPTIONS,
    FlawType.ALTERNATIVE_EXPLANATIONS,
)

FLAW_CATEGORY = {
    **{f: 1 for f in CATEGORY_ONE},
    **{f: 2 for f in CATEGORY_TWO},
    **{f: 3 for f in CATEGORY_THREE},
}

ALL_FLAWS: tuple[FlawType, ...] = CATEGORY_ONE + CATEGORY_TWO + CATEGORY_THREE

# One-line working definitions used when building checklists for prompts.
FLAW_DEFINITIONS = {
    FlawType.CONTRADICTING_FACTS: (
        "the claim conflicts with well-established, verifiable information."
    ),
    FlawType.EXAGGERATION: (
        "the claim inflates the scale, severity, or certainty of something "
        "beyond what the facts support."
    ),
    FlawType.UNDERSTATEMENT: (
        "the claim makes something real seem smaller or less serious than "
        "the record shows."
    ),
    FlawType.OCCASIONAL_FALTERING: (
        "the claim holds in some cases but fails under particular "
        "conditions, places, or time periods it glosses over."
    ),
    FlawType.INSUFFICIENT_SUPPORT: (
        "the claim asserts more than the available evidence can substantiate."
    ),
    FlawType.PROBLEMATIC_ASSUMPTIONS: (
        "the claim depends on premises that have not been established or "
        "are doubtful."
    ),
    FlawType.ALTERNATIVE_EXPLANATIONS: (
        "the claim ignores other plausible explanations for the same "
        "observations."
    ),
}


class FlawScope(str, Enum):
    """Which flaw categories a pipeline variant checks."""

    F3 = "3f"
    F5 = "5f"
    F7 = "7f"

    @property
    def flaw_types(self) -> tuple[FlawType, ...]:
        if self is FlawScope.F3:
            return CATEGORY_ONE
        if self is FlawScope.F5:
            return CATEGORY_ONE + CATEGORY_TWO
        return ALL_FLAWS

    def __len__(self) -> int:  # number of flaws in scope
        return len(self.flaw_types)


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


@dataclass(frozen=True)
class Aspect:
    """One evaluation dimension of a claim: a short title plus explanation."""

    title: str
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "title", _normalize_text(self.title))
        object.__setattr__(self, "description", _normalize_text(self.description))
        if not self.title:
            raise TaxonomyError("aspect title must be non-empty")
        if ":" in self.title:
            raise TaxonomyError(f"aspect title may not contain ':': {self.title!r}")


@dataclass(frozen=True)
class AspectSet:
    """Between one and four aspects with pairwise-distinct titles."""

    aspects: tuple[Aspect, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "aspects", tuple(self.aspects))
        n = len(self.aspects)
        if not 1 <= n <= MAX_ASPECTS:
            raise TaxonomyError(f"aspect count must be in [1, {MAX_ASPECTS}], got {n}")
        titles = [a.title.casefold() for a in self.aspects]
        if len(set(titles)) != len(titles):
            raise TaxonomyError(f"aspect titles must be distinct: {titles}")

    def __len__(self) -> int:
        return len(self.aspects)

    def __iter__(self) -> Iterator[Aspect]:
        return iter(self.aspects)


@dataclass(frozen=True)
class FlawFinding:
    """Presence judgment for one flaw type, with an explanation when present."""

    flaw: FlawType
    present: bool
    explanation: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "explanation", _normalize_text(self.explanation))
        if self.present and not self.explanation:
            raise TaxonomyError(
                f"present flaw {self.flaw.value} requires a non-empty explanation"
            )


@dataclass(frozen=True)
class FlawReport:
    """One finding per flaw type in scope, stored in canonical order."""

    findings: tuple[FlawFinding, ...]
    scope: FlawScope = FlawScope.F7

    def __post_init__(self) -> None:
        by_flaw = {}
        for finding in self.findings:
            if finding.flaw in by_flaw:
                raise TaxonomyError(f"duplicate finding for {finding.flaw.value}")
            by_flaw[finding.flaw] = finding
        expected = self.scope.flaw_types
        if set(by_flaw) != set(expected):
            missing = [f.value for f in expected if f not in by_flaw]
            extra = [f.value for f in by_flaw if f not in expected]
            raise TaxonomyError(
                f"scope {self.scope.value} report mismatch: missing={missing} extra={extra}"
            )
        object.__setattr__(self, "findings", tuple(by_flaw[f] for f in expected))

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self) -> Iterator[FlawFinding]:
        return iter(self.findings)

    def get(self, flaw: FlawType) -> FlawFinding:
        for finding in self.findings:
            if finding.flaw is flaw:
                return finding
        raise KeyError(flaw)

    @property
    def present_findings(self) -> tuple[FlawFinding, ...]:
        return tuple(f for f in self.findings if f.present)


def empty_flaw_report(scope: FlawScope) -> FlawReport:
    return FlawReport(
        tuple(FlawFinding(f, present=False) for f in scope.flaw_types), scope
    )


# --------------------------------------------------------------------------
# Wire format


def serialize_aspects(aspects: AspectSet) -> str:
    lines = []
    for i, aspect in enumerate(aspects, start=1):
        if aspect.description:
            lines.append(f"ASPECT {i}: {aspect.title}: {aspect.description}")
        else:
            lines.append(f"ASPECT {i}: {aspect.title}")
    return "\n".join(lines)


_ASPECT_LINE = re.compile(
    r"^\s*(?:[-*>]\s*)?(?:aspect\s*\d*\s*[:.\-]|\d{1,2}\s*[:.)])\s*(?P<rest>\S.*?)\s*$",
    re.IGNORECASE,
)


def parse_aspects(text: str) -> AspectSet:
    """Parse a labeled-line aspect list out of model output.

    Tolerates numbering and case variation and skips surrounding prose.
    Duplicate titles keep the first occurrence; more than four aspects are
    truncated to the first four. Raises :class:`AspectParseError` when no
    aspect line is found at all.
    """
    collected: list[list[str]] = []  # [title, description]
    for raw_line in text.splitlines():
        match = _ASPECT_LINE.match(raw_line)
        if match:
            rest = match.group("rest")
            title, sep, description = rest.partition(":")
            collected.append([title.strip(), description.strip()])
        elif collected and raw_line.strip():
            # Wrapped description continues the previous aspect.
            collected[-1][1] = (collected[-1][1] + " " + raw_line.strip()).strip()
    aspects: list[Aspect] = []
    seen: set[str] = set()
    for title, description in collected:
        if not title:
            continue
        key = title.casefold()
        if key in seen:
            logger.warning("dropping duplicate aspect title %r", title)
            continue
        seen.add(key)
        aspects.append(Aspect(title, description))
        if len(aspects) == MAX_ASPECTS:
            break
    if not aspects:
        raise AspectParseError(f"no aspects found in response: {text[:200]!r}")
    return AspectSet(tuple(aspects))


def serialize_flaw_report(report: FlawReport) -> str:
    lines = []
    for finding in report:
        status = "PRESENT" if finding.present else "ABSENT"
        line = f"FLAW {finding.flaw.serialized_name}: {status}"
        if finding.explanation:
            line += f" - {finding.explanation}"
        lines.append(line)
    return "\n".join(lines)


def _flaw_alias_map() -> dict[str, FlawType]:
    aliases: dict[str, FlawType] = {}
    for flaw in FlawType:
        aliases[re.sub(r"[^a-z]", "", flaw.value)] = flaw
    aliases["existenceofalternativeexplanations"] = FlawType.ALTERNATIVE_EXPLANATIONS
    aliases["alternativeexplanation"] = FlawType.ALTERNATIVE_EXPLANATIONS
    return aliases


_FLAW_ALIASES = _flaw_alias_map()

_FLAW_LINE = re.compile(
    r"^\s*(?:[-*>]\s*)?(?:flaw\b)?\s*\d*\s*[:.)]?\s*"
    r"(?P<name>[A-Za-z][A-Za-z _]*?)\s*[:\-]\s*"
    r"(?P<status>present|absent|yes|no|true|false)\b\s*[-:.]?\s*(?P<expl>.*?)\s*$",
    re.IGNORECASE,
)

_PRESENT_WORDS = {"present", "yes", "true"}


def parse_flaw_report(text: str, scope: FlawScope) -> FlawReport:
    """Parse labeled flaw-finding lines into a complete report for ``scope``.

    Unknown flaw names and plain prose are skipped; out-of-scope findings are
    dropped with a warning; duplicated flaws keep the first line. A line
    marking a flaw PRESENT without any explanation is malformed and ignored
    (the flaw then defaults to absent). Every in-scope flaw missing from the
    response defaults to absent. Raises :class:`FlawParseError` when not a
    single recognizable finding line exists.
    """
    in_scope = set(scope.flaw_types)
    parsed: dict[FlawType, FlawFinding] = {}
    any_recognized = False
    last_flaw: FlawType | None = None
    for raw_line in text.splitlines():
        match = _FLAW_LINE.match(raw_line)
        if not match:
            if last_flaw is not None and raw_line.strip() and last_flaw in parsed:
                prev = parsed[last_flaw]
                if prev.present:
                    parsed[last_flaw] = FlawFinding(
                        prev.flaw, True, prev.explanation + " " + raw_line.strip()
                    )
            continue
        key = re.sub(r"[^a-z]", "", match.group("name").lower())
        flaw = _FLAW_ALIASES.get(key)
        if flaw is None:
            continue
        any_recognized = True
        present = match.group("status").lower() in _PRESENT_WORDS
        explanation = match.group("expl").strip()
        if flaw not in in_scope:
            logger.warning(
                "dropping out-of-scope flaw %s for scope %s", flaw.value, scope.value
            )
            last_flaw = None
            continue
        if flaw in parsed:
            logger.warning("duplicate finding for %s; keeping first", flaw.value)
            last_flaw = None
            continue
        if present and not explanation:
            logger.warning(
                "ignoring PRESENT finding for %s with no explanation", flaw.value
            )
            last_flaw = None
            continue
        parsed[flaw] = FlawFinding(flaw, present, explanation)
        last_flaw = flaw
    if not any_recognized:
        raise FlawParseError(f"no flaw findings found in response: {text[:200]!r}")
    findings = tuple(
        parsed.get(f, FlawFinding(f, present=False)) for f in scope.flaw_types
    )
    return FlawReport(findings, scope)


# --------------------------------------------------------------------------
# JSON-friendly views used by the dataset files


def aspects_to_json(aspects: AspectSet) -> list[dict]:
    return [{"title": a.title, "description": a.description} for a in aspects]


def aspects_from_json(items: Sequence[dict]) -> AspectSet:
    return AspectSet(
        tuple(Aspect(d["title"], d.get("description", "")) for d in items)
    )


def findings_to_json(report: FlawReport) -> list[dict]:
    return [
        {"flaw": f.flaw.value, "present": f.present, "explanation": f.explanation}
        for f in report
    ]


def findings_from_json(items: Iterable[dict], scope: FlawScope) -> FlawReport:
    findings = tuple(
        FlawFinding(FlawType(d["flaw"]), bool(d["present"]), d.get("explanation", ""))
        for d in items
    )
    return FlawReport(findings, scope)
