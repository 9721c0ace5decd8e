"""Claim corpus handling.

Covers the record/label data model, JSONL ingestion with validation, article
cleaning and sentence segmentation, the rating-to-label remapping table, and
per-split label statistics. Everything here is deterministic and free of
shared mutable state, so records can be processed by concurrent workers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    pass


class DatasetFormatError(CorpusError):
    """Raised when too many dataset lines are invalid to trust the file."""

    def __init__(self, message: str, errors: list[tuple[int, str]]):
        super().__init__(message)
        self.errors = errors


class UnusableArticleError(CorpusError):
    """Article text is empty after cleaning."""


class UnmappedRatingError(CorpusError):
    """No (site, rating) entry in the label map."""

    def __init__(self, site: str, rating: str):
        super().__init__(f"no label mapping for site={site!r} rating={rating!r}")
        self.site = site
        self.rating = rating


class VeracityLabel(str, Enum):
    FALSE = "false"
    PARTLY_FALSE = "partly_false"
    UNPROVEN = "unproven"
    TRUE = "true"

    @property
    def display(self) -> str:
        return _DISPLAY[self]


_DISPLAY = {
    VeracityLabel.FALSE: "False",
    VeracityLabel.PARTLY_FALSE: "Partly false",
    VeracityLabel.UNPROVEN: "Unproven",
    VeracityLabel.TRUE: "True",
}

# Fixed label order used everywhere a vector or table is indexed by label.
LABEL_ORDER: tuple[VeracityLabel, ...] = (
    VeracityLabel.FALSE,
    VeracityLabel.PARTLY_FALSE,
    VeracityLabel.UNPROVEN,
    VeracityLabel.TRUE,
)

_LABEL_ALIASES = {
    "false": VeracityLabel.FALSE,
    "incorrect": VeracityLabel.FALSE,
    "partly false": VeracityLabel.PARTLY_FALSE,
    "partlyfalse": VeracityLabel.PARTLY_FALSE,
    "partially false": VeracityLabel.PARTLY_FALSE,
    "partly_false": VeracityLabel.PARTLY_FALSE,
    "unproven": VeracityLabel.UNPROVEN,
    "true": VeracityLabel.TRUE,
    "correct": VeracityLabel.TRUE,
}


def parse_label(raw: str) -> VeracityLabel:
    """Parse a label string; 'Incorrect'/'Correct' are accepted synonyms."""
    key = re.sub(r"[^a-z]+", " ", raw.lower()).strip()
    try:
        return _LABEL_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown veracity label: {raw!r}") from None


# The eight source-site identifiers the shipped label map covers. The
# upstream claim collection does not publish its full rating tables, so this
# list and data/label_map.txt are a best-effort reconstruction; both are
# user-extensible (see load_label_map).
KNOWN_SITES = frozenset(
    {
        "politifact",
        "snopes",
        "factcheck_org",
        "afp",
        "fullfact",
        "altnews",
        "leadstories",
        "truthorfiction",
    }
)

VALID_SPLITS = ("train", "test")


def uri_hash(uri: str) -> str:
    """Stable content key for an article URI (used as the on-disk filename)."""
    return hashlib.sha256(uri.encode("utf-8")).hexdigest()[:24]


@dataclass(frozen=True, order=True)
class ArticleRef:
    uri: str
    key: str = ""

    def __post_init__(self) -> None:
        if not self.key:
            object.__setattr__(self, "key", uri_hash(self.uri))


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str


@dataclass(frozen=True)
class Article:
    ref: ArticleRef
    raw: str
    clean_text: str
    sentences: tuple[Sentence, ...]

    @classmethod
    def from_raw(cls, ref: ArticleRef, raw: str) -> "Article":
        clean = clean_article(raw)
        return cls(ref=ref, raw=raw, clean_text=clean, sentences=split_sentences(clean))


@dataclass(frozen=True)
class ClaimRecord:
    id: str
    text: str
    source_site: str
    original_rating: str
    label: VeracityLabel
    premise_articles: tuple[ArticleRef, ...]
    review_article: ArticleRef | None
    split: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "text", re.sub(r"\s+", " ", self.text).strip())
        object.__setattr__(self, "premise_articles", tuple(self.premise_articles))
        if not self.id:
            raise CorpusError("record id must be non-empty")
        if not self.text:
            raise CorpusError(f"record {self.id}: claim text is empty")
        if self.source_site not in KNOWN_SITES:
            raise CorpusError(f"record {self.id}: unknown source_site {self.source_site!r}")
        if self.split not in VALID_SPLITS:
            raise CorpusError(f"record {self.id}: split must be train|test, got {self.split!r}")


# --------------------------------------------------------------------------
# Article cleaning

_BOILERPLATE_PATTERNS = [
    r"^share( this| on)?\b",
    r"^tweet\b",
    r"^follow us\b",
    r"^subscribe\b",
    r"^sign up\b",
    r"^advertisement$",
    r"^sponsored\b",
    r"^related (articles|stories|posts|content)\b",
    r"cookie(s)? (policy|settings|consent|notice)",
    r"^accept (all )?cookies",
    r"all rights reserved",
    r"^copyright\b",
    r"^©",
    r"^read more\b",
    r"^skip to (main )?content",
    r"^(menu|home|search|login|sign in)$",
    r"javascript",
    r"^privacy policy$",
    r"^terms of (use|service)$",
    r"^newsletter\b",
    r"^photo(s)?( credit| by)\b",
    r"^image (source|caption|credit)\b",
    r"^loading\b",
]
_BOILERPLATE_RE = re.compile("|".join(_BOILERPLATE_PATTERNS), re.IGNORECASE)

# A line must repeat at least this often to be treated as a running
# header/footer and stripped everywhere.
_REPEAT_THRESHOLD = 3


def clean_article(raw: str) -> str:
    """Strip boilerplate from fetched page text, keeping paragraph breaks.

    Removes lines matching common navigation/footer patterns, lines with no
    alphanumeric content, and any non-empty line repeated at least three
    times (running headers/footers). Runs of blank lines collapse to one
    blank line so paragraph structure survives. Raises
    :class:`UnusableArticleError` when nothing remains.
    """
    if not raw:
        raise UnusableArticleError("article text is empty")
    lines = [line.rstrip() for line in raw.splitlines()]
    counts: dict[str, int] = {}
    for line in lines:
        stripped = line.strip()
        if stripped:
            counts[stripped] = counts.get(stripped, 0) + 1

    kept: list[str] = []
    for line in lines:
        stripped = line.strip()
        if not stripped:
            if kept and kept[-1] != "":
                kept.append("")
            continue
        if counts[stripped] >= _REPEAT_THRESHOLD:
            continue
        if _BOILERPLATE_RE.search(stripped):
            continue
        if not re.search(r"[0-9A-Za-z]", stripped):
            continue
        kept.append(line)
    while kept and kept[-1] == "":
        kept.pop()
    cleaned = "\n".join(kept)
    if not cleaned.strip():
        raise UnusableArticleError("article text is empty after cleaning")
    return cleaned


# --------------------------------------------------------------------------
# Sentence segmentation

# Tokens (lowercase, final period removed) that do not end a sentence.
_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "rev", "gen", "rep", "sen", "gov",
        "capt", "lt", "col", "sgt", "adm", "hon", "fr", "sr", "jr", "st",
        "vs", "etc", "e.g", "i.e", "cf", "al", "approx", "dept",
        "inc", "ltd", "co", "corp", "univ", "assn", "bros", "fig", "no",
        "vol", "pp", "pt", "ed", "est", "min", "max", "jan", "feb", "mar",
        "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
        "mon", "tue", "wed", "thu", "fri", "sat", "sun",
        "u.s", "u.k", "u.n", "d.c", "a.m", "p.m",
    }
)

_BREAK_CANDIDATE = re.compile(r"[.?!]+[\"'”’)\]]*(?=\s)")
_NEXT_STARTER = re.compile(r"^[\"'“‘(\[]*[A-Z0-9]")


def _is_abbreviation(text: str, punct_start: int) -> bool:
    prefix = text[:punct_start]
    match = re.search(r"(\S+)$", prefix)
    if not match:
        return False
    token = match.group(1).strip("\"'“”‘’()[],;").lower()
    return token in _ABBREVIATIONS


def split_sentences(clean_text: str) -> tuple[Sentence, ...]:
    """Deterministic rule-based sentence segmentation.

    Breaks after terminal punctuation (plus trailing quotes/brackets) when it
    is followed by whitespace and an uppercase/digit/quote starter, unless
    the preceding token is a known abbreviation. Paragraph breaks always
    split. A blob with no recognized terminator comes back as one sentence.
    Indices are contiguous from 0 and no sentence is empty; concatenating the
    sentences reproduces the input up to inter-sentence whitespace.
    """
    sentences: list[Sentence] = []
    for paragraph in re.split(r"\n\s*\n", clean_text):
        if not paragraph.strip():
            continue
        breaks: list[int] = []
        for match in _BREAK_CANDIDATE.finditer(paragraph):
            rest = paragraph[match.end():].lstrip()
            if not rest:
                continue
            if not _NEXT_STARTER.match(rest):
                continue
            if _is_abbreviation(paragraph, match.start()):
                continue
            breaks.append(match.end())
        start = 0
        for end in breaks + [len(paragraph)]:
            piece = paragraph[start:end].strip()
            if piece:
                sentences.append(Sentence(len(sentences), piece))
            start = end
    return tuple(sentences)


# --------------------------------------------------------------------------
# Rating -> label map

_DEFAULT_MAP_RESOURCE = "label_map.txt"


def _normalize_key(value: str) -> str:
    """Case- and punctuation-insensitive lookup key."""
    return re.sub(r"[^a-z0-9]+", " ", value.lower()).strip()


class LabelMap:
    """Total, deterministic (site, rating) -> label table.

    Backed by a plain-text file of ``site | rating | label`` triples so the
    table can be extended without touching code.
    """

    def __init__(self, entries: Iterable[tuple[str, str, VeracityLabel]]):
        self.entries: list[tuple[str, str, VeracityLabel]] = []
        self._table: dict[tuple[str, str], VeracityLabel] = {}
        for site, rating, label in entries:
            key = (_normalize_key(site), _normalize_key(rating))
            if key in self._table and self._table[key] is not label:
                raise CorpusError(
                    f"conflicting label map entries for {site!r}/{rating!r}"
                )
            self._table[key] = label
            self.entries.append((site, rating, label))

    def lookup(self, site: str, rating: str) -> VeracityLabel:
        try:
            return self._table[(_normalize_key(site), _normalize_key(rating))]
        except KeyError:
            raise UnmappedRatingError(site, rating) from None

    @property
    def sites(self) -> set[str]:
        return {site for site, _ in self._table}

    def __len__(self) -> int:
        return len(self._table)


def load_label_map(path: str | Path | None = None) -> LabelMap:
    """Load a label map file; with no path, load the shipped default table."""
    if path is None:
        text = (
            resources.files("factflaw").joinpath("data", _DEFAULT_MAP_RESOURCE)
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    entries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split("|")]
        if len(parts) != 3:
            raise CorpusError(f"label map line {line_no}: expected 'site | rating | label'")
        site, rating, label_raw = parts
        entries.append((site, rating, parse_label(label_raw)))
    return LabelMap(entries)


_default_label_map: LabelMap | None = None


def default_label_map() -> LabelMap:
    global _default_label_map
    if _default_label_map is None:
        _default_label_map = load_label_map()
    return _default_label_map


def remap_label(
    source_site: str, original_rating: str, label_map: LabelMap | None = None
) -> VeracityLabel:
    """Map a site's raw rating string onto the four-label scheme.

    Total over the shipped table; unknown (site, rating) pairs raise
    :class:`UnmappedRatingError` rather than defaulting silently.
    """
    table = label_map if label_map is not None else default_label_map()
    return table.lookup(source_site, original_rating)


# --------------------------------------------------------------------------
# Dataset file IO

_REQUIRED_FIELDS = ("id", "claim", "source_site", "original_rating", "label", "split")

# Abort ingestion when more than this fraction of lines fail validation.
_MAX_INVALID_FRACTION = 0.10


def record_to_json(record: ClaimRecord) -> dict:
    return {
        "id": record.id,
        "claim": record.text,
        "source_site": record.source_site,
        "original_rating": record.original_rating,
        "label": record.label.value,
        "premise_uris": [ref.uri for ref in record.premise_articles],
        "review_uri": record.review_article.uri if record.review_article else None,
        "split": record.split,
    }


def record_from_json(data: Mapping) -> ClaimRecord:
    missing = [f for f in _REQUIRED_FIELDS if f not in data]
    if missing:
        raise CorpusError(f"missing fields: {', '.join(missing)}")
    review_uri = data.get("review_uri")
    return ClaimRecord(
        id=str(data["id"]),
        text=str(data["claim"]),
        source_site=str(data["source_site"]),
        original_rating=str(data["original_rating"]),
        label=parse_label(str(data["label"])),
        premise_articles=tuple(ArticleRef(uri) for uri in data.get("premise_uris", [])),
        review_article=ArticleRef(review_uri) if review_uri else None,
        split=str(data["split"]),
    )


def load_dataset(path: str | Path) -> list[ClaimRecord]:
    """Load a JSONL claim dataset, validating every record.

    Invalid lines are logged with their line numbers and skipped; the whole
    load aborts with :class:`DatasetFormatError` when more than 10% of lines
    are invalid (or when any line of a small file is, since 1 bad line out of
    a handful already exceeds the threshold).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    records: list[ClaimRecord] = []
    errors: list[tuple[int, str]] = []
    total = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError, CorpusError) as exc:
                errors.append((line_no, str(exc)))
                logger.warning("%s:%d: %s", path.name, line_no, exc)
    if errors and len(errors) > _MAX_INVALID_FRACTION * total:
        raise DatasetFormatError(
            f"{len(errors)}/{total} lines invalid in {path} "
            f"(first: line {errors[0][0]}: {errors[0][1]})",
            errors,
        )
    if errors:
        logger.warning("%s: skipped %d invalid of %d lines", path.name, len(errors), total)
    return records


def write_dataset(records: Iterable[ClaimRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")


def dataset_stats(records: Iterable[ClaimRecord]) -> dict[str, dict[str, int]]:
    """Per-split, per-label record counts with all cells zero-filled."""
    stats = {
        split: {label.value: 0 for label in LABEL_ORDER} for split in VALID_SPLITS
    }
    for record in records:
        stats[record.split][record.label.value] += 1
    return stats


def format_stats_table(stats: Mapping[str, Mapping[str, int]]) -> str:
    headers = ["split"] + [label.display for label in LABEL_ORDER] + ["total"]
    rows = []
    for split in VALID_SPLITS:
        counts = stats.get(split, {})
        values = [counts.get(label.value, 0) for label in LABEL_ORDER]
        rows.append([split] + [str(v) for v in values] + [str(sum(values))])
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Article storage


class ArticleStore:
    """Directory of fetched article texts keyed by a hash of their URI."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path_for(self, ref: ArticleRef | str) -> Path:
        key = ref.key if isinstance(ref, ArticleRef) else uri_hash(ref)
        return self.root / f"{key}.txt"

    def put(self, uri: str, raw: str) -> ArticleRef:
        ref = ArticleRef(uri)
        self.root.mkdir(parents=True, exist_ok=True)
        self.path_for(ref).write_text(raw, encoding="utf-8")
        return ref

    def has(self, ref: ArticleRef | str) -> bool:
        return self.path_for(ref).exists()

    def get_raw(self, ref: ArticleRef | str) -> str:
        path = self.path_for(ref)
        if not path.exists():
            raise FileNotFoundError(f"article not stored: {path}")
        return path.read_text(encoding="utf-8")

    def load(self, ref: ArticleRef) -> Article:
        """Load, clean, and segment one article."""
        return Article.from_raw(ref, self.get_raw(ref))
