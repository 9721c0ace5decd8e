"""End-to-end orchestration of the fact-checking pipeline.

Wires the stages per the configured scope (retrieve -> aspects -> flaw check
-> justify -> classify -> evaluate), caching every stage's output to files so
commands are resumable and idempotent with respect to completed per-claim
work. A run manifest snapshots the configuration, stage versions, timings,
and failures, which together with the same backends reproduces a run
bit-for-bit (greedy decoding, fixed seeds).
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .backends import MockBackend, TinyLMBackend, TinyLMConfig
from .corpus import (
    ArticleStore,
    ClaimRecord,
    CorpusError,
    VeracityLabel,
    load_dataset,
)
from .distiller import DistillConfig, DistillSummary, distill_corpus, read_silver
from .generation import (
    ASPECTS_TEMPLATE_ID,
    EvidenceBudget,
    FLAWS_TEMPLATE_ID,
    FineTuneExample,
    FinetuneConfig,
    JUSTIFY_ASPECTS_TEMPLATE_ID,
    JUSTIFY_BASELINE_TEMPLATE_ID,
    JUSTIFY_TEMPLATE_ID,
    check_flaws,
    finetune_adapter,
    generate_aspects,
    generate_baseline_justification,
    generate_justification,
    render_prompt,
)
from .metrics import (
    HashedRandomEmbedder,
    bertscore,
    format_metric_table,
    judge_justification,
    per_label_report,
    rouge_l,
    rouge_n,
)
from .oracle import DeterministicMockOracle, FixtureOracle, MockJudge, Oracle
from .retriever import (
    DEFAULT_TOP_K,
    EncoderConfig,
    EncoderPair,
    EvidenceSet,
    RetrieverTrainConfig,
    build_training_triples,
    evidence_from_json,
    evidence_to_json,
    retrieve_evidence,
    review_sentences_from_store,
    train_retriever,
)
from .taxonomy import (
    AspectSet,
    FlawReport,
    FlawScope,
    aspects_from_json,
    aspects_to_json,
    findings_from_json,
    findings_to_json,
    serialize_aspects,
    serialize_flaw_report,
)
from .veracity import (
    ClassifierConfig,
    ClassificationReport,
    VeracityClassifier,
    classify,
    format_classification_table,
    score_predictions,
    train_classifier,
)

logger = logging.getLogger(__name__)

STAGES = ("aspects", "flaws", "justify")


class PipelineError(Exception):
    pass


class RunScope(str, Enum):
    """Stage wiring variants: two no-flaw baselines plus 3/5/7-flaw chains."""

    BASELINE = "baseline"
    BASELINE_ASPECTS = "baseline-aspects"
    F3 = "3f"
    F5 = "5f"
    F7 = "7f"

    @property
    def flaw_scope(self) -> FlawScope | None:
        return {
            RunScope.F3: FlawScope.F3,
            RunScope.F5: FlawScope.F5,
            RunScope.F7: FlawScope.F7,
        }.get(self)

    @property
    def uses_flaws(self) -> bool:
        return self.flaw_scope is not None

    @property
    def uses_aspects(self) -> bool:
        # The plain baseline considers only the claim and its evidence.
        return self is not RunScope.BASELINE


@dataclass
class PipelineConfig:
    dataset: Path
    articles_dir: Path
    out_dir: Path
    scope: RunScope = RunScope.F7
    split: str = "test"
    seed: int = 13
    retriever_k: int = DEFAULT_TOP_K
    backend_id: str = "mock"
    judge_id: str = "mock"
    oracle_id: str = "mock"
    retriever_checkpoint: Path | None = None
    adapter_dir: Path | None = None
    classifier_checkpoint: Path | None = None
    classifier_train_split: str = "train"
    evidence_max_sentences: int = DEFAULT_TOP_K
    evidence_max_chars: int = 8000
    workers: int = 1
    limit: int | None = None
    distill_split: str = "train"
    silver_path: Path | None = None
    # Stage hyperparameters (desk-scale defaults).
    retriever_train: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.dataset = Path(self.dataset)
        self.articles_dir = Path(self.articles_dir)
        self.out_dir = Path(self.out_dir)
        if isinstance(self.scope, str):
            self.scope = RunScope(self.scope)
        if self.retriever_checkpoint is not None:
            self.retriever_checkpoint = Path(self.retriever_checkpoint)
        if self.adapter_dir is not None:
            self.adapter_dir = Path(self.adapter_dir)
        if self.classifier_checkpoint is not None:
            self.classifier_checkpoint = Path(self.classifier_checkpoint)
        if self.silver_path is not None:
            self.silver_path = Path(self.silver_path)

    @property
    def evidence_budget(self) -> EvidenceBudget:
        return EvidenceBudget(self.evidence_max_sentences, self.evidence_max_chars)

    @property
    def silver_file(self) -> Path:
        return self.silver_path or (self.out_dir / "silver.jsonl")

    @classmethod
    def from_yaml(cls, path: str | Path, **overrides) -> "PipelineConfig":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def snapshot(self) -> dict:
        data = asdict(self)
        return {
            key: (str(value) if isinstance(value, Path) else
                  value.value if isinstance(value, Enum) else value)
            for key, value in data.items()
        }


@dataclass
class RunManifest:
    config: dict
    stages: dict
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2), encoding="utf-8")


# --------------------------------------------------------------------------
# Backend / client factories


def build_oracle(oracle_id: str) -> Oracle:
    if oracle_id == "mock":
        return DeterministicMockOracle()
    if oracle_id.startswith("fixture:"):
        return FixtureOracle.from_file(oracle_id.split(":", 1)[1])
    raise PipelineError(f"unknown oracle id {oracle_id!r}")


def build_judge(judge_id: str) -> Oracle:
    if judge_id == "mock":
        return MockJudge()
    if judge_id.startswith("fixture:"):
        return FixtureOracle.from_file(judge_id.split(":", 1)[1])
    raise PipelineError(f"unknown judge id {judge_id!r}")


def build_stage_backend(config: PipelineConfig, stage: str):
    """One backend handle per pipeline stage.

    The tiny backend shares one frozen base across stages; each stage gets
    its own instance carrying that stage's adapter set.
    """
    if config.backend_id == "mock":
        return MockBackend()
    if config.backend_id == "tiny":
        backend = TinyLMBackend(
            TinyLMConfig(max_len=1024, base_seed=config.seed), truncate_prompts=True
        )
        if config.adapter_dir is not None:
            stage_dir = config.adapter_dir / stage
            if stage_dir.exists():
                backend.load_adapters(stage_dir)
            else:
                logger.warning("no adapter checkpoint for stage %s at %s", stage, stage_dir)
        return backend
    raise PipelineError(f"unknown backend id {config.backend_id!r}")


def build_encoder_pair(config: PipelineConfig) -> EncoderPair:
    if config.retriever_checkpoint is not None and config.retriever_checkpoint.exists():
        return EncoderPair.load(config.retriever_checkpoint)
    return EncoderPair.create(EncoderConfig(seed=config.seed))


def load_records(config: PipelineConfig, split: str | None = None) -> list[ClaimRecord]:
    records = load_dataset(config.dataset)
    split = split or config.split
    if split != "all":
        records = [r for r in records if r.split == split]
    if config.limit is not None:
        records = records[: config.limit]
    return records


# --------------------------------------------------------------------------
# Evidence stage


def ensure_evidence(
    config: PipelineConfig,
    records: Sequence[ClaimRecord],
    store: ArticleStore,
    pair: EncoderPair | None = None,
    path: Path | None = None,
    resume: bool = True,
) -> dict[str, EvidenceSet]:
    """Retrieve (or load cached) top-k evidence for every record."""
    path = path or (config.out_dir / "evidence.jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    cached: dict[str, EvidenceSet] = {}
    if resume and path.exists():
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    ev = evidence_from_json(json.loads(line))
                    cached[ev.claim_id] = ev
    missing = [r for r in records if r.id not in cached]
    if missing:
        pair = pair or build_encoder_pair(config)
        with path.open("a" if resume else "w", encoding="utf-8") as fh:
            for record in missing:
                articles = []
                for ref in record.premise_articles:
                    try:
                        articles.append(store.load(ref))
                    except (FileNotFoundError, CorpusError) as exc:
                        logger.warning("premise unusable for %s: %s", record.id, exc)
                evidence = retrieve_evidence(
                    pair, record.text, articles, k=config.retriever_k, claim_id=record.id
                )
                cached[record.id] = evidence
                fh.write(json.dumps(evidence_to_json(evidence), ensure_ascii=False) + "\n")
    return {r.id: cached[r.id] for r in records}


# --------------------------------------------------------------------------
# Per-claim outputs


@dataclass(frozen=True)
class PipelineOutput:
    claim_id: str
    scope: str
    justification: str
    aspects: AspectSet | None = None
    findings_scope: FlawScope | None = None
    findings: FlawReport | None = None
    evidence_ids: tuple[str, ...] = ()
    template_ids: tuple[tuple[str, str], ...] = ()


def output_to_json(out: "PipelineOutput") -> dict:
    data: dict = {
        "claim_id": out.claim_id,
        "scope": out.scope,
        "justification": out.justification,
        "evidence_ids": list(out.evidence_ids),
        "template_ids": dict(out.template_ids),
    }
    if out.aspects is not None:
        data["aspects"] = aspects_to_json(out.aspects)
    if out.findings is not None:
        data["findings"] = findings_to_json(out.findings)
        data["findings_scope"] = out.findings_scope.value
    return data


def output_from_json(data: Mapping) -> PipelineOutput:
    aspects = aspects_from_json(data["aspects"]) if "aspects" in data else None
    findings = None
    findings_scope = None
    if "findings" in data:
        findings_scope = FlawScope(data["findings_scope"])
        findings = findings_from_json(data["findings"], findings_scope)
    return PipelineOutput(
        claim_id=data["claim_id"],
        scope=data["scope"],
        justification=data["justification"],
        aspects=aspects,
        findings_scope=findings_scope,
        findings=findings,
        evidence_ids=tuple(data.get("evidence_ids", ())),
        template_ids=tuple(dict(data.get("template_ids", {})).items()),
    )


def read_outputs(path: str | Path) -> dict[str, PipelineOutput]:
    out: dict[str, PipelineOutput] = {}
    path = Path(path)
    if not path.exists():
        return out
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = output_from_json(json.loads(line))
                out[record.claim_id] = record
    return out


def process_claim(
    record: ClaimRecord,
    evidence: EvidenceSet,
    scope: RunScope,
    backends: Mapping[str, object],
    budget: EvidenceBudget,
) -> PipelineOutput:
    """Run one claim through the stages selected by ``scope``."""
    aspects = None
    report = None
    templates: list[tuple[str, str]] = []
    if scope.uses_aspects:
        aspects = generate_aspects(backends["aspects"], record.text, evidence, budget)
        templates.append(("aspects", ASPECTS_TEMPLATE_ID))
    if scope.uses_flaws:
        report = check_flaws(
            backends["flaws"], record.text, aspects, evidence, scope.flaw_scope, budget
        )
        templates.append(("flaws", FLAWS_TEMPLATE_ID))
        justification = generate_justification(
            backends["justify"], record.text, report, evidence, budget
        )
        templates.append(("justify", JUSTIFY_TEMPLATE_ID))
    else:
        baseline_aspects = aspects if scope is RunScope.BASELINE_ASPECTS else None
        justification = generate_baseline_justification(
            backends["justify"], record.text, evidence, baseline_aspects, budget
        )
        templates.append(("justify", justification.template_id))
    return PipelineOutput(
        claim_id=record.id,
        scope=scope.value,
        justification=justification.text,
        aspects=aspects,
        findings_scope=report.scope if report is not None else None,
        findings=report,
        evidence_ids=justification.evidence_ids,
        template_ids=tuple(templates),
    )


@dataclass
class RunResult:
    outputs_path: Path
    manifest_path: Path
    n_done: int
    n_skipped: int
    failures: list[tuple[str, str]]


def run_pipeline(config: PipelineConfig, resume: bool = True) -> RunResult:
    """Execute the configured pipeline over the selected split.

    Per-claim outputs are appended incrementally; already-processed claim ids
    are skipped on rerun, so a completed run recomputes nothing. Per-claim
    failures are isolated, logged, and listed in the manifest.
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    records = load_records(config)
    if not records:
        raise PipelineError(f"no records in split {config.split!r} of {config.dataset}")
    store = ArticleStore(config.articles_dir)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    evidence_map = ensure_evidence(config, records, store, resume=resume)
    timings["evidence_s"] = round(time.perf_counter() - t0, 3)

    outputs_path = config.out_dir / "outputs.jsonl"
    if not resume and outputs_path.exists():
        outputs_path.unlink()
    done = set(read_outputs(outputs_path)) if resume else set()
    pending = [r for r in records if r.id not in done]
    failures: list[tuple[str, str]] = []
    budget = config.evidence_budget

    t0 = time.perf_counter()
    n_new = 0
    # Constructing the stage backends up front surfaces misconfiguration
    # (unknown backend id, bad adapter checkpoint) before any claim runs.
    backends = {stage: build_stage_backend(config, stage) for stage in STAGES}
    with outputs_path.open("a", encoding="utf-8") as fh:

        def emit(output: PipelineOutput) -> None:
            nonlocal n_new
            fh.write(json.dumps(output_to_json(output), ensure_ascii=False) + "\n")
            fh.flush()
            n_new += 1

        if config.workers <= 1 or len(pending) <= 1:
            for record in pending:
                try:
                    emit(process_claim(record, evidence_map[record.id], config.scope,
                                       backends, budget))
                except Exception as exc:  # per-claim isolation
                    logger.warning("claim %s failed: %s", record.id, exc)
                    failures.append((record.id, str(exc)))
        else:
            local = threading.local()

            def stage_backends() -> dict:
                if not hasattr(local, "backends"):
                    local.backends = {
                        stage: build_stage_backend(config, stage) for stage in STAGES
                    }
                return local.backends

            def work(record: ClaimRecord):
                try:
                    return process_claim(
                        record, evidence_map[record.id], config.scope, stage_backends(), budget
                    )
                except Exception as exc:
                    logger.warning("claim %s failed: %s", record.id, exc)
                    return (record.id, str(exc))

            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                for result in pool.map(work, pending):
                    if isinstance(result, PipelineOutput):
                        emit(result)
                    else:
                        failures.append(result)
    timings["generation_s"] = round(time.perf_counter() - t0, 3)

    manifest = RunManifest(
        config=config.snapshot(),
        stages={
            "backend_id": config.backend_id,
            "retriever_checkpoint": str(config.retriever_checkpoint or "seeded-default"),
            "adapter_dir": str(config.adapter_dir or ""),
            "template_ids": _scope_templates(config.scope),
        },
        timings=timings,
        failures=[{"claim_id": cid, "reason": why} for cid, why in failures],
        counts={"records": len(records), "new": n_new, "skipped": len(done)},
    )
    manifest_path = config.out_dir / "manifest.json"
    manifest.write(manifest_path)
    return RunResult(outputs_path, manifest_path, n_new, len(done), failures)


def _scope_templates(scope: RunScope) -> dict[str, str]:
    if scope is RunScope.BASELINE:
        return {"justify": JUSTIFY_BASELINE_TEMPLATE_ID}
    if scope is RunScope.BASELINE_ASPECTS:
        return {"aspects": ASPECTS_TEMPLATE_ID, "justify": JUSTIFY_ASPECTS_TEMPLATE_ID}
    return {
        "aspects": ASPECTS_TEMPLATE_ID,
        "flaws": FLAWS_TEMPLATE_ID,
        "justify": JUSTIFY_TEMPLATE_ID,
    }


# --------------------------------------------------------------------------
# Other stage commands


def cmd_distill(config: PipelineConfig, resume: bool = True) -> DistillSummary:
    records = load_records(config, split=config.distill_split)
    store = ArticleStore(config.articles_dir)
    oracle = build_oracle(config.oracle_id)
    scope = config.scope.flaw_scope or FlawScope.F7
    if not resume and config.silver_file.exists():
        config.silver_file.unlink()
    return distill_corpus(
        records,
        store,
        oracle,
        config.silver_file,
        DistillConfig(scope=scope),
        workers=config.workers,
    )


def cmd_train_retriever(config: PipelineConfig) -> tuple[Path, list[float]]:
    records = load_records(config, split="train")
    store = ArticleStore(config.articles_dir)
    sentences = review_sentences_from_store(records, store)
    params = dict(config.retriever_train)
    alpha = int(params.pop("alpha", 1))
    beta = int(params.pop("beta", 2))
    triples = build_training_triples(records, sentences, alpha=alpha, beta=beta, seed=config.seed)
    train_config = RetrieverTrainConfig(seed=config.seed, **params)
    pair = EncoderPair.create(EncoderConfig(seed=config.seed))
    pair, curve = train_retriever(triples, pair, train_config)
    out = config.out_dir / "retriever"
    pair.save(out)
    logger.info("retriever loss %0.4f -> %0.4f", curve[0], curve[-1])
    return out, curve


def build_stage_examples(
    config: PipelineConfig,
    stage: str,
    records: Sequence[ClaimRecord],
    store: ArticleStore,
    evidence_map: Mapping[str, EvidenceSet],
) -> list[FineTuneExample]:
    """Assemble (rendered prompt, serialized target) pairs for one stage.

    Baseline scopes fine-tune their justifier on the matching baseline
    template (no flaw findings), so baselines and flaw-chain variants get
    identical training treatment.
    """
    if stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; expected one of {STAGES}")
    if stage == "flaws" and not config.scope.uses_flaws:
        raise PipelineError(f"scope {config.scope.value} has no flaw-checking stage")
    silver = read_silver(config.silver_file)
    scope = config.scope.flaw_scope or FlawScope.F7
    budget = config.evidence_budget
    examples: list[FineTuneExample] = []
    for record in records:
        entry = silver.get(record.id)
        if entry is None:
            continue
        evidence = evidence_map.get(record.id)
        if stage == "aspects":
            prompt = render_prompt(
                ASPECTS_TEMPLATE_ID, record.text, evidence=evidence, budget=budget
            )
            target = serialize_aspects(entry.aspects)
        elif stage == "flaws":
            prompt = render_prompt(
                FLAWS_TEMPLATE_ID, record.text, aspects=entry.aspects,
                evidence=evidence, scope=scope, budget=budget,
            )
            target = serialize_flaw_report(entry.report)
        else:
            if record.review_article is None:
                continue
            try:
                target = store.load(record.review_article).clean_text
            except (FileNotFoundError, CorpusError):
                continue
            if config.scope is RunScope.BASELINE:
                prompt = render_prompt(
                    JUSTIFY_BASELINE_TEMPLATE_ID, record.text,
                    evidence=evidence, budget=budget,
                )
            elif config.scope is RunScope.BASELINE_ASPECTS:
                prompt = render_prompt(
                    JUSTIFY_ASPECTS_TEMPLATE_ID, record.text, aspects=entry.aspects,
                    evidence=evidence, budget=budget,
                )
            else:
                prompt = render_prompt(
                    JUSTIFY_TEMPLATE_ID, record.text, flaw_report=entry.report,
                    evidence=evidence, budget=budget,
                )
        examples.append(FineTuneExample(prompt, target))
    return examples


def cmd_finetune(config: PipelineConfig, stage: str) -> tuple[Path, list[float]]:
    """Fine-tune the tiny backend's adapters for one stage and save them."""
    if config.backend_id != "tiny":
        raise PipelineError("fine-tuning requires backend_id 'tiny'")
    records = load_records(config, split="train")
    store = ArticleStore(config.articles_dir)
    evidence_map = ensure_evidence(
        config, records, store, path=config.out_dir / "evidence_train.jsonl"
    )
    examples = build_stage_examples(config, stage, records, store, evidence_map)
    if not examples:
        raise PipelineError(
            f"no fine-tune examples for stage {stage!r}; run distill first"
        )
    backend = TinyLMBackend(
        TinyLMConfig(max_len=1024, base_seed=config.seed), truncate_prompts=True
    )
    # Keep targets inside the tiny context window.
    usable = []
    for example in examples:
        if len(example.target) + 3 <= backend.max_context:
            usable.append(example)
        else:
            logger.warning("skipping over-long target (%d chars)", len(example.target))
    finetune_config = FinetuneConfig(seed=config.seed, **config.finetune)
    backend, curve = finetune_adapter(backend, usable, finetune_config)
    out = (config.adapter_dir or config.out_dir / "adapters") / stage
    template_id = _scope_templates(config.scope).get(stage, "")
    backend.save_adapters(out, template_id=template_id)
    logger.info("stage %s loss %0.4f -> %0.4f", stage, curve[0], curve[-1])
    return out, curve


# --------------------------------------------------------------------------
# Evaluation


def _ensure_classifier(
    config: PipelineConfig, store: ArticleStore
) -> VeracityClassifier:
    if config.classifier_checkpoint is not None and config.classifier_checkpoint.exists():
        return VeracityClassifier.load(config.classifier_checkpoint)
    cache_dir = config.out_dir / "classifier"
    if (cache_dir / "weights.pt").exists():
        return VeracityClassifier.load(cache_dir)
    train_records = load_records(config, split=config.classifier_train_split)
    texts: list[str] = []
    labels: list[VeracityLabel] = []
    for record in train_records:
        if record.review_article is None:
            continue
        try:
            texts.append(store.load(record.review_article).clean_text)
        except (FileNotFoundError, CorpusError) as exc:
            logger.warning("dropping %s from classifier training: %s", record.id, exc)
            continue
        labels.append(record.label)
    if not texts:
        raise PipelineError("no review articles available to train the veracity classifier")
    clf_config = ClassifierConfig(seed=config.seed, **config.classifier)
    clf, _ = train_classifier(texts, labels, clf_config)
    clf.save(cache_dir)
    return clf


def cmd_evaluate(config: PipelineConfig) -> dict:
    """Score a completed run: generation quality, judge scores, veracity.

    Writes three machine-readable reports (plus aligned text tables) into the
    run directory. Claims without gold data are excluded and counted.
    """
    outputs = read_outputs(config.out_dir / "outputs.jsonl")
    if not outputs:
        raise PipelineError(f"no pipeline outputs in {config.out_dir}")
    records = {r.id: r for r in load_records(config)}
    store = ArticleStore(config.articles_dir)
    embedder = HashedRandomEmbedder(seed=config.seed)
    judge = build_judge(config.judge_id)

    quality_items: list[tuple[VeracityLabel, dict[str, float]]] = []
    judge_items: list[tuple[VeracityLabel, dict[str, float]]] = []
    judge_raw: list[dict] = []
    veracity_pairs: list[tuple[str, VeracityLabel]] = []
    gold_review_pairs: list[tuple[str, VeracityLabel]] = []
    excluded = 0
    unjudged = 0
    for claim_id, output in outputs.items():
        record = records.get(claim_id)
        if record is None or record.review_article is None:
            excluded += 1
            continue
        try:
            gold_review = store.load(record.review_article).clean_text
        except (FileNotFoundError, CorpusError):
            excluded += 1
            continue
        quality_items.append(
            (
                record.label,
                {
                    "rouge1_f": float(rouge_n(output.justification, gold_review, 1).f1),
                    "rouge2_f": float(rouge_n(output.justification, gold_review, 2).f1),
                    "rougeL_f": float(rouge_l(output.justification, gold_review).f1),
                    "bertscore_f": bertscore(output.justification, gold_review, embedder),
                },
            )
        )
        score = judge_justification(output.justification, gold_review, judge)
        if score is None:
            unjudged += 1
        else:
            judge_items.append(
                (record.label,
                 {"correctness": score.correctness, "completeness": score.completeness})
            )
            judge_raw.append(
                {
                    "claim_id": claim_id,
                    "correctness": score.correctness,
                    "completeness": score.completeness,
                    "raw_correctness": score.raw_correctness,
                    "raw_completeness": score.raw_completeness,
                }
            )
        veracity_pairs.append((output.justification, record.label))
        gold_review_pairs.append((gold_review, record.label))

    if not quality_items:
        raise PipelineError("no evaluable outputs (missing gold reviews/labels)")

    quality_report = per_label_report(quality_items)
    judge_report = per_label_report(judge_items)

    clf = _ensure_classifier(config, store)
    generated_report = _classify_pairs(clf, veracity_pairs)
    gold_report = _classify_pairs(clf, gold_review_pairs)
    veracity_rows = {"gold_review": gold_report, "generated": generated_report}

    reports_dir = config.out_dir
    _write_label_report(reports_dir / "justification_report", quality_report,
                        ["rouge1_f", "rouge2_f", "rougeL_f", "bertscore_f"])
    _write_label_report(reports_dir / "judge_report", judge_report,
                        ["correctness", "completeness"])
    _write_veracity_report(reports_dir / "veracity_report", veracity_rows)
    with (reports_dir / "judge_raw.jsonl").open("w", encoding="utf-8") as fh:
        for entry in judge_raw:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    return {
        "justification": quality_report,
        "judge": judge_report,
        "veracity": veracity_rows,
        "excluded": excluded,
        "unjudged": unjudged,
        "n_scored": len(quality_items),
    }


def _classify_pairs(
    clf: VeracityClassifier, pairs: Sequence[tuple[str, VeracityLabel]]
) -> ClassificationReport:
    predicted = [classify(clf, text)[0] for text, _ in pairs]
    return score_predictions(predicted, [gold for _, gold in pairs])


def _write_label_report(stem: Path, report: dict, metric_order: list[str]) -> None:
    data = {
        metric: {label.value: value for label, value in cells.items()}
        for metric, cells in report.items()
    }
    stem.with_suffix(".json").write_text(json.dumps(data, indent=2), encoding="utf-8")
    stem.with_suffix(".txt").write_text(
        format_metric_table(report, metric_order) + "\n", encoding="utf-8"
    )


def _write_veracity_report(stem: Path, rows: dict[str, ClassificationReport]) -> None:
    data = {
        name: {
            "per_label_accuracy": {
                label.value: acc for label, acc in report.per_label_accuracy.items()
            },
            "macro_f1": report.macro_f1,
            "support": {label.value: n for label, n in report.support.items()},
            "n_items": report.n_items,
        }
        for name, report in rows.items()
    }
    stem.with_suffix(".json").write_text(json.dumps(data, indent=2), encoding="utf-8")
    stem.with_suffix(".txt").write_text(
        format_classification_table(rows) + "\n", encoding="utf-8"
    )
