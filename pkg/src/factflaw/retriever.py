"""Dense evidence retrieval.

A claim encoder and a sentence encoder map text to d_emb vectors; relevance
is their dot product. Training minimizes the negative log likelihood of each
claim's positive sentence against its positives and negatives (explicit or
in-batch). Retrieval is an exact full scan over the claim's premise
sentences: per-claim pools are small, so no approximate index is involved.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn

from .corpus import Article, ArticleRef, ArticleStore, ClaimRecord, CorpusError

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 50


class RetrieverError(Exception):
    pass


class RetrieverTrainingError(RetrieverError):
    """Non-finite loss or invalid training configuration."""


# --------------------------------------------------------------------------
# Encoders

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _hash_bucket(token: str, n_buckets: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n_buckets


@dataclass(frozen=True)
class EncoderConfig:
    d_emb: int = 64
    n_buckets: int = 4096
    max_len: int = 128
    tokenizer_id: str = "hashed-words-v1"
    shared_weights: bool = False
    seed: int = 13


class HashedBowEncoder(nn.Module):
    """Mean of hashed token embeddings followed by a linear projection.

    Small enough to train on a laptop yet expressive enough to memorize a
    retrieval fixture; inference is deterministic (no dropout, eval mode).
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.n_buckets, config.d_emb)
        self.projection = nn.Linear(config.d_emb, config.d_emb)

    def bucket_ids(self, text: str) -> list[int]:
        tokens = _WORD_RE.findall(text.lower())[: self.config.max_len]
        return [_hash_bucket(t, self.config.n_buckets) for t in tokens]

    def forward_ids(self, batch_ids: Sequence[Sequence[int]]) -> torch.Tensor:
        max_len = max((len(ids) for ids in batch_ids), default=1) or 1
        ids = torch.zeros((len(batch_ids), max_len), dtype=torch.long)
        mask = torch.zeros((len(batch_ids), max_len))
        for row, id_list in enumerate(batch_ids):
            if id_list:
                ids[row, : len(id_list)] = torch.tensor(id_list)
                mask[row, : len(id_list)] = 1.0
        emb = self.embedding(ids) * mask.unsqueeze(-1)
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        return self.projection(emb.sum(dim=1) / denom)

    def encode_train(self, texts: Sequence[str]) -> torch.Tensor:
        """Differentiable batch encoding used during training."""
        return self.forward_ids([self.bucket_ids(t) for t in texts])

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        self.eval()
        with torch.no_grad():
            return self.encode_train(texts).numpy().astype(np.float64)

    def encode(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot encode empty text")
        return self.encode_batch([text])[0]


@dataclass
class EncoderPair:
    """Claim and sentence encoders; may share weights if configured."""

    claim_encoder: HashedBowEncoder
    sentence_encoder: HashedBowEncoder
    config: EncoderConfig

    @classmethod
    def create(cls, config: EncoderConfig | None = None) -> "EncoderPair":
        config = config or EncoderConfig()
        torch.manual_seed(config.seed)
        claim_enc = HashedBowEncoder(config)
        sent_enc = claim_enc if config.shared_weights else HashedBowEncoder(config)
        return cls(claim_enc, sent_enc, config)

    def parameters(self):
        params = list(self.claim_encoder.parameters())
        if self.sentence_encoder is not self.claim_encoder:
            params += list(self.sentence_encoder.parameters())
        return params

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.claim_encoder.state_dict(), directory / "claim_encoder.pt")
        if self.sentence_encoder is not self.claim_encoder:
            torch.save(self.sentence_encoder.state_dict(), directory / "sentence_encoder.pt")
        (directory / "manifest.json").write_text(
            json.dumps(asdict(self.config), indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "EncoderPair":
        directory = Path(directory)
        config = EncoderConfig(**json.loads((directory / "manifest.json").read_text()))
        pair = cls.create(config)
        pair.claim_encoder.load_state_dict(
            torch.load(directory / "claim_encoder.pt", weights_only=True)
        )
        if not config.shared_weights:
            pair.sentence_encoder.load_state_dict(
                torch.load(directory / "sentence_encoder.pt", weights_only=True)
            )
        return pair


# --------------------------------------------------------------------------
# Similarity and ranking loss


def similarity(v: Sequence[float], u: Sequence[float]) -> float:
    """Plain dot product; raises on length mismatch."""
    v_arr = np.asarray(v, dtype=np.float64)
    u_arr = np.asarray(u, dtype=np.float64)
    if v_arr.shape != u_arr.shape or v_arr.ndim != 1:
        raise ValueError(f"similarity expects equal-length vectors, got {v_arr.shape} vs {u_arr.shape}")
    return float(v_arr @ u_arr)


def _as_float_tensor(value) -> torch.Tensor:
    # float64 throughout: the loss carries tolerance guarantees much tighter
    # than float32 resolution. The cast is differentiable, so gradients still
    # reach float32 encoder parameters.
    tensor = torch.as_tensor(value)
    return tensor if tensor.dtype == torch.float64 else tensor.double()


def nll_loss_from_scores(
    pos_scores: torch.Tensor, neg_scores: torch.Tensor, target_pos_index: int = 0
) -> torch.Tensor:
    """-log softmax of the target positive over all positive+negative scores.

    Computed with explicit max subtraction so large scores cannot overflow;
    shifting every score by a constant leaves the value unchanged.
    """
    pos_scores = _as_float_tensor(pos_scores)
    neg_scores = _as_float_tensor(neg_scores)
    if pos_scores.numel() == 0:
        raise ValueError("at least one positive score is required")
    if not 0 <= target_pos_index < pos_scores.numel():
        raise ValueError(
            f"target_pos_index {target_pos_index} out of range for {pos_scores.numel()} positives"
        )
    scores = torch.cat([pos_scores.reshape(-1), neg_scores.reshape(-1)])
    shift = scores.max().detach()
    log_norm = shift + torch.log(torch.exp(scores - shift).sum())
    return log_norm - pos_scores.reshape(-1)[target_pos_index]


def nll_loss(
    claim_vec,
    pos_vecs,
    neg_vecs,
    target_pos_index: int = 0,
) -> torch.Tensor:
    """Ranking loss for one claim given positive and negative sentence vectors.

    Accepts tensors or array-likes; keeps the autograd graph when tensors
    carry gradients. ``neg_vecs`` may be empty (shape (0, d)).
    """
    claim = _as_float_tensor(claim_vec)
    pos = _as_float_tensor(pos_vecs)
    if claim.ndim != 1:
        raise ValueError("claim_vec must be 1-D")
    if pos.ndim != 2 or pos.shape[0] == 0:
        raise ValueError("pos_vecs must be a non-empty 2-D array (alpha, d)")
    if isinstance(neg_vecs, torch.Tensor) or (
        hasattr(neg_vecs, "__len__") and len(neg_vecs) > 0
    ):
        neg = _as_float_tensor(neg_vecs)
        if neg.numel() == 0:
            neg = neg.reshape(0, claim.shape[-1])
    else:
        neg = torch.zeros((0, claim.shape[-1]), dtype=claim.dtype)
    if pos.shape[-1] != claim.shape[-1] or (neg.numel() and neg.shape[-1] != claim.shape[-1]):
        raise ValueError("vector dimensions disagree")
    pos_scores = pos @ claim
    neg_scores = neg @ claim if neg.shape[0] else torch.zeros(0, dtype=pos_scores.dtype)
    return nll_loss_from_scores(pos_scores, neg_scores, target_pos_index)


# --------------------------------------------------------------------------
# Training data


@dataclass(frozen=True)
class TrainingTriple:
    claim: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "positives", tuple(self.positives))
        object.__setattr__(self, "negatives", tuple(self.negatives))
        if not self.positives:
            raise ValueError("a training triple needs at least one positive")


def _lexical_overlap(claim_tokens: set[str], sentence: str) -> int:
    return len(claim_tokens & set(_WORD_RE.findall(sentence.lower())))


def build_training_triples(
    records: Sequence[ClaimRecord],
    review_sentences: Mapping[str, Sequence[str]],
    alpha: int = 1,
    beta: int = 1,
    seed: int = 13,
) -> list[TrainingTriple]:
    """Build (claim, positives, negatives) triples from segmented reviews.

    ``review_sentences`` maps record id to that record's review-article
    sentences. Positives are the claim's own review sentences ranked by
    lexical overlap with the claim (ties to the earlier sentence); negatives
    are sampled with a seeded RNG from other claims' review sentences.
    Records whose review has fewer than ``alpha`` sentences are skipped with
    a warning.
    """
    rng = random.Random(seed)
    triples: list[TrainingTriple] = []
    skipped = 0
    for record in records:
        own = list(review_sentences.get(record.id, ()))
        if len(own) < alpha:
            skipped += 1
            logger.warning(
                "skipping %s: review has %d sentences, need %d", record.id, len(own), alpha
            )
            continue
        claim_tokens = set(_WORD_RE.findall(record.text.lower()))
        ranked = sorted(
            range(len(own)),
            key=lambda i: (-_lexical_overlap(claim_tokens, own[i]), i),
        )
        positives = tuple(own[i] for i in ranked[:alpha])
        pool = [
            sentence
            for other in records
            if other.id != record.id
            for sentence in review_sentences.get(other.id, ())
        ]
        if len(pool) >= beta:
            negatives = tuple(rng.sample(pool, beta))
        else:
            negatives = tuple(pool)
            if beta and not pool:
                logger.warning("no negative pool for %s", record.id)
        triples.append(TrainingTriple(record.text, positives, negatives))
    if skipped:
        logger.warning("build_training_triples skipped %d records", skipped)
    return triples


def review_sentences_from_store(
    records: Sequence[ClaimRecord], store: ArticleStore
) -> dict[str, list[str]]:
    """Convenience loader: segmented review sentences per record id."""
    out: dict[str, list[str]] = {}
    for record in records:
        if record.review_article is None:
            continue
        try:
            article = store.load(record.review_article)
        except (FileNotFoundError, CorpusError) as exc:
            logger.warning("cannot load review for %s: %s", record.id, exc)
            continue
        out[record.id] = [s.text for s in article.sentences]
    return out


# --------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class RetrieverTrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-2
    # "in_batch": negatives are the other claims' positives in the batch
    # (beta = batch - 1). "explicit": each triple's own negatives are used.
    mode: str = "in_batch"
    seed: int = 13

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.mode not in ("in_batch", "explicit"):
            raise ValueError(f"unknown training mode {self.mode!r}")


def _batch_loss_in_batch(pair: EncoderPair, batch: Sequence[TrainingTriple]) -> torch.Tensor:
    claims = pair.claim_encoder.encode_train([t.claim for t in batch])
    positives = pair.sentence_encoder.encode_train([t.positives[0] for t in batch])
    scores = claims @ positives.T
    losses = []
    for i in range(len(batch)):
        neg = torch.cat([scores[i, :i], scores[i, i + 1 :]])
        losses.append(nll_loss_from_scores(scores[i, i : i + 1], neg))
    return torch.stack(losses).mean()


def _batch_loss_explicit(pair: EncoderPair, batch: Sequence[TrainingTriple]) -> torch.Tensor:
    losses = []
    for triple in batch:
        claim = pair.claim_encoder.encode_train([triple.claim])[0]
        pos = pair.sentence_encoder.encode_train(list(triple.positives))
        if triple.negatives:
            neg = pair.sentence_encoder.encode_train(list(triple.negatives))
        else:
            neg = torch.zeros((0, claim.shape[0]))
        per_target = [
            nll_loss(claim, pos, neg, target_pos_index=q) for q in range(len(triple.positives))
        ]
        losses.append(torch.stack(per_target).mean())
    return torch.stack(losses).mean()


def train_retriever(
    triples: Sequence[TrainingTriple],
    pair: EncoderPair,
    config: RetrieverTrainConfig | None = None,
) -> tuple[EncoderPair, list[float]]:
    """Train the encoder pair; returns it with the mean loss per epoch.

    Aborts with :class:`RetrieverTrainingError` (carrying the batch index and
    encoder output norms) if the loss goes non-finite.
    """
    if not triples:
        raise RetrieverTrainingError("no training triples")
    config = config or RetrieverTrainConfig()
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    batch_loss = _batch_loss_in_batch if config.mode == "in_batch" else _batch_loss_explicit
    optimizer = torch.optim.Adam(pair.parameters(), lr=config.lr)
    curve: list[float] = []
    order = list(range(len(triples)))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [triples[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            loss = batch_loss(pair, batch)
            if not torch.isfinite(loss):
                norms = [float(p.detach().norm()) for p in pair.parameters()]
                raise RetrieverTrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}; "
                    f"parameter norms {norms}"
                )
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        curve.append(sum(epoch_losses) / len(epoch_losses))
    return pair, curve


# --------------------------------------------------------------------------
# Retrieval


@dataclass(frozen=True)
class EvidenceItem:
    text: str
    article_uri: str
    sentence_index: int
    score: float


@dataclass(frozen=True)
class EvidenceSet:
    """Ranked evidence sentences; scores non-increasing, ties broken by
    ascending (article uri, sentence index)."""

    claim_id: str
    items: tuple[EvidenceItem, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        scores = [item.score for item in self.items]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("evidence scores must be non-increasing")
        if len(self.items) > self.k:
            raise ValueError("more items than k")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def retrieve_evidence(
    pair: EncoderPair,
    claim: str,
    premise_articles: Sequence[Article],
    k: int = DEFAULT_TOP_K,
    claim_id: str = "",
) -> EvidenceSet:
    """Exact top-k premise sentences by dot product (full scan, no index)."""
    sentences: list[tuple[ArticleRef, int, str]] = []
    for article in premise_articles:
        for sentence in article.sentences:
            sentences.append((article.ref, sentence.index, sentence.text))
    if not sentences:
        logger.warning("claim %s has no premise sentences", claim_id or claim[:40])
        return EvidenceSet(claim_id=claim_id, items=(), k=k)
    claim_vec = pair.claim_encoder.encode(claim)
    sent_vecs = pair.sentence_encoder.encode_batch([text for _, _, text in sentences])
    scores = sent_vecs @ claim_vec
    ranked = sorted(
        range(len(sentences)),
        key=lambda i: (-scores[i], sentences[i][0].uri, sentences[i][1]),
    )
    items = tuple(
        EvidenceItem(
            text=sentences[i][2],
            article_uri=sentences[i][0].uri,
            sentence_index=sentences[i][1],
            score=float(scores[i]),
        )
        for i in ranked[:k]
    )
    return EvidenceSet(claim_id=claim_id, items=items, k=k)


# --------------------------------------------------------------------------
# Evidence cache file (JSON lines, one EvidenceSet per claim)


def evidence_to_json(evidence: EvidenceSet) -> dict:
    return {
        "claim_id": evidence.claim_id,
        "k": evidence.k,
        "items": [
            {
                "text": item.text,
                "article_uri": item.article_uri,
                "sentence_index": item.sentence_index,
                "score": item.score,
            }
            for item in evidence.items
        ],
    }


def evidence_from_json(data: Mapping) -> EvidenceSet:
    return EvidenceSet(
        claim_id=data["claim_id"],
        items=tuple(
            EvidenceItem(
                text=item["text"],
                article_uri=item["article_uri"],
                sentence_index=int(item["sentence_index"]),
                score=float(item["score"]),
            )
            for item in data["items"]
        ),
        k=int(data["k"]),
    )


def write_evidence_cache(evidence_sets: Iterable[EvidenceSet], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ev in evidence_sets:
            fh.write(json.dumps(evidence_to_json(ev), ensure_ascii=False) + "\n")


def read_evidence_cache(path: str | Path) -> dict[str, EvidenceSet]:
    out: dict[str, EvidenceSet] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                ev = evidence_from_json(json.loads(line))
                out[ev.claim_id] = ev
    return out
