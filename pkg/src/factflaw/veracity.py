"""Four-class veracity classification.

The classifier is trained on expert review articles and then applied to
generated justifications. The backend is a contract, not a named model: the
shipped implementation is a small hashed bag-of-words network that trains in
seconds and is deterministic given a seed; a large pretrained encoder can be
substituted behind the same train/classify surface.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import LABEL_ORDER, VeracityLabel

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class VeracityError(Exception):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 64
    n_buckets: int = 2048
    max_len: int = 256
    epochs: int = 30
    lr: float = 1e-2
    batch_size: int = 16
    seed: int = 13
    # Inverse-frequency class weighting for the imbalanced label distribution;
    # off by default.
    class_weighting: bool = False


def _hash_bucket(token: str, n_buckets: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n_buckets


class _BowNet(nn.Module):
    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.embedding = nn.Embedding(config.n_buckets, config.hidden)
        self.fc1 = nn.Linear(config.hidden, config.hidden)
        self.fc2 = nn.Linear(config.hidden, len(LABEL_ORDER))

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        emb = self.embedding(ids) * mask.unsqueeze(-1)
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        pooled = emb.sum(dim=1) / denom
        return self.fc2(F.relu(self.fc1(pooled)))


class VeracityClassifier:
    """Trained classifier handle: immutable after training, safe to share."""

    backend_id = "hashed-bow-mlp-v1"
    label_order: tuple[VeracityLabel, ...] = LABEL_ORDER

    def __init__(self, config: ClassifierConfig):
        self.config = config
        self.model = _BowNet(config)

    def _featurize(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        rows = [
            [_hash_bucket(t, self.config.n_buckets)
             for t in _WORD_RE.findall(text.lower())[: self.config.max_len]]
            for text in texts
        ]
        width = max((len(r) for r in rows), default=1) or 1
        ids = torch.zeros((len(rows), width), dtype=torch.long)
        mask = torch.zeros((len(rows), width))
        for i, row in enumerate(rows):
            if row:
                ids[i, : len(row)] = torch.tensor(row)
                mask[i, : len(row)] = 1.0
        return ids, mask

    def probabilities(self, text: str) -> np.ndarray:
        """Probability vector over [False, Partly false, Unproven, True]."""
        if not text or not text.strip():
            raise VeracityError("cannot classify empty text")
        self.model.eval()
        with torch.no_grad():
            ids, mask = self._featurize([text])
            return self.model(ids, mask).softmax(dim=-1)[0].numpy().astype(np.float64)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), directory / "weights.pt")
        manifest = {
            "backend_id": self.backend_id,
            "label_order": [label.value for label in self.label_order],
            "config": asdict(self.config),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), "utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "VeracityClassifier":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text("utf-8"))
        if manifest["backend_id"] != cls.backend_id:
            raise VeracityError(f"unsupported classifier backend {manifest['backend_id']}")
        clf = cls(ClassifierConfig(**manifest["config"]))
        clf.model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
        return clf


def train_classifier(
    texts: Sequence[str],
    labels: Sequence[VeracityLabel],
    config: ClassifierConfig | None = None,
) -> tuple[VeracityClassifier, list[float]]:
    """Cross-entropy training over the four classes; deterministic per seed.

    Returns the classifier and the mean loss per epoch. Labels missing from
    the training data only draw a warning: the classifier still outputs four
    probabilities.
    """
    if len(texts) != len(labels):
        raise VeracityError(f"{len(texts)} texts vs {len(labels)} labels")
    if not texts:
        raise VeracityError("empty training set")
    config = config or ClassifierConfig()
    present = set(labels)
    for label in LABEL_ORDER:
        if label not in present:
            logger.warning("label %s absent from classifier training data", label.value)
    torch.manual_seed(config.seed)
    clf = VeracityClassifier(config)
    ids, mask = clf._featurize(texts)
    targets = torch.tensor([LABEL_ORDER.index(label) for label in labels])
    weights = None
    if config.class_weighting:
        counts = torch.tensor(
            [max(1, sum(1 for l in labels if l is label)) for label in LABEL_ORDER],
            dtype=torch.float,
        )
        weights = counts.sum() / (len(LABEL_ORDER) * counts)
    optimizer = torch.optim.Adam(clf.model.parameters(), lr=config.lr)
    generator = torch.Generator().manual_seed(config.seed)
    curve: list[float] = []
    clf.model.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(texts), generator=generator)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = clf.model(ids[batch_idx], mask[batch_idx])
            loss = F.cross_entropy(logits, targets[batch_idx], weight=weights)
            if not torch.isfinite(loss):
                raise VeracityError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        curve.append(sum(epoch_losses) / len(epoch_losses))
    clf.model.eval()
    return clf, curve


def classify(clf: VeracityClassifier, text: str) -> tuple[VeracityLabel, np.ndarray]:
    """Argmax label plus the probability vector; ties go to the earlier label
    in the fixed [False, Partly false, Unproven, True] order."""
    probs = clf.probabilities(text)
    return LABEL_ORDER[int(np.argmax(probs))], probs


# --------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class ClassificationReport:
    """Per-label accuracy (recall on that gold label) and macro F1.

    ``per_label_accuracy`` has None for labels with no gold examples (absent
    cells, never zero-filled). Macro F1 averages F1 over every label that
    occurs among the golds or the predictions; labels absent from both are
    excluded. A label with golds but no correct predictions scores F1 = 0.
    """

    per_label_accuracy: dict[VeracityLabel, float | None]
    macro_f1: float
    support: dict[VeracityLabel, int]
    n_items: int


def score_predictions(
    predicted: Sequence[VeracityLabel], golds: Sequence[VeracityLabel]
) -> ClassificationReport:
    if len(predicted) != len(golds):
        raise VeracityError(f"{len(predicted)} predictions vs {len(golds)} golds")
    if not golds:
        raise VeracityError("nothing to evaluate")
    per_label_accuracy: dict[VeracityLabel, float | None] = {}
    support: dict[VeracityLabel, int] = {}
    f1_values: list[float] = []
    for label in LABEL_ORDER:
        tp = sum(1 for p, g in zip(predicted, golds) if p is label and g is label)
        fp = sum(1 for p, g in zip(predicted, golds) if p is label and g is not label)
        fn = sum(1 for p, g in zip(predicted, golds) if p is not label and g is label)
        n_gold = tp + fn
        support[label] = n_gold
        per_label_accuracy[label] = (tp / n_gold) if n_gold else None
        if n_gold == 0 and tp + fp == 0:
            continue  # label absent from golds and predictions alike
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / n_gold if n_gold else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1_values.append(f1)
    macro_f1 = math.fsum(f1_values) / len(f1_values) if f1_values else 0.0
    return ClassificationReport(per_label_accuracy, macro_f1, support, len(golds))


def evaluate_classifier(
    clf: VeracityClassifier, pairs: Sequence[tuple[str, VeracityLabel]]
) -> ClassificationReport:
    """Classify each justification and score against its gold label."""
    if not pairs:
        raise VeracityError("nothing to evaluate")
    predicted = [classify(clf, text)[0] for text, _ in pairs]
    return score_predictions(predicted, [gold for _, gold in pairs])


def format_classification_table(rows: dict[str, ClassificationReport]) -> str:
    """Aligned table: one row per data source, per-label accuracy + macro F1."""
    headers = ["source"] + [label.display for label in LABEL_ORDER] + ["Macro F1"]
    body = []
    for name, report in rows.items():
        cells = [name]
        for label in LABEL_ORDER:
            acc = report.per_label_accuracy.get(label)
            cells.append("-" if acc is None else f"{acc:.4f}")
        cells.append(f"{report.macro_f1:.4f}")
        body.append(cells)
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in body)) if body else len(headers[i])
        for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
