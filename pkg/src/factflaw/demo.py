"""Synthetic demo corpus generator.

Builds a small, fully offline claim dataset (claims, premise articles with
realistic boilerplate, expert-style review articles) so the pipeline and its
tests can run end to end without any downloads. Output is deterministic for
a given seed.

Usage:  python -m factflaw.demo --out demo_data -n 24
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path

import yaml

from .corpus import (
    ArticleRef,
    ArticleStore,
    ClaimRecord,
    LABEL_ORDER,
    VeracityLabel,
    write_dataset,
)

_SUBJECTS = [
    "the harbor bridge", "the northern rail line", "the city reservoir",
    "the solar farm", "the coastal levee", "the transit authority",
    "the regional clinic", "the grain cooperative", "the river ferry",
    "the downtown library", "the wind corridor", "the port terminal",
]

_FACTS = [
    ("opened in", ["2017", "2018", "2019", "2020", "2021"]),
    ("cost", ["40 million", "65 million", "90 million", "120 million"]),
    ("serves", ["ten thousand", "twenty-five thousand", "eighty thousand"]),
    ("employs", ["two hundred", "four hundred", "nine hundred"]),
    ("cut travel times by", ["a tenth", "a quarter", "a third", "half"]),
]

_VERDICT_SENTENCES = {
    VeracityLabel.FALSE: (
        "Our verdict: the claim is false. Official records directly "
        "contradict the figure being circulated."
    ),
    VeracityLabel.PARTLY_FALSE: (
        "Our verdict: the claim is partly false. One detail checks out, but "
        "the headline figure is wrong."
    ),
    VeracityLabel.UNPROVEN: (
        "Our verdict: the claim is unproven. No reliable record confirms or "
        "refutes the figure so far."
    ),
    VeracityLabel.TRUE: (
        "Our verdict: the claim is true. The published records bear out the "
        "figure as stated."
    ),
}

# (site, raw rating) pairs consistent with the shipped label map.
_RATINGS = {
    VeracityLabel.FALSE: [("politifact", "False"), ("snopes", "False"), ("afp", "False")],
    VeracityLabel.PARTLY_FALSE: [
        ("politifact", "Half True"), ("snopes", "Mixture"), ("factcheck_org", "Misleading"),
    ],
    VeracityLabel.UNPROVEN: [
        ("snopes", "Unproven"), ("fullfact", "Unsubstantiated"), ("leadstories", "Unfounded"),
    ],
    VeracityLabel.TRUE: [
        ("politifact", "True"), ("truthorfiction", "Truth"), ("altnews", "True"),
    ],
}

_FOOTER = "Subscribe to our newsletter for daily updates"


def _premise_text(rng: random.Random, subject: str, fact: str, value: str) -> str:
    other = rng.choice([s for s in _SUBJECTS if s != subject])
    year = rng.choice(["2016", "2019", "2022"])
    paragraphs = [
        f"City desk report, {year}.",
        (
            f"Officials confirmed this week that {subject} {fact} {value}, "
            f"according to documents released by the records office. "
            f"An audit of {subject} began in {year} and covered three districts. "
            f"Residents near {other} raised similar questions last spring."
        ),
        (
            f"The planning board said {subject} remains under review. "
            f"A spokesperson declined to give further figures. "
            f"Independent analysts noted that earlier estimates for {subject} varied widely."
        ),
    ]
    noisy = [_FOOTER, paragraphs[0], _FOOTER, "", paragraphs[1], "", paragraphs[2], _FOOTER]
    return "\n".join(noisy)


def _review_text(rng: random.Random, claim: str, label: VeracityLabel, subject: str) -> str:
    detail = rng.choice(
        [
            f"We compared the circulated number with the ledger entries for {subject}.",
            f"We interviewed two officials responsible for {subject}.",
            f"We reviewed the public filings covering {subject} for the last three years.",
        ]
    )
    return "\n\n".join(
        [
            f"Fact check: {claim}",
            f"{_VERDICT_SENTENCES[label]} {detail} "
            f"The documentation trail for {subject} is summarized below.",
            (
                f"Readers should note that figures about {subject} are often "
                f"quoted without context. The full records remain available "
                f"on request."
            ),
        ]
    )


def make_demo_corpus(
    out_dir: str | Path, n: int = 24, seed: int = 13, train_fraction: float = 0.5
) -> tuple[Path, Path]:
    """Write ``dataset.jsonl`` plus an article store; returns their paths.

    Labels cycle so every class appears in both splits once n >= 8.
    """
    rng = random.Random(seed)
    out_dir = Path(out_dir)
    articles_dir = out_dir / "articles"
    store = ArticleStore(articles_dir)
    n_train = round(n * train_fraction)
    records = []
    for i in range(n):
        label = LABEL_ORDER[i % len(LABEL_ORDER)]
        split = "train" if i < n_train else "test"
        subject = _SUBJECTS[i % len(_SUBJECTS)]
        fact, values = _FACTS[i % len(_FACTS)]
        value = rng.choice(values)
        claim = f"Records show that {subject} {fact} {value}."
        site, rating = rng.choice(_RATINGS[label])
        premise_refs = []
        for j in range(2):
            uri = f"https://news.example.org/{split}/{i}/premise-{j}"
            store.put(uri, _premise_text(rng, subject, fact, value))
            premise_refs.append(ArticleRef(uri))
        review_uri = f"https://factcheck.example.org/{split}/{i}/review"
        store.put(review_uri, _review_text(rng, claim, label, subject))
        records.append(
            ClaimRecord(
                id=f"demo-{i:04d}",
                text=claim,
                source_site=site,
                original_rating=rating,
                label=label,
                premise_articles=tuple(premise_refs),
                review_article=ArticleRef(review_uri),
                split=split,
            )
        )
    dataset_path = out_dir / "dataset.jsonl"
    write_dataset(records, dataset_path)
    return dataset_path, articles_dir


def write_demo_config(out_dir: str | Path, dataset: Path, articles_dir: Path) -> Path:
    out_dir = Path(out_dir)
    config = {
        "dataset": str(dataset),
        "articles_dir": str(articles_dir),
        "out_dir": str(out_dir / "run"),
        "scope": "7f",
        "backend_id": "mock",
        "judge_id": "mock",
        "oracle_id": "mock",
        "seed": 13,
        "retriever_k": 50,
    }
    path = out_dir / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_data", help="output directory")
    parser.add_argument("-n", type=int, default=24, help="number of claims")
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args(argv)
    dataset, articles = make_demo_corpus(args.out, n=args.n, seed=args.seed)
    config = write_demo_config(args.out, dataset, articles)
    print(f"dataset:  {dataset}")
    print(f"articles: {articles}")
    print(f"config:   {config}")


if __name__ == "__main__":
    main()
