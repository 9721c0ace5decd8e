"""Acceptance criteria, one test per criterion.

Each test pins the tolerances stated in the project contract and asserts its
runtime budget. The terminal summary (see conftest) prints one PASS/FAIL line
per criterion. Full-scale benchmark figures are explicitly out of scope at
desk scale (criterion 10); these criteria are the substitute.
"""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest
import torch

from factflaw.backends import TinyLMBackend, TinyLMConfig
from factflaw.corpus import LABEL_ORDER, VeracityLabel, dataset_stats, load_dataset
from factflaw.demo import make_demo_corpus
from factflaw.generation import FinetuneConfig, FineTuneExample, finetune_adapter
from factflaw.metrics import rouge_l, rouge_n
from factflaw.pipeline import (
    PipelineConfig,
    RunScope,
    cmd_evaluate,
    load_records,
    read_outputs,
    run_pipeline,
)
from factflaw.retriever import (
    EncoderConfig,
    EncoderPair,
    nll_loss,
    nll_loss_from_scores,
    retrieve_evidence,
)
from factflaw.veracity import ClassifierConfig, classify, score_predictions, train_classifier

from oracles import brute_force_topk, lcs_oracle, macro_f1_oracle, ngram_overlap_oracle
from test_corpus import make_record
from test_retriever import make_article
from test_veracity import keyword_corpus


def test_c01_ranking_loss_values_and_shift_invariance():
    start = time.perf_counter()
    # Worked examples.
    assert abs(float(nll_loss_from_scores(torch.tensor([2.5]), torch.tensor([])))) < 1e-9
    loss = nll_loss_from_scores(torch.tensor([0.3]), torch.tensor([0.3]))
    assert abs(float(loss) - math.log(2)) < 1e-9
    loss = nll_loss_from_scores(torch.tensor([1.0]), torch.tensor([0.0]))
    assert abs(float(loss) - math.log(1 + math.exp(-1))) < 1e-9
    # Shift invariance on 100 random instances.
    rng = np.random.default_rng(101)
    for _ in range(100):
        pos = rng.normal(size=int(rng.integers(1, 5))) * 3
        neg = rng.normal(size=int(rng.integers(0, 9))) * 3
        target = int(rng.integers(0, len(pos)))
        shift = float(rng.normal() * 100)
        base = float(nll_loss_from_scores(torch.tensor(pos), torch.tensor(neg), target))
        moved = float(
            nll_loss_from_scores(torch.tensor(pos + shift), torch.tensor(neg + shift), target)
        )
        assert abs(base - moved) < 1e-9
    assert time.perf_counter() - start < 1.0


def test_c02_gradient_matches_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    h = 1e-5
    for _ in range(50):
        d = int(rng.integers(1, 9))
        alpha = int(rng.integers(1, 5))
        beta = int(rng.integers(0, 9))
        target = int(rng.integers(0, alpha))
        claim = rng.normal(size=d)
        pos = rng.normal(size=(alpha, d))
        neg = rng.normal(size=(beta, d))

        tensors = {
            "claim": torch.tensor(claim, requires_grad=True),
            "pos": torch.tensor(pos, requires_grad=True),
            "neg": torch.tensor(neg, requires_grad=True),
        }
        nll_loss(tensors["claim"], tensors["pos"], tensors["neg"], target).backward()

        arrays = {"claim": claim, "pos": pos, "neg": neg}

        def value(parts):
            return float(nll_loss(parts["claim"], parts["pos"], parts["neg"], target))

        for name, array in arrays.items():
            if tensors[name].grad is None:
                assert array.size == 0  # empty negatives never enter the graph
                continue
            grad = tensors[name].grad.reshape(-1)
            flat = array.reshape(-1)
            for idx in range(flat.size):
                up = dict(arrays)
                bumped = array.copy().reshape(-1)
                bumped[idx] += h
                up[name] = bumped.reshape(array.shape)
                down = dict(arrays)
                bumped = array.copy().reshape(-1)
                bumped[idx] -= h
                down[name] = bumped.reshape(array.shape)
                numeric = (value(up) - value(down)) / (2 * h)
                analytic = float(grad[idx])
                # The 1e-5 floor keeps float64 finite-difference roundoff
                # (~1e-10 absolute) from swamping near-zero gradients.
                denom = max(abs(numeric), abs(analytic), 1e-5)
                assert abs(numeric - analytic) / denom < 1e-4
    assert time.perf_counter() - start < 10.0


def test_c03_retrieval_equals_brute_force_with_ties():
    start = time.perf_counter()
    pair = EncoderPair.create(EncoderConfig(d_emb=16, seed=13))
    rng = np.random.default_rng(303)
    vocab = [f"word{i}" for i in range(40)]
    texts = [
        " ".join(rng.choice(vocab, size=rng.integers(3, 9)))
        for _ in range(940)
    ]
    texts += [texts[i] for i in range(60)]  # constructed ties: exact duplicates
    assert len(texts) == 1000
    articles = [
        make_article("https://x.test/a", texts[:400]),
        make_article("https://x.test/b", texts[400:700]),
        make_article("https://x.test/c", texts[700:]),
    ]
    claim = "which word sentences match this claim about word7 and word21"
    claim_vec = pair.claim_encoder.encode(claim)
    entries = []
    for article in articles:
        vecs = pair.sentence_encoder.encode_batch([s.text for s in article.sentences])
        for sentence, vec in zip(article.sentences, vecs):
            entries.append(
                (float(vec @ claim_vec), article.ref.uri, sentence.index, sentence.text)
            )
    for k in (1, 5, 50):
        expected = brute_force_topk(entries, k)
        got = retrieve_evidence(pair, claim, articles, k=k)
        assert [(i.score, i.article_uri, i.sentence_index, i.text) for i in got] == expected
    assert time.perf_counter() - start < 5.0


HAND_ROUGE_CASES = [
    # (metric, candidate, reference, precision, recall, f1)
    ("r1", "the cat sat", "the cat sat", Fraction(1), Fraction(1), Fraction(1)),
    ("r1", "aa bb", "cc dd", Fraction(0), Fraction(0), Fraction(0)),
    ("r1", "the the the the", "the end", Fraction(1, 4), Fraction(1, 2), Fraction(1, 3)),
    ("r1", "the cat sat on the mat", "the cat lay on the mat",
     Fraction(5, 6), Fraction(5, 6), Fraction(5, 6)),
    ("r1", "", "x y", Fraction(0), Fraction(0), Fraction(0)),
    ("r2", "a a a", "a a", Fraction(1, 2), Fraction(1), Fraction(2, 3)),
    ("r2", "a b c", "a b d", Fraction(1, 2), Fraction(1, 2), Fraction(1, 2)),
    ("rl", "a b c d", "a c b d", Fraction(3, 4), Fraction(3, 4), Fraction(3, 4)),
    ("rl", "a b", "b a", Fraction(1, 2), Fraction(1, 2), Fraction(1, 2)),
    ("rl", "", "a b", Fraction(0), Fraction(0), Fraction(0)),
    ("rl", "same words here", "same words here", Fraction(1), Fraction(1), Fraction(1)),
]


def test_c04_rouge_exactness_and_oracle_equivalence():
    start = time.perf_counter()
    for metric, cand, ref, p, r, f in HAND_ROUGE_CASES:
        if metric == "r1":
            score = rouge_n(cand, ref, 1)
        elif metric == "r2":
            score = rouge_n(cand, ref, 2)
        else:
            score = rouge_l(cand, ref)
        assert (score.precision, score.recall, score.f1) == (p, r, f), (metric, cand, ref)
    rng = np.random.default_rng(404)
    vocab = ["a", "b", "c", "d", "e"]
    for _ in range(200):
        cand_tokens = list(rng.choice(vocab, size=rng.integers(0, 13)))
        ref_tokens = list(rng.choice(vocab, size=rng.integers(0, 13)))
        cand, ref = " ".join(cand_tokens), " ".join(ref_tokens)
        for n in (1, 2):
            score = rouge_n(cand, ref, n)
            assert (score.precision, score.recall, score.f1) == ngram_overlap_oracle(
                cand_tokens, ref_tokens, n
            )
        score = rouge_l(cand, ref)
        lcs = lcs_oracle(cand_tokens, ref_tokens)
        assert score.precision == (Fraction(lcs, len(cand_tokens)) if cand_tokens else Fraction(0))
        assert score.recall == (Fraction(lcs, len(ref_tokens)) if ref_tokens else Fraction(0))
    assert time.perf_counter() - start < 10.0


def test_c05_macro_f1_and_per_label_accuracy():
    import random as _random

    # Hand confusion fixture: False 8/10, True 5/10, others absent.
    golds = [VeracityLabel.FALSE] * 10 + [VeracityLabel.TRUE] * 10
    predicted = (
        [VeracityLabel.FALSE] * 8 + [VeracityLabel.TRUE] * 2
        + [VeracityLabel.TRUE] * 5 + [VeracityLabel.FALSE] * 5
    )
    report = score_predictions(predicted, golds)
    assert abs(report.per_label_accuracy[VeracityLabel.FALSE] - 0.8) < 1e-9
    assert abs(report.per_label_accuracy[VeracityLabel.TRUE] - 0.5) < 1e-9
    expected = macro_f1_oracle([p.value for p in predicted], [g.value for g in golds])
    assert abs(report.macro_f1 - expected) < 1e-9

    # Oracle equivalence on random prediction/gold sets.
    rng = _random.Random(505)
    for _ in range(100):
        n = rng.randint(1, 50)
        golds = [rng.choice(LABEL_ORDER) for _ in range(n)]
        predicted = [rng.choice(LABEL_ORDER) for _ in range(n)]
        mine = score_predictions(predicted, golds).macro_f1
        theirs = macro_f1_oracle([p.value for p in predicted], [g.value for g in golds])
        assert abs(mine - theirs) < 1e-9

    # Permutation invariance over 20 shuffles.
    golds = [rng.choice(LABEL_ORDER) for _ in range(80)]
    predicted = [rng.choice(LABEL_ORDER) for _ in range(80)]
    base = score_predictions(predicted, golds)
    for _ in range(20):
        order = list(range(80))
        rng.shuffle(order)
        shuffled = score_predictions([predicted[i] for i in order], [golds[i] for i in order])
        assert shuffled.macro_f1 == base.macro_f1
        assert shuffled.per_label_accuracy == base.per_label_accuracy


@pytest.fixture(scope="module")
def hundred_claim_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_corpus")
    # 125 claims at an 0.2 train fraction leaves exactly 100 test claims.
    dataset, articles = make_demo_corpus(root, n=125, seed=13, train_fraction=0.2)
    return root, dataset, articles


def test_c06_mock_pipeline_end_to_end(hundred_claim_corpus):
    start = time.perf_counter()
    root, dataset, articles = hundred_claim_corpus
    for scope, n_findings in ((RunScope.F3, 3), (RunScope.F5, 5), (RunScope.F7, 7)):
        config = PipelineConfig(
            dataset=dataset,
            articles_dir=articles,
            out_dir=root / f"run_{scope.value}",
            scope=scope,
            classifier={"epochs": 8},
        )
        result = run_pipeline(config)
        assert result.failures == []
        outputs = read_outputs(result.outputs_path)
        assert len(outputs) == 100
        for output in outputs.values():
            assert len(output.findings) == n_findings
            assert output.justification.strip()
        reports = cmd_evaluate(config)
        assert reports["n_scored"] == 100
        assert set(reports["justification"]) == {
            "rouge1_f", "rouge2_f", "rougeL_f", "bertscore_f",
        }
        assert set(reports["judge"]) == {"correctness", "completeness"}
        assert 0.0 <= reports["veracity"]["generated"].macro_f1 <= 1.0
        for name in ("justification_report", "judge_report", "veracity_report"):
            assert (config.out_dir / f"{name}.json").exists()
    assert time.perf_counter() - start < 60.0


def _memorization_examples():
    topics = [
        "tax records", "sea levels", "vaccine data", "crime rates", "fuel prices",
        "school tests", "trade deals", "voter rolls", "air quality", "wage growth",
        "debt levels", "crop yields", "power grids", "flu seasons", "job numbers",
        "rent caps", "gun sales", "bee counts", "ice sheets", "road deaths",
    ]
    return [
        FineTuneExample(f"claim {i:02d}: report on {topic} is wrong", f"ASPECT 1: {topic}.")
        for i, topic in enumerate(topics)
    ]


def test_c07_finetune_contract_memorization():
    start = time.perf_counter()
    backend = TinyLMBackend(TinyLMConfig(max_len=160, base_seed=13))
    checksum_before = backend.base_checksum()
    examples = _memorization_examples()
    assert len(examples) == 20
    backend, curve = finetune_adapter(
        backend, examples, FinetuneConfig(rank=8, epochs=400, lr=5e-3, seed=13)
    )
    assert curve[-1] < curve[0]
    assert backend.base_checksum() == checksum_before
    exact = sum(
        backend.generate(ex.input, max_new_tokens=40) == ex.target for ex in examples
    )
    assert exact >= 16  # >= 80% exact greedy reproductions
    assert time.perf_counter() - start < 600.0


def test_c08_classifier_desk_scale():
    texts, labels = keyword_corpus(n_per_class=30, seed=13)
    clf, _ = train_classifier(texts, labels, ClassifierConfig(epochs=30, seed=13))
    correct = 0
    for text, label in zip(texts, labels):
        predicted, probs = classify(clf, text)
        assert abs(float(probs.sum()) - 1.0) <= 1e-6
        assert np.all(probs >= 0)
        correct += predicted is label
    assert correct / len(texts) >= 0.95


PUBLISHED_TRAIN = {"true": 5272, "unproven": 805, "partly_false": 3429, "false": 17470}
PUBLISHED_TEST = {"true": 657, "unproven": 112, "partly_false": 451, "false": 2153}


def test_c09_published_dataset_fidelity():
    path = os.environ.get("FACTFLAW_DATASET")
    if not path or not os.path.exists(path):
        pytest.skip(
            "published dataset not available (set FACTFLAW_DATASET to the "
            "claims JSONL to enable); criterion reported as skipped"
        )
    stats = dataset_stats(load_dataset(path))
    assert stats["train"] == PUBLISHED_TRAIN
    assert stats["test"] == PUBLISHED_TEST


def test_c10_full_scale_results_require_assets_out_of_desk_scope():
    """Benchmark-table numbers need a 7B-parameter generator, the full claim
    corpus, and a hosted judge; none are available at desk scale, so the
    substitute contract is criteria 1-8 plus the per-module invariant suites,
    all runnable with the mock and tiny backends below."""
    from factflaw.backends import MockBackend
    from factflaw.oracle import DeterministicMockOracle, MockJudge

    assert MockBackend().generate("Claim:\nany claim\nASPECT 1: <title>")
    assert DeterministicMockOracle().send("Claim:\nany claim\nASPECT", None)
    assert MockJudge().send("grade this", None)
    assert TinyLMBackend(TinyLMConfig(max_len=64)).base_parameter_count() > 0
