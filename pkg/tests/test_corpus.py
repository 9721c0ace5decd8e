import json

import pytest
from hypothesis import given, strategies as st

from factflaw.corpus import (
    Article,
    ArticleRef,
    ArticleStore,
    ClaimRecord,
    CorpusError,
    DatasetFormatError,
    LABEL_ORDER,
    UnmappedRatingError,
    UnusableArticleError,
    VeracityLabel,
    clean_article,
    dataset_stats,
    default_label_map,
    format_stats_table,
    load_dataset,
    load_label_map,
    parse_label,
    remap_label,
    split_sentences,
    uri_hash,
    write_dataset,
)


def make_record(i=0, label=VeracityLabel.TRUE, split="train", **kwargs):
    defaults = dict(
        id=f"c{i}",
        text=f"Claim number {i} about the levee.",
        source_site="politifact",
        original_rating="True",
        label=label,
        premise_articles=(ArticleRef(f"https://x.test/p{i}"),),
        review_article=ArticleRef(f"https://x.test/r{i}"),
        split=split,
    )
    defaults.update(kwargs)
    return ClaimRecord(**defaults)


class TestLabels:
    def test_four_canonical_labels(self):
        assert [l.value for l in LABEL_ORDER] == ["false", "partly_false", "unproven", "true"]

    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("False", VeracityLabel.FALSE),
            ("Incorrect", VeracityLabel.FALSE),
            ("Partly false", VeracityLabel.PARTLY_FALSE),
            ("PARTLY_FALSE", VeracityLabel.PARTLY_FALSE),
            ("Unproven", VeracityLabel.UNPROVEN),
            ("True", VeracityLabel.TRUE),
            ("correct", VeracityLabel.TRUE),
        ],
    )
    def test_aliases(self, raw, expected):
        assert parse_label(raw) is expected

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            parse_label("Mostly True")

    def test_display_names(self):
        assert VeracityLabel.PARTLY_FALSE.display == "Partly false"


class TestRemapLabel:
    def test_identity_rating(self):
        assert remap_label("politifact", "True") is VeracityLabel.TRUE

    def test_pants_on_fire_corrected_to_false(self):
        assert remap_label("politifact", "Pants on Fire") is VeracityLabel.FALSE

    def test_unknown_rating_is_an_error(self):
        with pytest.raises(UnmappedRatingError) as err:
            remap_label("politifact", "Half-True-ish")
        assert err.value.site == "politifact"
        assert err.value.rating == "Half-True-ish"

    def test_case_and_punctuation_insensitive(self):
        assert remap_label("politifact", "pants on fire!") is VeracityLabel.FALSE
        assert remap_label("SNOPES", "mostly-true") is VeracityLabel.PARTLY_FALSE

    def test_every_table_entry_round_trips(self):
        table = default_label_map()
        assert len(table) > 50
        for site, rating, label in table.entries:
            assert remap_label(site, rating) is label

    def test_custom_table_file(self, tmp_path):
        path = tmp_path / "map.txt"
        path.write_text("# custom\nmysite_is_not_listed | Probably | Unproven\n")
        table = load_label_map(path)
        assert table.lookup("mysite_is_not_listed", "probably") is VeracityLabel.UNPROVEN

    def test_eight_sites_covered(self):
        assert len(default_label_map().sites) == 8


class TestCleanArticle:
    def test_body_only_text_unchanged(self):
        body = "First paragraph of real text.\n\nSecond paragraph, also real."
        assert clean_article(body) == body

    def test_repeated_footer_removed(self):
        footer = "Acme News Network all content 2021"
        body_lines = ["Real sentence one.", "Real sentence two.", "Real sentence three."]
        raw = "\n".join(
            [footer, body_lines[0], footer, body_lines[1], footer, body_lines[2], footer, footer]
        )
        cleaned = clean_article(raw)
        assert footer not in cleaned
        for line in body_lines:
            assert line in cleaned

    def test_boilerplate_patterns_removed(self):
        raw = "Subscribe to our newsletter\nThe levee held during the flood.\nShare on social media"
        cleaned = clean_article(raw)
        assert cleaned == "The levee held during the flood."

    def test_whitespace_only_is_unusable(self):
        with pytest.raises(UnusableArticleError):
            clean_article("   \n  \n")

    def test_deterministic(self):
        raw = "Menu\nA real line.\n\n\n\nAnother real line.\nMenu\nMenu"
        assert clean_article(raw) == clean_article(raw)

    def test_blank_runs_collapse(self):
        raw = "Para one.\n\n\n\nPara two."
        assert clean_article(raw) == "Para one.\n\nPara two."


class TestSplitSentences:
    def test_three_terminators(self):
        texts = [s.text for s in split_sentences("A. B? C!")]
        assert texts == ["A.", "B?", "C!"]

    def test_abbreviation_guard(self):
        sentences = split_sentences("Dr. Smith left.")
        assert [s.text for s in sentences] == ["Dr. Smith left."]

    def test_no_terminator(self):
        assert [s.text for s in split_sentences("hello")] == ["hello"]

    def test_indices_contiguous(self):
        sentences = split_sentences("One. Two. Three.")
        assert [s.index for s in sentences] == [0, 1, 2]

    def test_multi_abbreviations(self):
        text = "The U.S. economy grew. Prices rose too."
        assert [s.text for s in split_sentences(text)] == [
            "The U.S. economy grew.",
            "Prices rose too.",
        ]

    def test_paragraph_break_splits(self):
        text = "A heading without terminator\n\nThen a sentence."
        assert [s.text for s in split_sentences(text)] == [
            "A heading without terminator",
            "Then a sentence.",
        ]

    def test_quote_closers(self):
        text = 'He said "stop." Then he left.'
        assert [s.text for s in split_sentences(text)] == ['He said "stop."', "Then he left."]

    @given(st.text(alphabet="aBc .?!\n'\"Dr", max_size=120))
    def test_rejoin_preserves_non_whitespace(self, text):
        joined = " ".join(s.text for s in split_sentences(text))
        assert "".join(joined.split()) == "".join(text.split())

    @given(st.text(alphabet="abcDEF .?!\n", min_size=1, max_size=120))
    def test_no_empty_sentences(self, text):
        for sentence in split_sentences(text):
            assert sentence.text.strip()


class TestRecords:
    def test_text_normalized(self):
        record = make_record(text="  spaced \n claim  ")
        assert record.text == "spaced claim"

    def test_empty_text_rejected(self):
        with pytest.raises(CorpusError):
            make_record(text="   ")

    def test_unknown_site_rejected(self):
        with pytest.raises(CorpusError):
            make_record(source_site="randomblog")

    def test_bad_split_rejected(self):
        with pytest.raises(CorpusError):
            make_record(split="dev")


class TestDatasetIO:
    def test_three_line_file(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_dataset([make_record(i) for i in range(3)], path)
        records = load_dataset(path)
        assert len(records) == 3

    def test_round_trip_identity(self, tmp_path):
        originals = [
            make_record(i, label=LABEL_ORDER[i % 4], split="test" if i % 2 else "train")
            for i in range(8)
        ]
        path = tmp_path / "data.jsonl"
        write_dataset(originals, path)
        assert load_dataset(path) == originals
        write_dataset(load_dataset(path), tmp_path / "again.jsonl")
        assert (tmp_path / "again.jsonl").read_text() == path.read_text()

    def test_unnormalized_label_rejected(self, tmp_path):
        record = json.loads(json.dumps({
            "id": "x", "claim": "c", "source_site": "politifact",
            "original_rating": "Mostly True", "label": "Mostly True",
            "premise_uris": [], "review_uri": None, "split": "train",
        }))
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(DatasetFormatError) as err:
            load_dataset(path)
        assert "Mostly True" in str(err.value)

    def test_minority_of_bad_lines_skipped_with_line_numbers(self, tmp_path, caplog):
        lines = [json.dumps({
            "id": f"c{i}", "claim": "text", "source_site": "snopes",
            "original_rating": "True", "label": "true",
            "premise_uris": [], "review_uri": "https://r.test/x", "split": "train",
        }) for i in range(20)]
        lines[4] = "{not json"
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(lines) + "\n")
        records = load_dataset(path)
        assert len(records) == 19
        assert ":5:" in caplog.text

    def test_too_many_bad_lines_abort(self, tmp_path):
        lines = ["{broken"] * 3 + [json.dumps({
            "id": "c", "claim": "text", "source_site": "snopes",
            "original_rating": "True", "label": "true",
            "premise_uris": [], "review_uri": None, "split": "train",
        })] * 7
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError) as err:
            load_dataset(path)
        assert len(err.value.errors) == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "absent.jsonl")


class TestDatasetStats:
    def test_empty_input_all_zero(self):
        stats = dataset_stats([])
        assert stats["train"] == {l.value: 0 for l in LABEL_ORDER}
        assert stats["test"] == {l.value: 0 for l in LABEL_ORDER}

    def test_counting(self):
        records = [
            make_record(0, VeracityLabel.FALSE),
            make_record(1, VeracityLabel.FALSE),
            make_record(2, VeracityLabel.TRUE),
        ]
        stats = dataset_stats(records)
        assert stats["train"]["false"] == 2
        assert stats["train"]["true"] == 1
        assert stats["train"]["unproven"] == 0
        assert sum(stats["train"].values()) + sum(stats["test"].values()) == 3

    def test_permutation_invariant(self):
        records = [make_record(i, LABEL_ORDER[i % 4]) for i in range(10)]
        assert dataset_stats(records) == dataset_stats(list(reversed(records)))

    def test_table_layout(self):
        table = format_stats_table(dataset_stats([make_record(0, VeracityLabel.FALSE)]))
        assert "Partly false" in table
        assert table.splitlines()[1].startswith("train")


class TestArticleStore:
    def test_put_get_load(self, tmp_path):
        store = ArticleStore(tmp_path / "articles")
        ref = store.put("https://x.test/a", "First line. Second line.")
        assert store.has(ref)
        article = store.load(ref)
        assert isinstance(article, Article)
        assert len(article.sentences) == 2
        assert article.ref.key == uri_hash("https://x.test/a")

    def test_missing_article(self, tmp_path):
        store = ArticleStore(tmp_path / "articles")
        with pytest.raises(FileNotFoundError):
            store.get_raw(ArticleRef("https://x.test/missing"))

    def test_article_invariants(self, tmp_path):
        store = ArticleStore(tmp_path / "articles")
        ref = store.put("https://x.test/b", "Para one has text. More here.\n\nPara two.")
        article = store.load(ref)
        assert [s.index for s in article.sentences] == list(range(len(article.sentences)))
        rejoined = "".join("".join(s.text.split()) for s in article.sentences)
        assert rejoined == "".join(article.clean_text.split())
