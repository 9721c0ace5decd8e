import pytest
from hypothesis import given, strategies as st

from factflaw.taxonomy import (
    ALL_FLAWS,
    Aspect,
    AspectParseError,
    AspectSet,
    CATEGORY_ONE,
    CATEGORY_THREE,
    CATEGORY_TWO,
    FlawFinding,
    FlawParseError,
    FlawReport,
    FlawScope,
    FlawType,
    TaxonomyError,
    empty_flaw_report,
    parse_aspects,
    parse_flaw_report,
    serialize_aspects,
    serialize_flaw_report,
)


class TestFlawTaxonomy:
    def test_exactly_seven_flaws_in_three_categories(self):
        assert len(ALL_FLAWS) == 7
        assert len(CATEGORY_ONE) == 3
        assert len(CATEGORY_TWO) == 2
        assert len(CATEGORY_THREE) == 2
        assert set(ALL_FLAWS) == set(FlawType)

    def test_scope_sizes(self):
        assert len(FlawScope.F3) == 3
        assert len(FlawScope.F5) == 5
        assert len(FlawScope.F7) == 7

    def test_scope_3f_is_first_category(self):
        assert FlawScope.F3.flaw_types == (
            FlawType.CONTRADICTING_FACTS,
            FlawType.EXAGGERATION,
            FlawType.UNDERSTATEMENT,
        )

    def test_scope_5f_is_first_two_categories(self):
        assert FlawScope.F5.flaw_types == CATEGORY_ONE + CATEGORY_TWO

    def test_serialized_names(self):
        assert FlawType.CONTRADICTING_FACTS.serialized_name == "ContradictingFacts"
        assert FlawType.ALTERNATIVE_EXPLANATIONS.serialized_name == "AlternativeExplanations"


class TestAspectSet:
    def test_bounds(self):
        with pytest.raises(TaxonomyError):
            AspectSet(())
        five = tuple(Aspect(f"t{i}") for i in range(5))
        with pytest.raises(TaxonomyError):
            AspectSet(five)
        assert len(AspectSet(five[:4])) == 4

    def test_duplicate_titles_rejected_case_insensitively(self):
        with pytest.raises(TaxonomyError):
            AspectSet((Aspect("Taxes"), Aspect("taxes")))

    def test_whitespace_normalized(self):
        aspect = Aspect("  Legal\n records ", "Multi\nline   text.")
        assert aspect.title == "Legal records"
        assert aspect.description == "Multi line text."

    def test_empty_or_colon_title_rejected(self):
        with pytest.raises(TaxonomyError):
            Aspect("   ")
        with pytest.raises(TaxonomyError):
            Aspect("a: b")


class TestFlawStructures:
    def test_present_requires_explanation(self):
        with pytest.raises(TaxonomyError):
            FlawFinding(FlawType.EXAGGERATION, present=True)
        FlawFinding(FlawType.EXAGGERATION, present=True, explanation="inflated figure")

    def test_report_requires_exact_scope_coverage(self):
        findings = tuple(FlawFinding(f, False) for f in FlawScope.F3.flaw_types)
        report = FlawReport(findings, FlawScope.F3)
        assert [f.flaw for f in report] == list(FlawScope.F3.flaw_types)
        with pytest.raises(TaxonomyError):
            FlawReport(findings, FlawScope.F5)
        with pytest.raises(TaxonomyError):
            FlawReport(findings + (findings[0],), FlawScope.F3)

    def test_report_reorders_to_canonical(self):
        findings = tuple(FlawFinding(f, False) for f in reversed(FlawScope.F7.flaw_types))
        report = FlawReport(findings, FlawScope.F7)
        assert tuple(f.flaw for f in report) == FlawScope.F7.flaw_types


class TestAspectWireFormat:
    def test_round_trip_exact(self):
        aspects = AspectSet(
            (
                Aspect("Legal investigations", "Whether any inquiry was opened."),
                Aspect("Financial transactions", "Whether the filings add up."),
            )
        )
        assert parse_aspects(serialize_aspects(aspects)) == aspects

    def test_parse_tolerates_numbering_and_case(self):
        text = "Intro prose.\n1. Legal checks: Courts.\naspect 2 - Money: Audits.\nASPECT: Motive: Rivals."
        aspects = parse_aspects(text)
        assert [a.title for a in aspects] == ["Legal checks", "Money", "Motive"]

    def test_parse_truncates_to_four(self):
        text = "\n".join(f"ASPECT {i}: Title {i}: d" for i in range(1, 7))
        assert len(parse_aspects(text)) == 4

    def test_parse_dedupes_titles(self, caplog):
        text = "ASPECT 1: Costs: a.\nASPECT 2: costs: b.\nASPECT 3: Dates: c."
        aspects = parse_aspects(text)
        assert [a.title for a in aspects] == ["Costs", "Dates"]
        assert "duplicate aspect title" in caplog.text

    def test_parse_joins_wrapped_descriptions(self):
        text = "ASPECT 1: Costs: The spending\nwas reviewed in detail."
        aspects = parse_aspects(text)
        assert aspects.aspects[0].description == "The spending was reviewed in detail."

    def test_parse_failure(self):
        with pytest.raises(AspectParseError):
            parse_aspects("no structured content here at all")

    @given(
        st.lists(
            st.tuples(
                st.text(alphabet="abcdefg hij", min_size=1, max_size=20),
                st.text(alphabet="klmno pqr.", max_size=40),
            ),
            min_size=1,
            max_size=4,
        )
    )
    def test_round_trip_property(self, pairs):
        aspects = []
        seen = set()
        for title, description in pairs:
            try:
                aspect = Aspect(title, description)
            except TaxonomyError:
                continue
            if aspect.title.casefold() in seen:
                continue
            seen.add(aspect.title.casefold())
            aspects.append(aspect)
        if not aspects:
            return
        aspect_set = AspectSet(tuple(aspects))
        assert parse_aspects(serialize_aspects(aspect_set)) == aspect_set


class TestFlawWireFormat:
    def test_round_trip_exact(self):
        report = FlawReport(
            (
                FlawFinding(FlawType.CONTRADICTING_FACTS, True, "opposes records"),
                FlawFinding(FlawType.EXAGGERATION, False),
                FlawFinding(FlawType.UNDERSTATEMENT, False, "not downplayed"),
            ),
            FlawScope.F3,
        )
        assert parse_flaw_report(serialize_flaw_report(report), FlawScope.F3) == report

    def test_single_present_among_seven(self):
        text = "FLAW ContradictingFacts: PRESENT - The claim opposes verified records."
        report = parse_flaw_report(text, FlawScope.F7)
        assert len(report) == 7
        assert len(report.present_findings) == 1
        assert report.present_findings[0].flaw is FlawType.CONTRADICTING_FACTS

    def test_earth_shape_style_fixture(self):
        text = (
            "FLAW ContradictingFacts: PRESENT - Saying the planet is flat opposes "
            "overwhelming measurement evidence.\n"
            "FLAW Exaggeration: ABSENT\nFLAW Understatement: ABSENT"
        )
        report = parse_flaw_report(text, FlawScope.F3)
        assert report.get(FlawType.CONTRADICTING_FACTS).present

    def test_scope_filter_drops_out_of_scope(self, caplog):
        text = (
            "FLAW ContradictingFacts: ABSENT\n"
            "FLAW ProblematicAssumptions: PRESENT - rests on a shaky premise"
        )
        report = parse_flaw_report(text, FlawScope.F3)
        assert {f.flaw for f in report} == set(FlawScope.F3.flaw_types)
        assert "out-of-scope" in caplog.text

    def test_case_and_alias_tolerance(self):
        text = (
            "flaw contradicting facts: present - conflicts with the ledger\n"
            "- ExistenceOfAlternativeExplanations: yes - another cause fits"
        )
        report = parse_flaw_report(text, FlawScope.F7)
        assert report.get(FlawType.CONTRADICTING_FACTS).present
        assert report.get(FlawType.ALTERNATIVE_EXPLANATIONS).present

    def test_present_without_explanation_ignored(self, caplog):
        text = "FLAW Exaggeration: PRESENT\nFLAW Understatement: ABSENT"
        report = parse_flaw_report(text, FlawScope.F3)
        assert not report.get(FlawType.EXAGGERATION).present
        assert "no explanation" in caplog.text

    def test_duplicate_keeps_first(self, caplog):
        text = (
            "FLAW Exaggeration: PRESENT - first reading\n"
            "FLAW Exaggeration: ABSENT"
        )
        report = parse_flaw_report(text, FlawScope.F3)
        assert report.get(FlawType.EXAGGERATION).present
        assert "duplicate" in caplog.text

    def test_unparseable_raises(self):
        with pytest.raises(FlawParseError):
            parse_flaw_report("nothing to see here", FlawScope.F7)

    def test_empty_report_helper(self):
        report = empty_flaw_report(FlawScope.F5)
        assert len(report) == 5
        assert not report.present_findings
