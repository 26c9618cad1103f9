from __future__ import annotations

import pytest

from helpers import make_note
from sbdoh.errors import PipelineError
from sbdoh.filtering import DEFAULT_KEYWORDS, FilterConfig, Matcher, compile_matcher, filter_notes


class TestMatcher:
    def test_case_insensitive_hit(self):
        matcher = Matcher(["tobacco"])
        assert matcher.has_hit("Tobacco use: denies")

    def test_whole_word_boundary(self):
        matcher = Matcher(["smoke"])
        assert not matcher.has_hit("the smokestack was tall")
        assert matcher.has_hit("does she smoke?")

    def test_default_keyword_list_compiles_and_has_thirty_entries(self):
        assert len(DEFAULT_KEYWORDS) == 30
        assert len(set(DEFAULT_KEYWORDS)) == 30
        compile_matcher(FilterConfig())

    def test_multiword_keyword_matches_across_whitespace(self):
        matcher = Matcher(["social history"])
        hits = matcher.count_hits("Social\n  History: reviewed. social history again.")
        assert hits == {"social history": 2}

    def test_count_hits_keys_are_normalized_keywords(self):
        matcher = Matcher(["high school"])
        assert matcher.count_hits("HIGH\tSCHOOL diploma") == {"high school": 1}

    def test_empty_keyword_rejected(self):
        with pytest.raises(PipelineError, match="empty keyword"):
            Matcher(["tobacco", "  "])


NOTES = [
    make_note("n01", "Smoking status: current smoker.", note_type="progress note"),
    make_note("n02", "No acute complaints.", note_type="progress note"),
    make_note("n03", "Patient is retired and lives alone.", note_type="consult note"),
    make_note("n04", "Vitals stable.", note_type="consult note"),
    make_note("n05", "Tobacco review done.", note_type="radiology report"),
    make_note("n06", "Education history: college degree.", note_type="progress note"),
    make_note("n07", "Lungs clear.", note_type="radiology report"),
    make_note("n08", "Quit smoking in 2010.", note_type="progress note"),
    make_note("n09", "Works as a welder; employment stable.", note_type="consult note"),
    make_note("n10", "Imaging reviewed.", note_type="progress note"),
]


class TestFilterNotes:
    def test_and_mode_requires_type_and_keyword(self):
        config = FilterConfig(note_types=("progress note",))
        kept, stats = filter_notes(NOTES, compile_matcher(config), config)
        # n01 (smoking/smoker), n06 (education/college), n08 (quit/smoking);
        # n03/n05/n09 have keywords but disallowed types.
        assert [n.note_id for n in kept] == ["n01", "n06", "n08"]
        assert stats.kept == 3
        assert stats.total_in == 10

    def test_or_mode_keeps_on_either_condition(self):
        config = FilterConfig(note_types=("progress note",), combine_mode="or")
        kept, _ = filter_notes(NOTES, compile_matcher(config), config)
        # All progress notes plus any note with a keyword hit.
        assert [n.note_id for n in kept] == ["n01", "n02", "n03", "n05", "n06", "n08", "n09", "n10"]

    def test_empty_allowlist_admits_all_types(self):
        config = FilterConfig()
        kept, _ = filter_notes(NOTES, compile_matcher(config), config)
        assert [n.note_id for n in kept] == ["n01", "n03", "n05", "n06", "n08", "n09"]

    def test_keyword_hits_counted_over_all_input_notes(self):
        # n05 is dropped in and-mode, but its "tobacco" hit must still count.
        config = FilterConfig(note_types=("progress note",))
        _, stats = filter_notes(NOTES, compile_matcher(config), config)
        assert stats.per_keyword_hits["tobacco"] == 1
        assert stats.per_keyword_hits["smoking"] == 2  # n01, n08
        assert stats.per_keyword_hits["smoker"] == 1
        assert stats.per_keyword_hits["quit"] == 1
        assert stats.per_keyword_hits["retired"] == 1  # n03, dropped by type

    def test_per_note_type_kept_tallies(self):
        config = FilterConfig()
        _, stats = filter_notes(NOTES, compile_matcher(config), config)
        assert stats.per_note_type_kept == {
            "progress note": 3,
            "consult note": 2,
            "radiology report": 1,
        }

    def test_idempotent(self):
        config = FilterConfig()
        matcher = compile_matcher(config)
        kept, _ = filter_notes(NOTES, matcher, config)
        again, stats = filter_notes(kept, matcher, config)
        assert again == kept
        assert stats.kept == stats.total_in == len(kept)

    def test_empty_input_yields_empty_output(self):
        config = FilterConfig()
        kept, stats = filter_notes([], compile_matcher(config), config)
        assert kept == []
        assert stats.total_in == 0


class TestFilterConfig:
    def test_keywords_lowercase_normalized(self):
        config = FilterConfig(keywords=("  Pack   Years ", "TOBACCO"))
        assert config.keywords == ("pack years", "tobacco")

    def test_empty_keywords_rejected(self):
        with pytest.raises(PipelineError, match="keywords must be non-empty"):
            FilterConfig(keywords=())

    def test_bad_combine_mode_rejected(self):
        with pytest.raises(PipelineError, match="combine_mode"):
            FilterConfig(combine_mode="xor")
