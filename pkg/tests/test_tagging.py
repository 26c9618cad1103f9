from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_note, pred_span
from sbdoh.corpus import CorpusSplit, SpanAnnotation
from sbdoh.errors import PipelineError
from sbdoh.labels import LABELS
from sbdoh.tagging import (
    Prediction,
    TriggerLexicon,
    bio_to_spans,
    export_predictions,
    export_training_data,
    ingest_predictions,
    lexicon_tag,
    load_trigger_lexicon,
    resolve_overlaps,
    snap_to_tokens,
    spans_to_bio,
    tokenize,
    training_record,
)


class TestTokenize:
    def test_reference_offsets(self):
        doc = tokenize("He smokes.")
        assert [(t.surface, t.start, t.end) for t in doc.tokens] == [
            ("He", 0, 2),
            ("smokes", 3, 9),
            (".", 9, 10),
        ]

    def test_empty_text(self):
        assert tokenize("").tokens == ()

    def test_punctuation_tokens_are_single_characters(self):
        doc = tokenize("pack-years: 40")
        assert [t.surface for t in doc.tokens] == ["pack", "-", "years", ":", "40"]

    def test_unicode_offsets_are_code_points(self):
        doc = tokenize("café ☕ bar")
        assert [(t.surface, t.start, t.end) for t in doc.tokens] == [
            ("café", 0, 4),
            ("☕", 5, 6),
            ("bar", 7, 10),
        ]

    @given(st.text(max_size=80))
    def test_tokens_are_nonoverlapping_and_match_text(self, text):
        doc = tokenize(text)
        previous_end = -1
        for token in doc.tokens:
            assert token.start >= previous_end
            assert text[token.start : token.end] == token.surface
            previous_end = token.end

    @given(st.text(max_size=80))
    def test_retokenizing_any_token_yields_itself(self, text):
        for token in tokenize(text).tokens:
            inner = tokenize(token.surface).tokens
            assert [t.surface for t in inner] == [token.surface]


class TestTriggerLexicon:
    def test_ambiguous_phrase_rejected(self):
        with pytest.raises(PipelineError, match="ambiguous phrase 'smoker'"):
            TriggerLexicon([("smoker", "Smoking"), ("Smoker", "Gender")])

    def test_exact_duplicate_entries_collapse(self):
        lexicon = TriggerLexicon([("smoker", "Smoking"), ("SMOKER", "Smoking")])
        assert lexicon.entries == (("smoker", "Smoking"),)

    def test_empty_phrase_rejected(self):
        with pytest.raises(PipelineError, match="empty phrase"):
            TriggerLexicon([("  ", "Smoking")])

    def test_no_entries_rejected(self):
        with pytest.raises(PipelineError, match="no entries"):
            TriggerLexicon([])

    def test_unknown_label_rejected(self):
        with pytest.raises(PipelineError, match="unknown label"):
            TriggerLexicon([("smoker", "Vice")])

    def test_file_loader_skips_comments_and_blanks(self, tmp_path):
        path = tmp_path / "triggers.tsv"
        path.write_text("# comment\n\nsmoker\tSmoking\nfemale\tGender\n", encoding="utf-8")
        lexicon = load_trigger_lexicon(path)
        assert lexicon.entries == (("smoker", "Smoking"), ("female", "Gender"))

    def test_file_loader_rejects_wrong_column_count(self, tmp_path):
        path = tmp_path / "triggers.tsv"
        path.write_text("smoker Smoking\n", encoding="utf-8")
        with pytest.raises(PipelineError, match="line 1: expected phrase<TAB>label"):
            load_trigger_lexicon(path)


class TestLexiconTag:
    def test_direct_match(self):
        lexicon = TriggerLexicon([("former smoker", "Smoking")])
        note = make_note(text="She is a former smoker.")
        (pred,) = lexicon_tag(note, lexicon)
        assert (pred.start, pred.end, pred.label, pred.surface) == (9, 22, "Smoking", "former smoker")
        assert pred.source == "lexicon"
        assert pred.confidence == 1.0

    def test_longest_match_wins(self):
        lexicon = TriggerLexicon([("smoker", "Smoking"), ("former smoker", "Smoking")])
        note = make_note(text="She is a former smoker.")
        (pred,) = lexicon_tag(note, lexicon)
        assert pred.surface == "former smoker"

    def test_no_triggers_yields_empty(self):
        lexicon = TriggerLexicon([("smoker", "Smoking")])
        assert lexicon_tag(make_note(text="Vitals stable."), lexicon) == []

    def test_word_boundaries_respected(self):
        lexicon = TriggerLexicon([("smoker", "Smoking")])
        assert lexicon_tag(make_note(text="nonsmoker status"), lexicon) == []

    def test_case_insensitive_and_whitespace_tolerant(self):
        lexicon = TriggerLexicon([("former smoker", "Smoking")])
        note = make_note(text="FORMER\n  SMOKER noted")
        (pred,) = lexicon_tag(note, lexicon)
        assert pred.label == "Smoking"
        assert note.text[pred.start : pred.end] == pred.surface

    def test_outputs_never_overlap(self):
        lexicon = TriggerLexicon([("current smoker", "Smoking"), ("smoker", "Smoking")])
        note = make_note(text="current smoker and smoker")
        preds = lexicon_tag(note, lexicon)
        assert [p.surface for p in preds] == ["current smoker", "smoker"]


class TestIngestPredictions:
    def write_preds(self, tmp_path, records):
        path = tmp_path / "preds.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
        return path

    def notes(self):
        note = make_note(text="She is a former smoker.")
        return {note.note_id: note}

    def test_valid_record_ingested(self, tmp_path):
        path = self.write_preds(
            tmp_path,
            [{"note_id": "n1", "start": 9, "end": 22, "label": "Smoking", "surface": "former smoker"}],
        )
        (pred,) = ingest_predictions(path, self.notes())
        assert pred.source == "external"
        assert pred.confidence == 1.0

    def test_unknown_note_id_rejected(self, tmp_path):
        path = self.write_preds(
            tmp_path, [{"note_id": "ghost", "start": 0, "end": 3, "label": "Smoking", "surface": "She"}]
        )
        with pytest.raises(PipelineError, match="unknown note_id 'ghost'"):
            ingest_predictions(path, self.notes())

    def test_out_of_bounds_span_names_note(self, tmp_path):
        path = self.write_preds(
            tmp_path, [{"note_id": "n1", "start": 0, "end": 999, "label": "Smoking", "surface": "x"}]
        )
        with pytest.raises(PipelineError, match="out of bounds for note 'n1'"):
            ingest_predictions(path, self.notes())

    def test_surface_mismatch_rejected(self, tmp_path):
        path = self.write_preds(
            tmp_path, [{"note_id": "n1", "start": 0, "end": 3, "label": "Smoking", "surface": "nope"}]
        )
        with pytest.raises(PipelineError, match="surface mismatch"):
            ingest_predictions(path, self.notes())

    def test_unknown_label_rejected_with_line(self, tmp_path):
        path = self.write_preds(
            tmp_path, [{"note_id": "n1", "start": 0, "end": 3, "label": "Vice", "surface": "She"}]
        )
        with pytest.raises(PipelineError, match="line 1: unknown label 'Vice'"):
            ingest_predictions(path, self.notes())

    def test_confidence_out_of_range_rejected(self, tmp_path):
        path = self.write_preds(
            tmp_path,
            [{"note_id": "n1", "start": 0, "end": 3, "label": "Gender", "surface": "She", "confidence": 1.5}],
        )
        with pytest.raises(PipelineError, match="confidence 1.5 outside"):
            ingest_predictions(path, self.notes())

    def test_export_then_ingest_round_trips(self, tmp_path):
        note = make_note(text="She is a former smoker.")
        preds = [
            Prediction("n1", 9, 22, "Smoking", "former smoker", 0.75, "external"),
            Prediction("n1", 0, 3, "Gender", "She", 1.0, "external"),
        ]
        path = tmp_path / "preds.jsonl"
        export_predictions(preds, path)
        assert ingest_predictions(path, {"n1": note}) == preds


class TestSnapToTokens:
    def test_interior_span_snaps_outward(self):
        doc = tokenize("hello world")
        assert snap_to_tokens(doc, 1, 4) == (0, 0)
        assert snap_to_tokens(doc, 4, 8) == (0, 1)

    def test_aligned_span_is_fixed_point(self):
        doc = tokenize("hello world")
        assert snap_to_tokens(doc, 6, 11) == (1, 1)

    def test_span_over_whitespace_only_rejected(self):
        doc = tokenize("a b")
        with pytest.raises(PipelineError, match="covers no tokens"):
            snap_to_tokens(doc, 1, 2)


class TestBioConversion:
    def test_single_token_span(self):
        doc = tokenize("He smokes")
        assert spans_to_bio(doc, [(3, 9, "Smoking")]) == ["O", "B-Smoking"]

    def test_two_token_span(self):
        doc = tokenize("former smoker today")
        assert spans_to_bio(doc, [(0, 13, "Smoking")]) == ["B-Smoking", "I-Smoking", "O"]

    def test_unaligned_span_snaps_before_encoding(self):
        doc = tokenize("former smoker today")
        assert spans_to_bio(doc, [(2, 9, "Smoking")]) == ["B-Smoking", "I-Smoking", "O"]

    def test_overlapping_spans_rejected(self):
        doc = tokenize("former smoker today")
        with pytest.raises(PipelineError, match="overlapping spans"):
            spans_to_bio(doc, [(0, 13, "Smoking"), (7, 19, "Employment")])

    def test_no_entities_decode_to_empty(self):
        doc = tokenize("He smokes")
        assert bio_to_spans(doc, ["O", "O"]) == []

    def test_single_tag_decodes_to_token_span(self):
        doc = tokenize("female")
        assert bio_to_spans(doc, ["B-Gender"]) == [(0, 6, "Gender")]

    def test_dangling_inside_tag_repaired_to_begin(self):
        doc = tokenize("smoker here")
        assert bio_to_spans(doc, ["I-Smoking", "O"]) == [(0, 6, "Smoking")]

    def test_label_change_without_begin_repaired(self):
        doc = tokenize("female smoker")
        assert bio_to_spans(doc, ["B-Gender", "I-Smoking"]) == [
            (0, 6, "Gender"),
            (7, 13, "Smoking"),
        ]

    def test_length_mismatch_rejected(self):
        doc = tokenize("He smokes")
        with pytest.raises(PipelineError, match="1 tags for 2 tokens"):
            bio_to_spans(doc, ["O"])

    def test_malformed_tag_rejected(self):
        doc = tokenize("He")
        with pytest.raises(PipelineError, match="malformed tag 'X-Gender'"):
            bio_to_spans(doc, ["X-Gender"])

    def test_unknown_label_in_tag_rejected(self):
        doc = tokenize("He")
        with pytest.raises(PipelineError, match="unknown label 'Vice'"):
            bio_to_spans(doc, ["B-Vice"])


@st.composite
def token_aligned_spans(draw):
    """A text plus non-overlapping token-aligned spans over it."""
    n_tokens = draw(st.integers(min_value=1, max_value=12))
    words = draw(
        st.lists(
            st.text(alphabet="abcdefg", min_size=1, max_size=6),
            min_size=n_tokens,
            max_size=n_tokens,
        )
    )
    text = " ".join(words)
    doc = tokenize(text)
    spans = []
    i = 0
    while i < len(doc.tokens):
        if draw(st.booleans()):
            j = min(len(doc.tokens) - 1, i + draw(st.integers(min_value=0, max_value=2)))
            spans.append((doc.tokens[i].start, doc.tokens[j].end, draw(st.sampled_from(LABELS))))
            i = j + 1
        else:
            i += 1
    return text, spans


class TestBioRoundTrip:
    @settings(deadline=None)
    @given(token_aligned_spans())
    def test_encode_then_decode_is_identity(self, case):
        text, spans = case
        doc = tokenize(text)
        assert bio_to_spans(doc, spans_to_bio(doc, spans)) == sorted(spans)


class TestResolveOverlaps:
    def test_disjoint_inputs_unchanged(self):
        preds = [pred_span("n1", 0, 5, "Gender"), pred_span("n1", 10, 15, "Smoking")]
        assert resolve_overlaps(preds) == preds

    def test_longer_span_wins(self):
        keep = pred_span("n1", 0, 10, "Smoking")
        drop = pred_span("n1", 5, 12, "Smoking")
        assert resolve_overlaps([drop, keep]) == [keep]

    def test_equal_length_earlier_start_wins(self):
        keep = pred_span("n1", 0, 5, "Smoking")
        drop = pred_span("n1", 3, 8, "Smoking")
        assert resolve_overlaps([drop, keep]) == [keep]

    def test_identical_span_label_order_breaks_tie(self):
        gender = pred_span("n1", 0, 5, "Gender")
        smoking = pred_span("n1", 0, 5, "Smoking")
        assert resolve_overlaps([smoking, gender]) == [gender]

    def test_notes_are_independent(self):
        a = pred_span("n1", 0, 10, "Smoking")
        b = pred_span("n2", 5, 12, "Smoking")
        assert resolve_overlaps([a, b]) == [a, b]

    @settings(deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.integers(min_value=0, max_value=30),
                st.integers(min_value=1, max_value=8),
                st.sampled_from(LABELS),
            ),
            max_size=10,
        )
    )
    def test_idempotent_and_nonoverlapping(self, raw):
        preds = [pred_span("n1", s, s + ln, la) for s, ln, la in raw]
        resolved = resolve_overlaps(preds)
        assert resolve_overlaps(resolved) == resolved
        for i, a in enumerate(resolved):
            for b in resolved[i + 1 :]:
                assert min(a.end, b.end) <= max(a.start, b.start)


class TestTrainingExport:
    def test_single_note_single_span_round_trips(self):
        note = make_note(text="She is a former smoker.")
        span = SpanAnnotation("n1", 9, 22, "Smoking", "former smoker")
        record = training_record(note, [span])
        assert record["note_id"] == "n1"
        doc = tokenize(note.text)
        assert bio_to_spans(doc, record["tags"]) == [(9, 22, "Smoking")]

    def test_split_partitions_into_two_files(self, tmp_path):
        notes = {f"n{i}": make_note(note_id=f"n{i}", text=f"note {i} text") for i in range(5)}
        split = CorpusSplit(train=("n0", "n1", "n2"), test=("n3",), seed=1)
        train_path, test_path = export_training_data(notes, {}, split, tmp_path)
        assert len(train_path.read_text().splitlines()) == 3
        assert len(test_path.read_text().splitlines()) == 1

    def test_split_referencing_unknown_note_rejected(self, tmp_path):
        split = CorpusSplit(train=("ghost",), test=(), seed=1)
        with pytest.raises(PipelineError, match="unknown note 'ghost'"):
            export_training_data({}, {}, split, tmp_path)

    def test_export_is_deterministic(self, tmp_path):
        rng = random.Random(5)
        notes = {}
        gold = {}
        for i in range(6):
            note = make_note(note_id=f"n{i}", text="She is a former smoker today.")
            notes[note.note_id] = note
            gold[note.note_id] = [SpanAnnotation(note.note_id, 9, 22, "Smoking", "former smoker")]
        ids = sorted(notes)
        rng.shuffle(ids)
        split = CorpusSplit(train=tuple(ids[:4]), test=tuple(ids[4:]), seed=1)
        first = export_training_data(notes, gold, split, tmp_path / "a")
        second = export_training_data(notes, gold, split, tmp_path / "b")
        assert first[0].read_bytes() == second[0].read_bytes()
        assert first[1].read_bytes() == second[1].read_bytes()
