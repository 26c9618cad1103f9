"""Inference over raw notes, windowing, and the predict CLI."""
import json

import pytest

from sbdoh_sidecar import LABELS, SidecarError, predict, train
from sbdoh_sidecar.cli import predict_command
from sbdoh_sidecar.modeling import WORD_RE, viterbi_tags
from sidecar_helpers import tiny_config, tiny_export, write_jsonl

import torch


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("tiny")
    checkpoint = tmp_path / "ckpt"
    # Six sentences and a hot learning rate: memorizes them outright.
    train(tiny_export(tmp_path), checkpoint,
          tiny_config(epochs=150, learning_rate=5e-3))
    return checkpoint


def read_predictions(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


class TestWordSplitting:
    def test_splits_words_and_solitary_punctuation(self):
        words = WORD_RE.findall("Smoking status: 1.5 packs/day (heavy).")
        assert words == ["Smoking", "status", ":", "1", ".", "5", "packs", "/",
                         "day", "(", "heavy", ")", "."]


class TestViterbiTags:
    def test_picks_the_argmax_when_it_is_already_consistent(self):
        rows = torch.full((2, 1 + 2 * len(LABELS)), -20.0)
        rows[0, 1] = -0.1  # B- of the first label
        rows[1, 2] = -0.1  # I- of the first label
        assert viterbi_tags(rows) == [f"B-{LABELS[0]}", f"I-{LABELS[0]}"]

    def test_never_starts_a_span_inside(self):
        # A lone I- tag has nowhere legal to attach, so O or B- must win.
        row = torch.full((1, 1 + 2 * len(LABELS)), -20.0)
        row[0, 2] = -0.1   # I- of the first label is the raw argmax
        row[0, 0] = -0.2   # O is a close second
        assert viterbi_tags(row) == ["O"]


class TestPredict:
    def test_recovers_the_memorized_sentences(self, tiny_checkpoint, tmp_path):
        notes = write_jsonl(
            tmp_path / "notes.jsonl",
            [{"note_id": "n1", "text": "Smoking status: current smoker."},
             {"note_id": "n2", "text": "Gender: female."}],
        )
        out = tmp_path / "preds.jsonl"
        assert predict(notes, tiny_checkpoint, out) == 2
        records = read_predictions(out)
        assert [(r["note_id"], r["label"], r["surface"]) for r in records] == [
            ("n1", "Smoking", "current smoker"),
            ("n2", "Gender", "female"),
        ]
        for record in records:
            assert 0.0 < record["confidence"] <= 1.0

    def test_empty_notes_file_writes_an_empty_prediction_file(self, tiny_checkpoint, tmp_path):
        notes = tmp_path / "notes.jsonl"
        notes.write_text("")
        out = tmp_path / "preds.jsonl"
        assert predict(notes, tiny_checkpoint, out) == 0
        assert out.read_text(encoding="utf-8") == ""

    def test_long_notes_are_windowed_without_losing_the_tail(self, tiny_checkpoint, tmp_path):
        # Far more subwords than the model's 32 positions; the entity sits at the
        # end, past every single-window horizon. Filler reuses trained words so
        # the memorized model stays quiet over it.
        filler = "Patient is a Patient is a " * 20
        text = filler + "Smoking status: current smoker."
        notes = write_jsonl(tmp_path / "notes.jsonl", [{"note_id": "long", "text": text}])
        out = tmp_path / "preds.jsonl"
        predict(notes, tiny_checkpoint, out)
        start = text.rindex("current smoker")
        expected = {"note_id": "long", "label": "Smoking", "start": start,
                    "end": start + len("current smoker"), "surface": "current smoker"}
        assert any(expected.items() <= r.items() for r in read_predictions(out))

    def test_offsets_always_slice_back_to_the_surface(self, corpus_dir, prediction_file):
        texts = {}
        with (corpus_dir / "notes.jsonl").open(encoding="utf-8") as handle:
            for line in handle:
                note = json.loads(line)
                texts[note["note_id"]] = note["text"]
        records = read_predictions(prediction_file)
        assert records, "session prediction file is empty"
        for record in records:
            text = texts[record["note_id"]]
            assert text[record["start"]:record["end"]] == record["surface"]

    def test_missing_checkpoint(self, tmp_path):
        notes = write_jsonl(tmp_path / "notes.jsonl", [{"note_id": "n", "text": "x"}])
        with pytest.raises(SidecarError, match="tokenizer not found"):
            predict(notes, tmp_path / "nowhere", tmp_path / "preds.jsonl")


class TestPredictCommand:
    def test_reports_the_span_count(self, cli, tiny_checkpoint, tmp_path):
        notes = write_jsonl(
            tmp_path / "notes.jsonl",
            [{"note_id": "n1", "text": "Gender: male."}],
        )
        out = tmp_path / "preds.jsonl"
        result = cli.invoke(
            predict_command,
            ["--notes", str(notes), "--checkpoint", str(tiny_checkpoint), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert f"wrote 1 predictions to {out}" in result.output

    def test_failure_emits_an_error_record(self, cli, tmp_path):
        result = cli.invoke(
            predict_command,
            ["--notes", str(tmp_path / "missing.jsonl"),
             "--checkpoint", str(tmp_path / "ckpt"), "--out", str(tmp_path / "p.jsonl")],
        )
        assert result.exit_code == 1
        record = json.loads(result.stderr)
        assert record["command"] == "sidecar-predict"
        assert "notes file not found" in record["error"]
