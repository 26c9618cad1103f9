"""Shared test fixtures-in-code: factories, an independent matching oracle,
and random corpus generators used by the property and acceptance suites.
"""

from __future__ import annotations

import random
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import yaml

from sbdoh.cli import main as cli_main
from sbdoh.corpus import Note, SpanAnnotation
from sbdoh.labels import LABELS
from sbdoh.tagging import Prediction

# Everything run-all promises to leave under paths.out_dir.
RUN_ALL_ARTIFACTS = (
    "filter_stats.json",
    "filtered_ids.json",
    "split.json",
    "predictions.jsonl",
    "training/train.jsonl",
    "training/test.jsonl",
    "evaluation.json",
    "evaluation.txt",
    "distinct_smoking.json",
    "profiles.json",
    "patient_year.csv",
    "cohort.csv",
    "cohort_evidence.json",
    "comparison.json",
    "comparison.txt",
    "yearly_series.csv",
)


def invoke_cli(runner, *args):
    """Invoke the CLI in-process, stringifying Path arguments."""
    return runner.invoke(cli_main, [str(a) for a in args])


def make_note(
    note_id: str = "n1",
    text: str = "The patient is a female who lives alone.",
    patient_id: str = "p1",
    note_type: str = "progress note",
    note_datetime: str = "2015-06-01T09:00:00",
    encounter_id: str | None = None,
) -> Note:
    return Note(
        note_id=note_id,
        patient_id=patient_id,
        encounter_id=encounter_id,
        note_type=note_type,
        note_datetime=note_datetime,
        text=text,
    )


def gold_span(note_id: str, start: int, end: int, label: str, surface: str = "") -> SpanAnnotation:
    return SpanAnnotation(note_id, start, end, label, surface or "x" * (end - start))


def pred_span(note_id: str, start: int, end: int, label: str, surface: str = "") -> Prediction:
    return Prediction(note_id, start, end, label, surface or "x" * (end - start))


def strict_edge(gold: SpanAnnotation, pred: Prediction) -> bool:
    return (gold.start, gold.end, gold.label) == (pred.start, pred.end, pred.label)


def lenient_edge(gold: SpanAnnotation, pred: Prediction) -> bool:
    return gold.label == pred.label and max(gold.start, pred.start) < min(gold.end, pred.end)


def oracle_max_matching(gold: Sequence, pred: Sequence, edge: Callable) -> int:
    """Exhaustive maximum one-to-one matching size.

    Independent of the production algorithm: enumerates, for each predicted
    span in order, every compatible still-unused gold span (with memoization
    on the remaining gold set), so it is correct by construction.
    """
    candidates = [frozenset(j for j, g in enumerate(gold) if edge(g, p)) for p in pred]

    @lru_cache(maxsize=None)
    def best(i: int, remaining: frozenset) -> int:
        if i == len(candidates):
            return 0
        result = best(i + 1, remaining)
        for j in candidates[i] & remaining:
            result = max(result, 1 + best(i + 1, remaining - {j}))
        return result

    return best(0, frozenset(range(len(gold))))


def random_span_sets(
    rng: random.Random, max_spans: int = 10, text_len: int = 100
) -> tuple[list[SpanAnnotation], list[Prediction]]:
    """One note's worth of random gold/pred spans (may overlap, may duplicate)."""

    def spans(n: int) -> list[tuple[int, int, str]]:
        out = []
        for _ in range(n):
            start = rng.randrange(0, text_len - 1)
            end = min(text_len, start + rng.randint(1, 10))
            out.append((start, end, rng.choice(LABELS)))
        return out

    gold = [gold_span("n", s, e, la) for s, e, la in spans(rng.randint(0, max_spans))]
    pred = [pred_span("n", s, e, la) for s, e, la in spans(rng.randint(0, max_spans))]
    return gold, pred


_WORDS = (
    "patient", "denies", "tobacco", "visit", "stable", "plan", "review",
    "café", "señor", "follow", "up", "noted", "today", "chart", "x1",
)


def random_text_note(rng: random.Random, note_id: str) -> Note:
    """A single-line note of random words (some non-ASCII) for round-trip tests."""
    words = [rng.choice(_WORDS) for _ in range(rng.randint(3, 20))]
    return make_note(note_id=note_id, text=" ".join(words))


def random_char_spans(rng: random.Random, note: Note, n_max: int = 5) -> list[SpanAnnotation]:
    """Arbitrary (not token-aligned) substring spans of the note text."""
    spans = []
    for _ in range(rng.randint(0, n_max)):
        start = rng.randrange(0, len(note.text))
        end = min(len(note.text), start + rng.randint(1, 12))
        spans.append(
            SpanAnnotation(note.note_id, start, end, rng.choice(LABELS), note.text[start:end])
        )
    return spans


def write_pipeline_config(corpus_dir: Path, train_n: int, test_n: int, seed: int = 1) -> Path:
    """Config file for a corpus laid out by the generator's writer."""
    config = {
        "paths": {
            "notes": "notes.jsonl",
            "gold_dir": "gold",
            "structured_dir": "structured",
            "out_dir": "out",
        },
        "split": {"train_n": train_n, "test_n": test_n},
        "run": {"seed": seed, "jobs": 1},
    }
    path = corpus_dir / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    return path
