"""Span prediction: lexicon baseline tagger, external-prediction ingestion,
BIO conversion, and training-data export.

The lexicon baseline exists so the whole pipeline is testable without any
model; learned taggers enter only through the prediction-file boundary.
"""

from __future__ import annotations

import json
import re
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from sbdoh.corpus import CorpusSplit, Note, SpanAnnotation, validate_span
from sbdoh.errors import PipelineError
from sbdoh.labels import LABEL_ORDER, require_label

# A token is a maximal run of letters/digits; any other non-whitespace
# character stands alone. [^\W_] is "word char minus underscore".
_TOKEN_RE = re.compile(r"[^\W_]+|\S")

Span = tuple[int, int, str]  # (start, end, label)


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class TokenizedDoc:
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class Prediction:
    note_id: str
    start: int
    end: int
    label: str
    surface: str
    confidence: float = 1.0
    source: str = "lexicon"


def tokenize(text: str) -> TokenizedDoc:
    tokens = tuple(
        Token(match.group(0), match.start(), match.end()) for match in _TOKEN_RE.finditer(text)
    )
    return TokenizedDoc(tokens)


class TriggerLexicon:
    """Phrase -> label table compiled into one longest-first matcher."""

    def __init__(self, entries: Sequence[tuple[str, str]]) -> None:
        seen: dict[str, str] = {}
        normalized: list[tuple[str, str]] = []
        for phrase, label in entries:
            phrase = " ".join(phrase.lower().split())
            if not phrase:
                raise PipelineError("trigger lexicon: empty phrase")
            require_label(label)
            if phrase in seen:
                if seen[phrase] != label:
                    raise PipelineError(f"trigger lexicon: ambiguous phrase {phrase!r}")
                continue  # exact duplicate entry, ignore
            seen[phrase] = label
            normalized.append((phrase, label))
        if not normalized:
            raise PipelineError("trigger lexicon: no entries")
        self.entries: tuple[tuple[str, str], ...] = tuple(normalized)
        self._label_by_phrase = seen
        parts = [
            re.escape(p).replace(r"\ ", r"\s+")
            for p, _ in sorted(normalized, key=lambda e: len(e[0]), reverse=True)
        ]
        self._pattern = re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)", re.IGNORECASE)

    def label_for(self, surface: str) -> str:
        return self._label_by_phrase[" ".join(surface.lower().split())]

    def finditer(self, text: str):
        return self._pattern.finditer(text)


def load_trigger_lexicon(path: str | Path) -> TriggerLexicon:
    """Read a tab-separated phrase<TAB>label file."""
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"trigger lexicon not found: {path}")
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise PipelineError(f"{path.name} line {lineno}: expected phrase<TAB>label")
        entries.append((parts[0], parts[1]))
    return TriggerLexicon(entries)


def lexicon_tag(note: Note, lexicon: TriggerLexicon) -> list[Prediction]:
    """Tag one note; case-insensitive, longest-match-first, non-overlapping."""
    preds: list[Prediction] = []
    for match in lexicon.finditer(note.text):
        surface = match.group(0)
        preds.append(
            Prediction(
                note_id=note.note_id,
                start=match.start(),
                end=match.end(),
                label=lexicon.label_for(surface),
                surface=surface,
                confidence=1.0,
                source="lexicon",
            )
        )
    return preds


def ingest_predictions(path: str | Path, notes_by_id: Mapping[str, Note]) -> list[Prediction]:
    """Read and validate a line-delimited prediction file.

    Every record is checked against its note: offsets in bounds, surface equal
    to the addressed substring, label in the closed set. A missing confidence
    defaults to 1.0.
    """
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"prediction file not found: {path}")
    preds: list[Prediction] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path.name} line {lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PipelineError(f"{where}: invalid record ({exc.msg})") from None
            note_id = record.get("note_id")
            note = notes_by_id.get(note_id)
            if note is None:
                raise PipelineError(f"{where}: unknown note_id {note_id!r}")
            try:
                label = require_label(str(record.get("label")))
            except PipelineError as exc:
                raise PipelineError(f"{where}: {exc}") from None
            try:
                start, end = int(record["start"]), int(record["end"])
            except (KeyError, TypeError, ValueError):
                raise PipelineError(f"{where}: start/end must be integers") from None
            surface = record.get("surface")
            if surface is None:
                raise PipelineError(f"{where}: missing surface")
            validate_span(note, start, end, surface, where)
            confidence = float(record.get("confidence", 1.0))
            if not 0.0 <= confidence <= 1.0:
                raise PipelineError(f"{where}: confidence {confidence} outside [0,1]")
            preds.append(Prediction(note_id, start, end, label, surface, confidence, "external"))
    return preds


def export_predictions(preds: Iterable[Prediction], path: str | Path) -> None:
    """Write predictions line-delimited; inverse of ingest_predictions."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for pred in preds:
            record = {
                "note_id": pred.note_id,
                "start": pred.start,
                "end": pred.end,
                "label": pred.label,
                "surface": pred.surface,
                "confidence": pred.confidence,
            }
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def snap_to_tokens(doc: TokenizedDoc, start: int, end: int) -> tuple[int, int]:
    """Snap a character span outward to the smallest covering token range.

    Returns (first_token_index, last_token_index), both inclusive.
    """
    starts = [t.start for t in doc.tokens]
    ends = [t.end for t in doc.tokens]
    # First token whose end is past the span start; last token starting
    # before the span end.
    first = bisect_right(ends, start)
    last = bisect_left(starts, end) - 1
    if first > last or first >= len(doc.tokens) or last < 0:
        raise PipelineError(f"span ({start},{end}) covers no tokens")
    return first, last


def spans_to_bio(doc: TokenizedDoc, spans: Sequence[Span]) -> list[str]:
    """Encode non-overlapping spans as one BIO tag per token.

    Spans not aligned to token boundaries are snapped outward first.
    """
    tags = ["O"] * len(doc.tokens)
    for start, end, label in sorted(spans):
        require_label(label)
        first, last = snap_to_tokens(doc, start, end)
        for i in range(first, last + 1):
            if tags[i] != "O":
                raise PipelineError(
                    f"overlapping spans at token {i} ({doc.tokens[i].surface!r}):"
                    " resolve overlaps before BIO encoding"
                )
        tags[first] = f"B-{label}"
        for i in range(first + 1, last + 1):
            tags[i] = f"I-{label}"
    return tags


def bio_to_spans(doc: TokenizedDoc, tags: Sequence[str]) -> list[Span]:
    """Decode BIO tags to (start, end, label) spans.

    An I- tag without a matching head is repaired to B- (standard scorer
    behavior), so any tag sequence decodes deterministically.
    """
    if len(tags) != len(doc.tokens):
        raise PipelineError(f"{len(tags)} tags for {len(doc.tokens)} tokens")
    spans: list[Span] = []
    open_label: str | None = None
    open_first = 0
    for i, tag in enumerate(tags):
        if tag == "O":
            prefix, label = "O", None
        elif len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
            prefix, label = tag[0], require_label(tag[2:])
        else:
            raise PipelineError(f"malformed tag {tag!r} at position {i}")
        starts_new = prefix == "B" or (prefix == "I" and label != open_label)
        if open_label is not None and (prefix == "O" or starts_new):
            spans.append((doc.tokens[open_first].start, doc.tokens[i - 1].end, open_label))
            open_label = None
        if prefix != "O" and starts_new:
            open_label, open_first = label, i
    if open_label is not None:
        spans.append((doc.tokens[open_first].start, doc.tokens[-1].end, open_label))
    return spans


def _overlaps(a: Prediction, b: Prediction) -> bool:
    return max(a.start, b.start) < min(a.end, b.end)


def resolve_overlaps(preds: Sequence[Prediction]) -> list[Prediction]:
    """Greedily keep non-overlapping predictions.

    Selection priority: longer span first, then earlier start, then label
    declaration order. Output is sorted by position; idempotent.
    """
    ranked = sorted(
        preds,
        key=lambda p: (-(p.end - p.start), p.start, LABEL_ORDER[p.label], -p.confidence),
    )
    kept: list[Prediction] = []
    for pred in ranked:
        if not any(_overlaps(pred, existing) for existing in kept if existing.note_id == pred.note_id):
            kept.append(pred)
    kept.sort(key=lambda p: (p.note_id, p.start, p.end, LABEL_ORDER[p.label]))
    return kept


def training_record(note: Note, spans: Sequence[SpanAnnotation]) -> dict:
    """Build one {note_id, tokens, tags} training record for a note."""
    doc = tokenize(note.text)
    resolved = resolve_overlaps(
        [Prediction(note.note_id, s.start, s.end, s.label, s.surface) for s in spans]
    )
    # Snapping can merge near-duplicate gold spans onto the same tokens, so
    # resolve again at token granularity before encoding.
    snapped = []
    for pred in resolved:
        first, last = snap_to_tokens(doc, pred.start, pred.end)
        start, end = doc.tokens[first].start, doc.tokens[last].end
        snapped.append(Prediction(note.note_id, start, end, pred.label, note.text[start:end]))
    tags = spans_to_bio(doc, [(p.start, p.end, p.label) for p in resolve_overlaps(snapped)])
    return {
        "note_id": note.note_id,
        "tokens": [t.surface for t in doc.tokens],
        "tags": tags,
    }


def export_training_data(
    notes_by_id: Mapping[str, Note],
    gold_by_note: Mapping[str, Sequence[SpanAnnotation]],
    split: CorpusSplit,
    out_dir: str | Path,
) -> tuple[Path, Path]:
    """Write train.jsonl/test.jsonl of {note_id, tokens, tags} records."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = (out_dir / "train.jsonl", out_dir / "test.jsonl")
    for path, note_ids in zip(paths, (split.train, split.test)):
        with path.open("w", encoding="utf-8") as handle:
            for note_id in note_ids:
                note = notes_by_id.get(note_id)
                if note is None:
                    raise PipelineError(f"split references unknown note {note_id!r}")
                record = training_record(note, gold_by_note.get(note_id, ()))
                handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return paths
