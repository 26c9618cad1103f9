"""Inference: tag raw notes and emit character-span predictions.

Long notes are covered by overlapping windows; where windows overlap, each
word keeps the scores from the window that was most confident about it.
Word scores are decoded into a BIO-consistent tag path, and tag runs become
spans on the original text, so every emitted surface equals the substring
at its offsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from sbdoh_sidecar.contract import TAGS, NoteText, read_notes, write_predictions
from sbdoh_sidecar.modeling import (
    WORD_RE,
    batched,
    collate,
    encode_words,
    load_model,
    load_tokenizer,
    special_ids,
    viterbi_tags,
    window_bounds,
)

# Certain-"O" row for words the tokenizer maps to zero subwords.
_O_ROW = torch.full((len(TAGS),), -1e9)
_O_ROW[TAGS.index("O")] = 0.0


@dataclass(frozen=True)
class _Window:
    note_index: int
    ids: list[int]
    word_indexes: list[int]  # source word per body position


def _note_windows(tokenizer, note: NoteText, note_index: int, max_len: int, cls_id, sep_id):
    """The note's word offsets and its (possibly overlapping) model windows."""
    offsets = [(match.start(), match.end()) for match in WORD_RE.finditer(note.text)]
    if not offsets:
        return [], []
    ids, word_ids = encode_words(tokenizer, [note.text[s:e] for s, e in offsets])
    if not ids:
        return offsets, []
    body = max_len - 2
    stride = body if len(ids) <= body else body // 2
    windows = []
    for start, stop in window_bounds(len(ids), body, stride):
        windows.append(
            _Window(note_index, [cls_id] + ids[start:stop] + [sep_id], word_ids[start:stop])
        )
    return offsets, windows


def _spans_from_tags(note: NoteText, offsets, tags, confidences):
    spans = []
    start = None
    for k, tag in enumerate(list(tags) + ["O"]):
        if start is not None and (tag == "O" or tag.startswith("B-") or tag[2:] != label):
            char_start, char_end = offsets[start][0], offsets[k - 1][1]
            spans.append(
                {
                    "note_id": note.note_id,
                    "start": char_start,
                    "end": char_end,
                    "label": label,
                    "surface": note.text[char_start:char_end],
                    "confidence": round(min(confidences[start:k]), 6),
                }
            )
            start = None
        if start is None and tag != "O":
            start, label = k, tag[2:]
    return spans


def predict(
    notes_path: str | Path,
    checkpoint_dir: str | Path,
    out_path: str | Path,
    batch_size: int = 32,
) -> int:
    """Tag every note and write the prediction file; returns the span count."""
    notes = read_notes(notes_path)
    tokenizer = load_tokenizer(checkpoint_dir)
    pad_id, cls_id, sep_id = special_ids(tokenizer)
    model = load_model(checkpoint_dir)
    model.eval()
    max_len = model.config.max_position_embeddings

    note_offsets: list[list[tuple[int, int]]] = []
    windows: list[_Window] = []
    for note_index, note in enumerate(notes):
        offsets, note_wins = _note_windows(tokenizer, note, note_index, max_len, cls_id, sep_id)
        note_offsets.append(offsets)
        windows.extend(note_wins)

    # Best per-word class log-probabilities across overlapping windows.
    best_rows: dict[tuple[int, int], tuple[float, torch.Tensor]] = {}
    with torch.no_grad():
        for batch in batched(windows, batch_size):
            ids, mask, _ = collate([(w.ids, None) for w in batch], pad_id)
            logits = model(input_ids=ids, attention_mask=mask).logits
            log_probs = torch.log_softmax(logits, dim=-1)
            for w, rows in zip(batch, log_probs):
                seen: set[int] = set()
                for position, word_index in enumerate(w.word_indexes, start=1):
                    if word_index in seen:  # first subword speaks for the word
                        continue
                    seen.add(word_index)
                    row = rows[position]
                    confidence = float(row.max())
                    key = (w.note_index, word_index)
                    if key not in best_rows or confidence > best_rows[key][0]:
                        best_rows[key] = (confidence, row)

    predictions = []
    for note_index, note in enumerate(notes):
        offsets = note_offsets[note_index]
        if not offsets:
            continue
        rows = torch.stack(
            [
                best_rows.get((note_index, k), (0.0, _O_ROW))[1]
                for k in range(len(offsets))
            ]
        )
        tags = viterbi_tags(rows)
        confidences = [float(rows[k, TAGS.index(tag)].exp()) for k, tag in enumerate(tags)]
        predictions.extend(_spans_from_tags(note, offsets, tags, confidences))

    return write_predictions(predictions, out_path)
