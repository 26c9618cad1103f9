"""Wire formats shared with the note pipeline.

Three files cross the boundary: the BIO training export
({note_id, tokens, tags} per line), the notes file ({note_id, text, ...}
per line), and the prediction file ({note_id, start, end, label, surface,
confidence} per line). Nothing in this package imports from the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

LABELS = ("Gender", "Ethnicity", "Smoking", "Education", "Employment")
# Tag order doubles as the class-id order baked into checkpoints.
TAGS = ("O",) + tuple(f"{prefix}-{label}" for label in LABELS for prefix in ("B", "I"))
TAG_TO_ID = {tag: i for i, tag in enumerate(TAGS)}


class SidecarError(Exception):
    """Contract violation; the CLI maps it to exit code 1."""


@dataclass(frozen=True)
class TrainingRecord:
    note_id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]


@dataclass(frozen=True)
class NoteText:
    note_id: str
    text: str


def _read_jsonl(path: Path, kind: str) -> list[tuple[int, Mapping]]:
    if not path.exists():
        raise SidecarError(f"{kind} file not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SidecarError(f"{path.name} line {lineno}: invalid JSON ({exc})") from exc
        records.append((lineno, record))
    return records


def read_training_export(path: str | Path) -> list[TrainingRecord]:
    """Read and validate a BIO training export file."""
    path = Path(path)
    records = []
    for lineno, record in _read_jsonl(path, "training"):
        where = f"{path.name} line {lineno}"
        try:
            note_id = record["note_id"]
            tokens = tuple(record["tokens"])
            tags = tuple(record["tags"])
        except (KeyError, TypeError) as exc:
            raise SidecarError(f"{where}: expected note_id, tokens and tags") from exc
        if len(tokens) != len(tags):
            raise SidecarError(f"{where}: {len(tokens)} tokens vs {len(tags)} tags")
        for tag in tags:
            if tag not in TAG_TO_ID:
                raise SidecarError(f"{where}: label outside contract: {tag!r}")
        records.append(TrainingRecord(note_id, tokens, tags))
    if not records:
        raise SidecarError(f"empty training file: {path}")
    if all(tag == "O" for record in records for tag in record.tags):
        raise SidecarError(f"no entity examples in {path}")
    return records


def read_notes(path: str | Path) -> list[NoteText]:
    """Read the notes file; only note_id and text matter to the sidecar."""
    path = Path(path)
    notes = []
    seen: set[str] = set()
    for lineno, record in _read_jsonl(path, "notes"):
        where = f"{path.name} line {lineno}"
        note_id, text = record.get("note_id"), record.get("text")
        if not isinstance(note_id, str) or not isinstance(text, str):
            raise SidecarError(f"{where}: expected note_id and text strings")
        if note_id in seen:
            raise SidecarError(f"{where}: duplicate note_id {note_id!r}")
        seen.add(note_id)
        notes.append(NoteText(note_id, text))
    return notes


def write_predictions(records: Iterable[Mapping], path: str | Path) -> int:
    """Write prediction records line-delimited; returns the record count."""
    n = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n
