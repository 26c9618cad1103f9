"""Data model and ingestion/serialization for notes, standoff annotations,
and structured EHR tables.

File conventions: notes are line-delimited JSON records, annotations use the
standoff format ``T<k><TAB><Label> <start> <end><TAB><surface>``, structured
tables are CSVs with a header row. All offsets are Unicode code points,
end-exclusive; all files are UTF-8.
"""

from __future__ import annotations

import csv
import json
import random
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence

from sbdoh.errors import PipelineError
from sbdoh.labels import LABELS

NOTE_FIELDS = ("note_id", "patient_id", "encounter_id", "note_type", "note_datetime", "text")

# Entity line: id, label, start, end as brat writes them; the surface is the
# final tab-delimited field, so tabs inside it survive the round-trip.
_STANDOFF_RE = re.compile(r"^(T\d+)\t(\S+) (\d+) (\d+)\t(.*)$")


@dataclass(frozen=True)
class Note:
    note_id: str
    patient_id: str
    encounter_id: str | None
    note_type: str
    note_datetime: str
    text: str

    @property
    def year(self) -> int:
        return int(self.note_datetime[:4])


@dataclass(frozen=True)
class SpanAnnotation:
    note_id: str
    start: int
    end: int
    label: str
    surface: str


@dataclass(frozen=True)
class Demographic:
    patient_id: str
    gender: str
    ethnicity: str
    birth_date: date


@dataclass(frozen=True)
class SmokingRecord:
    patient_id: str
    encounter_id: str
    recorded_datetime: str
    category: str

    @property
    def year(self) -> int:
        return int(self.recorded_datetime[:4])


@dataclass(frozen=True)
class ProcedureRecord:
    patient_id: str
    datetime: str
    code: str

    @property
    def year(self) -> int:
        return int(self.datetime[:4])


@dataclass(frozen=True)
class PackYearRecord:
    patient_id: str
    datetime: str
    value: float
    source: str
    encounter_type: str


@dataclass(frozen=True)
class QuitRecord:
    patient_id: str
    datetime: str
    quit_year: int
    source: str


@dataclass
class StructuredStore:
    demographics: dict[str, Demographic] = field(default_factory=dict)
    smoking_records: list[SmokingRecord] = field(default_factory=list)
    procedures: list[ProcedureRecord] = field(default_factory=list)
    packyear_records: list[PackYearRecord] = field(default_factory=list)
    quit_records: list[QuitRecord] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int


def _parse_datetime(value: str, where: str) -> str:
    """Validate an ISO-8601 timestamp with a 4-digit year; return it unchanged."""
    try:
        parsed = datetime.fromisoformat(value)
    except (TypeError, ValueError):
        raise PipelineError(f"{where}: invalid note_datetime {value!r}") from None
    if parsed.year < 1000:
        raise PipelineError(f"{where}: note_datetime year must have 4 digits, got {value!r}")
    return value


def parse_notes(path: str | Path) -> list[Note]:
    """Parse a line-delimited notes file.

    Raises:
        PipelineError: malformed line (naming line number and field) or
            duplicate note_id.
    """
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"notes file not found: {path}")
    notes: list[Note] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PipelineError(f"line {lineno}: invalid record ({exc.msg})") from None
            if not isinstance(record, dict):
                raise PipelineError(f"line {lineno}: record must be an object")
            for name in NOTE_FIELDS:
                if name == "encounter_id":
                    continue
                if record.get(name) in (None, ""):
                    raise PipelineError(f"line {lineno}: missing {name}")
            note_id = str(record["note_id"])
            if note_id in seen:
                raise PipelineError(f"line {lineno}: duplicate note_id {note_id!r}")
            seen.add(note_id)
            _parse_datetime(str(record["note_datetime"]), f"line {lineno}")
            encounter = record.get("encounter_id")
            notes.append(
                Note(
                    note_id=note_id,
                    patient_id=str(record["patient_id"]),
                    encounter_id=None if encounter in (None, "") else str(encounter),
                    note_type=str(record["note_type"]),
                    note_datetime=str(record["note_datetime"]),
                    text=str(record["text"]),
                )
            )
    return notes


def write_notes(notes: Iterable[Note], path: str | Path) -> None:
    """Write notes as line-delimited JSON; inverse of parse_notes."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for note in notes:
            record = {
                "note_id": note.note_id,
                "patient_id": note.patient_id,
                "encounter_id": note.encounter_id,
                "note_type": note.note_type,
                "note_datetime": note.note_datetime,
                "text": note.text,
            }
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def validate_span(note: Note, start: int, end: int, surface: str, where: str) -> None:
    """Check span invariants against the note text."""
    if not (0 <= start < end <= len(note.text)):
        raise PipelineError(
            f"{where}: span ({start},{end}) out of bounds for note {note.note_id!r}"
            f" of length {len(note.text)}"
        )
    actual = note.text[start:end]
    if actual != surface:
        raise PipelineError(
            f"{where}: surface mismatch in note {note.note_id!r}:"
            f" file says {surface!r}, text[{start}:{end}] is {actual!r}"
        )


def parse_standoff(path: str | Path, note: Note) -> list[SpanAnnotation]:
    """Parse a standoff annotation file for one note.

    Each entity line becomes one SpanAnnotation; surfaces are cross-checked
    against the note text, labels against the closed label set.
    """
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"annotation file not found: {path}")
    spans: list[SpanAnnotation] = []
    content = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        match = _STANDOFF_RE.match(line)
        if match is None:
            raise PipelineError(f"{path.name} line {lineno}: malformed entity line {line!r}")
        _, label, start_s, end_s, surface = match.groups()
        where = f"{path.name} line {lineno}"
        if label not in LABELS:
            raise PipelineError(f"{where}: unknown label {label!r}")
        start, end = int(start_s), int(end_s)
        validate_span(note, start, end, surface, where)
        spans.append(SpanAnnotation(note.note_id, start, end, label, surface))
    return spans


def serialize_standoff(spans: Sequence[SpanAnnotation]) -> str:
    """Serialize spans to standoff text; round-trips through parse_standoff."""
    lines = []
    for k, span in enumerate(spans, start=1):
        lines.append(f"T{k}\t{span.label} {span.start} {span.end}\t{span.surface}\n")
    return "".join(lines)


def _read_csv(path: Path, columns: Sequence[str]) -> list[dict[str, str]]:
    if not path.exists():
        raise PipelineError(f"structured table not found: {path}")
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or list(reader.fieldnames) != list(columns):
            raise PipelineError(
                f"{path.name}: expected header {','.join(columns)},"
                f" got {','.join(reader.fieldnames or [])}"
            )
        return [dict(row) for row in reader]


def parse_structured(directory: str | Path, categories: Sequence[str]) -> StructuredStore:
    """Load the structured EHR tables from `directory`.

    Education/employment tables are intentionally absent from the schema.

    Raises:
        PipelineError: unknown smoking category (message lists the configured
            set) or a record whose patient_id is missing from demographics.
    """
    directory = Path(directory)
    store = StructuredStore()
    cat_set = set(categories)

    for row in _read_csv(directory / "demographics.csv", ("patient_id", "gender", "ethnicity", "birth_date")):
        pid = row["patient_id"]
        if pid in store.demographics:
            raise PipelineError(f"demographics.csv: duplicate patient_id {pid!r}")
        try:
            birth = date.fromisoformat(row["birth_date"])
        except ValueError:
            raise PipelineError(f"demographics.csv: invalid birth_date {row['birth_date']!r} for {pid!r}") from None
        store.demographics[pid] = Demographic(pid, row["gender"], row["ethnicity"], birth)

    def check_patient(pid: str, table: str) -> str:
        if pid not in store.demographics:
            raise PipelineError(f"{table}: patient_id {pid!r} not present in demographics.csv")
        return pid

    for row in _read_csv(directory / "smoking.csv", ("patient_id", "encounter_id", "recorded_datetime", "category")):
        if row["category"] not in cat_set:
            raise PipelineError(
                f"smoking.csv: unknown category {row['category']!r};"
                f" configured categories: {', '.join(categories)}"
            )
        _parse_datetime(row["recorded_datetime"], "smoking.csv")
        store.smoking_records.append(
            SmokingRecord(
                check_patient(row["patient_id"], "smoking.csv"),
                row["encounter_id"],
                row["recorded_datetime"],
                row["category"],
            )
        )

    for row in _read_csv(directory / "procedures.csv", ("patient_id", "datetime", "code")):
        _parse_datetime(row["datetime"], "procedures.csv")
        store.procedures.append(
            ProcedureRecord(check_patient(row["patient_id"], "procedures.csv"), row["datetime"], row["code"])
        )

    for row in _read_csv(directory / "packyears.csv", ("patient_id", "datetime", "value", "source", "encounter_type")):
        if row["source"] not in ("structured", "note"):
            raise PipelineError(f"packyears.csv: source must be structured|note, got {row['source']!r}")
        value = float(row["value"])
        if value < 0:
            raise PipelineError(f"packyears.csv: negative value {value} for {row['patient_id']!r}")
        _parse_datetime(row["datetime"], "packyears.csv")
        store.packyear_records.append(
            PackYearRecord(
                check_patient(row["patient_id"], "packyears.csv"),
                row["datetime"],
                value,
                row["source"],
                row["encounter_type"],
            )
        )

    for row in _read_csv(directory / "quit.csv", ("patient_id", "datetime", "quit_year", "source")):
        if row["source"] not in ("structured", "note"):
            raise PipelineError(f"quit.csv: source must be structured|note, got {row['source']!r}")
        _parse_datetime(row["datetime"], "quit.csv")
        store.quit_records.append(
            QuitRecord(
                check_patient(row["patient_id"], "quit.csv"),
                row["datetime"],
                int(row["quit_year"]),
                row["source"],
            )
        )

    return store


def split_corpus(note_ids: Sequence[str], train_n: int, test_n: int, seed: int) -> CorpusSplit:
    """Deterministic train/test split.

    Sorts ids lexicographically, applies a seeded uniform shuffle, then takes
    the first train_n ids as train and the next test_n as test.
    """
    if train_n + test_n > len(note_ids):
        raise PipelineError(
            f"cannot split {len(note_ids)} notes into train={train_n} + test={test_n}"
        )
    ordered = sorted(note_ids)
    random.Random(seed).shuffle(ordered)
    return CorpusSplit(
        train=tuple(ordered[:train_n]),
        test=tuple(ordered[train_n : train_n + test_n]),
        seed=seed,
    )
