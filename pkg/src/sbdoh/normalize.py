"""Alignment of document-level extractions to structured-EHR granularity.

Three mechanisms: a curated mapping lexicon (surface string -> canonical
category, with an interactive review loop for unseen strings), majority-vote
aggregation to patient level, and per-patient/per-year smoking datapoints.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from sbdoh.corpus import Note
from sbdoh.errors import PipelineError
from sbdoh.tagging import Prediction

logger = logging.getLogger(__name__)

# Common EHR smoking value set; the configured set must always have exactly 7.
DEFAULT_SMOKING_CATEGORIES: tuple[str, ...] = (
    "Current Every Day Smoker",
    "Current Some Day Smoker",
    "Former Smoker",
    "Never Smoker",
    "Smoker Current Status Unknown",
    "Unknown If Ever Smoked",
    "Passive Smoker",
)

UNMAPPED = "Unmapped"


def check_categories(categories: Sequence[str]) -> tuple[str, ...]:
    if len(categories) != 7:
        raise PipelineError(f"smoking category set must have exactly 7 entries, got {len(categories)}")
    if len(set(categories)) != 7:
        raise PipelineError("smoking category names must be unique")
    return tuple(categories)


def normalize_surface(surface: str) -> str:
    """Lowercase, trim, collapse internal whitespace."""
    return " ".join(surface.lower().split())


@dataclass
class MappingLexicon:
    """Normalized surface string -> canonical category, with provenance.

    `categories` of None means the value set is unrestricted (used by the
    gender/ethnicity value lexicons); the smoking lexicon always carries the
    configured 7-category set.
    """

    categories: tuple[str, ...] | None
    entries: dict[str, str] = field(default_factory=dict)
    provenance: dict[str, tuple[str, str]] = field(default_factory=dict)  # key -> (reviewer, timestamp)

    def add(self, surface: str, category: str, reviewer: str = "", timestamp: str = "") -> None:
        key = normalize_surface(surface)
        if not key:
            raise PipelineError("mapping lexicon: empty surface string")
        if self.categories is not None and category not in self.categories:
            raise PipelineError(
                f"mapping lexicon: {category!r} not in category set: {', '.join(self.categories)}"
            )
        self.entries[key] = category
        self.provenance[key] = (reviewer, timestamp)

    def lookup(self, surface: str) -> str | None:
        return self.entries.get(normalize_surface(surface))


def load_mapping(path: str | Path, categories: Sequence[str] | None) -> MappingLexicon:
    """Read a tab-separated mapping file: string, category[, reviewer, timestamp]."""
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"mapping file not found: {path}")
    lexicon = MappingLexicon(categories=None if categories is None else tuple(categories))
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 4):
            raise PipelineError(
                f"{path.name} line {lineno}: expected string<TAB>category[<TAB>reviewer<TAB>timestamp]"
            )
        reviewer, timestamp = (parts[2], parts[3]) if len(parts) == 4 else ("", "")
        try:
            lexicon.add(parts[0], parts[1], reviewer, timestamp)
        except PipelineError as exc:
            raise PipelineError(f"{path.name} line {lineno}: {exc}") from None
    return lexicon


def append_mapping(path: str | Path, surface: str, category: str, reviewer: str, timestamp: str) -> None:
    with Path(path).open("a", encoding="utf-8") as handle:
        handle.write(f"{normalize_surface(surface)}\t{category}\t{reviewer}\t{timestamp}\n")


@dataclass(frozen=True)
class DistinctString:
    surface: str
    frequency: int
    contexts: tuple[str, ...]


def collect_distinct_strings(
    preds: Sequence[Prediction], notes_by_id: Mapping[str, Note], label: str = "Smoking"
) -> list[DistinctString]:
    """Distinct normalized surfaces for `label`, most frequent first.

    Carries up to 3 context snippets per string for the review prompt.
    """
    counts: Counter[str] = Counter()
    contexts: dict[str, list[str]] = defaultdict(list)
    for pred in sorted(preds, key=lambda p: (p.note_id, p.start)):
        if pred.label != label:
            continue
        key = normalize_surface(pred.surface)
        counts[key] += 1
        if len(contexts[key]) < 3:
            note = notes_by_id.get(pred.note_id)
            if note is not None:
                lo = max(0, pred.start - 30)
                hi = min(len(note.text), pred.end + 30)
                contexts[key].append(" ".join(note.text[lo:hi].split()))
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [DistinctString(s, n, tuple(contexts[s])) for s, n in ordered]


def normalize_smoking(pred: Prediction, lexicon: MappingLexicon) -> str:
    """Canonical category for a Smoking prediction, or Unmapped on a miss."""
    if pred.label != "Smoking":
        raise PipelineError(f"normalize_smoking got a {pred.label} prediction")
    return lexicon.lookup(pred.surface) or UNMAPPED


def review_mappings(
    distinct: Sequence[DistinctString],
    lexicon: MappingLexicon,
    lexicon_path: str | Path,
    reviewer: str,
    timestamp_fn: Callable[[], str],
    input_fn: Callable[[str], str] = input,
    output_fn: Callable[[str], None] = print,
) -> int:
    """Interactive review of unmapped strings, most frequent first.

    Each decision is appended to the lexicon file with provenance. Within a
    session no string is asked twice; a skip is session-local, so skipped
    strings reappear in the next session. Returns the number of mappings added.

    The caller is responsible for refusing to start a session in a
    non-interactive environment.
    """
    if lexicon.categories is None:
        raise PipelineError("review requires a lexicon with a closed category set")
    pending = [d for d in distinct if lexicon.lookup(d.surface) is None]
    output_fn(f"{len(pending)} strings pending")
    added = 0
    menu = "\n".join(f"  {i}. {cat}" for i, cat in enumerate(lexicon.categories, start=1))
    for item in pending:
        output_fn(f"\n{item.surface!r}  (frequency {item.frequency})")
        for snippet in item.contexts:
            output_fn(f"    ... {snippet} ...")
        output_fn(menu)
        while True:
            try:
                answer = input_fn("category number, (s)kip, (q)uit: ").strip().lower()
            except EOFError:
                answer = "q"
            if answer == "q":
                return added
            if answer == "s":
                break
            if answer.isdigit() and 1 <= int(answer) <= len(lexicon.categories):
                category = lexicon.categories[int(answer) - 1]
                stamp = timestamp_fn()
                lexicon.add(item.surface, category, reviewer, stamp)
                append_mapping(lexicon_path, item.surface, category, reviewer, stamp)
                added += 1
                break
            output_fn(f"invalid selection {answer!r}")
    return added


@dataclass(frozen=True)
class VoteItem:
    value: str
    timestamp: str  # ISO-8601; lexicographic order == chronological order


def majority_vote(items: Sequence[VoteItem], priority: Sequence[str] = ()) -> str:
    """Modal value of `items`.

    Tie-breaks, in order: the tied value with the most recent timestamp
    occurrence; the configured priority order; lexicographic (final
    determinism fallback). Permutation-invariant.
    """
    if not items:
        raise PipelineError("majority_vote: empty item list")
    counts = Counter(item.value for item in items)
    top = max(counts.values())
    tied = [value for value, n in counts.items() if n == top]
    if len(tied) == 1:
        return tied[0]
    latest = {value: max(i.timestamp for i in items if i.value == value) for value in tied}
    newest = max(latest.values())
    tied = [value for value in tied if latest[value] == newest]
    if len(tied) == 1:
        return tied[0]
    rank = {value: i for i, value in enumerate(priority)}
    return min(tied, key=lambda value: (rank.get(value, len(priority)), value))


@dataclass(frozen=True)
class PatientProfile:
    patient_id: str
    gender: str | None
    ethnicity: str | None
    gender_counts: tuple[tuple[str, int], ...]
    ethnicity_counts: tuple[tuple[str, int], ...]


def aggregate_patient(
    patient_id: str,
    preds: Sequence[Prediction],
    notes_by_id: Mapping[str, Note],
    gender_map: MappingLexicon,
    ethnicity_map: MappingLexicon,
    priority: Sequence[str] = (),
) -> PatientProfile:
    """Patient-level gender/ethnicity via majority vote over mapped mentions.

    Unmapped surfaces are excluded from the vote. A field with no mapped
    mentions is absent (None).
    """
    votes: dict[str, list[VoteItem]] = {"Gender": [], "Ethnicity": []}
    value_maps = {"Gender": gender_map, "Ethnicity": ethnicity_map}
    for pred in preds:
        if pred.label not in votes:
            continue
        value = value_maps[pred.label].lookup(pred.surface)
        if value is None:
            continue
        note = notes_by_id.get(pred.note_id)
        if note is None:
            raise PipelineError(f"prediction for unknown note {pred.note_id!r}")
        votes[pred.label].append(VoteItem(value, note.note_datetime))
    gender_items, ethnicity_items = votes["Gender"], votes["Ethnicity"]
    return PatientProfile(
        patient_id=patient_id,
        gender=majority_vote(gender_items, priority) if gender_items else None,
        ethnicity=majority_vote(ethnicity_items, priority) if ethnicity_items else None,
        gender_counts=tuple(sorted(Counter(i.value for i in gender_items).items())),
        ethnicity_counts=tuple(sorted(Counter(i.value for i in ethnicity_items).items())),
    )


@dataclass(frozen=True)
class SmokingItem:
    patient_id: str
    timestamp: str
    category: str
    source: str  # nlp | structured


@dataclass(frozen=True)
class PatientYearSmoking:
    patient_id: str
    year: int
    nlp: str | None
    structured: str | None


def aggregate_patient_year(
    items: Sequence[SmokingItem], priority: Sequence[str] = ()
) -> list[PatientYearSmoking]:
    """Per (patient, year): majority-voted category per source."""
    by_cell: dict[tuple[str, int, str], list[VoteItem]] = defaultdict(list)
    for item in items:
        if item.source not in ("nlp", "structured"):
            raise PipelineError(f"unknown smoking item source {item.source!r}")
        year = int(item.timestamp[:4])
        by_cell[(item.patient_id, year, item.source)].append(VoteItem(item.category, item.timestamp))
    voted = {cell: majority_vote(cell_items, priority) for cell, cell_items in by_cell.items()}
    keys = sorted({(pid, year) for pid, year, _ in voted})
    return [
        PatientYearSmoking(
            patient_id=pid,
            year=year,
            nlp=voted.get((pid, year, "nlp")),
            structured=voted.get((pid, year, "structured")),
        )
        for pid, year in keys
    ]


def expected_datapoints(activity_years: Mapping[str, Iterable[int]]) -> set[tuple[str, int]]:
    """The (patient, year) universe: each patient's contiguous activity span.

    A patient active in 2012 and 2014 is expected to have datapoints for
    2012, 2013 and 2014. Patients with no activity are excluded with a warning.
    """
    universe: set[tuple[str, int]] = set()
    for patient_id, years in activity_years.items():
        years = list(years)
        if not years:
            logger.warning("patient %s has no activity; excluded from datapoint universe", patient_id)
            continue
        universe.update((patient_id, year) for year in range(min(years), max(years) + 1))
    return universe
