"""Note filtering: keep notes likely to carry SBDoH content.

A note is kept based on two conditions: its note_type is on the allowlist and
its text contains at least one keyword. ``combine_mode`` controls whether both
(and) or either (or) must hold. Keyword matching is case-insensitive and
whole-word; multiword keywords match across arbitrary whitespace.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from sbdoh.corpus import Note
from sbdoh.errors import PipelineError

# Stand-in for the unpublished 30-keyword list; exactly 30 entries, lowercase.
DEFAULT_KEYWORDS: tuple[str, ...] = (
    "smoker",
    "smoking",
    "tobacco",
    "cigarette",
    "cigarettes",
    "cigar",
    "nicotine",
    "pack years",
    "quit",
    "alcohol",
    "drinks",
    "employed",
    "unemployed",
    "employment",
    "retired",
    "occupation",
    "works as",
    "work status",
    "education",
    "college",
    "high school",
    "graduate",
    "diploma",
    "literacy",
    "lives with",
    "lives alone",
    "marital status",
    "social history",
    "ethnicity",
    "hispanic",
)


@dataclass(frozen=True)
class FilterConfig:
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    note_types: tuple[str, ...] = ()  # empty allowlist = all types allowed
    combine_mode: str = "and"

    def __post_init__(self) -> None:
        if not self.keywords:
            raise PipelineError("filter: keywords must be non-empty")
        if self.combine_mode not in ("and", "or"):
            raise PipelineError(f"filter: combine_mode must be and|or, got {self.combine_mode!r}")
        normalized = tuple(" ".join(k.lower().split()) for k in self.keywords)
        object.__setattr__(self, "keywords", normalized)
        object.__setattr__(self, "note_types", tuple(self.note_types))


@dataclass
class FilterStats:
    total_in: int = 0
    kept: int = 0
    per_keyword_hits: Counter[str] = field(default_factory=Counter)
    per_note_type_kept: Counter[str] = field(default_factory=Counter)


class Matcher:
    """Single-pass, case-insensitive, whole-word matcher for a keyword set."""

    def __init__(self, keywords: Sequence[str]) -> None:
        for keyword in keywords:
            if not keyword.strip():
                raise PipelineError("filter: empty keyword string")
        # Longest first so a multiword keyword wins over a prefix keyword at
        # the same position; \s+ lets phrases match across line breaks.
        parts = [re.escape(k).replace(r"\ ", r"\s+") for k in sorted(keywords, key=len, reverse=True)]
        self._pattern = re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)", re.IGNORECASE)

    def count_hits(self, text: str) -> Counter[str]:
        """Occurrence count per (normalized) keyword in `text`."""
        hits: Counter[str] = Counter()
        for match in self._pattern.finditer(text):
            hits[" ".join(match.group(0).lower().split())] += 1
        return hits

    def has_hit(self, text: str) -> bool:
        return self._pattern.search(text) is not None


def compile_matcher(config: FilterConfig) -> Matcher:
    return Matcher(config.keywords)


def filter_notes(
    notes: Iterable[Note], matcher: Matcher, config: FilterConfig
) -> tuple[list[Note], FilterStats]:
    """Apply the type/keyword filter; order-preserving and idempotent.

    per_keyword_hits tallies occurrences over all input notes (not only kept
    ones) so the stats do not depend on combine_mode.
    """
    stats = FilterStats()
    allowed = set(config.note_types)
    kept: list[Note] = []
    for note in notes:
        stats.total_in += 1
        hits = matcher.count_hits(note.text)
        stats.per_keyword_hits.update(hits)
        type_ok = not allowed or note.note_type in allowed
        keyword_ok = bool(hits)
        keep = (type_ok and keyword_ok) if config.combine_mode == "and" else (type_ok or keyword_ok)
        if keep:
            kept.append(note)
            stats.kept += 1
            stats.per_note_type_kept[note.note_type] += 1
    return kept, stats
