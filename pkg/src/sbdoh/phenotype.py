"""Lung-cancer-screening cohort rules with per-patient evidence trails.

Membership is the conjunction of three rules:
  1. age at the first LDCT procedure is within [age_min, age_max];
  2. the merged structured+NLP smoking timeline satisfies one of four
     branches (see smoking_eligibility);
  3. the modal pack-year value (tie -> maximum tied value) over desired
     encounter types is >= packyear_min.
The first LDCT date anchors rule 1 and is reused as the reference date for
rule 2's quit-year and timeframe arithmetic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Sequence

from sbdoh.corpus import PackYearRecord, ProcedureRecord, QuitRecord, StructuredStore
from sbdoh.errors import PipelineError
from sbdoh.normalize import DEFAULT_SMOKING_CATEGORIES, SmokingItem

# Canonical category -> behavior class used by rule 2. Categories not listed
# fall into class "other" and satisfy no branch on their own.
DEFAULT_CATEGORY_CLASSES: dict[str, str] = {
    DEFAULT_SMOKING_CATEGORIES[0]: "current",   # Current Every Day Smoker
    DEFAULT_SMOKING_CATEGORIES[1]: "current",   # Current Some Day Smoker
    DEFAULT_SMOKING_CATEGORIES[2]: "former",    # Former Smoker
    DEFAULT_SMOKING_CATEGORIES[3]: "never",     # Never Smoker
}


@dataclass(frozen=True)
class PhenotypeConfig:
    age_min: int = 50
    age_max: int = 80
    quit_years_max: int = 15
    packyear_min: float = 20.0
    ldct_codes: tuple[str, ...] = ("LDCT",)
    timeframe_years: int | None = None  # None = entire record
    desired_encounter_types: tuple[str, ...] = ()  # empty = all
    category_classes: Mapping[str, str] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_CLASSES)
    )

    def __post_init__(self) -> None:
        if self.age_min >= self.age_max:
            raise PipelineError(f"age_min {self.age_min} must be below age_max {self.age_max}")
        if self.quit_years_max <= 0 or self.packyear_min <= 0:
            raise PipelineError("quit_years_max and packyear_min must be positive")

    def category_class(self, category: str) -> str:
        return self.category_classes.get(category, "other")


@dataclass(frozen=True)
class RuleResult:
    passed: bool
    detail: str
    evidence: tuple[str, ...]


@dataclass(frozen=True)
class PhenotypeEvidence:
    patient_id: str
    member: bool
    age_rule: RuleResult
    smoking_rule: RuleResult
    packyear_rule: RuleResult


def first_ldct_date(procedures: Sequence[ProcedureRecord], config: PhenotypeConfig) -> str | None:
    dates = sorted(p.datetime for p in procedures if p.code in config.ldct_codes)
    return dates[0] if dates else None


def _completed_years(birth: date, later: date) -> int:
    years = later.year - birth.year
    if (later.month, later.day) < (birth.month, birth.day):
        years -= 1
    return years


def age_at_first_ldct(
    birth_date: date, procedures: Sequence[ProcedureRecord], config: PhenotypeConfig
) -> int | None:
    """Completed years between birth and the earliest LDCT; None without LDCT."""
    first = first_ldct_date(procedures, config)
    if first is None:
        return None
    ldct = date.fromisoformat(first[:10])
    if ldct < birth_date:
        raise PipelineError(f"LDCT on {first} precedes birth date {birth_date.isoformat()}")
    return _completed_years(birth_date, ldct)


def _age_rule(
    birth_date: date, procedures: Sequence[ProcedureRecord], config: PhenotypeConfig
) -> RuleResult:
    first = first_ldct_date(procedures, config)
    if first is None:
        return RuleResult(False, "no LDCT procedure", ("no LDCT records",))
    age = age_at_first_ldct(birth_date, procedures, config)
    assert age is not None
    passed = config.age_min <= age <= config.age_max
    return RuleResult(
        passed,
        f"age {age} at first LDCT {'within' if passed else 'outside'} [{config.age_min},{config.age_max}]",
        (f"first LDCT {first}, birth {birth_date.isoformat()}, age {age}",),
    )


def smoking_eligibility(
    timeline: Sequence[SmokingItem],
    quit_records: Sequence[QuitRecord],
    reference_date: str,
    config: PhenotypeConfig,
) -> RuleResult:
    """Rule 2 over the merged structured+NLP smoking timeline.

    Branches (any passes):
      (a) most recent status Never, with an earlier current/former record
          within the timeframe (evidence the patient ever smoked);
      (b) most recent status current;
      (c) most recent status former, and reference year minus the most recent
          quit year is <= quit_years_max;
      (d) most recent status former, and a structured-source current record
          exists within the timeframe.

    The timeframe is a lookback window: a record is within it when its year
    is >= reference year - timeframe_years (no cutoff when timeframe is None).
    Same-timestamp conflicts prefer the structured record so the outcome is
    independent of input order.
    """
    if not timeline:
        return RuleResult(False, "no smoking data", ("no smoking records",))
    reference_year = int(reference_date[:4])

    def sort_key(item: SmokingItem) -> tuple:
        return (item.timestamp, item.source == "structured", item.category)

    def within_timeframe(item: SmokingItem) -> bool:
        if config.timeframe_years is None:
            return True
        return int(item.timestamp[:4]) >= reference_year - config.timeframe_years

    def describe(item: SmokingItem) -> str:
        return f"{item.source} smoking record {item.timestamp} {item.category}"

    most_recent = max(timeline, key=sort_key)
    recent_class = config.category_class(most_recent.category)

    if recent_class == "current":
        return RuleResult(True, "most recent status is current (branch b)", (describe(most_recent),))

    if recent_class == "never":
        earlier_smoking = [
            item
            for item in timeline
            if item.timestamp < most_recent.timestamp
            and config.category_class(item.category) in ("current", "former")
            and within_timeframe(item)
        ]
        if earlier_smoking:
            ever = max(earlier_smoking, key=sort_key)
            return RuleResult(
                True,
                "most recent status is never with earlier smoking evidence (branch a)",
                (describe(most_recent), describe(ever)),
            )
        return RuleResult(
            False, "most recent status is never with no smoking evidence", (describe(most_recent),)
        )

    if recent_class == "former":
        if quit_records:
            last_quit = max(quit_records, key=lambda q: (q.datetime, q.quit_year))
            gap = reference_year - last_quit.quit_year
            if gap <= config.quit_years_max:
                return RuleResult(
                    True,
                    f"former smoker, quit {gap} years before reference (branch c)",
                    (
                        describe(most_recent),
                        f"{last_quit.source} quit record {last_quit.datetime} quit_year {last_quit.quit_year}",
                    ),
                )
        structured_current = [
            item
            for item in timeline
            if item.source == "structured"
            and config.category_class(item.category) == "current"
            and within_timeframe(item)
        ]
        if structured_current:
            return RuleResult(
                True,
                "former smoker with structured current record (branch d)",
                (describe(most_recent), describe(max(structured_current, key=sort_key))),
            )
        return RuleResult(
            False,
            "former smoker outside the quit window and without structured current evidence",
            (describe(most_recent),),
        )

    return RuleResult(
        False, f"most recent status {most_recent.category!r} satisfies no branch", (describe(most_recent),)
    )


def packyear_rule(records: Sequence[PackYearRecord], config: PhenotypeConfig) -> RuleResult:
    """Rule 3: modal pack-year value (tie -> max tied value) >= packyear_min."""
    desired = set(config.desired_encounter_types)
    eligible = [r for r in records if not desired or r.encounter_type in desired]
    if not eligible:
        return RuleResult(False, "no pack-year data", ("no pack-year records",))
    counts = Counter(r.value for r in eligible)
    top = max(counts.values())
    majority = max(value for value, n in counts.items() if n == top)
    passed = majority >= config.packyear_min
    evidence = tuple(
        f"{r.source} pack-year record {r.datetime} value {r.value:g} ({r.encounter_type})"
        for r in sorted(eligible, key=lambda r: (r.datetime, r.value))
        if r.value == majority
    )
    return RuleResult(
        passed,
        f"majority pack-year value {majority:g} {'meets' if passed else 'below'} threshold {config.packyear_min:g}",
        evidence,
    )


def build_cohort(
    store: StructuredStore,
    nlp_smoking: Sequence[SmokingItem],
    config: PhenotypeConfig,
) -> dict[str, PhenotypeEvidence]:
    """Evaluate all three rules for every patient in demographics.

    Deterministic: identical stores yield identical cohorts regardless of
    record input order.
    """
    nlp_by_patient: dict[str, list[SmokingItem]] = {}
    for item in nlp_smoking:
        nlp_by_patient.setdefault(item.patient_id, []).append(item)

    cohort: dict[str, PhenotypeEvidence] = {}
    for patient_id in sorted(store.demographics):
        demo = store.demographics[patient_id]
        procedures = [p for p in store.procedures if p.patient_id == patient_id]
        age_result = _age_rule(demo.birth_date, procedures, config)
        reference = first_ldct_date(procedures, config)
        if reference is None:
            skipped = RuleResult(False, "not evaluated (no reference date)", ("no LDCT records",))
            cohort[patient_id] = PhenotypeEvidence(patient_id, False, age_result, skipped, skipped)
            continue
        timeline = [
            SmokingItem(patient_id, r.recorded_datetime, r.category, "structured")
            for r in store.smoking_records
            if r.patient_id == patient_id
        ] + list(nlp_by_patient.get(patient_id, []))
        smoking_result = smoking_eligibility(
            timeline,
            [q for q in store.quit_records if q.patient_id == patient_id],
            reference,
            config,
        )
        packyear_result = packyear_rule(
            [r for r in store.packyear_records if r.patient_id == patient_id], config
        )
        member = age_result.passed and smoking_result.passed and packyear_result.passed
        cohort[patient_id] = PhenotypeEvidence(
            patient_id, member, age_result, smoking_result, packyear_result
        )
    return cohort
