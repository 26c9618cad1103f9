"""NLP-vs-structured reconciliation: per-category coverage/consistency rows
and yearly smoking-documentation proportions.

Units: Gender/Ethnicity/Education/Employment rows count patients; the Smoking
row counts (patient, year) datapoints over the expected-datapoint universe.
"Consistent" means both sources present with equal canonical values.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from sbdoh.corpus import StructuredStore
from sbdoh.errors import PipelineError
from sbdoh.labels import LABELS
from sbdoh.normalize import PatientProfile, PatientYearSmoking
from sbdoh.tagging import Prediction


@dataclass(frozen=True)
class CoverageRow:
    category: str
    unit: str  # "patients" or "datapoints"
    denominator: int
    n_concepts_nlp: int
    n_with_nlp: int
    n_with_structured: int
    n_consistent: int
    n_only_nlp: int
    n_only_structured: int

    def percentage(self, count: int) -> float:
        if self.denominator == 0:
            return 0.0
        return 100.0 * count / self.denominator


@dataclass(frozen=True)
class YearPoint:
    year: int
    source: str  # nlp | structured
    numerator: int
    denominator: int

    @property
    def proportion(self) -> float:
        return self.numerator / self.denominator


def coverage(
    patients: Sequence[str],
    universe: set[tuple[str, int]],
    predictions: Sequence[Prediction],
    profiles: Mapping[str, PatientProfile],
    patient_year: Sequence[PatientYearSmoking],
    store: StructuredStore,
    notes_patient_by_id: Mapping[str, str],
    category_classes: Mapping[str, str] | None = None,
) -> list[CoverageRow]:
    """One CoverageRow per SBDoH category.

    Presence ("with NLP concepts") is based on raw detections; consistency
    compares the majority-voted canonical values. When `category_classes` is
    given, smoking consistency compares the coarse classes (current/former/
    never, unlisted categories pooled as "other") instead of exact categories.
    """
    patient_set = set(patients)
    concept_counts = {label: 0 for label in LABELS}
    nlp_patients: dict[str, set[str]] = {label: set() for label in LABELS}
    for pred in predictions:
        patient_id = notes_patient_by_id.get(pred.note_id)
        if patient_id is None:
            raise PipelineError(f"prediction for unknown note {pred.note_id!r}")
        concept_counts[pred.label] += 1
        if patient_id in patient_set:
            nlp_patients[pred.label].add(patient_id)

    rows: list[CoverageRow] = []
    for label in ("Gender", "Ethnicity"):
        with_nlp = nlp_patients[label]
        with_structured = set()
        consistent = set()
        for patient_id in patient_set:
            demo = store.demographics.get(patient_id)
            structured_value = getattr(demo, label.lower(), None) if demo else None
            if structured_value:
                with_structured.add(patient_id)
            profile = profiles.get(patient_id)
            nlp_value = getattr(profile, label.lower(), None) if profile else None
            if structured_value and nlp_value and structured_value == nlp_value:
                consistent.add(patient_id)
        rows.append(
            CoverageRow(
                category=label,
                unit="patients",
                denominator=len(patient_set),
                n_concepts_nlp=concept_counts[label],
                n_with_nlp=len(with_nlp),
                n_with_structured=len(with_structured),
                n_consistent=len(consistent),
                n_only_nlp=len(with_nlp - with_structured),
                n_only_structured=len(with_structured - with_nlp),
            )
        )

    def canon(category: str) -> str:
        if category_classes is None:
            return category
        return category_classes.get(category, "other")

    nlp_points = {(d.patient_id, d.year) for d in patient_year if d.nlp is not None}
    structured_points = {(d.patient_id, d.year) for d in patient_year if d.structured is not None}
    consistent_points = {
        (d.patient_id, d.year)
        for d in patient_year
        if d.nlp is not None and d.structured is not None and canon(d.nlp) == canon(d.structured)
    }
    nlp_points &= universe
    structured_points &= universe
    consistent_points &= universe
    rows.append(
        CoverageRow(
            category="Smoking",
            unit="datapoints",
            denominator=len(universe),
            n_concepts_nlp=concept_counts["Smoking"],
            n_with_nlp=len(nlp_points),
            n_with_structured=len(structured_points),
            n_consistent=len(consistent_points),
            n_only_nlp=len(nlp_points - structured_points),
            n_only_structured=len(structured_points - nlp_points),
        )
    )

    for label in ("Education", "Employment"):
        with_nlp = nlp_patients[label]
        rows.append(
            CoverageRow(
                category=label,
                unit="patients",
                denominator=len(patient_set),
                n_concepts_nlp=concept_counts[label],
                n_with_nlp=len(with_nlp),
                n_with_structured=0,
                n_consistent=0,
                n_only_nlp=len(with_nlp),
                n_only_structured=0,
            )
        )

    order = {label: i for i, label in enumerate(LABELS)}
    rows.sort(key=lambda row: order[row.category])
    return rows


def yearly_smoking_proportions(
    patient_year: Sequence[PatientYearSmoking],
    activity_years: Mapping[str, Iterable[int]],
) -> list[YearPoint]:
    """Per year and source: patients with smoking info / active patients.

    A patient counts toward a year's denominator when they have at least one
    activity event (note or structured record) that year.
    """
    active_by_year: dict[int, set[str]] = defaultdict(set)
    for patient_id, years in activity_years.items():
        for year in years:
            active_by_year[year].add(patient_id)

    documented: dict[tuple[int, str], set[str]] = defaultdict(set)
    for point in patient_year:
        if point.nlp is not None:
            documented[(point.year, "nlp")].add(point.patient_id)
        if point.structured is not None:
            documented[(point.year, "structured")].add(point.patient_id)

    series: list[YearPoint] = []
    for year in sorted(active_by_year):
        active = active_by_year[year]
        if not active:
            continue
        for source in ("nlp", "structured"):
            numerator = len(documented.get((year, source), set()) & active)
            series.append(YearPoint(year, source, numerator, len(active)))
    return series


def emit_report(
    rows: Sequence[CoverageRow], series: Sequence[YearPoint], out_dir: str | Path
) -> dict[str, Path]:
    """Write the comparison table (JSON + pretty text) and the yearly series CSV.

    Deterministic: emitting twice produces byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "comparison.json",
        "table": out_dir / "comparison.txt",
        "series": out_dir / "yearly_series.csv",
    }

    payload = [
        {
            "category": row.category,
            "unit": row.unit,
            "denominator": row.denominator,
            "n_concepts_nlp": row.n_concepts_nlp,
            "n_with_nlp": row.n_with_nlp,
            "n_with_structured": row.n_with_structured,
            "n_consistent": row.n_consistent,
            "n_only_nlp": row.n_only_nlp,
            "n_only_structured": row.n_only_structured,
            "pct_with_nlp": round(row.percentage(row.n_with_nlp), 2),
            "pct_with_structured": round(row.percentage(row.n_with_structured), 2),
            "pct_consistent": round(row.percentage(row.n_consistent), 2),
            "pct_only_nlp": round(row.percentage(row.n_only_nlp), 2),
            "pct_only_structured": round(row.percentage(row.n_only_structured), 2),
        }
        for row in rows
    ]
    paths["json"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def cell(row: CoverageRow, count: int) -> str:
        return f"{count}({row.percentage(count):.2f}%)"

    lines = ["\t".join(["", *[row.category + ("*" if row.unit == "datapoints" else "") for row in rows]])]
    for title, getter in (
        ("#concepts detected by NLP", lambda r: str(r.n_concepts_nlp)),
        ("#units with NLP detected concepts", lambda r: cell(r, r.n_with_nlp)),
        ("#units with structured concepts", lambda r: cell(r, r.n_with_structured)),
        ("#units with NLP consistent with structured concepts", lambda r: cell(r, r.n_consistent)),
        ("#units only have NLP concepts", lambda r: cell(r, r.n_only_nlp)),
        ("#units only have structured concepts", lambda r: cell(r, r.n_only_structured)),
    ):
        lines.append("\t".join([title, *[getter(row) for row in rows]]))
    lines.append("* counted over (patient, year) datapoints; other columns count patients")
    paths["table"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    with paths["series"].open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["year", "source", "numerator", "denominator", "proportion"])
        for point in series:
            writer.writerow(
                [point.year, point.source, point.numerator, point.denominator, f"{point.proportion:.6f}"]
            )
    return paths
