"""Stage orchestration shared by the CLI commands.

Every stage is a pure function of its declared inputs and writes
deterministic artifacts (no timestamps), so re-running a stage or the whole
chain with unchanged inputs is byte-identical, and tagging with N workers
equals tagging serially.
"""

from __future__ import annotations

import json
import multiprocessing
from collections import defaultdict
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from sbdoh.assets import asset_path
from sbdoh.compare import coverage, emit_report, yearly_smoking_proportions
from sbdoh.config import PipelineConfig
from sbdoh.corpus import (
    CorpusSplit,
    Note,
    SpanAnnotation,
    StructuredStore,
    parse_notes,
    parse_standoff,
    parse_structured,
    split_corpus,
)
from sbdoh.errors import PipelineError
from sbdoh.filtering import compile_matcher, filter_notes
from sbdoh.normalize import (
    MappingLexicon,
    SmokingItem,
    aggregate_patient,
    aggregate_patient_year,
    collect_distinct_strings,
    expected_datapoints,
    load_mapping,
    normalize_smoking,
)
from sbdoh.phenotype import PhenotypeEvidence, build_cohort
from sbdoh.scoring import evaluate
from sbdoh.tagging import (
    Prediction,
    TriggerLexicon,
    export_predictions,
    export_training_data,
    ingest_predictions,
    lexicon_tag,
    load_trigger_lexicon,
)

_WORKER_LEXICON: TriggerLexicon | None = None


def _init_worker(lexicon: TriggerLexicon) -> None:
    global _WORKER_LEXICON
    _WORKER_LEXICON = lexicon


def _tag_one(note: Note) -> list[Prediction]:
    assert _WORKER_LEXICON is not None
    return lexicon_tag(note, _WORKER_LEXICON)


def tag_corpus(notes: Sequence[Note], lexicon: TriggerLexicon, jobs: int = 1) -> list[Prediction]:
    """Tag every note; order-preserving, parallel-equals-serial."""
    if jobs <= 1 or len(notes) < 2:
        batches: Iterable[list[Prediction]] = (lexicon_tag(note, lexicon) for note in notes)
    else:
        with multiprocessing.Pool(jobs, initializer=_init_worker, initargs=(lexicon,)) as pool:
            batches = pool.map(_tag_one, notes, chunksize=64)
    preds: list[Prediction] = []
    for batch in batches:
        preds.extend(batch)
    preds.sort(key=lambda p: (p.note_id, p.start, p.end))
    return preds


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class PipelineRunner:
    """Loads inputs lazily and executes pipeline stages against a config."""

    def __init__(self, config: PipelineConfig, seed: int | None = None, jobs: int | None = None):
        self.config = config
        self.seed = config.run.seed if seed is None else seed
        self.jobs = config.run.jobs if jobs is None else jobs
        self.out_dir = Path(config.paths.out_dir)
        self._split: CorpusSplit | None = None

    # ---- lazy inputs ----

    @cached_property
    def notes(self) -> list[Note]:
        if self.config.paths.notes is None:
            raise PipelineError("config paths.notes is required for this command")
        return parse_notes(self.config.paths.notes)

    @cached_property
    def notes_by_id(self) -> dict[str, Note]:
        return {note.note_id: note for note in self.notes}

    @cached_property
    def store(self) -> StructuredStore:
        if self.config.paths.structured_dir is None:
            raise PipelineError("config paths.structured_dir is required for this command")
        return parse_structured(self.config.paths.structured_dir, self.config.categories())

    @cached_property
    def trigger_lexicon(self) -> TriggerLexicon:
        path = self.config.paths.trigger_lexicon or asset_path("triggers.tsv")
        return load_trigger_lexicon(path)

    @cached_property
    def smoking_map(self) -> MappingLexicon:
        path = self.config.paths.smoking_map or asset_path("smoking_map.tsv")
        return load_mapping(path, self.config.categories())

    @cached_property
    def gender_map(self) -> MappingLexicon:
        path = self.config.paths.gender_map or asset_path("gender_map.tsv")
        return load_mapping(path, None)

    @cached_property
    def ethnicity_map(self) -> MappingLexicon:
        path = self.config.paths.ethnicity_map or asset_path("ethnicity_map.tsv")
        return load_mapping(path, None)

    def gold_for(self, note_ids: Iterable[str]) -> dict[str, list[SpanAnnotation]]:
        gold_dir = self.config.paths.gold_dir
        if gold_dir is None:
            raise PipelineError("config paths.gold_dir is required for this command")
        gold: dict[str, list[SpanAnnotation]] = {}
        for note_id in note_ids:
            path = Path(gold_dir) / f"{note_id}.ann"
            note = self.notes_by_id.get(note_id)
            if note is None:
                raise PipelineError(f"gold requested for unknown note {note_id!r}")
            gold[note_id] = parse_standoff(path, note) if path.exists() else []
        return gold

    # ---- stages ----

    def run_filter(self) -> list[Note]:
        config = self.config.filter_config()
        kept, stats = filter_notes(self.notes, compile_matcher(config), config)
        _write_json(
            self.out_dir / "filter_stats.json",
            {
                "total_in": stats.total_in,
                "kept": stats.kept,
                "per_keyword_hits": dict(sorted(stats.per_keyword_hits.items())),
                "per_note_type_kept": dict(sorted(stats.per_note_type_kept.items())),
            },
        )
        _write_json(self.out_dir / "filtered_ids.json", [note.note_id for note in kept])
        return kept

    def run_split(self) -> CorpusSplit:
        if self._split is not None:
            return self._split
        kept = self.run_filter()
        split = split_corpus(
            [note.note_id for note in kept],
            self.config.split.train_n,
            self.config.split.test_n,
            self.seed,
        )
        _write_json(
            self.out_dir / "split.json",
            {"train": list(split.train), "test": list(split.test), "seed": split.seed},
        )
        self._split = split
        return split

    def run_tag(self) -> list[Prediction]:
        preds = tag_corpus(self.notes, self.trigger_lexicon, self.jobs)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        export_predictions(preds, self.out_dir / "predictions.jsonl")
        return preds

    def run_ingest(self, pred_path: str | Path) -> list[Prediction]:
        preds = ingest_predictions(pred_path, self.notes_by_id)
        preds.sort(key=lambda p: (p.note_id, p.start, p.end))
        self.out_dir.mkdir(parents=True, exist_ok=True)
        export_predictions(preds, self.out_dir / "predictions.jsonl")
        return preds

    def load_predictions(self, pred_path: str | Path | None = None) -> list[Prediction]:
        path = Path(pred_path) if pred_path is not None else self.out_dir / "predictions.jsonl"
        if not path.exists():
            raise PipelineError(f"prediction file not found: {path} (run tag or ingest first)")
        return ingest_predictions(path, self.notes_by_id)

    def run_score(self, pred_path: str | Path | None = None, scope: str = "test"):
        preds = self.load_predictions(pred_path)
        if scope == "test":
            note_ids: Sequence[str] = self.run_split().test
        elif scope == "all":
            note_ids = [note.note_id for note in self.notes]
        else:
            raise PipelineError(f"score scope must be test|all, got {scope!r}")
        id_set = set(note_ids)
        gold = self.gold_for(note_ids)
        gold_spans = [span for spans in gold.values() for span in spans]
        scoped_preds = [p for p in preds if p.note_id in id_set]
        report = evaluate(note_ids, gold_spans, scoped_preds)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "evaluation.json").write_text(report.to_json(), encoding="utf-8")
        (self.out_dir / "evaluation.txt").write_text(report.format_table(), encoding="utf-8")
        return report

    def nlp_smoking_items(self, preds: Sequence[Prediction]) -> list[SmokingItem]:
        items = []
        for pred in preds:
            if pred.label != "Smoking":
                continue
            category = normalize_smoking(pred, self.smoking_map)
            if category == "Unmapped":
                continue
            note = self.notes_by_id[pred.note_id]
            items.append(SmokingItem(note.patient_id, note.note_datetime, category, "nlp"))
        return items

    def activity_years(self) -> dict[str, set[int]]:
        activity: dict[str, set[int]] = defaultdict(set)
        for note in self.notes:
            activity[note.patient_id].add(note.year)
        for record in self.store.smoking_records:
            activity[record.patient_id].add(record.year)
        for record in self.store.procedures:
            activity[record.patient_id].add(record.year)
        for record in self.store.packyear_records:
            activity[record.patient_id].add(int(record.datetime[:4]))
        for record in self.store.quit_records:
            activity[record.patient_id].add(int(record.datetime[:4]))
        return activity

    def run_normalize(self, pred_path: str | Path | None = None):
        preds = self.load_predictions(pred_path)
        priority = tuple(self.config.normalizer.tie_break_priority)

        distinct = collect_distinct_strings(preds, self.notes_by_id)
        _write_json(
            self.out_dir / "distinct_smoking.json",
            [
                {
                    "surface": d.surface,
                    "frequency": d.frequency,
                    "contexts": list(d.contexts),
                    "mapped": self.smoking_map.lookup(d.surface),
                }
                for d in distinct
            ],
        )

        preds_by_patient: dict[str, list[Prediction]] = defaultdict(list)
        for pred in preds:
            preds_by_patient[self.notes_by_id[pred.note_id].patient_id].append(pred)
        profiles = {
            pid: aggregate_patient(
                pid, patient_preds, self.notes_by_id, self.gender_map, self.ethnicity_map, priority
            )
            for pid, patient_preds in preds_by_patient.items()
        }
        _write_json(
            self.out_dir / "profiles.json",
            {
                pid: {
                    "gender": profile.gender,
                    "ethnicity": profile.ethnicity,
                    "gender_counts": dict(profile.gender_counts),
                    "ethnicity_counts": dict(profile.ethnicity_counts),
                }
                for pid, profile in sorted(profiles.items())
            },
        )

        structured_items = [
            SmokingItem(r.patient_id, r.recorded_datetime, r.category, "structured")
            for r in self.store.smoking_records
        ]
        patient_year = aggregate_patient_year(
            self.nlp_smoking_items(preds) + structured_items, priority
        )
        lines = ["patient_id,year,nlp,structured"]
        for point in patient_year:
            lines.append(f"{point.patient_id},{point.year},{point.nlp or ''},{point.structured or ''}")
        (self.out_dir / "patient_year.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return profiles, patient_year

    def run_phenotype(self, pred_path: str | Path | None = None) -> dict[str, PhenotypeEvidence]:
        preds = self.load_predictions(pred_path)
        cohort = build_cohort(self.store, self.nlp_smoking_items(preds), self.config.phenotype_config())
        lines = ["patient_id,member,age_rule,smoking_rule,packyear_rule"]
        for pid, evidence in sorted(cohort.items()):
            lines.append(
                f"{pid},{int(evidence.member)},{int(evidence.age_rule.passed)},"
                f"{int(evidence.smoking_rule.passed)},{int(evidence.packyear_rule.passed)}"
            )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "cohort.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_json(
            self.out_dir / "cohort_evidence.json",
            {
                pid: {
                    "member": evidence.member,
                    "rules": {
                        name: {
                            "passed": rule.passed,
                            "detail": rule.detail,
                            "evidence": list(rule.evidence),
                        }
                        for name, rule in (
                            ("age", evidence.age_rule),
                            ("smoking", evidence.smoking_rule),
                            ("packyear", evidence.packyear_rule),
                        )
                    },
                }
                for pid, evidence in sorted(cohort.items())
            },
        )
        return cohort

    def run_compare(self, pred_path: str | Path | None = None):
        preds = self.load_predictions(pred_path)
        profiles, patient_year = self.run_normalize(pred_path)
        activity = self.activity_years()
        universe = expected_datapoints(activity)
        classes = (
            dict(self.config.phenotype.category_classes)
            if self.config.compare.coarse_smoking_consistency
            else None
        )
        rows = coverage(
            sorted(self.store.demographics),
            universe,
            preds,
            profiles,
            patient_year,
            self.store,
            {note.note_id: note.patient_id for note in self.notes},
            category_classes=classes,
        )
        series = yearly_smoking_proportions(patient_year, activity)
        emit_report(rows, series, self.out_dir)
        return rows, series

    def run_all(self) -> dict[str, Path]:
        """Execute the full chain in dependency order."""
        split = self.run_split()
        preds = self.run_tag()
        gold = self.gold_for(list(split.train) + list(split.test))
        export_training_data(self.notes_by_id, gold, split, self.out_dir / "training")
        self.run_score()
        self.run_phenotype()
        self.run_compare()
        artifacts = [
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
        ]
        return {name: self.out_dir / name for name in artifacts}
