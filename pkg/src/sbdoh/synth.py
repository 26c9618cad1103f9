"""Deterministic synthetic EHR generator with a truth ledger.

Produces notes (with gold spans planted from the shipped trigger lexicon),
structured tables, and a machine-readable ledger recording the ground truth,
so end-to-end behavior can be checked without any real data.

Generation is per-patient independent: patient k draws from
random.Random(f"{seed}:{k}"), so output is identical regardless of execution
order. The first 8 patients are handcrafted phenotype fixtures (one per rule
branch / failure mode) whose expected membership is known by construction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from sbdoh.assets import default_smoking_map
from sbdoh.corpus import Note, SpanAnnotation, serialize_standoff, write_notes
from sbdoh.errors import PipelineError
from sbdoh.normalize import DEFAULT_SMOKING_CATEGORIES

DEFAULT_PREVALENCE: dict[str, float] = {
    "gender": 0.6,
    "ethnicity": 0.35,
    "smoking": 0.55,
    "education": 0.25,
    "employment": 0.3,
    "structured_smoking": 0.65,
}

# Surfaces per canonical category, inverted from the shipped smoking map so
# every planted mention is recoverable and mappable by the default assets.
_SMOKING_SURFACES: dict[str, list[str]] = {}
for _surface, _category in default_smoking_map().entries.items():
    _SMOKING_SURFACES.setdefault(_category, []).append(_surface)
for _surfaces in _SMOKING_SURFACES.values():
    _surfaces.sort()

GENDER_SURFACES = {"F": ("female", "woman", "lady"), "M": ("male", "man", "gentleman")}
ETHNICITY_SURFACES = {
    "Hispanic": ("hispanic", "latino", "latina"),
    "Non-Hispanic": ("non-hispanic", "not of hispanic origin"),
}
EDUCATION_SURFACES = (
    "high school diploma",
    "college degree",
    "graduate degree",
    "some college",
    "no formal education",
    "completed high school",
)
EMPLOYMENT_SURFACES = (
    "unemployed",
    "employed",
    "retired",
    "employed full time",
    "employed part time",
    "on disability",
    "works in construction",
)

# Paraphrases deliberately absent from the trigger lexicon: planting one
# creates a gold span the baseline tagger cannot recover (controlled miss).
SMOKING_NOISE_SURFACES = (
    "smokes about a pack daily",
    "heavy tobacco use ongoing",
    "lit up again last month",
)

BOILERPLATE = (
    "Patient returns to clinic for routine follow-up.",
    "Seen today for scheduled visit; vitals stable.",
    "No acute complaints reported this visit.",
    "Assessment and plan discussed in detail.",
)

TEMPLATES: dict[str, tuple[str, ...]] = {
    "Gender": (
        "The patient is a {} who lives alone.",
        "Social history reviewed for this pleasant {}.",
    ),
    "Ethnicity": (
        "Patient identifies as {} in the ethnicity field.",
        "Ethnicity recorded as {} at intake.",
    ),
    "Smoking": (
        "Smoking status: {}.",
        "Tobacco review today: {}.",
    ),
    "Education": (
        "Education history: reports {}.",
        "Highest education noted: {}.",
    ),
    "Employment": (
        "Employment status: {}.",
        "Current employment note: {}.",
    ),
}

NOTE_TYPES = ("progress note", "consult note", "discharge summary")

CURRENT_EVERY = DEFAULT_SMOKING_CATEGORIES[0]
CURRENT_SOME = DEFAULT_SMOKING_CATEGORIES[1]
FORMER = DEFAULT_SMOKING_CATEGORIES[2]
NEVER = DEFAULT_SMOKING_CATEGORIES[3]
OTHER_CATEGORIES = DEFAULT_SMOKING_CATEGORIES[4:]


@dataclass(frozen=True)
class GenParams:
    seed: int = 1
    n_patients: int = 200
    year_start: int = 2009
    year_end: int = 2020
    prevalence: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PREVALENCE))
    structured_agreement: float = 0.4
    notes_per_year_min: int = 1
    notes_per_year_max: int = 3
    paraphrase_noise: float = 0.0
    include_archetypes: bool = True

    def __post_init__(self) -> None:
        if self.year_start > self.year_end:
            raise PipelineError("year_range is empty")
        if self.n_patients < 1:
            raise PipelineError("n_patients must be positive")
        unknown = set(self.prevalence) - set(DEFAULT_PREVALENCE)
        if unknown:
            raise PipelineError(f"unknown prevalence keys: {', '.join(sorted(unknown))}")
        object.__setattr__(self, "prevalence", {**DEFAULT_PREVALENCE, **dict(self.prevalence)})
        for name, value in (
            ("structured_agreement", self.structured_agreement),
            ("paraphrase_noise", self.paraphrase_noise),
            *self.prevalence.items(),
        ):
            if not 0.0 <= value <= 1.0:
                raise PipelineError(f"probability {name}={value} outside [0,1]")
        if not 1 <= self.notes_per_year_min <= self.notes_per_year_max:
            raise PipelineError("notes_per_year bounds must satisfy 1 <= min <= max")
        if self.include_archetypes and self.n_patients >= 8 and self.year_end - self.year_start < 1:
            raise PipelineError("archetype fixtures need a year range of at least 2 years")


@dataclass
class SynthCorpus:
    notes: list[Note]
    gold: dict[str, list[SpanAnnotation]]
    demographics: list[tuple[str, str, str, str]]
    smoking_rows: list[tuple[str, str, str, str]]
    procedure_rows: list[tuple[str, str, str]]
    packyear_rows: list[tuple[str, str, str, str, str]]
    quit_rows: list[tuple[str, str, str, str]]
    ledger: dict


class _PatientBuilder:
    """Accumulates one patient's notes, rows and ledger entry."""

    def __init__(self, corpus: SynthCorpus, params: GenParams, pid: str, rng: random.Random):
        self.corpus = corpus
        self.params = params
        self.pid = pid
        self.rng = rng
        self.entry: dict = {
            "activity_years": [],
            "smoking_by_year": {},
            "nlp_smoking_years": [],
            "gender_mentioned": False,
            "ethnicity_mentioned": False,
            "education_mentioned": False,
            "employment_mentioned": False,
            "structured_smoking_years": [],
            "agreement_by_year": {},
            "archetype": None,
        }

    def demographics(self, gender: str, ethnicity: str, birth_date: str) -> None:
        self.entry["gender"] = gender
        self.entry["ethnicity"] = ethnicity
        self.corpus.demographics.append((self.pid, gender, ethnicity, birth_date))

    def note(self, year: int, sentences: list, seq: int) -> None:
        """Assemble a note from (sentence, planted-span) parts.

        Each element of `sentences` is either a plain string or a tuple
        (template, surface, label); offsets are computed during assembly.
        """
        note_id = f"{self.pid}-{year}-{seq}"
        month = self.rng.randint(1, 12)
        day = self.rng.randint(1, 28)
        parts: list[str] = []
        spans: list[SpanAnnotation] = []
        offset = 0
        for element in sentences:
            if isinstance(element, str):
                sentence = element
            else:
                template, surface, label = element
                start = offset + template.index("{}")
                sentence = template.replace("{}", surface)
                spans.append(SpanAnnotation(note_id, start, start + len(surface), label, surface))
            parts.append(sentence)
            offset += len(sentence) + 1
        note = Note(
            note_id=note_id,
            patient_id=self.pid,
            encounter_id=f"enc-{note_id}",
            note_type=self.rng.choice(NOTE_TYPES),
            note_datetime=f"{year}-{month:02d}-{day:02d}T09:00:00",
            text=" ".join(parts),
        )
        self.corpus.notes.append(note)
        self.corpus.gold[note_id] = spans
        self.corpus.ledger["notes"][note_id] = [[s.start, s.end, s.label] for s in spans]

    def smoking_note_sentence(self, year: int, truth: str) -> tuple[str, str, str]:
        """A smoking sentence for `year`; may be a paraphrase-noise miss."""
        template = self.rng.choice(TEMPLATES["Smoking"])
        if self.rng.random() < self.params.paraphrase_noise:
            surface = self.rng.choice(SMOKING_NOISE_SURFACES)
        else:
            surface = self.rng.choice(_SMOKING_SURFACES[truth])
            if year not in self.entry["nlp_smoking_years"]:
                self.entry["nlp_smoking_years"].append(year)
        return (template, surface, "Smoking")

    def structured_smoking(self, year: int, truth: str, agree: bool, n_rows: int) -> None:
        category = truth
        if not agree:
            others = [c for c in DEFAULT_SMOKING_CATEGORIES if c != truth]
            category = self.rng.choice(others)
        for k in range(n_rows):
            month = self.rng.randint(1, 12)
            self.corpus.smoking_rows.append(
                (self.pid, f"enc-{self.pid}-{year}-s{k}", f"{year}-{month:02d}-15T08:00:00", category)
            )
        self.entry["structured_smoking_years"].append(year)
        self.entry["agreement_by_year"][str(year)] = agree

    def ldct(self, datetime_str: str) -> None:
        self.corpus.procedure_rows.append((self.pid, datetime_str, "LDCT"))

    def packyears(self, values: Sequence[float], year: int) -> None:
        for k, value in enumerate(values):
            source = self.rng.choice(("structured", "note"))
            encounter_type = self.rng.choice(("office visit", "screening clinic"))
            self.corpus.packyear_rows.append(
                (self.pid, f"{year}-03-{10 + k:02d}T08:00:00", f"{value:g}", source, encounter_type)
            )

    def quit(self, quit_year: int, record_year: int, source: str = "structured") -> None:
        self.corpus.quit_rows.append(
            (self.pid, f"{record_year}-09-01T08:00:00", str(quit_year), source)
        )

    def finish(self) -> None:
        self.entry["activity_years"] = sorted(self.entry["activity_years"])
        self.entry["nlp_smoking_years"].sort()
        self.entry["structured_smoking_years"].sort()
        self.corpus.ledger["patients"][self.pid] = self.entry


def _generate_random_patient(builder: _PatientBuilder, params: GenParams) -> None:
    rng = builder.rng
    prev = params.prevalence
    gender = rng.choice(("F", "M"))
    ethnicity = "Hispanic" if rng.random() < 0.25 else "Non-Hispanic"

    first_year = rng.randint(params.year_start, params.year_end)
    last_year = min(rng.randint(first_year, first_year + 7), params.year_end)
    active_years = list(range(first_year, last_year + 1))

    # Smoking trajectory: never / current / former / other status categories.
    roll = rng.random()
    truth_by_year: dict[int, str] = {}
    quit_year: int | None = None
    if roll < 0.30:
        for year in active_years:
            truth_by_year[year] = NEVER
    elif roll < 0.65:
        category = rng.choice((CURRENT_EVERY, CURRENT_SOME))
        for year in active_years:
            truth_by_year[year] = category
    elif roll < 0.90:
        category = rng.choice((CURRENT_EVERY, CURRENT_SOME))
        quit_year = rng.choice(active_years)
        for year in active_years:
            truth_by_year[year] = category if year < quit_year else FORMER
    else:
        category = rng.choice(OTHER_CATEGORIES)
        for year in active_years:
            truth_by_year[year] = category

    # LDCT anchoring: most patients screen at an eligible age.
    ldct_roll = rng.random()
    ldct_year: int | None = None
    if ldct_roll < 0.8:
        ldct_year, age = rng.choice(active_years), rng.randint(52, 78)
    elif ldct_roll < 0.9:
        ldct_year, age = rng.choice(active_years), rng.randint(42, 49)
    if ldct_year is not None:
        birth_year = ldct_year - age
        builder.ldct(f"{ldct_year}-06-15T08:00:00")
    else:
        birth_year = first_year - rng.randint(45, 75)
    builder.demographics(gender, ethnicity, f"{birth_year}-01-15")

    smoked = any(truth_by_year[y] != NEVER for y in active_years)
    if quit_year is not None:
        builder.quit(quit_year, quit_year, source=rng.choice(("structured", "note")))
    if smoked and rng.random() < 0.85:
        if rng.random() < 0.7:
            base = rng.choice((25.0, 30.0, 35.0, 40.0))
        else:
            base = rng.choice((5.0, 10.0, 15.0))
        values = [base] * rng.randint(1, 2)
        if rng.random() < 0.4:
            values.append(rng.choice((5.0, 10.0, 25.0, 30.0)))
        builder.packyears(values, rng.choice(active_years))

    for year in active_years:
        builder.entry["activity_years"].append(year)
        builder.entry["smoking_by_year"][str(year)] = truth_by_year[year]
        if rng.random() < prev["structured_smoking"]:
            agree = rng.random() < params.structured_agreement
            builder.structured_smoking(year, truth_by_year[year], agree, 1 + (rng.random() < 0.3))
        for seq in range(rng.randint(params.notes_per_year_min, params.notes_per_year_max)):
            sentences: list = [rng.choice(BOILERPLATE)]
            if rng.random() < prev["gender"]:
                surface = rng.choice(GENDER_SURFACES[gender])
                sentences.append((rng.choice(TEMPLATES["Gender"]), surface, "Gender"))
                builder.entry["gender_mentioned"] = True
            if rng.random() < prev["ethnicity"]:
                surface = rng.choice(ETHNICITY_SURFACES[ethnicity])
                sentences.append((rng.choice(TEMPLATES["Ethnicity"]), surface, "Ethnicity"))
                builder.entry["ethnicity_mentioned"] = True
            if rng.random() < prev["smoking"]:
                sentences.append(builder.smoking_note_sentence(year, truth_by_year[year]))
            if rng.random() < prev["education"]:
                surface = rng.choice(EDUCATION_SURFACES)
                sentences.append((rng.choice(TEMPLATES["Education"]), surface, "Education"))
                builder.entry["education_mentioned"] = True
            if rng.random() < prev["employment"]:
                surface = rng.choice(EMPLOYMENT_SURFACES)
                sentences.append((rng.choice(TEMPLATES["Employment"]), surface, "Employment"))
                builder.entry["employment_mentioned"] = True
            builder.note(year, sentences, seq)


def _generate_archetype(builder: _PatientBuilder, index: int, params: GenParams) -> None:
    """Handcrafted phenotype fixtures: rule-2 branches (a)-(d), the age
    boundary pass/fail pair, and the pack-year fail/tie cases.

    Their structured smoking rows are scripted (only the branch-d patient
    carries a disagreeing row) so the corpus-level agreement statistics stay
    interpretable.
    """
    rng = builder.rng
    year0 = params.year_start
    year1 = min(year0 + 1, params.year_end)
    ldct = f"{year1}-06-15T08:00:00"
    scenarios = (
        "branch_a", "branch_b", "branch_c", "branch_d",
        "age_fail", "age_boundary", "packyear_fail", "packyear_tie",
    )
    name = scenarios[index]
    gender = rng.choice(("F", "M"))
    ethnicity = "Hispanic" if rng.random() < 0.25 else "Non-Hispanic"

    age = 60
    member, branch = True, None
    smoking_sequence: list[tuple[int, str]] = []  # (year, category) in time order
    packs: tuple[float, ...] = (25.0, 25.0)
    quit_gap: int | None = None

    if name == "branch_a":
        branch = "a"
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, NEVER)]
    elif name == "branch_b":
        branch = "b"
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, CURRENT_EVERY)]
    elif name == "branch_c":
        branch = "c"
        smoking_sequence = [(year0, FORMER), (year1, FORMER)]
        quit_gap = 12
    elif name == "branch_d":
        branch = "d"
        smoking_sequence = [(year0, FORMER), (year1, FORMER)]
        quit_gap = 20  # outside the quit window, so only branch d can pass
    elif name == "age_fail":
        member, age = False, 49
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, CURRENT_EVERY)]
    elif name == "age_boundary":
        member, age, branch = True, 50, "b"
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, CURRENT_EVERY)]
    elif name == "packyear_fail":
        member, packs = False, (10.0, 10.0, 30.0)
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, CURRENT_EVERY)]
    elif name == "packyear_tie":
        member, packs, branch = True, (20.0, 30.0), "b"
        smoking_sequence = [(year0, CURRENT_EVERY), (year1, CURRENT_EVERY)]

    birth_year = int(ldct[:4]) - age
    builder.demographics(gender, ethnicity, f"{birth_year}-01-15")
    builder.ldct(ldct)
    builder.packyears(packs, year0)
    if quit_gap is not None:
        builder.quit(int(ldct[:4]) - quit_gap, year0)

    for seq, (year, category) in enumerate(smoking_sequence):
        builder.entry["activity_years"].append(year)
        builder.entry["smoking_by_year"][str(year)] = category
        surface = _SMOKING_SURFACES[category][0]
        sentences: list = [
            rng.choice(BOILERPLATE),
            (TEMPLATES["Smoking"][0], surface, "Smoking"),
        ]
        if year not in builder.entry["nlp_smoking_years"]:
            builder.entry["nlp_smoking_years"].append(year)
        builder.note(year, sentences, seq)

    if name == "branch_d":
        # Structured Current record in the first year, strictly earlier than
        # the final Former mention regardless of note dates; it disagrees
        # with that year's note-derived truth by design.
        builder.corpus.smoking_rows.append(
            (builder.pid, f"enc-{builder.pid}-{year0}-s0", f"{year0}-01-01T08:00:00", CURRENT_EVERY)
        )
        builder.entry["structured_smoking_years"].append(year0)
        builder.entry["agreement_by_year"][str(year0)] = False

    builder.entry["archetype"] = {
        "name": name,
        "expected_member": member,
        "expected_branch": branch,
        "age_at_ldct": age,
    }


def generate(params: GenParams) -> SynthCorpus:
    """Build the full synthetic corpus; deterministic given params."""
    corpus = SynthCorpus(
        notes=[],
        gold={},
        demographics=[],
        smoking_rows=[],
        procedure_rows=[],
        packyear_rows=[],
        quit_rows=[],
        ledger={
            "params": {
                "seed": params.seed,
                "n_patients": params.n_patients,
                "year_range": [params.year_start, params.year_end],
                "structured_agreement": params.structured_agreement,
                "paraphrase_noise": params.paraphrase_noise,
                "prevalence": dict(sorted(params.prevalence.items())),
            },
            "patients": {},
            "notes": {},
        },
    )
    n_archetypes = 8 if params.include_archetypes and params.n_patients >= 8 else 0
    for index in range(params.n_patients):
        pid = f"p{index:04d}"
        builder = _PatientBuilder(corpus, params, pid, random.Random(f"{params.seed}:{index}"))
        if index < n_archetypes:
            _generate_archetype(builder, index, params)
        else:
            _generate_random_patient(builder, params)
        builder.finish()

    corpus.demographics.sort()
    corpus.smoking_rows.sort()
    corpus.procedure_rows.sort()
    corpus.packyear_rows.sort()
    corpus.quit_rows.sort()
    return corpus


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> None:
    """Write notes.jsonl, gold/*.ann, structured/*.csv and ledger.json."""
    out_dir = Path(out_dir)
    (out_dir / "gold").mkdir(parents=True, exist_ok=True)
    (out_dir / "structured").mkdir(parents=True, exist_ok=True)

    write_notes(corpus.notes, out_dir / "notes.jsonl")
    for note in corpus.notes:
        text = serialize_standoff(corpus.gold[note.note_id])
        (out_dir / "gold" / f"{note.note_id}.ann").write_text(text, encoding="utf-8")

    tables = {
        "demographics.csv": (("patient_id", "gender", "ethnicity", "birth_date"), corpus.demographics),
        "smoking.csv": (("patient_id", "encounter_id", "recorded_datetime", "category"), corpus.smoking_rows),
        "procedures.csv": (("patient_id", "datetime", "code"), corpus.procedure_rows),
        "packyears.csv": (("patient_id", "datetime", "value", "source", "encounter_type"), corpus.packyear_rows),
        "quit.csv": (("patient_id", "datetime", "quit_year", "source"), corpus.quit_rows),
    }
    for filename, (header, rows) in tables.items():
        lines = [",".join(header)] + [",".join(row) for row in rows]
        (out_dir / "structured" / filename).write_text("\n".join(lines) + "\n", encoding="utf-8")

    (out_dir / "ledger.json").write_text(
        json.dumps(corpus.ledger, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def ledger_check(
    ledger: Mapping,
    profiles: Mapping[str, object],
    patient_year: Sequence[object],
    cohort: Mapping[str, object],
) -> dict[str, list[str]]:
    """Diff pipeline outputs against the ledger truth.

    Returns mismatch lists keyed by aspect; all-empty means a clean run.
    Profiles are checked for every patient with at least one mention; smoking
    for every (patient, year) the ledger marks as carrying a mapped mention;
    membership for the embedded archetype patients.
    """
    diffs: dict[str, list[str]] = {"gender": [], "ethnicity": [], "smoking": [], "membership": []}
    nlp_by_datapoint = {(p.patient_id, p.year): p.nlp for p in patient_year}

    for pid, entry in sorted(ledger["patients"].items()):
        profile = profiles.get(pid)
        if entry["gender_mentioned"]:
            got = getattr(profile, "gender", None) if profile else None
            if got != entry["gender"]:
                diffs["gender"].append(f"{pid}: expected {entry['gender']}, got {got}")
        if entry["ethnicity_mentioned"]:
            got = getattr(profile, "ethnicity", None) if profile else None
            if got != entry["ethnicity"]:
                diffs["ethnicity"].append(f"{pid}: expected {entry['ethnicity']}, got {got}")
        for year in entry["nlp_smoking_years"]:
            expected = entry["smoking_by_year"][str(year)]
            got = nlp_by_datapoint.get((pid, year))
            if got != expected:
                diffs["smoking"].append(f"{pid}/{year}: expected {expected}, got {got}")
        archetype = entry.get("archetype")
        if archetype is not None:
            evidence = cohort.get(pid)
            got_member = getattr(evidence, "member", None)
            if got_member != archetype["expected_member"]:
                diffs["membership"].append(
                    f"{pid} ({archetype['name']}): expected member={archetype['expected_member']},"
                    f" got {got_member}"
                )
    return diffs
