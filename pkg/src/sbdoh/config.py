"""Pipeline configuration: one YAML file, strictly validated.

Unknown keys are rejected; relative paths resolve against the config file's
directory so a generated corpus directory is self-contained.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from sbdoh.errors import PipelineError
from sbdoh.filtering import DEFAULT_KEYWORDS, FilterConfig
from sbdoh.normalize import DEFAULT_SMOKING_CATEGORIES, check_categories
from sbdoh.phenotype import DEFAULT_CATEGORY_CLASSES, PhenotypeConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsSection(_Section):
    notes: Optional[Path] = None
    gold_dir: Optional[Path] = None
    structured_dir: Optional[Path] = None
    trigger_lexicon: Optional[Path] = None
    smoking_map: Optional[Path] = None
    gender_map: Optional[Path] = None
    ethnicity_map: Optional[Path] = None
    out_dir: Path = Path("out")


class FilterSection(_Section):
    keywords: list[str] = Field(default_factory=lambda: list(DEFAULT_KEYWORDS))
    note_types: list[str] = Field(default_factory=list)
    combine_mode: Literal["and", "or"] = "and"


class SplitSection(_Section):
    train_n: int = 400
    test_n: int = 100


class NormalizerSection(_Section):
    categories: list[str] = Field(default_factory=lambda: list(DEFAULT_SMOKING_CATEGORIES))
    tie_break_priority: list[str] = Field(default_factory=list)


class PhenotypeSection(_Section):
    age_min: int = 50
    age_max: int = 80
    quit_years_max: int = 15
    packyear_min: float = 20.0
    ldct_codes: list[str] = Field(default_factory=lambda: ["LDCT"])
    timeframe_years: Optional[int] = None
    desired_encounter_types: list[str] = Field(default_factory=list)
    category_classes: dict[str, str] = Field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_CLASSES)
    )


class CompareSection(_Section):
    # Off: smoking consistency requires exact canonical-category equality.
    # On: categories are rolled up to current/former/never before comparing.
    coarse_smoking_consistency: bool = False


class RunSection(_Section):
    seed: int = 13
    jobs: int = 1


class PipelineConfig(_Section):
    paths: PathsSection = Field(default_factory=PathsSection)
    filter: FilterSection = Field(default_factory=FilterSection)
    split: SplitSection = Field(default_factory=SplitSection)
    normalizer: NormalizerSection = Field(default_factory=NormalizerSection)
    phenotype: PhenotypeSection = Field(default_factory=PhenotypeSection)
    compare: CompareSection = Field(default_factory=CompareSection)
    run: RunSection = Field(default_factory=RunSection)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            keywords=tuple(self.filter.keywords),
            note_types=tuple(self.filter.note_types),
            combine_mode=self.filter.combine_mode,
        )

    def phenotype_config(self) -> PhenotypeConfig:
        return PhenotypeConfig(
            age_min=self.phenotype.age_min,
            age_max=self.phenotype.age_max,
            quit_years_max=self.phenotype.quit_years_max,
            packyear_min=self.phenotype.packyear_min,
            ldct_codes=tuple(self.phenotype.ldct_codes),
            timeframe_years=self.phenotype.timeframe_years,
            desired_encounter_types=tuple(self.phenotype.desired_encounter_types),
            category_classes=dict(self.phenotype.category_classes),
        )

    def categories(self) -> tuple[str, ...]:
        return check_categories(self.normalizer.categories)


_INPUT_PATH_FIELDS = (
    "notes",
    "gold_dir",
    "structured_dir",
    "trigger_lexicon",
    "smoking_map",
    "gender_map",
    "ethnicity_map",
)


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a YAML config; resolve paths; check inputs exist."""
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise PipelineError(f"{path}: invalid YAML ({exc})") from None
    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise PipelineError(f"{path}: {exc.error_count()} config error(s): {exc}") from None

    base = path.parent
    for name in (*_INPUT_PATH_FIELDS, "out_dir"):
        value = getattr(config.paths, name)
        if value is not None and not value.is_absolute():
            setattr(config.paths, name, (base / value).resolve())
    for name in _INPUT_PATH_FIELDS:
        value = getattr(config.paths, name)
        if value is not None and not value.exists():
            raise PipelineError(f"config path {name} does not exist: {value}")
    config.categories()  # enforce the exactly-7 invariant up front
    return config
