"""Loaders for the shipped default lexicons."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from sbdoh.normalize import DEFAULT_SMOKING_CATEGORIES, MappingLexicon, load_mapping
from sbdoh.tagging import TriggerLexicon, load_trigger_lexicon


def asset_path(name: str) -> Path:
    return Path(str(resources.files("sbdoh").joinpath("assets", name)))


def default_trigger_lexicon() -> TriggerLexicon:
    return load_trigger_lexicon(asset_path("triggers.tsv"))


def default_smoking_map(categories=DEFAULT_SMOKING_CATEGORIES) -> MappingLexicon:
    return load_mapping(asset_path("smoking_map.tsv"), categories)


def default_gender_map() -> MappingLexicon:
    return load_mapping(asset_path("gender_map.tsv"), None)


def default_ethnicity_map() -> MappingLexicon:
    return load_mapping(asset_path("ethnicity_map.tsv"), None)
