"""Command-line entry points for the pipeline.

Exit codes: 0 success, 1 validation/data error (with a machine-readable error
record on stderr), 2 usage error.
"""

from __future__ import annotations

import functools
import json
import shutil
import sys
from datetime import datetime
from pathlib import Path

import click
import yaml

from sbdoh.assets import asset_path
from sbdoh.config import PipelineConfig, load_config
from sbdoh.corpus import parse_standoff
from sbdoh.errors import PipelineError
from sbdoh.filtering import FilterConfig, compile_matcher, filter_notes
from sbdoh.normalize import collect_distinct_strings, review_mappings
from sbdoh.pipeline import PipelineRunner
from sbdoh.scoring import token_kappa
from sbdoh.synth import GenParams, generate, write_corpus


def _fail(command: str, message: str) -> None:
    record = {"command": command, "error": message}
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(1)


def pipeline_command(func):
    """Shared --config/--seed/--jobs/--out flags plus error-record handling."""

    @click.option("--config", "config_path", required=True, type=click.Path(), help="Pipeline config file.")
    @click.option("--seed", type=int, default=None, help="Override run.seed.")
    @click.option("--jobs", type=int, default=None, help="Override run.jobs.")
    @click.option("--out", "out_dir", type=click.Path(), default=None, help="Override paths.out_dir.")
    @functools.wraps(func)
    def wrapper(config_path: str, seed: int | None, jobs: int | None, out_dir: str | None, **kwargs):
        context = click.get_current_context(silent=True)
        command = context.info_name if context else func.__name__.replace("_", "-")
        try:
            config = load_config(config_path)
            if out_dir is not None:
                config.paths.out_dir = Path(out_dir).resolve()
            runner = PipelineRunner(config, seed=seed, jobs=jobs)
            func(runner, **kwargs)
        except PipelineError as exc:
            _fail(command, str(exc))

    return wrapper


@click.group()
def main() -> None:
    """SBDoH extraction, scoring, normalization, phenotyping, reconciliation."""


@main.command("filter")
@pipeline_command
def filter_cmd(runner: PipelineRunner) -> None:
    """Keep notes matching the note-type/keyword filter."""
    kept = runner.run_filter()
    click.echo(f"kept {len(kept)} of {len(runner.notes)} notes")


@main.command("split")
@pipeline_command
def split(runner: PipelineRunner) -> None:
    """Deterministic train/test split over the filtered notes."""
    result = runner.run_split()
    click.echo(f"train {len(result.train)}, test {len(result.test)} (seed {result.seed})")


@main.command("tag")
@pipeline_command
def tag(runner: PipelineRunner) -> None:
    """Run the lexicon baseline tagger over every note."""
    preds = runner.run_tag()
    click.echo(f"tagged {len(runner.notes)} notes, {len(preds)} predictions")


@main.command("ingest")
@click.option("--pred", "pred_path", required=True, type=click.Path(), help="External prediction file.")
@pipeline_command
def ingest(runner: PipelineRunner, pred_path: str) -> None:
    """Validate an externally produced prediction file."""
    preds = runner.run_ingest(pred_path)
    click.echo(f"ingested {len(preds)} predictions")


@main.command("score")
@click.option("--pred", "pred_path", type=click.Path(), default=None, help="Prediction file (default: tagged output).")
@click.option("--scope", type=click.Choice(["test", "all"]), default="test", show_default=True)
@pipeline_command
def score(runner: PipelineRunner, pred_path: str | None, scope: str) -> None:
    """Strict/lenient evaluation against gold annotations."""
    report = runner.run_score(pred_path, scope)
    click.echo(report.format_table(), nl=False)


@main.command("kappa")
@click.option("--ann-a", required=True, type=click.Path(), help="First annotator's .ann directory.")
@click.option("--ann-b", required=True, type=click.Path(), help="Second annotator's .ann directory.")
@pipeline_command
def kappa(runner: PipelineRunner, ann_a: str, ann_b: str) -> None:
    """Token-level Cohen's kappa between two annotators."""
    notes = runner.notes
    spans_a, spans_b = [], []
    for note in notes:
        for directory, bucket in ((Path(ann_a), spans_a), (Path(ann_b), spans_b)):
            path = directory / f"{note.note_id}.ann"
            if path.exists():
                bucket.extend(parse_standoff(path, note))
    value = token_kappa(notes, spans_a, spans_b)
    click.echo(json.dumps({"kappa": round(value, 6), "n_notes": len(notes)}, sort_keys=True))


@main.command("review-map")
@click.option("--reviewer", default="reviewer", show_default=True, help="Name recorded with each decision.")
@pipeline_command
def review_map(runner: PipelineRunner, reviewer: str) -> None:
    """Interactively map unmapped smoking strings to canonical categories."""
    preds = runner.load_predictions()
    distinct = collect_distinct_strings(preds, runner.notes_by_id)
    pending = [d for d in distinct if runner.smoking_map.lookup(d.surface) is None]
    if not pending:
        click.echo("0 strings pending")
        return
    if not sys.stdin.isatty():
        raise PipelineError(
            f"{len(pending)} strings pending but no interactive terminal;"
            " append string<TAB>category lines to the mapping file instead"
        )
    map_path = runner.config.paths.smoking_map
    if map_path is None:
        raise PipelineError("config paths.smoking_map must point at a writable file for review")
    added = review_mappings(
        distinct,
        runner.smoking_map,
        map_path,
        reviewer=reviewer,
        timestamp_fn=lambda: datetime.now().isoformat(timespec="seconds"),
    )
    click.echo(f"added {added} mappings")


@main.command("normalize")
@click.option("--pred", "pred_path", type=click.Path(), default=None, help="Prediction file (default: tagged output).")
@pipeline_command
def normalize(runner: PipelineRunner, pred_path: str | None) -> None:
    """Patient profiles and per-patient/per-year smoking datapoints."""
    profiles, patient_year = runner.run_normalize(pred_path)
    click.echo(f"{len(profiles)} patient profiles, {len(patient_year)} patient-year datapoints")


@main.command("phenotype")
@click.option("--pred", "pred_path", type=click.Path(), default=None, help="Prediction file (default: tagged output).")
@pipeline_command
def phenotype(runner: PipelineRunner, pred_path: str | None) -> None:
    """Apply the screening-cohort rules with evidence trails."""
    cohort = runner.run_phenotype(pred_path)
    members = sum(1 for e in cohort.values() if e.member)
    click.echo(f"{members} of {len(cohort)} patients meet all rules")


@main.command("compare")
@click.option("--pred", "pred_path", type=click.Path(), default=None, help="Prediction file (default: tagged output).")
@pipeline_command
def compare(runner: PipelineRunner, pred_path: str | None) -> None:
    """NLP-vs-structured coverage, consistency, and yearly series."""
    rows, series = runner.run_compare(pred_path)
    click.echo(f"{len(rows)} coverage rows, {len(series)} yearly points")


@main.command("run-all")
@pipeline_command
def run_all(runner: PipelineRunner) -> None:
    """Run every stage in dependency order."""
    artifacts = runner.run_all()
    for name in sorted(artifacts):
        click.echo(f"wrote {artifacts[name]}")


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Corpus output directory.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--n-patients", type=int, default=200, show_default=True)
@click.option("--agreement", type=float, default=0.4, show_default=True, help="Structured/NLP smoking agreement probability.")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Paraphrase-noise probability for smoking mentions.")
@click.option("--year-start", type=int, default=2009, show_default=True)
@click.option("--year-end", type=int, default=2020, show_default=True)
def synth(
    out_dir: str,
    seed: int,
    n_patients: int,
    agreement: float,
    noise: float,
    year_start: int,
    year_end: int,
) -> None:
    """Generate a synthetic corpus with ground-truth ledger and config."""
    try:
        params = GenParams(
            seed=seed,
            n_patients=n_patients,
            year_start=year_start,
            year_end=year_end,
            structured_agreement=agreement,
            paraphrase_noise=noise,
        )
        corpus = generate(params)
        out = Path(out_dir)
        write_corpus(corpus, out)
        lexicons = out / "lexicons"
        lexicons.mkdir(parents=True, exist_ok=True)
        for name in ("triggers.tsv", "smoking_map.tsv", "gender_map.tsv", "ethnicity_map.tsv"):
            shutil.copyfile(asset_path(name), lexicons / name)
        # Standard 400/100 annotation split, clamped against the notes that
        # survive the default filter so the config is runnable at any size.
        default_filter = FilterConfig()
        kept, _ = filter_notes(corpus.notes, compile_matcher(default_filter), default_filter)
        train_n = min(400, int(len(kept) * 0.8))
        test_n = min(100, len(kept) - train_n)
        config = {
            "paths": {
                "notes": "notes.jsonl",
                "gold_dir": "gold",
                "structured_dir": "structured",
                "trigger_lexicon": "lexicons/triggers.tsv",
                "smoking_map": "lexicons/smoking_map.tsv",
                "gender_map": "lexicons/gender_map.tsv",
                "ethnicity_map": "lexicons/ethnicity_map.tsv",
                "out_dir": "out",
            },
            "split": {"train_n": train_n, "test_n": test_n},
            "run": {"seed": seed, "jobs": 1},
        }
        (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
        click.echo(f"generated {len(corpus.notes)} notes for {n_patients} patients in {out}")
    except PipelineError as exc:
        _fail("synth", str(exc))


if __name__ == "__main__":
    main()
