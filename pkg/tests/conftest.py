from __future__ import annotations

from pathlib import Path

import pytest
from click.testing import CliRunner

from sbdoh.cli import main as cli_main


@pytest.fixture(scope="session")
def cli() -> CliRunner:
    return CliRunner()


def _synth(cli_runner: CliRunner, out: Path, *args: str) -> Path:
    result = cli_runner.invoke(cli_main, ["synth", "--out", str(out), *args])
    assert result.exit_code == 0, result.output + str(result.exception)
    return out


@pytest.fixture(scope="session")
def synth_corpus_dir(tmp_path_factory: pytest.TempPathFactory, cli: CliRunner) -> Path:
    """The standard end-to-end corpus: 200 patients, agreement 0.40, no noise."""
    out = tmp_path_factory.mktemp("corpus-main")
    return _synth(cli, out, "--seed", "1", "--n-patients", "200", "--agreement", "0.4")


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory: pytest.TempPathFactory, cli: CliRunner) -> Path:
    """A small corpus for CLI plumbing tests (8 archetypes + 12 random patients)."""
    out = tmp_path_factory.mktemp("corpus-small")
    return _synth(cli, out, "--seed", "3", "--n-patients", "20", "--agreement", "1.0")


@pytest.fixture(scope="session")
def archetype_corpus_dir(tmp_path_factory: pytest.TempPathFactory, cli: CliRunner) -> Path:
    """Exactly the 8 handcrafted cohort-rule patients."""
    out = tmp_path_factory.mktemp("corpus-archetypes")
    return _synth(cli, out, "--seed", "5", "--n-patients", "8")
