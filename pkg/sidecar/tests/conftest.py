from pathlib import Path

import pytest
from click.testing import CliRunner

from sbdoh_sidecar.cli import predict_command, train_command
from sidecar_helpers import run_pipeline


@pytest.fixture(scope="session")
def cli() -> CliRunner:
    return CliRunner()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    corpus = tmp_path_factory.mktemp("corpus")
    run_pipeline("synth", "--out", corpus, "--seed", "1", "--n-patients", "200",
                 "--agreement", "0.4")
    run_pipeline("run-all", "--config", corpus / "config.yaml")
    return corpus


@pytest.fixture(scope="session")
def checkpoint_dir(cli, corpus_dir, tmp_path_factory) -> Path:
    checkpoint = tmp_path_factory.mktemp("checkpoint")
    result = cli.invoke(
        train_command,
        ["--train", str(corpus_dir / "out/training/train.jsonl"), "--checkpoint", str(checkpoint)],
    )
    assert result.exit_code == 0, result.output
    return checkpoint


@pytest.fixture(scope="session")
def prediction_file(cli, corpus_dir, checkpoint_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("preds") / "predictions.jsonl"
    result = cli.invoke(
        predict_command,
        ["--notes", str(corpus_dir / "notes.jsonl"), "--checkpoint", str(checkpoint_dir),
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out
