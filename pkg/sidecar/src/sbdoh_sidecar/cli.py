"""Command-line entry points: sidecar-train and sidecar-predict.

Errors exit with code 1 and a single-line JSON record on stderr, matching
the pipeline CLI's convention.
"""

from __future__ import annotations

import json

import click

from sbdoh_sidecar.contract import SidecarError
from sbdoh_sidecar.predict import predict
from sbdoh_sidecar.train import SCRATCH_MODEL, SidecarConfig, train


def _fail(command: str, exc: Exception) -> None:
    click.echo(json.dumps({"command": command, "error": str(exc)}), err=True)
    raise SystemExit(1)


@click.command("sidecar-train")
@click.option("--train", "train_path", required=True, type=click.Path(), help="BIO training export (train.jsonl).")
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(), help="Checkpoint output directory.")
@click.option("--base-model", default=SCRATCH_MODEL, show_default=True, help=f"{SCRATCH_MODEL!r} or a previous checkpoint directory.")
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--lr", "learning_rate", type=float, default=5e-4, show_default=True)
@click.option("--max-len", type=int, default=128, show_default=True, help="Window length in subwords.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--vocab-size", type=int, default=2000, show_default=True)
@click.option("--lowercase", is_flag=True, help="Lowercase text in the tokenizer.")
@click.option("--hidden-size", type=int, default=128, show_default=True)
@click.option("--num-layers", type=int, default=2, show_default=True)
@click.option("--num-heads", type=int, default=4, show_default=True)
@click.option("--intermediate-size", type=int, default=512, show_default=True)
def train_command(train_path, checkpoint_dir, **kwargs) -> None:
    """Train a token classifier on a BIO training export."""
    try:
        config = SidecarConfig(**kwargs)
        log = train(train_path, checkpoint_dir, config)
    except SidecarError as exc:
        _fail("sidecar-train", exc)
    losses = log["epoch_losses"]
    click.echo(
        f"trained {len(losses)} epochs on {log['n_records']} records"
        f" ({log['n_windows']} windows); loss {losses[0]:.4f} -> {losses[-1]:.4f}"
    )
    click.echo(f"wrote {checkpoint_dir}")


@click.command("sidecar-predict")
@click.option("--notes", "notes_path", required=True, type=click.Path(), help="Notes file (notes.jsonl).")
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(), help="Checkpoint directory from sidecar-train.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Prediction file to write.")
@click.option("--batch-size", type=int, default=32, show_default=True)
def predict_command(notes_path, checkpoint_dir, out_path, batch_size) -> None:
    """Tag notes with a trained checkpoint; emit span predictions."""
    try:
        n = predict(notes_path, checkpoint_dir, out_path, batch_size=batch_size)
    except SidecarError as exc:
        _fail("sidecar-predict", exc)
    click.echo(f"wrote {n} predictions to {out_path}")
