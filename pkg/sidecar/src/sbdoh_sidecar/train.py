"""Training: fit a token-classification encoder to a BIO training export.

The checkpoint directory holds the model weights (save_pretrained format),
the WordPiece tokenizer, the run configuration, and a per-epoch loss log.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass
from pathlib import Path

import torch

from sbdoh_sidecar.contract import TAG_TO_ID, SidecarError, read_training_export
from sbdoh_sidecar.modeling import (
    IGNORE_INDEX,
    TOKENIZER_FILE,
    batched,
    build_model,
    collate,
    encode_words,
    load_model,
    load_tokenizer,
    special_ids,
    train_wordpiece,
    window_bounds,
)

SCRATCH_MODEL = "scratch-mini"

CONFIG_FILE = "sidecar.json"
LOG_FILE = "training_log.json"


@dataclass(frozen=True)
class SidecarConfig:
    base_model: str = SCRATCH_MODEL  # fresh tiny encoder, or a checkpoint directory
    epochs: int = 30
    learning_rate: float = 5e-4
    max_len: int = 128
    seed: int = 7
    batch_size: int = 16
    vocab_size: int = 2000
    lowercase: bool = False
    hidden_size: int = 128
    num_layers: int = 2
    num_heads: int = 4
    intermediate_size: int = 512

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise SidecarError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise SidecarError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_len < 8:
            raise SidecarError(f"max_len must be at least 8, got {self.max_len}")
        if self.batch_size < 1:
            raise SidecarError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.hidden_size % self.num_heads:
            raise SidecarError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )


def _encode_record(tokenizer, record, cls_id: int, sep_id: int, max_len: int):
    """One record's (ids, labels) windows; first subword carries the tag."""
    ids, word_ids = encode_words(tokenizer, record.tokens)
    labels = []
    tagged: set[int] = set()
    for word_index in word_ids:
        if word_index in tagged:
            labels.append(IGNORE_INDEX)
        else:
            tagged.add(word_index)
            labels.append(TAG_TO_ID[record.tags[word_index]])
    body = max_len - 2
    windows = []
    for start, stop in window_bounds(max(len(ids), 1), body, body):
        windows.append(
            (
                [cls_id] + ids[start:stop] + [sep_id],
                [IGNORE_INDEX] + labels[start:stop] + [IGNORE_INDEX],
            )
        )
    return windows


def train(train_path: str | Path, checkpoint_dir: str | Path, config: SidecarConfig) -> dict:
    """Train and persist a checkpoint; returns the training log."""
    records = read_training_export(train_path)

    # Seed before any weight is drawn so fresh models start identically too.
    torch.manual_seed(config.seed)

    if config.base_model == SCRATCH_MODEL:
        tokenizer = train_wordpiece(
            (" ".join(record.tokens) for record in records),
            config.vocab_size,
            config.lowercase,
        )
        pad_id, cls_id, sep_id = special_ids(tokenizer)
        model = build_model(
            tokenizer.get_vocab_size(),
            config.hidden_size,
            config.num_layers,
            config.num_heads,
            config.intermediate_size,
            config.max_len,
            pad_id,
        )
    elif Path(config.base_model).is_dir():
        # Warm start: reuse an earlier checkpoint's vocabulary and weights.
        tokenizer = load_tokenizer(config.base_model)
        pad_id, cls_id, sep_id = special_ids(tokenizer)
        model = load_model(config.base_model)
    else:
        raise SidecarError(
            f"base model not resolvable: {config.base_model!r}"
            f" (expected {SCRATCH_MODEL!r} or a checkpoint directory)"
        )
    if config.max_len > model.config.max_position_embeddings:
        raise SidecarError(
            f"max_len {config.max_len} exceeds the model's"
            f" {model.config.max_position_embeddings} positions"
        )

    windows = [
        window
        for record in records
        for window in _encode_record(tokenizer, record, cls_id, sep_id, config.max_len)
    ]

    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    steps = config.epochs * ((len(windows) + config.batch_size - 1) // config.batch_size)
    scheduler = torch.optim.lr_scheduler.LinearLR(optimizer, 1.0, 0.01, steps)
    rng = random.Random(config.seed)
    order = list(range(len(windows)))

    epoch_losses = []
    for _ in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for index_batch in batched(order, config.batch_size):
            batch = [windows[i] for i in index_batch]
            ids, mask, labels = collate(batch, pad_id)
            output = model(input_ids=ids, attention_mask=mask, labels=labels)
            output.loss.backward()
            optimizer.step()
            scheduler.step()
            optimizer.zero_grad()
            total += float(output.loss.detach()) * len(batch)
        epoch_losses.append(total / len(windows))

    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(checkpoint_dir)
    tokenizer.save(str(checkpoint_dir / TOKENIZER_FILE))
    (checkpoint_dir / CONFIG_FILE).write_text(
        json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    log = {
        "epoch_losses": epoch_losses,
        "n_records": len(records),
        "n_windows": len(windows),
    }
    (checkpoint_dir / LOG_FILE).write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return log
