"""Tokenizer, encoder model, and the word/subword plumbing shared by
training and inference.

Words are split with the same scheme the training export uses (alphanumeric
runs or single symbols), so spans predicted on raw text land on the same
boundaries the export's tokens and the gold annotations use. WordPiece then
subdivides words; the first subword of each word carries its tag.
"""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
from transformers import BertConfig, BertForTokenClassification
from transformers.utils import logging as hf_logging

from sbdoh_sidecar.contract import TAGS, SidecarError

# Batch tool, not a notebook: keep checkpoint saves/loads quiet.
hf_logging.disable_progress_bar()

WORD_RE = re.compile(r"[^\W_]+|\S")
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")
IGNORE_INDEX = -100

TOKENIZER_FILE = "tokenizer.json"


def train_wordpiece(lines: Iterable[str], vocab_size: int, lowercase: bool) -> Tokenizer:
    """Whole-word vocabulary with single-character fallback pieces.

    The stock merge trainer picks ties in a thread-dependent order, so two
    runs over the same corpus can disagree on the learned pieces. Counting
    words keeps checkpoints bit-reproducible, and the corpora this model
    sees are small enough for every word to fit the budget outright.
    """
    tokenizer = Tokenizer(models.WordPiece({"[UNK]": 0}, unk_token="[UNK]"))
    tokenizer.normalizer = normalizers.BertNormalizer(lowercase=lowercase)
    tokenizer.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for line in lines:
        normalized = tokenizer.normalizer.normalize_str(line)
        for word, _ in tokenizer.pre_tokenizer.pre_tokenize_str(normalized):
            counts[word] += 1
            chars.update(word)
    fallback = [piece for char in sorted(chars) for piece in (char, f"##{char}")]
    by_frequency = sorted(counts, key=lambda word: (-counts[word], word))
    room = max(vocab_size - len(SPECIAL_TOKENS) - len(fallback), 0)
    vocab: dict[str, int] = {}
    for token in (*SPECIAL_TOKENS, *fallback, *by_frequency[:room]):
        vocab.setdefault(token, len(vocab))
    tokenizer.model = models.WordPiece(vocab, unk_token="[UNK]")
    return tokenizer


def load_tokenizer(checkpoint_dir: str | Path) -> Tokenizer:
    path = Path(checkpoint_dir) / TOKENIZER_FILE
    if not path.exists():
        raise SidecarError(f"tokenizer not found: {path}")
    return Tokenizer.from_file(str(path))


def special_ids(tokenizer: Tokenizer) -> tuple[int, int, int]:
    ids = tuple(tokenizer.token_to_id(t) for t in ("[PAD]", "[CLS]", "[SEP]"))
    if any(i is None for i in ids):
        raise SidecarError("tokenizer lacks [PAD]/[CLS]/[SEP] special tokens")
    return ids  # type: ignore[return-value]


def build_model(
    vocab_size: int,
    hidden_size: int,
    num_layers: int,
    num_heads: int,
    intermediate_size: int,
    max_len: int,
    pad_id: int,
) -> BertForTokenClassification:
    config = BertConfig(
        vocab_size=vocab_size,
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=intermediate_size,
        max_position_embeddings=max_len,
        pad_token_id=pad_id,
        num_labels=len(TAGS),
        id2label=dict(enumerate(TAGS)),
        label2id={tag: i for i, tag in enumerate(TAGS)},
    )
    return BertForTokenClassification(config)


def load_model(checkpoint_dir: str | Path) -> BertForTokenClassification:
    checkpoint_dir = Path(checkpoint_dir)
    if not (checkpoint_dir / "config.json").exists():
        raise SidecarError(f"model checkpoint not found in {checkpoint_dir}")
    model = BertForTokenClassification.from_pretrained(checkpoint_dir)
    if model.config.num_labels != len(TAGS):
        raise SidecarError(
            f"checkpoint predicts {model.config.num_labels} classes, contract has {len(TAGS)}"
        )
    return model


def encode_words(tokenizer: Tokenizer, words: Sequence[str]) -> tuple[list[int], list[int]]:
    """Subword ids plus, per subword, the index of the source word."""
    encoding = tokenizer.encode(list(words), is_pretokenized=True, add_special_tokens=False)
    word_ids = [w for w in encoding.word_ids if w is not None]
    if len(word_ids) != len(encoding.ids):
        raise SidecarError("tokenizer produced subwords without word alignment")
    return encoding.ids, word_ids


def window_bounds(n: int, body: int, stride: int) -> Iterator[tuple[int, int]]:
    """Start/stop pairs covering [0, n) with the given stride; at least one."""
    start = 0
    while True:
        yield start, min(start + body, n)
        if start + body >= n:
            return
        start += stride


def batched(items: Sequence, size: int) -> Iterator[Sequence]:
    for k in range(0, len(items), size):
        yield items[k : k + size]


def collate(
    windows: Sequence[tuple[list[int], list[int] | None]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor | None]:
    """Pad a batch of (ids, labels) windows; labels may be absent."""
    width = max(len(ids) for ids, _ in windows)
    ids = torch.tensor([list(w) + [pad_id] * (width - len(w)) for w, _ in windows])
    mask = torch.tensor([[1] * len(w) + [0] * (width - len(w)) for w, _ in windows])
    if windows[0][1] is None:
        return ids, mask, None
    labels = torch.tensor(
        [list(lab) + [IGNORE_INDEX] * (width - len(lab)) for _, lab in windows]  # type: ignore[arg-type]
    )
    return ids, mask, labels


# I-X may only follow B-X or I-X; everything else is a free transition.
_TRANSITION_OK = torch.tensor(
    [
        [
            not to_tag.startswith("I-")
            or from_tag in (f"B-{to_tag[2:]}", f"I-{to_tag[2:]}")
            for to_tag in TAGS
        ]
        for from_tag in TAGS
    ]
)
_START_OK = torch.tensor([not tag.startswith("I-") for tag in TAGS])


def viterbi_tags(log_probs: torch.Tensor) -> list[str]:
    """Best BIO-consistent tag sequence for per-word class log-probabilities."""
    n_words, n_tags = log_probs.shape
    penalty = torch.where(_TRANSITION_OK, 0.0, -1e9)
    score = log_probs[0] + torch.where(_START_OK, 0.0, -1e9)
    back = torch.zeros(n_words, n_tags, dtype=torch.long)
    for k in range(1, n_words):
        candidates = score[:, None] + penalty
        best, back[k] = candidates.max(dim=0)
        score = best + log_probs[k]
    path = [int(score.argmax())]
    for k in range(n_words - 1, 0, -1):
        path.append(int(back[k, path[-1]]))
    return [TAGS[i] for i in reversed(path)]
