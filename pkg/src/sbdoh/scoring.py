"""Strict/lenient span scoring and token-level inter-annotator kappa.

Strict: a predicted span counts as a true positive when its start, end and
label all equal a gold span's. Lenient: same label and at least one character
of overlap; pairing uses a maximum one-to-one bipartite matching so one TP
count serves both precision and recall.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from sbdoh.corpus import Note, SpanAnnotation
from sbdoh.errors import PipelineError
from sbdoh.labels import LABELS
from sbdoh.tagging import Prediction, tokenize

MODES = ("strict", "lenient")
OVERALL = "Overall"


@dataclass(frozen=True)
class PRF:
    tp: int
    n_pred: int
    n_gold: int
    precision: float
    recall: float
    f1: float


def prf(tp: int, n_pred: int, n_gold: int) -> PRF:
    """Precision/recall/F1 from counts.

    Conventions: 0/0 divisions yield 0, except the fully empty case
    (n_pred == n_gold == 0) which scores 1.0 across the board.
    """
    if tp > n_pred or tp > n_gold:
        raise PipelineError(f"tp={tp} exceeds n_pred={n_pred} or n_gold={n_gold}")
    if n_pred == 0 and n_gold == 0:
        return PRF(0, 0, 0, 1.0, 1.0, 1.0)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(tp, n_pred, n_gold, precision, recall, f1)


def _check_single_note(spans: Sequence) -> None:
    note_ids = {s.note_id for s in spans}
    if len(note_ids) > 1:
        raise PipelineError(f"spans from multiple notes in one match: {sorted(note_ids)}")


def _lenient_edge(gold, pred) -> bool:
    return gold.label == pred.label and max(gold.start, pred.start) < min(gold.end, pred.end)


def _max_matching(gold: Sequence, pred: Sequence) -> int:
    """Size of a maximum one-to-one matching under the lenient criterion.

    Kuhn's augmenting-path algorithm over the bipartite overlap graph.
    """
    adjacency = [
        [j for j, g in enumerate(gold) if _lenient_edge(g, p)] for p in pred
    ]
    match_of_gold = [-1] * len(gold)

    def try_augment(i: int, visited: list[bool]) -> bool:
        for j in adjacency[i]:
            if visited[j]:
                continue
            visited[j] = True
            if match_of_gold[j] == -1 or try_augment(match_of_gold[j], visited):
                match_of_gold[j] = i
                return True
        return False

    matched = 0
    for i in range(len(pred)):
        if try_augment(i, [False] * len(gold)):
            matched += 1
    return matched


def match_count(gold: Sequence, pred: Sequence, mode: str) -> int:
    """True-positive count between one note's gold and predicted spans."""
    if mode not in MODES:
        raise PipelineError(f"mode must be strict|lenient, got {mode!r}")
    _check_single_note(list(gold) + list(pred))
    if mode == "strict":
        gold_keys = Counter((s.start, s.end, s.label) for s in gold)
        pred_keys = Counter((s.start, s.end, s.label) for s in pred)
        return sum((gold_keys & pred_keys).values())
    return _max_matching(list(gold), list(pred))


@dataclass(frozen=True)
class EvaluationReport:
    # rows[mode][label] -> PRF, label ranges over LABELS plus Overall
    rows: Mapping[str, Mapping[str, PRF]]

    def to_json(self) -> str:
        payload = {
            mode: {
                label: {
                    "tp": cell.tp,
                    "n_pred": cell.n_pred,
                    "n_gold": cell.n_gold,
                    "precision": round(cell.precision, 6),
                    "recall": round(cell.recall, 6),
                    "f1": round(cell.f1, 6),
                }
                for label, cell in mode_rows.items()
            }
            for mode, mode_rows in self.rows.items()
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def format_table(self) -> str:
        """Human-readable table: one row per label, strict and lenient columns."""
        header = (
            f"{'Label':<12} {'P(strict)':>9} {'R(strict)':>9} {'F1(strict)':>10}"
            f" {'P(lenient)':>10} {'R(lenient)':>10} {'F1(lenient)':>11}"
        )
        lines = [header, "-" * len(header)]
        for label in (*LABELS, OVERALL):
            s, l = self.rows["strict"][label], self.rows["lenient"][label]
            lines.append(
                f"{label:<12} {s.precision:>9.4f} {s.recall:>9.4f} {s.f1:>10.4f}"
                f" {l.precision:>10.4f} {l.recall:>10.4f} {l.f1:>11.4f}"
            )
        return "\n".join(lines) + "\n"


def evaluate(
    note_ids: Iterable[str],
    gold: Sequence[SpanAnnotation],
    pred: Sequence[Prediction],
) -> EvaluationReport:
    """Per-label and micro-averaged Overall PRF in both modes."""
    known = set(note_ids)
    for span in gold:
        if span.note_id not in known:
            raise PipelineError(f"gold annotation for unknown note {span.note_id!r}")
    for span in pred:
        if span.note_id not in known:
            raise PipelineError(f"prediction for unknown note {span.note_id!r}")

    gold_by = defaultdict(list)
    pred_by = defaultdict(list)
    for span in gold:
        gold_by[(span.note_id, span.label)].append(span)
    for span in pred:
        pred_by[(span.note_id, span.label)].append(span)

    rows: dict[str, dict[str, PRF]] = {}
    for mode in MODES:
        tp_by_label: Counter[str] = Counter()
        for key in set(gold_by) | set(pred_by):
            note_id, label = key
            tp_by_label[label] += match_count(gold_by.get(key, []), pred_by.get(key, []), mode)
        n_gold_by: Counter[str] = Counter(s.label for s in gold)
        n_pred_by: Counter[str] = Counter(s.label for s in pred)
        mode_rows = {
            label: prf(tp_by_label[label], n_pred_by[label], n_gold_by[label])
            for label in LABELS
        }
        mode_rows[OVERALL] = prf(
            sum(tp_by_label[la] for la in LABELS),
            sum(n_pred_by[la] for la in LABELS),
            sum(n_gold_by[la] for la in LABELS),
        )
        rows[mode] = mode_rows
    return EvaluationReport(rows)


def token_labels(note: Note, spans: Sequence) -> list[str]:
    """Project spans to one label per token; O for untagged tokens."""
    doc = tokenize(note.text)
    labels = ["O"] * len(doc.tokens)
    for span in sorted(spans, key=lambda s: (s.start, s.end)):
        for i, token in enumerate(doc.tokens):
            if max(token.start, span.start) < min(token.end, span.end) and labels[i] == "O":
                labels[i] = span.label
    return labels


def token_kappa(
    notes: Sequence[Note],
    ann_a: Sequence[SpanAnnotation],
    ann_b: Sequence[SpanAnnotation],
) -> float:
    """Cohen's kappa over per-token labels across all tokens of `notes`.

    Label set is the five entity labels plus O. The degenerate full-agreement
    case (expected agreement 1) is defined as kappa 1.0.
    """
    known = {note.note_id for note in notes}
    for span in list(ann_a) + list(ann_b):
        if span.note_id not in known:
            raise PipelineError(f"annotation for note {span.note_id!r} outside the overlap set")
    a_by = defaultdict(list)
    b_by = defaultdict(list)
    for span in ann_a:
        a_by[span.note_id].append(span)
    for span in ann_b:
        b_by[span.note_id].append(span)

    seq_a: list[str] = []
    seq_b: list[str] = []
    for note in notes:
        seq_a.extend(token_labels(note, a_by.get(note.note_id, [])))
        seq_b.extend(token_labels(note, b_by.get(note.note_id, [])))
    return kappa_from_sequences(seq_a, seq_b)


def kappa_from_sequences(seq_a: Sequence[str], seq_b: Sequence[str]) -> float:
    if len(seq_a) != len(seq_b):
        raise PipelineError(f"annotator sequences differ in length: {len(seq_a)} vs {len(seq_b)}")
    if not seq_a:
        raise PipelineError("no tokens to compare")
    total = len(seq_a)
    observed = sum(1 for x, y in zip(seq_a, seq_b) if x == y) / total
    freq_a = Counter(seq_a)
    freq_b = Counter(seq_b)
    expected = sum(freq_a[lab] * freq_b[lab] for lab in set(freq_a) | set(freq_b)) / total**2
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)
