"""The closed set of SBDoH entity labels.

Declaration order matters: it is the last tie-break when overlapping
predictions are resolved, so it is fixed here once and imported everywhere.
"""

from __future__ import annotations

from sbdoh.errors import PipelineError

LABELS: tuple[str, ...] = ("Gender", "Ethnicity", "Smoking", "Education", "Employment")

LABEL_ORDER: dict[str, int] = {label: i for i, label in enumerate(LABELS)}


def require_label(label: str) -> str:
    """Return `label` unchanged if it is a known entity label, else raise."""
    if label not in LABEL_ORDER:
        raise PipelineError(f"unknown label {label!r}: must be one of {', '.join(LABELS)}")
    return label
