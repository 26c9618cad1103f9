"""SBDoH extraction, scoring, normalization, phenotyping and reconciliation."""

from sbdoh.labels import LABELS

__all__ = ["LABELS"]
__version__ = "0.1.0"
