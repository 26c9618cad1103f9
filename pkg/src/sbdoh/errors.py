"""Shared exception type for data and validation failures (CLI exit code 1)."""


class PipelineError(Exception):
    """Raised for any invalid input, file, or configuration the pipeline rejects."""
