"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 3, everything
raised during a run (NumericError, CheckpointError, OSError, ...) -> 4.
"""


class ValidationError(ValueError):
    """Bad user input: out-of-range factor, mismatched shapes, bad config."""


class CheckpointError(RuntimeError):
    """Checkpoint file is corrupted, has the wrong version, or does not
    match the expected config fingerprint."""


class NumericError(RuntimeError):
    """Training produced a non-finite loss; carries the component breakdown."""

    def __init__(self, message: str, breakdown=None):
        super().__init__(message)
        self.breakdown = breakdown
