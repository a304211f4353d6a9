"""Exception types shared across the package."""


class ProofSeekError(Exception):
    """Base class for all package errors."""


class ParseError(ProofSeekError):
    """Tokenization failed (unterminated string, comment, or cartouche)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class IndexOutOfRange(ProofSeekError, IndexError):
    """A step index does not address a step in the script."""


class PolicyFormatError(ProofSeekError):
    """A policy document is missing or misuses a field."""

    def __init__(self, field: str, detail: str = ""):
        msg = field if not detail else f"{field}: {detail}"
        super().__init__(msg)
        self.field = field


class UnsupportedPolicy(ProofSeekError):
    """The policy is outside the deterministic compiler's fragment."""


class StageValidationError(ProofSeekError):
    """A formalization stage produced structurally invalid output after retry."""


class TransportError(ProofSeekError):
    """A backend could not be reached or the connection broke mid-exchange.

    Distinct from prover-reported proof errors: transport faults must never be
    counted as proof failures.
    """


class TheoryLoadError(ProofSeekError):
    """The prover rejected the theory text at session setup."""


class SessionClosed(ProofSeekError):
    """A step was applied to a session that is no longer open."""


class BudgetExceeded(ProofSeekError):
    """A sample request exceeded the configured max_samples."""


class MissingFixture(ProofSeekError):
    """A replay backend had no recorded response for the request."""


class ReplayMismatch(ProofSeekError):
    """A replayed request diverged from the recorded trace."""


class BackendUnavailable(ProofSeekError):
    """A required backend is unreachable; the attempt is aborted, not failed."""


class EmptyInput(ProofSeekError):
    """An aggregate was requested over zero records."""
