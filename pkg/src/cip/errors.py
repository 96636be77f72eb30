"""Exception taxonomy shared across the toolkit.

Exit-code mapping used by the CLI and the service error bodies:
config problems -> 2, backend/transport problems -> 3, data invariant
violations -> 4.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_INVARIANT = 4


class CipError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1
    kind = "error"


class ConfigError(CipError):
    exit_code = EXIT_CONFIG
    kind = "config-error"


class InvariantError(CipError):
    exit_code = EXIT_INVARIANT
    kind = "invariant-error"


class ManifestParseError(InvariantError):
    kind = "parse-error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BackendError(CipError):
    exit_code = EXIT_BACKEND
    kind = "backend-error"


class TransportError(BackendError):
    kind = "transport-error"


class BackendRejection(BackendError):
    kind = "backend-rejection"

    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"backend returned {status}: {message}")


class ReplayMissError(BackendError):
    kind = "replay-miss"


class MalformedRequestError(BackendError):
    kind = "malformed-request"


class EmptyCaptionError(BackendError):
    kind = "empty-caption"


class MissingCaptionError(InvariantError):
    """A prompt template needed captions that some records lack."""

    kind = "missing-caption"

    def __init__(self, indices: list[int]):
        self.indices = indices
        shown = ", ".join(str(i) for i in indices[:10])
        more = "" if len(indices) <= 10 else f" (+{len(indices) - 10} more)"
        super().__init__(f"records missing captions at indices: {shown}{more}")


class NoAnswerMarkerError(InvariantError):
    kind = "no-answer-marker"


class DivergenceError(CipError):
    """Training loss became non-finite."""

    kind = "divergence"

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


def error_for_kind(kind: str, message: str) -> CipError:
    """Rebuild a typed error from a service error body."""
    for cls in (
        ConfigError,
        ManifestParseError,
        MissingCaptionError,
        NoAnswerMarkerError,
        InvariantError,
        TransportError,
        BackendRejection,
        ReplayMissError,
        MalformedRequestError,
        EmptyCaptionError,
        BackendError,
        DivergenceError,
    ):
        if cls.kind == kind:
            if cls is BackendRejection:
                return BackendRejection(502, message)
            if cls is MissingCaptionError:
                err = InvariantError(message)
                err.kind = kind  # type: ignore[attr-defined]
                return err
            if cls is DivergenceError:
                err = CipError(message)
                err.kind = kind  # type: ignore[attr-defined]
                return err
            if cls is ManifestParseError:
                return ManifestParseError(message)
            return cls(message)
    err = CipError(message)
    err.kind = kind  # type: ignore[attr-defined]
    return err
