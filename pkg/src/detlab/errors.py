"""Exception hierarchy shared by every detlab module.

Each error carries a stable machine-readable ``code`` so the HTTP layer and
the CLI can map failures without string matching.
"""

from __future__ import annotations


class DetlabError(Exception):
    """Base class for all detlab failures."""

    code = "error"

    def __init__(self, message: str, *, details: list[str] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or []


class ValidationError(DetlabError):
    """Input violates a documented precondition or invariant."""

    code = "validation"


class ParseError(DetlabError):
    """Annotation or config content could not be parsed."""

    code = "parse"


class ConflictError(DetlabError):
    """Operation conflicts with existing state (duplicates, replays)."""

    code = "conflict"


class AuthError(DetlabError):
    """Authentication failed or token invalid/expired."""

    code = "unauthorized"


class NotFoundError(DetlabError):
    """Resource does not exist (or belongs to another workspace)."""

    code = "not_found"


class PathSecurityError(DetlabError):
    """Relative path escapes the workspace root."""

    code = "invalid_path"


class QuotaError(DetlabError):
    """Write would exceed the workspace quota."""

    code = "quota_exceeded"


class StateError(DetlabError):
    """Operation not allowed in the resource's current state."""

    code = "invalid_state"


class CorruptionError(DetlabError):
    """Stored record container failed framing or checksum validation."""

    code = "corrupt_data"


class MappingError(DetlabError):
    """A class name has no labelmap entry."""

    code = "unknown_class"


class ProtocolError(DetlabError):
    """Trainer wire-protocol violation (logged, never fatal to the job)."""

    code = "protocol"
