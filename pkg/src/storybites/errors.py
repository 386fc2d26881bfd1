"""Shared exception types.

Domain parse/serialize errors, pipeline errors, session errors, and storage
errors all live here so modules can raise them without importing each other.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .validation import ValidationReport


class StorybitesError(Exception):
    """Base class for all package errors."""


# --- canonical serialization -------------------------------------------------

class ParseError(StorybitesError):
    """Input bytes are not well-formed serialized data."""


class SchemaViolation(StorybitesError):
    """Payload has unknown/missing keys or structurally wrong fields."""


class InvariantViolation(StorybitesError):
    """A structurally valid value breaks one of its type invariants."""

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = problems
        super().__init__("; ".join(problems))


# --- generation pipeline ------------------------------------------------------

class ProviderError(StorybitesError):
    """The generation provider failed or returned unusable output."""


class GenerationFailed(StorybitesError):
    """Validation still failing after the retry budget was spent."""

    def __init__(self, report: "ValidationReport", attempts: int):
        self.report = report
        self.attempts = attempts
        codes = ", ".join(sorted({v.code.value for v in report.violations}))
        super().__init__(f"generation failed after {attempts} attempts: {codes}")


class FoodMismatch(StorybitesError):
    """A record or request names a different food than its session/episode."""


class RangeError(StorybitesError):
    """A score or rating is outside its declared range."""


class ConfigError(StorybitesError):
    """Bad or incomplete runtime configuration."""


# --- intervention loop --------------------------------------------------------

class NotFound(StorybitesError):
    """A referenced resource does not exist (or not yet)."""


class IllegalTransition(StorybitesError):
    """The (state, event) pair is not in the transition table."""

    def __init__(self, state: str, event: str):
        self.state = state
        self.event = event
        super().__init__(f"event '{event}' is not legal in state '{state}'")


class SessionAlreadyActive(StorybitesError):
    """The child already has a non-terminal session."""


class ChildNotFound(NotFound):
    """No avatar stored under the given child id."""


class UnknownEventKey(NotFound):
    """Interaction event key does not exist on the referenced episode page."""


class DuplicateChoice(StorybitesError):
    """A branch was already selected for this page in this session."""


# --- persistence ---------------------------------------------------------------

class ReferentialViolation(StorybitesError):
    """A foreign id does not resolve, or a uniqueness rule is broken."""


class StorageError(StorybitesError):
    """The backing store rejected the operation."""
