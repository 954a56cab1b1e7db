"""Exception types shared across the package."""

from __future__ import annotations


class AndOrPlanError(Exception):
    """Base class for all package errors."""


class UnknownEntityError(AndOrPlanError, KeyError):
    """An id does not name a registered node, arc, action, agent or graph."""

    def __str__(self) -> str:  # KeyError quotes its arg, which reads badly
        return Exception.__str__(self)


class ProtocolViolation(AndOrPlanError):
    """The caller asked for a state change that the calculus forbids.

    Raised for things like meeting a non-feasible node, recording actions
    out of order, or touching a suppressed hyper-arc. It signals a bug or a
    stale view in the execution layer, not a recoverable planning outcome.
    """


class ModelError(AndOrPlanError):
    """A structural rule of the layered model was violated."""


class ScenarioError(AndOrPlanError):
    """A scenario document failed to parse or validate.

    ``location`` points at the offending part of the document.
    """

    def __init__(self, message: str, location: str = "") -> None:
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
        self.reason = message


class ScenarioParseError(ScenarioError):
    """The document is not syntactically readable at all."""


class NoPathError(AndOrPlanError):
    """No cooperation path exists (episode already solved or failed)."""


class NoEligibleAgentError(AndOrPlanError):
    """No idle agent may execute the action; the caller should queue it."""
