"""Exception types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


# core-state
class DanglingNodeRef(EngineError):
    """A node op targets a node_id that does not exist in the view."""


class StrategyViolation(EngineError):
    """A delta's op set violates its strategy's structural invariant."""


class SchemaViolation(EngineError):
    """A value fails a structural/schema check."""


class DecodeError(EngineError):
    """Malformed serialized document."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


# environment
class UnknownSource(EngineError):
    """Query or ref names a dataset/record not in the registry."""


class BadPredicate(EngineError):
    """Malformed query predicate."""


class UnknownAction(EngineError):
    """Write action not registered in the fixture script."""


# intent / agent
class UnknownAffordance(EngineError):
    """Structured event cites a missing affordance_id."""


class ScriptMiss(EngineError):
    """The scripted agent has no entry matching the request."""


# lifecycle / service
class SeqConflict(EngineError):
    """A history append collides with an existing state_seq."""


class StaleEvent(EngineError):
    """Event's basis_state_seq does not match the current state."""


class NoApp(EngineError):
    """Session has no active application."""


class PipelineFault(EngineError):
    """A pipeline stage failed; carries the stage tag and cause."""

    def __init__(self, stage: str, cause: str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
