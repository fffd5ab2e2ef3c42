"""Exception types shared across the package."""

from __future__ import annotations


class IcdTrialError(Exception):
    """Base class for all package errors."""


class EngineError(IcdTrialError):
    """Generic simulation-engine failure (e.g. zero-delay livelock)."""


class DeadComponentError(EngineError):
    """A component's location invariant leaves no delay at which any edge
    can fire."""

    def __init__(self, component: str, location: str, detail: str = ""):
        self.component = component
        self.location = location
        msg = f"component {component!r} is dead in location {location!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DeadlockError(EngineError):
    """No component can delay or fire."""

    def __init__(self, time: float, partial_trace=None):
        self.time = time
        self.partial_trace = partial_trace
        super().__init__(f"network deadlocked at t={time} ms")


class ProtocolError(IcdTrialError):
    """A stateful API was driven out of contract (out-of-order events,
    ingesting pairs after a decision, ...)."""


class AdjudicationError(IcdTrialError):
    """A trace cannot be adjudicated (missing ground-truth annotations)."""


class NonIdentifiableHazardError(IcdTrialError):
    """The Cox partial likelihood has no finite maximizer."""


class ConfigError(IcdTrialError):
    """Invalid trial or population configuration."""
