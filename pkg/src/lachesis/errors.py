"""Exception types raised by the consensus library."""


class LachesisError(Exception):
    """Base class for all library errors."""


class DuplicateEvent(LachesisError):
    """Event id is already stored in the chain."""


class MissingParent(LachesisError):
    """A referenced parent id is not present; the caller must sync first."""


class MalformedReferences(LachesisError):
    """Reference structure of an event violates the chain invariants."""


class UnknownEvent(LachesisError):
    """Queried event id is not present in the chain."""


class MissingParentTable(LachesisError):
    """A parent's flag table is unavailable for the merge."""


class NotClotho(LachesisError):
    """Consensus-time selection requires a Clotho root."""


class EmptyInput(LachesisError):
    """Operation requires a nonempty input."""


class FrameNotFinalized(LachesisError):
    """Frame still has roots whose fate is undecided."""


class InsufficientPeers(LachesisError):
    """Fewer peers are known than the protocol requires."""


class StaleTops(LachesisError):
    """A referenced top event is no longer its creator's top."""


class ConfigInvalid(LachesisError):
    """Simulation configuration failed validation."""
