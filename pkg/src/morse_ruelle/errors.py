"""Exception hierarchy shared by all modules."""


class ArtifactError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(ArtifactError):
    """An invariant that should hold by construction was observed to fail."""
