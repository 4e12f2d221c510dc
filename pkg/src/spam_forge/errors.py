"""Exception hierarchy shared by every spam_forge module."""


class SpamForgeError(Exception):
    """Base class for all package errors."""


class ArgumentError(SpamForgeError, ValueError):
    """An argument violates a documented precondition."""


class RegimeError(SpamForgeError):
    """A quantity is only defined in the robust regime."""


class ContractError(SpamForgeError):
    """Inputs are well-typed but break a structural contract (ordering, colouring)."""


class SizeCapError(SpamForgeError):
    """A rooted ball is larger than the canonicalization cap."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"ball with {size} vertices exceeds cap {cap}")
        self.size = size
        self.cap = cap


class SamplingError(SpamForgeError):
    """Not enough material to draw the requested sample."""


class ValidationError(SpamForgeError):
    """Configuration validation failure; ``problems`` lists every bad field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
