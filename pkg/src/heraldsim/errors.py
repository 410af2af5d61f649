"""Exception hierarchy shared by all heraldsim modules."""


class HeraldSimError(Exception):
    """Base class for library errors."""


class InvalidDimensionError(HeraldSimError, ValueError):
    pass


class TruncationOverflowError(HeraldSimError):
    """Raised when probability weight escapes the truncated Fock space."""


class ParameterError(HeraldSimError, ValueError):
    pass


class InvalidStateError(HeraldSimError, ValueError):
    """Raised for matrices that are not usable as density matrices."""


class NoHeraldError(HeraldSimError):
    """Raised when the herald detector can never click on the given state."""


class RejectedInputError(HeraldSimError, ValueError):
    pass


class AlgorithmContractError(HeraldSimError, RuntimeError):
    """Raised when an iterative algorithm violates one of its guarantees."""


class PipelineDependencyError(HeraldSimError):
    pass


class StructuralDiffError(HeraldSimError):
    pass
