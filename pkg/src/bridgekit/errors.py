"""Exception hierarchy shared by every bridgekit module."""


class BridgekitError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 2

    def __init__(self, message="", witness=None):
        super().__init__(message)
        self.witness = witness


class SizeGuard(BridgekitError):
    pass


class ParseError(BridgekitError):
    pass


class BadCoords(BridgekitError):
    pass


class ShapeMismatch(BridgekitError):
    pass


class NotProbability(BridgekitError):
    pass


class NotAbsolutelyContinuous(BridgekitError):
    pass


class NotConditionallyIndependent(BridgekitError):
    pass


class NotMarkov(BridgekitError):
    pass


class NotIrreducible(BridgekitError):
    pass


class PreconditionFailed(BridgekitError):
    pass


class BadFoldGrid(BridgekitError):
    pass


class InconsistentSupport(BridgekitError):
    pass


class IncompatibleValues(BridgekitError):
    pass


class PremiseViolated(BridgekitError):
    pass


class ReconstructionFailed(BridgekitError):
    exit_code = 1


class InfeasibleProblem(BridgekitError):
    exit_code = 1
