"""Exception hierarchy shared by all lossysim modules."""


class LossySimError(Exception):
    """Base class for every error raised by lossysim."""


class ValidationError(LossySimError, ValueError):
    """An argument violates a documented precondition."""


class CapExceededError(LossySimError):
    """A desk-scale size cap would be exceeded."""


class NonUnitaryError(ValidationError):
    pass


class PhotonNumberMismatchError(ValidationError):
    pass


class MalformedNetworkError(ValidationError):
    pass


class NonCanonicalNetworkError(MalformedNetworkError):
    pass


class HeterogeneousLossError(ValidationError):
    """Loss elements carry different transmissivities.

    Use :func:`lossysim.network.extract_uniform_losses_relaxed` instead.
    """


class NetworkParseError(MalformedNetworkError):
    def __init__(self, message, element=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if element is not None:
            where.append(f"element {element}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.element = element
        self.line = line
