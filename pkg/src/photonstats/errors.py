"""Exception types raised across the package."""


class PhotonStatsError(Exception):
    """Base class for all errors raised by photonstats."""


class ParameterError(PhotonStatsError, ValueError):
    pass


class DegenerateKernel(PhotonStatsError):
    """The Lindblad generator has more than one stationary state."""


class StepSizeFailure(PhotonStatsError):
    pass


class ZeroIntensity(PhotonStatsError):
    pass


class NoDecay(PhotonStatsError):
    pass


class GridMismatch(PhotonStatsError, ValueError):
    pass


class Underdetermined(PhotonStatsError, ValueError):
    pass


class OutOfModel(PhotonStatsError, ValueError):
    pass


class RateOverflow(PhotonStatsError):
    pass


class UnsortedInput(PhotonStatsError, ValueError):
    pass


class TooLarge(PhotonStatsError, ValueError):
    pass


class ConfigMismatch(PhotonStatsError, ValueError):
    pass


class StreamFormatError(PhotonStatsError, ValueError):
    pass
