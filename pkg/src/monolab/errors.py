"""Exception types raised by the monolab modules."""


class MonolabError(Exception):
    """Base class for all library errors."""


class ZeroHiggs(MonolabError):
    pass


class SmallHiggs(MonolabError):
    pass


class MaskedPoint(MonolabError):
    pass


class FitIllConditioned(MonolabError):
    pass


class AtPole(MonolabError):
    pass


class OnString(MonolabError):
    pass


class SphereHitsPole(MonolabError):
    pass


class NonclosedDifference(MonolabError):
    pass


class LayoutOverlap(MonolabError):
    pass


class PatchString(MonolabError):
    """A Dirac string of one cluster passes through another cluster's splice region."""


class InsufficientSweep(MonolabError):
    pass


class CoincidentPoints(MonolabError):
    pass


class ResidualTooLarge(MonolabError):
    pass


class ConfigParse(MonolabError):
    pass


class GateFailure(MonolabError):
    pass
