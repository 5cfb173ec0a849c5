"""Exception hierarchy.

Every error raised by the library derives from :class:`PVSAError` and falls
into one of two families that the command line maps to exit codes:
:class:`InputError` (bad documents, bad topology, bad parameters) and
:class:`ComputeError` (numerical failures on otherwise valid input).
"""


class PVSAError(Exception):
    category = "Error"


class InputError(PVSAError):
    category = "InputError"


class ComputeError(PVSAError):
    category = "ComputeError"


# network model
class UnknownBus(InputError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonRadial(InputError):
    pass


class CycleDetected(NonRadial):
    pass


class Disconnected(NonRadial):
    pass


class PhaseMismatch(InputError):
    pass


class ZeroNeutralSelfImpedance(InputError):
    pass


# documents
class SchemaError(InputError):
    pass


class UnknownBusReference(SchemaError):
    pass


class InvalidCorrelation(InputError):
    pass


class NegativeVariance(InputError):
    pass


# numerics
class NonConvergence(ComputeError):
    pass


class VoltageCollapse(ComputeError):
    pass


class ZeroActorVoltage(ComputeError):
    pass


class DegenerateDistribution(ComputeError):
    pass


class NotPositiveSemidefinite(ComputeError):
    pass


class DimensionMismatch(ComputeError):
    pass


class BinningMismatch(ComputeError):
    pass


class InvalidShape(ComputeError):
    pass
