"""Exception hierarchy.

Every failure raised by the library is an ``SbfError``. The intermediate
family classes group errors the CLI maps onto distinct exit codes.
"""


class SbfError(Exception):
    exit_code = 1


# configuration
class ConfigError(SbfError, ValueError):
    exit_code = 3


class OrderingViolation(ConfigError):
    pass


class RangeViolation(ConfigError):
    pass


# input validation / schema
class InputError(SbfError, ValueError):
    exit_code = 4


class JointCountMismatch(InputError):
    pass


class EmptyFrame(InputError):
    pass


class NonFiniteCoordinate(InputError):
    pass


class SchemaError(InputError):
    pass


class UnknownLayout(InputError):
    pass


class SpecInfeasible(InputError):
    pass


class MissingInput(InputError):
    pass


# shapes and variants
class ShapeError(SbfError, ValueError):
    exit_code = 5


class ShapeMismatch(ShapeError):
    pass


class VariantMismatch(ShapeError):
    pass


class LimbCountMismatch(ShapeError):
    pass


class LengthMismatch(ShapeError):
    pass


class CropLargerThanFrame(ShapeError):
    pass


# annotation generation
class AnnotationError(SbfError, ValueError):
    exit_code = 6


class EmptySet(AnnotationError):
    pass


class EmptyPositiveSet(EmptySet):
    pass


class EmptyNegativeSet(EmptySet):
    pass


class DegenerateFlow(AnnotationError):
    pass


# binary formats
class FormatError(SbfError, ValueError):
    exit_code = 7


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class HeaderMismatch(FormatError):
    pass


class ChecksumError(FormatError):
    pass


# training
class TrainingError(SbfError, RuntimeError):
    exit_code = 8


class DivergenceDetected(TrainingError):
    pass
