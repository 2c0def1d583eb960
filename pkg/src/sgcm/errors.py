"""Exception hierarchy shared by all submodules."""


class SGCMError(Exception):
    """Base class for every error raised by this package."""


class InputError(SGCMError, ValueError):
    """Malformed or inconsistent input (maps to CLI exit code 2)."""


class DimensionError(InputError):
    pass


class ShapeError(InputError):
    pass


class GridError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class ParameterError(InputError):
    pass


class SampleSizeError(InputError):
    pass


class FoldSizeError(InputError):
    pass


class SizeGuardError(InputError):
    pass


class DegenerateDataError(SGCMError, ValueError):
    """Data are valid but carry no usable variation (CLI exit code 3)."""


class InvariantError(DegenerateDataError):
    """An object violates the invariant of its space, e.g. a non-unit sphere point."""


class DegenerateGramError(DegenerateDataError):
    pass


class DegenerateDistancesError(DegenerateGramError):
    """All pairwise distances vanish, so no bandwidth can be chosen."""


class NumericalError(SGCMError, ArithmeticError):
    pass


class StudyError(SGCMError, RuntimeError):
    """A Monte Carlo replication failed; carries the replication index."""

    def __init__(self, replication, cause):
        self.replication = replication
        self.cause = cause
        super().__init__(f"replication {replication} failed: {cause!r}")
