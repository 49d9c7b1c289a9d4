"""Exception hierarchy shared by every fatformer module."""


class FatError(Exception):
    """Base error class for all fatformer errors."""


class DimensionError(FatError, ValueError):
    """Represents errors due to incompatible shapes or extents."""


class ContractError(FatError, ValueError):
    """Represents a violated precondition that is not a shape mismatch."""


class BoundsError(FatError, IndexError):
    """Represents errors due to out-of-range indices."""


class UnsupportedCombination(FatError):
    """Represents a requested combination of features that cannot be honoured."""


class ConfigError(FatError):
    """Represents errors in experiment, model or processor configuration."""


class SpecError(ConfigError):
    """Represents errors in a synthetic data generation spec."""


class DataError(FatError):
    """Represents errors due to malformed or missing input data."""


class NumericError(FatError, ArithmeticError):
    """Represents a numeric failure such as a non-finite training loss."""

    def __init__(
            self,
            message,  # type: str
            epoch=None,  # type: int
            batch=None,  # type: int
            max_abs_grad=None  # type: float
    ):
        # type: (...) -> None
        super(NumericError, self).__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.max_abs_grad = max_abs_grad


def shape_mismatch(what, *shapes):
    # type: (str, *object) -> DimensionError
    """
    Build a DimensionError naming every shape involved.

    >>> str(shape_mismatch('matmul', (2, 3), (4, 5)))
    'matmul: incompatible shapes (2, 3) and (4, 5)'
    """
    shape_text = ' and '.join(str(tuple(shape)) for shape in shapes)
    return DimensionError('{}: incompatible shapes {}'.format(what, shape_text))
