"""
fatformer: video transformers whose attention is forced toward segmented foreground.

The package is organized bottom-up: an autodiff core (:mod:`fatformer.tensor`,
:mod:`fatformer.ops`, :mod:`fatformer.nn`), the model parts (patching, backbone, windowed
attention, forced attention, fusion, model), then data, metrics and the experiment harness.
"""
from .errors import (  # noqa: F401
    BoundsError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    FatError,
    NumericError,
    SpecError,
    UnsupportedCombination,
)


__version__ = '0.1.0'
