"""H-infinity model reduction for linear systems with quadratic output."""

from .errors import (DegenerateSingularValueError, DimensionError, LayoutError, LtiqoError,
                     ResolventSingularError, StructureError, UnstableSystemError,
                     UnsupportedStructureError)
from .model import (LtiqoSystem, PhqoSystem, ValidationReport, build_error_system, condense_ph,
                    phqo_to_ltiqo, validate)
from .objective import ErrorModel, FrequencySets, LevelMode, ObjectiveValue, f_lls, grad_f_lls
from .optimizer import ReduceConfig, ReductionResult, reduce
from .param import Scheme, ThetaLayout, ThetaVector, decode, decode_ltiqo, encode, layout_for
from .transfer import HinfEstimate, SamplingConfig, eval_G1, eval_G2, eval_K, hinf_estimate

__version__ = "0.1.0"

__all__ = [
    "LtiqoError", "DimensionError", "StructureError", "UnstableSystemError", "ResolventSingularError",
    "UnsupportedStructureError", "DegenerateSingularValueError", "LayoutError",
    "LtiqoSystem", "PhqoSystem", "ValidationReport", "validate", "phqo_to_ltiqo",
    "build_error_system", "condense_ph",
    "eval_G1", "eval_K", "eval_G2", "hinf_estimate", "HinfEstimate", "SamplingConfig",
    "Scheme", "ThetaLayout", "ThetaVector", "encode", "decode", "decode_ltiqo", "layout_for",
    "ErrorModel", "FrequencySets", "LevelMode", "ObjectiveValue", "f_lls", "grad_f_lls",
    "ReduceConfig", "ReductionResult", "reduce",
]
