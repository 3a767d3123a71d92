from .base import Evaluator, EvaluatorError
from .builtin import (KYTE_DOOLITTLE, Component, HydropathyEvaluator, QuadraticEvaluator,
                      WeightedEvaluator, WeightedObjective, calibrate_normalizers, hydropathy,
                      hydropathy_reward, synthetic_quadratic_reward, weighted_reward)
from .external import (EvaluatorTimeout, ExternalEvaluator, ExternalEvaluatorError,
                       ExternalEvaluatorHandle, MalformedResponse, ProcessExited, ProtocolError,
                       RemoteError, external_evaluate)

__all__ = [
    "Evaluator", "EvaluatorError", "KYTE_DOOLITTLE", "Component", "HydropathyEvaluator",
    "QuadraticEvaluator", "WeightedEvaluator", "WeightedObjective", "calibrate_normalizers",
    "hydropathy", "hydropathy_reward", "synthetic_quadratic_reward", "weighted_reward",
    "EvaluatorTimeout", "ExternalEvaluator", "ExternalEvaluatorError", "ExternalEvaluatorHandle",
    "MalformedResponse", "ProcessExited", "ProtocolError", "RemoteError", "external_evaluate",
]
