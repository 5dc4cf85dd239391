"""The four learning algorithms behind the two-layer procedure."""

from pomh.classifiers.counting import CountingParams, child_score, counting_threshold
from pomh.classifiers.forest import ForestModel, rf_fit, rf_predict
from pomh.classifiers.glm import FIRST_LAYER_SCOPE, GlmModel, glm_fit, glm_predict
from pomh.classifiers.svm import SvmModel, kkt_violation, svm_fit, svm_predict

__all__ = [
    "CountingParams",
    "child_score",
    "counting_threshold",
    "ForestModel",
    "rf_fit",
    "rf_predict",
    "FIRST_LAYER_SCOPE",
    "GlmModel",
    "glm_fit",
    "glm_predict",
    "SvmModel",
    "kkt_violation",
    "svm_fit",
    "svm_predict",
]
