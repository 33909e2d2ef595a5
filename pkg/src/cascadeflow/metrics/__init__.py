"""Fidelity, utility and privacy scores for synthetic tables."""
from .auc import auc_to_score, roc_auc
from .bivariate import TrendScores, trend_scores
from .gbdt import Gbdt, gbdt_fit, gbdt_predict
from .learners import DetectionResult, MleResult, detection_score, mle_score
from .privacy import DcrResult, MiaResult, dcr_share, mia_score
from .report import MetricReport, evaluate, report_schema, write_report
from .univariate import ShapeScores, jsd, ks_statistic, shape_scores, tvd, wasserstein1

__all__ = [
    "DcrResult", "DetectionResult", "Gbdt", "MetricReport", "MiaResult", "MleResult", "ShapeScores",
    "TrendScores", "auc_to_score", "dcr_share", "detection_score", "evaluate", "gbdt_fit", "gbdt_predict",
    "jsd", "ks_statistic", "mia_score", "mle_score", "report_schema", "roc_auc", "shape_scores",
    "trend_scores", "tvd", "wasserstein1", "write_report",
]
