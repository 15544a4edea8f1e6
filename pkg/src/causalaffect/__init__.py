"""Attention-based feature selection and cross-domain per-frame affect regression."""
from .abfs import AbfsSelection, AttentionTcnConfig, run_abfs
from .dataset import DomainStore, FrameSeriesSample, PaddedBatch, ingest
from .experiments import ExperimentPlan, ExperimentResult, ResultsMatrix, build_grid, run_grid, run_plan
from .metrics import MetricReport, ccc, evaluate, rmse
from .profiles import DESK, PAPER, PipelineConfig, get_profile
from .regressor import LstmRegressorConfig, TrainedRegressor
from .synthgen import SyntheticSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AbfsSelection",
    "AttentionTcnConfig",
    "DESK",
    "DomainStore",
    "ExperimentPlan",
    "ExperimentResult",
    "FrameSeriesSample",
    "LstmRegressorConfig",
    "MetricReport",
    "PAPER",
    "PaddedBatch",
    "PipelineConfig",
    "ResultsMatrix",
    "SyntheticSpec",
    "TrainedRegressor",
    "build_grid",
    "ccc",
    "evaluate",
    "generate",
    "get_profile",
    "ingest",
    "rmse",
    "run_abfs",
    "run_grid",
    "run_plan",
]
