"""Fairness-aware KD-tree partitioning of gridded spatial data."""

from .calibration import (
    CalibrationReport,
    RegionCalibration,
    ScoreSet,
    accuracy,
    calibration_report,
    ece,
    ence,
    region_stats,
)
from .classifiers import ClassifierSpec, FeatureMatrix, encode_features, register_classifier, reweight, train_and_score
from .index import (
    FairTree,
    SplitDecision,
    fair_kdtree,
    fairness_objective,
    iterative_fair_kdtree,
    median_kdtree,
    multi_objective_fair_kdtree,
    split_neighborhood,
)
from .spatial import (
    COL,
    ROW,
    CellIndex,
    Dataset,
    GridSpec,
    Partitioning,
    Record,
    Region,
    assign_records,
    split_region,
    validate_partitioning,
)
from .synth import BiasBlob, SynthConfig, generate

__version__ = "0.1.0"
