"""provseq: provenance edge streams -> sketch sequences -> transformer
autoencoder features -> hybrid anomaly scores -> PR evaluation."""

from .ingest import (
    EdgeRecord,
    GraphStream,
    load_manifest,
    parse_edge_line,
    serialize_edge_line,
    stream_graphs,
)
from .sketch import (
    CwsSampler,
    FeatureSequence,
    Sketch,
    SketchConfig,
    StreamingHistogram,
    WlLabelState,
    build_feature_sequence,
    sketch_histogram,
    sketch_match_fraction,
)
from .autoencoder import (
    ModelConfig,
    SequenceAutoencoder,
    TrainConfig,
    extract_features,
    positional_encoding,
    scaled_dot_product_attention,
    train,
)
from .detector import (
    ClusterModel,
    DetectorConfig,
    HybridDetector,
    IsolationForest,
    anomaly_scores,
    benign_percentile_alpha,
    calibrate_alpha,
    classify,
    iforest_fit,
    isolation_score,
    kmeans_fit,
    select_k,
    similarity_score,
    total_score,
)
from .evaluation import LabeledScore, PrCurve, confusion, pr_auc, pr_curve, split_dataset
from .synthetic import CorpusConfig, generate_synthetic_corpus
from .pipeline import EvalConfig, PipelineConfig, run_pipeline, run_stage

__version__ = "0.1.0"

__all__ = [
    "EdgeRecord", "GraphStream", "load_manifest", "parse_edge_line",
    "serialize_edge_line", "stream_graphs",
    "CwsSampler", "FeatureSequence", "Sketch", "SketchConfig",
    "StreamingHistogram", "WlLabelState", "build_feature_sequence",
    "sketch_histogram", "sketch_match_fraction",
    "ModelConfig", "SequenceAutoencoder", "TrainConfig", "extract_features",
    "positional_encoding", "scaled_dot_product_attention", "train",
    "ClusterModel", "DetectorConfig", "HybridDetector", "IsolationForest",
    "anomaly_scores", "benign_percentile_alpha", "calibrate_alpha", "classify",
    "iforest_fit", "isolation_score", "kmeans_fit", "select_k",
    "similarity_score", "total_score",
    "LabeledScore", "PrCurve", "confusion", "pr_auc", "pr_curve", "split_dataset",
    "CorpusConfig", "generate_synthetic_corpus",
    "EvalConfig", "PipelineConfig", "run_pipeline", "run_stage",
    "__version__",
]
