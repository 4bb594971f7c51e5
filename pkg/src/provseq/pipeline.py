"""End-to-end orchestration: sketch -> train -> extract -> detect -> eval.

Every stage writes its artifacts under the run's output directory and
can be re-run individually; composing the stages one by one reproduces
exactly what :func:`run_pipeline` writes. All randomness flows through
the named seeds in the config, so a rerun with the same config and
inputs reproduces every numeric output byte for byte.

Layout of a run directory::

    config.json                  verbatim copy of the run's config
    sequences/<gid>.fsq          one feature-sequence container per graph
    sequences/index.csv
    fraction_<f>/split.json      train/test graph ids
    fraction_<f>/model.ckpt      autoencoder checkpoint
    fraction_<f>/loss_curve.csv|png
    fraction_<f>/features.csv    context feature vectors (all graphs)
    fraction_<f>/detector.bin    fitted detector state
    fraction_<f>/scores.csv      graph_id,SS,IS,TS,AS,label (test batch)
    fraction_<f>/pr_curve.csv|png
    fraction_<f>/summary.json
    report.json                  one PR area per train fraction
"""

from __future__ import annotations

import dataclasses
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .autoencoder import (
    ModelConfig,
    TrainConfig,
    extract_features,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .detector import DetectorConfig, HybridDetector, save_detector
from .errors import DataError, StageFailure, UsageError
from .evaluation import pr_curve, scores_from_anomaly_values, split_dataset
from .ingest import load_manifest, stream_graphs
from .sketch import (
    SketchConfig,
    build_feature_sequence,
    load_feature_sequence,
    save_feature_sequence,
)


@dataclass(frozen=True)
class EvalConfig:
    train_fractions: tuple = (0.25,)
    split_seed: int = 101
    auc_method: str = "trapezoid"

    def to_dict(self) -> dict:
        return {"train_fractions": list(self.train_fractions),
                "split_seed": self.split_seed, "auc_method": self.auc_method}


@dataclass(frozen=True)
class PipelineConfig:
    data_path: str
    manifest_path: str
    output_dir: str
    data_format: str = "streamspot_tsv"
    sketch: SketchConfig = field(default_factory=SketchConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(input_dim=2000))
    training: TrainConfig = field(default_factory=TrainConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return {
            "data_path": self.data_path,
            "manifest_path": self.manifest_path,
            "output_dir": self.output_dir,
            "data_format": self.data_format,
            "sketch": dataclasses.asdict(self.sketch),
            "model": self.model.to_dict(),
            "training": dataclasses.asdict(self.training),
            "detector": self.detector.to_dict(),
            "evaluation": self.evaluation.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        try:
            kwargs = {
                "data_path": obj["data_path"],
                "manifest_path": obj["manifest_path"],
                "output_dir": obj["output_dir"],
            }
        except KeyError as exc:
            raise UsageError(f"config missing required key: {exc.args[0]}") from exc
        if "data_format" in obj:
            kwargs["data_format"] = obj["data_format"]
        if "sketch" in obj:
            kwargs["sketch"] = SketchConfig(**obj["sketch"])
        if "model" in obj:
            kwargs["model"] = ModelConfig(**obj["model"])
        if "training" in obj:
            kwargs["training"] = TrainConfig(**obj["training"])
        if "detector" in obj:
            kwargs["detector"] = DetectorConfig.from_dict(obj["detector"])
        if "evaluation" in obj:
            ev = dict(obj["evaluation"])
            if "train_fractions" in ev:
                ev["train_fractions"] = tuple(ev["train_fractions"])
            kwargs["evaluation"] = EvalConfig(**ev)
        model_cfg = kwargs.get("model", ModelConfig(input_dim=2000))
        sketch_cfg = kwargs.get("sketch", SketchConfig())
        if model_cfg.input_dim != sketch_cfg.sketch_len:
            raise UsageError(
                f"model.input_dim ({model_cfg.input_dim}) must equal "
                f"sketch.sketch_len ({sketch_cfg.sketch_len})"
            )
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)


def fraction_dir(cfg: PipelineConfig, fraction: float) -> Path:
    return Path(cfg.output_dir) / f"fraction_{fraction}"


def _sequence_paths(cfg: PipelineConfig) -> Path:
    return Path(cfg.output_dir) / "sequences"


def _write_config_copy(cfg: PipelineConfig, config_source: Path | None) -> None:
    out = Path(cfg.output_dir) / "config.json"
    if config_source is not None:
        shutil.copyfile(config_source, out)
    else:
        report.write_json(cfg.to_dict(), out)


def stage_sketch(cfg: PipelineConfig) -> Path:
    """Ingest the edge stream and write one feature sequence per graph."""
    data_path = Path(cfg.data_path)
    if not data_path.exists():
        raise DataError(f"dataset not found: {data_path}")
    manifest = load_manifest(cfg.manifest_path)
    seq_dir = _sequence_paths(cfg)
    seq_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for graph in stream_graphs(data_path, format=cfg.data_format, labels=manifest):
        seq = build_feature_sequence(graph, cfg.sketch)
        save_feature_sequence(seq, seq_dir / f"{graph.graph_id}.fsq")
        rows.append((graph.graph_id, seq.n, seq.d))
    if not rows:
        raise DataError(f"dataset {data_path} contained no graphs")
    with open(seq_dir / "index.csv", "w", encoding="utf-8") as fh:
        fh.write("graph_id,n,d\n")
        for gid, n, d in sorted(rows):
            fh.write(f"{gid},{n},{d}\n")
    return seq_dir


def _load_sequences(cfg: PipelineConfig) -> dict:
    seq_dir = _sequence_paths(cfg)
    index = seq_dir / "index.csv"
    if not index.exists():
        raise DataError(f"no sketch output at {seq_dir}; run the sketch stage first")
    sequences = {}
    with open(index, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            gid = line.split(",")[0]
            sequences[gid] = load_feature_sequence(seq_dir / f"{gid}.fsq")
    return sequences


def stage_train(cfg: PipelineConfig, fraction: float) -> Path:
    """Split the manifest, train on the benign training sequences, and
    write split, checkpoint, and loss curve artifacts."""
    manifest = load_manifest(cfg.manifest_path)
    sequences = _load_sequences(cfg)
    missing = sorted(set(manifest) - set(sequences))
    if missing:
        raise DataError(f"manifest graphs without sequences: {missing[:5]}")
    train_ids, test_ids = split_dataset(manifest, fraction, cfg.evaluation.split_seed)
    fdir = fraction_dir(cfg, fraction)
    fdir.mkdir(parents=True, exist_ok=True)
    report.write_json({"fraction": fraction, "split_seed": cfg.evaluation.split_seed,
                       "train": train_ids, "test": test_ids}, fdir / "split.json")
    model, losses = train([sequences[g] for g in train_ids], cfg.model, cfg.training)
    save_checkpoint(model, fdir / "model.ckpt")
    report.write_loss_csv(losses, fdir / "loss_curve.csv")
    if losses:
        report.render_loss_figure(losses, fdir / "loss_curve.png",
                                  title=f"training loss (fraction {fraction})")
    return fdir


def stage_extract(cfg: PipelineConfig, fraction: float) -> Path:
    """Run the frozen encoder over every graph's sequence."""
    fdir = fraction_dir(cfg, fraction)
    ckpt = fdir / "model.ckpt"
    if not ckpt.exists():
        raise DataError(f"no checkpoint at {ckpt}; run the train stage first")
    model = load_checkpoint(ckpt)
    sequences = _load_sequences(cfg)
    gids = sorted(sequences)
    features = np.vstack([extract_features(model, sequences[g]) for g in gids])
    report.write_features_csv(gids, features, fdir / "features.csv")
    return fdir


def _load_split(fdir: Path) -> tuple[list, list]:
    split_path = fdir / "split.json"
    if not split_path.exists():
        raise DataError(f"no split at {split_path}; run the train stage first")
    with open(split_path, "r", encoding="utf-8") as fh:
        split = json.load(fh)
    return split["train"], split["test"]


def stage_detect(cfg: PipelineConfig, fraction: float) -> Path:
    """Fit the detector on the training features and score the test batch."""
    fdir = fraction_dir(cfg, fraction)
    feat_path = fdir / "features.csv"
    gids, features = report.read_features_csv(feat_path)
    position = {g: i for i, g in enumerate(gids)}
    train_ids, test_ids = _load_split(fdir)
    detector = HybridDetector(cfg.detector)
    detector.fit(features[[position[g] for g in train_ids]])
    save_detector(detector, fdir / "detector.bin")
    bundle = detector.score(features[[position[g] for g in test_ids]])
    report.write_scores_csv(test_ids, bundle, fdir / "scores.csv")
    report.write_json({
        "alpha": bundle.alpha,
        "alpha_mode": bundle.alpha_mode,
        "theta": bundle.theta,
        "calibration_count": bundle.calibration_count,
        "forest_sample_size": bundle.forest_sample_size,
        "anomaly_normalisation_batch": "test",
        "selected_k": detector.cluster_model.diagnostics.get("selected_k"),
        "per_k": detector.cluster_model.diagnostics.get("per_k"),
    }, fdir / "detector_meta.json")
    return fdir


def stage_eval(cfg: PipelineConfig, fraction: float) -> dict:
    """Turn the scored test batch into a PR curve, figures, and a summary."""
    fdir = fraction_dir(cfg, fraction)
    gids, cols = report.read_scores_csv(fdir / "scores.csv")
    manifest = load_manifest(cfg.manifest_path)
    anomaly_direction = 1.0 - cols["AS"]  # normal points normalise to 1
    labeled = scores_from_anomaly_values(gids, anomaly_direction, manifest)
    curve = pr_curve(labeled, auc_method=cfg.evaluation.auc_method)
    report.write_pr_csv(curve, fdir / "pr_curve.csv")
    report.render_pr_figure(curve, fdir / "pr_curve.png",
                            title=f"train fraction {fraction}")
    report.render_score_figure([s.truth for s in labeled],
                               [s.score for s in labeled],
                               fdir / "score_hist.png",
                               title=f"score separation (fraction {fraction})")
    summary = {
        "train_fraction": fraction,
        "pr_auc": curve.auc,
        "n_test": len(labeled),
        "n_attack": sum(1 for s in labeled if s.truth == "attack"),
        "score_direction": "1-AS",
        "auc_method": cfg.evaluation.auc_method,
        "split_seed": cfg.evaluation.split_seed,
    }
    report.write_json(summary, fdir / "summary.json")
    return summary


_STAGES = ("sketch", "train", "extract", "detect", "eval")


def run_stage(cfg: PipelineConfig, stage: str, fraction: float | None = None):
    """Dispatch one named stage (per-fraction stages loop when fraction
    is None)."""
    if stage == "sketch":
        return stage_sketch(cfg)
    fractions = [fraction] if fraction is not None else list(cfg.evaluation.train_fractions)
    fns = {"train": stage_train, "extract": stage_extract,
           "detect": stage_detect, "eval": stage_eval}
    if stage not in fns:
        raise UsageError(f"unknown stage {stage!r}; expected one of {_STAGES}")
    results = [fns[stage](cfg, f) for f in fractions]
    return results if fraction is None else results[0]


def run_pipeline(cfg: PipelineConfig, config_source=None) -> dict:
    """Execute every stage and assemble the final report.

    ``config_source`` (optional path) is copied verbatim next to the
    artifacts for provenance; otherwise the canonical JSON form is
    written. Returns the report dict (also written as report.json).
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config_copy(cfg, Path(config_source) if config_source else None)

    def guarded(stage: str, fn, *args):
        try:
            return fn(*args)
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure(stage, str(out), exc) from exc

    guarded("sketch", stage_sketch, cfg)
    fractions = {}
    for fraction in cfg.evaluation.train_fractions:
        guarded("train", stage_train, cfg, fraction)
        guarded("extract", stage_extract, cfg, fraction)
        guarded("detect", stage_detect, cfg, fraction)
        summary = guarded("eval", stage_eval, cfg, fraction)
        fractions[str(fraction)] = summary
    report_doc = {
        "fractions": fractions,
        "data_path": cfg.data_path,
        "data_format": cfg.data_format,
        "seeds": {
            "sketch": cfg.sketch.seed,
            "model": cfg.model.seed,
            "training": cfg.training.seed,
            "detector": cfg.detector.seed,
            "split": cfg.evaluation.split_seed,
        },
    }
    report.write_json(report_doc, out / "report.json")
    return report_doc
