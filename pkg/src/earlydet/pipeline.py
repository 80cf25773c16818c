"""Command implementations shared by the CLI and the test suite.

Each command reads its inputs from the resolved config, writes its declared
artifacts under the output directory, and returns the in-memory result so
callers can chain stages without re-reading files. Features extracted from
dataset audio are cached in the declared feature-file format under
``<out_dir>/features/``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import evaluate, features, gradcheck, inference, losses, model, synth, training
from .errors import ConfigurationError, MissingArtifactError
from .features import FeatureConfig
from .inference import DetectedEvent, ThresholdSet


def feature_config(cfg: dict) -> FeatureConfig:
    f = cfg["features"]
    return FeatureConfig(
        sample_rate=f["sample_rate"],
        frame_s=f["frame_s"],
        hop_s=f["hop_s"],
        num_bands=f["num_bands"],
        min_freq=f["min_freq"],
        max_freq=f["max_freq"],
        context=f["context"],
    )


def write_run_record(cfg: dict, command: str) -> Path:
    out_dir = Path(cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config_hash": config_mod.config_hash(cfg),
        "seed": cfg["training"]["seed"],
        "config": cfg,
    }
    path = out_dir / f"{command.replace('-', '_')}_config.json"
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2)
    return path


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(f"missing {what}: {path}")
    return Path(path)


# ---------------------------------------------------------------------------
# synth


def stream_spec(cfg: dict, seed: int) -> synth.StreamSpec:
    s = cfg["synth"]
    classes = synth.default_event_classes()
    if s["num_classes"] > len(classes):
        raise ConfigurationError(
            f"synth.num_classes={s['num_classes']} exceeds the "
            f"{len(classes)} built-in class generators"
        )
    return synth.StreamSpec(
        classes=classes[: s["num_classes"]],
        duration_s=s["stream_s"],
        events_per_class=s["events_per_class"],
        noise_level=s["noise_level"],
        min_gap_s=s["min_gap_s"],
        seed=seed,
        sample_rate=cfg["features"]["sample_rate"],
    )


def cmd_synth(cfg: dict) -> tuple[Path, Path]:
    """Generate the train/test datasets; per-stream seeds derive from the
    run seed (test streams offset by 10000)."""
    fcfg = feature_config(cfg)
    base = cfg["training"]["seed"]
    meta = {"config_hash": config_mod.config_hash(cfg)}
    train = [
        synth.synthesize_stream(stream_spec(cfg, base + i), fcfg)
        for i in range(cfg["synth"]["train_streams"])
    ]
    test = [
        synth.synthesize_stream(stream_spec(cfg, base + 10_000 + j), fcfg)
        for j in range(cfg["synth"]["test_streams"])
    ]
    train_manifest = config_mod.resolve_path(cfg, "train_manifest")
    test_manifest = config_mod.resolve_path(cfg, "test_manifest")
    synth.write_dataset(
        train_manifest.parent, train, train_manifest.name, prefix="train", extra_meta=meta
    )
    synth.write_dataset(
        test_manifest.parent, test, test_manifest.name, prefix="test", extra_meta=meta
    )
    return train_manifest, test_manifest


# ---------------------------------------------------------------------------
# feature cache


def _cached_features(stream: synth.AnnotatedStream, fcfg: FeatureConfig,
                     cache_dir: Path, name: str) -> np.ndarray:
    import hashlib

    cache_dir.mkdir(parents=True, exist_ok=True)
    # content-keyed so a regenerated dataset can never serve stale features
    digest = hashlib.sha256(stream.audio.samples.tobytes()).hexdigest()[:12]
    path = cache_dir / f"{name}_{digest}.f32"
    if path.exists():
        feats, meta = features.read_features(path)
        if feats.shape[1] == fcfg.feature_dim and meta["hop_s"] == fcfg.hop_s:
            return feats.astype(np.float64)
    feats = features.extract_features(stream.audio, fcfg)
    features.write_features(path, feats, fcfg)
    # train on the float32 file values so cached and fresh runs agree bit for bit
    return feats.astype(np.float32).astype(np.float64)


def load_split(cfg: dict, which: str) -> tuple[list[synth.AnnotatedStream], list[np.ndarray]]:
    manifest = _require(
        config_mod.resolve_path(cfg, f"{which}_manifest"), f"{which} manifest"
    )
    streams = synth.load_dataset(manifest)
    fcfg = feature_config(cfg)
    cache = Path(cfg["paths"]["out_dir"]) / "features"
    feats = [
        _cached_features(s, fcfg, cache, f"{which}_{i:03d}")
        for i, s in enumerate(streams)
    ]
    return streams, feats


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: dict) -> model.ModelBundle:
    streams, feats = load_split(cfg, "train")
    fcfg = feature_config(cfg)
    num_classes = cfg["synth"]["num_classes"]
    tset = synth.make_training_set(streams, num_classes, fcfg, features_list=feats)

    t = cfg["training"]
    out_dir = Path(cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    wcfg = losses.WeightedLossConfig(
        cfg["weighted_loss"]["fg"], cfg["weighted_loss"]["bg"], cfg["weighted_loss"]["reg"]
    )
    mcfg = losses.MultitaskLossConfig(
        cfg["multitask_loss"]["class"],
        cfg["multitask_loss"]["dist"],
        cfg["multitask_loss"]["conf"],
        cfg["multitask_loss"]["reg"],
    )
    log_comment = f"config_hash={config_mod.config_hash(cfg)}"
    dnn1 = training.train_dnn1(
        tset.x1, tset.y1, tset.fg, wcfg,
        training.TrainSettings(t["epochs_dnn1"], t["batch_dnn1"], t["learning_rate"], t["seed"]),
        log_path=out_dir / "train_dnn1_log.csv",
        log_comment=log_comment,
    )
    dnn2 = training.train_dnn2(
        tset.x2, tset.y2, tset.d2, num_classes, mcfg,
        training.TrainSettings(t["epochs_dnn2"], t["batch_dnn2"], t["learning_rate"], t["seed"] + 1),
        log_path=out_dir / "train_dnn2_log.csv",
        log_comment=log_comment,
    )
    bundle = model.ModelBundle(dnn1, dnn2, tset.norm, num_classes)
    model.save_checkpoint(
        config_mod.resolve_path(cfg, "checkpoint"), bundle, config_mod.config_hash(cfg)
    )
    return bundle


# ---------------------------------------------------------------------------
# calibrate


def save_thresholds(path, thresholds: ThresholdSet, config_hash: str = "-") -> None:
    doc = {
        "config_hash": config_hash,
        "betas": [float(b) for b in thresholds.betas],
        "divisors": [float(d) for d in thresholds.divisors],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_thresholds(path) -> ThresholdSet:
    path = _require(path, "thresholds file")
    with open(path) as fh:
        doc = json.load(fh)
    return ThresholdSet(np.asarray(doc["betas"]), np.asarray(doc["divisors"]))


def cmd_calibrate(cfg: dict) -> ThresholdSet:
    bundle = model.load_checkpoint(config_mod.resolve_path(cfg, "checkpoint"))
    streams, feats = load_split(cfg, "train")
    scores = evaluate.score_streams(bundle, feats, [s.events for s in streams])
    thresholds = evaluate.calibrate_thresholds(
        scores, bundle.num_classes,
        folds=cfg["calibration"]["folds"],
        grid_step=cfg["calibration"]["grid_step"],
    )
    save_thresholds(
        config_mod.resolve_path(cfg, "thresholds"), thresholds, config_mod.config_hash(cfg)
    )
    return thresholds


# ---------------------------------------------------------------------------
# detect


def cmd_detect(cfg: dict) -> Path:
    bundle = model.load_checkpoint(config_mod.resolve_path(cfg, "checkpoint"))
    thresholds = load_thresholds(config_mod.resolve_path(cfg, "thresholds"))
    streams, feats = load_split(cfg, "test")
    out_dir = Path(cfg["paths"]["out_dir"])
    out_path = out_dir / "detections.csv"
    with open(out_path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_mod.config_hash(cfg)}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["stream_id", "class", "onset_frame", "offset_frame", "peak_score", "trigger_frame"]
        )
        for sid, x in enumerate(feats):
            events, _, track = inference.run_detector(bundle, x, thresholds)
            for ev in events:
                writer.writerow(
                    [
                        sid,
                        ev.class_id,
                        ev.onset,
                        ev.offset,
                        f"{ev.peak_score:.6f}",
                        "" if ev.trigger_frame is None else ev.trigger_frame,
                    ]
                )
            if cfg["detect"]["dump_tracks"]:
                norm = inference.normalize_scores(track, thresholds)
                with open(out_dir / f"tracks_{sid:03d}.csv", "w", newline="") as tfh:
                    tfh.write(f"# config_hash={config_mod.config_hash(cfg)}\n")
                    twriter = csv.writer(tfh)
                    twriter.writerow(["n", "class", "normalized_score"])
                    for c in range(norm.shape[0]):
                        for n in range(norm.shape[1]):
                            twriter.writerow([n, c, f"{norm[c, n]:.6f}"])
    return out_path


def read_detections(path) -> dict[int, list[DetectedEvent]]:
    path = _require(path, "detections CSV")
    per_stream: dict[int, list[DetectedEvent]] = {}
    with open(path, newline="") as fh:
        rows = [r for r in fh if not r.startswith("#")]
    reader = csv.DictReader(rows)
    for row in reader:
        ev = DetectedEvent(
            int(row["class"]),
            int(row["onset_frame"]),
            int(row["offset_frame"]),
            float(row["peak_score"]),
            int(row["trigger_frame"]) if row["trigger_frame"] else None,
        )
        per_stream.setdefault(int(row["stream_id"]), []).append(ev)
    return per_stream


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(cfg: dict) -> evaluate.MetricsReport:
    out_dir = Path(cfg["paths"]["out_dir"])
    detections = read_detections(out_dir / "detections.csv")
    manifest = _require(config_mod.resolve_path(cfg, "test_manifest"), "test manifest")
    streams = synth.load_dataset(manifest)
    num_classes = cfg["synth"]["num_classes"]
    dets = [detections.get(i, []) for i in range(len(streams))]
    truths = [s.events for s in streams]
    report = evaluate.evaluate_detections(dets, truths, num_classes)
    chash = config_mod.config_hash(cfg)
    evaluate.metrics_to_json(report, out_dir / "metrics.json", chash)
    evaluate.metrics_to_csv(report, out_dir / "metrics.csv", chash)
    return report


# ---------------------------------------------------------------------------
# curves


def cmd_curves(cfg: dict) -> list[evaluate.OnlineCurve]:
    bundle = model.load_checkpoint(config_mod.resolve_path(cfg, "checkpoint"))
    thresholds = load_thresholds(config_mod.resolve_path(cfg, "thresholds"))
    streams, feats = load_split(cfg, "test")
    scores = evaluate.score_streams(bundle, feats, [s.events for s in streams])
    curves = evaluate.online_curves(
        scores, thresholds, bundle.num_classes, k_step=cfg["evaluation"]["k_step"]
    )
    out_dir = Path(cfg["paths"]["out_dir"])
    chash = config_mod.config_hash(cfg)
    evaluate.curves_to_csv(curves, out_dir / "curves.csv", chash)
    class_names = [c.name for c in synth.default_event_classes()]
    for curve in curves:
        name = class_names[curve.class_id] if curve.class_id < len(class_names) else None
        evaluate.curve_to_svg(
            curve, out_dir / f"curve_class{curve.class_id}.svg", name, chash
        )
    return curves


# ---------------------------------------------------------------------------
# check-gradients


def cmd_check_gradients(cfg: dict, num_seeds: int = 20) -> dict:
    report = gradcheck.run_suite(num_seeds=num_seeds)
    report["config_hash"] = config_mod.config_hash(cfg)
    out_dir = Path(cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "gradient_check.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return report
