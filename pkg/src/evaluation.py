# =====================================================
# EVALUATION MODULE
# =====================================================
#
# One-pass evaluation (OPE) and the standard tracking metrics.
#
# OPE: initialize on the first frame's ground truth, run every
# later frame once, never re-initialize.
#
# THE METRICS:
# ------------
# 1. Center location error (CLE): distance between predicted and
#    annotated box centers, in pixels
# 2. Overlap (IoU): intersection area / union area
# 3. Precision curve: fraction of frames with CLE <= t for
#    t = 0..50 px. The value at 20 px is THE precision score
# 4. Success curve: fraction of frames with IoU > t for
#    t = 0, 0.02, ..., 1. Its mean is the AUC
# 5. Success rate: fraction of frames with IoU > 0.5
#
# Frames whose ground truth is absent are left out of every
# average (they show up as null in metrics.json).
#
# =====================================================

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import DataError
from src.features import external_channel_path, load_external_channels
from src.sequences import AnnotatedSequence, Box, load_sequence
from src.solver import TraceRow, write_trace_csv
from src.spectral import Grid2
from src.tracker import DecisionRecord, Tracker, TrackerConfig, write_decisions_csv

logger = logging.getLogger(__name__)

PRECISION_THRESHOLDS = np.arange(51, dtype=float)
SUCCESS_THRESHOLDS = np.arange(51) / 50.0
PRECISION_HEADLINE_PX = 20


# =====================================================
# TYPES
# =====================================================

@dataclass
class TrackResult:
    """Per-frame output of one tracking run."""

    boxes: list[Box]
    decisions: list[DecisionRecord] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)
    lost_frames: int = 0

    def __len__(self) -> int:
        return len(self.boxes)


class PrecisionCurve(NamedTuple):
    thresholds: np.ndarray
    values: np.ndarray
    score_at_20: float


class SuccessCurve(NamedTuple):
    thresholds: np.ndarray
    values: np.ndarray
    auc: float


# =====================================================
# PER-FRAME MEASURES
# =====================================================

def _boxes(result) -> list[Box]:
    return result.boxes if isinstance(result, TrackResult) else list(result)


def _paired(result, truth) -> tuple[list[Box], list[Box]]:
    predicted, truth = _boxes(result), list(truth)
    if len(predicted) != len(truth):
        raise DataError(f"{len(predicted)} tracked boxes for {len(truth)} truth boxes")
    return predicted, truth


def center_error(result, truth) -> tuple[np.ndarray, float]:
    """
    Euclidean center distance per frame.

    RETURNS:
    --------
    (np.ndarray, float)
        Per-frame errors (NaN where truth is absent) and their
        mean over the remaining frames (NaN if there are none).
    """
    predicted, truth = _paired(result, truth)
    errors = np.full(len(truth), np.nan)
    for i, (p, t) in enumerate(zip(predicted, truth)):
        if not t.is_absent:
            (px, py), (tx, ty) = p.center, t.center
            errors[i] = math.hypot(px - tx, py - ty)
    valid = errors[~np.isnan(errors)]
    return errors, float(valid.mean()) if valid.size else math.nan


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint or absent."""
    if a.is_absent or b.is_absent:
        return 0.0
    inter_w = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    inter_h = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def overlap(result, truth) -> np.ndarray:
    """IoU per frame, NaN where truth is absent."""
    predicted, truth = _paired(result, truth)
    return np.array([
        math.nan if t.is_absent else box_iou(p, t)
        for p, t in zip(predicted, truth)
    ])


# =====================================================
# CURVES
# =====================================================

def _valid(values, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    values = values[~np.isnan(values)]
    if values.size == 0:
        raise DataError(f"no {what} to evaluate")
    return values


def precision_curve(errors, thresholds=PRECISION_THRESHOLDS) -> PrecisionCurve:
    """
    Fraction of frames with CLE <= t, for every threshold t.

    EXAMPLE:
    --------
    >>> precision_curve([5, 15, 25, 45]).score_at_20
    0.5
    """
    errors = _valid(errors, "center errors")
    thresholds = np.asarray(thresholds, dtype=float)
    values = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    score = float((errors <= PRECISION_HEADLINE_PX).mean())
    return PrecisionCurve(thresholds, values, score)


def success_curve(overlaps, thresholds=SUCCESS_THRESHOLDS) -> SuccessCurve:
    """Fraction of frames with IoU > t; AUC is the mean over the grid."""
    overlaps = _valid(overlaps, "overlaps")
    thresholds = np.asarray(thresholds, dtype=float)
    values = (overlaps[None, :] > thresholds[:, None]).mean(axis=1)
    return SuccessCurve(thresholds, values, float(values.mean()))


def success_rate(overlaps, threshold: float = 0.5) -> float:
    """Fraction of frames with IoU > threshold."""
    overlaps = _valid(overlaps, "overlaps")
    return float((overlaps > threshold).mean())


def evaluate(result, truth) -> dict:
    """
    Every metric for one run, as a JSON-ready dict.

    RETURNS:
    --------
    dict with keys:
        frames, valid_frames, precision_at_20, auc, success_rate_50,
        mean_cle, center_errors, overlaps, precision_curve, success_curve
    """
    errors, mean_cle = center_error(result, truth)
    overlaps = overlap(result, truth)
    precision = precision_curve(errors)
    success = success_curve(overlaps)

    return {
        "frames": len(errors),
        "valid_frames": int(np.sum(~np.isnan(errors))),
        "precision_at_20": precision.score_at_20,
        "auc": success.auc,
        "success_rate_50": success_rate(overlaps),
        "mean_cle": mean_cle,
        "center_errors": _json_list(errors),
        "overlaps": _json_list(overlaps),
        "precision_curve": _json_list(precision.values),
        "success_curve": _json_list(success.values),
    }


def _json_list(values) -> list:
    return [None if math.isnan(v) else float(v) for v in np.asarray(values, dtype=float)]


# =====================================================
# ONE-PASS EVALUATION
# =====================================================

def _external_channels(sequence: AnnotatedSequence, index: int, frame: np.ndarray, config: TrackerConfig):
    features = config.features
    if features.backend != "external":
        return None
    expected = Grid2(frame.shape[0] // features.cell_size, frame.shape[1] // features.cell_size)
    path = external_channel_path(features.external_dir, sequence.frame_name(index))
    return load_external_channels(path, expected, features.cell_size)


def run_ope(sequence: AnnotatedSequence, config: TrackerConfig | None = None) -> tuple[TrackResult, dict]:
    """
    Track a whole sequence once from its first ground-truth box.

    PARAMETERS:
    -----------
    sequence : AnnotatedSequence
        Must have a ground-truth box on the first frame.
    config : TrackerConfig, optional
        Defaults from config.py when omitted.

    RETURNS:
    --------
    (TrackResult, dict)
        The per-frame boxes/decisions and the metrics from evaluate().
    """
    config = config or TrackerConfig()
    tracker = Tracker(config)
    started = time.perf_counter()

    frame = sequence.read_frame(0)
    boxes = [tracker.init(frame, sequence.initial_box, _external_channels(sequence, 0, frame, config))]
    for index in range(1, len(sequence)):
        frame = sequence.read_frame(index)
        boxes.append(tracker.update(frame, _external_channels(sequence, index, frame, config)))

    elapsed = time.perf_counter() - started
    result = TrackResult(boxes, tracker.decisions, tracker.trace, tracker.lost_frames)
    metrics = evaluate(result, [sequence.truth_at(i) for i in range(len(sequence))])

    logger.info(
        "%s: %d frames in %.2fs (%.1f fps), precision@20 %.3f, AUC %.3f, mean CLE %.2f px",
        sequence.name, len(sequence), elapsed, len(sequence) / max(elapsed, 1e-9),
        metrics["precision_at_20"], metrics["auc"], metrics["mean_cle"],
    )
    return result, metrics


# =====================================================
# OUTPUT FILES
# =====================================================

def write_metrics(result: TrackResult, metrics: dict, out_dir) -> None:
    """
    Write metrics.json, curves.csv and boxes.csv.

    curves.csv row i holds precision at i px and success at IoU
    threshold i / 50.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "metrics.json", "w") as f:
        json.dump(metrics, f, indent=2)

    with open(out_dir / "curves.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "precision", "success"])
        for i, (p, s) in enumerate(zip(metrics["precision_curve"], metrics["success_curve"])):
            writer.writerow([i, repr(p), repr(s)])

    with open(out_dir / "boxes.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "x", "y", "w", "h"])
        for frame, box in enumerate(result.boxes, start=1):
            writer.writerow([frame] + [repr(float(v)) for v in box.as_tuple()])


def write_outputs(result: TrackResult, metrics: dict, out_dir, trace: bool = False) -> None:
    """write_metrics plus decisions.csv (and solver_trace.csv when tracing)."""
    write_metrics(result, metrics, out_dir)
    write_decisions_csv(result.decisions, Path(out_dir) / "decisions.csv")
    if trace:
        write_trace_csv(result.trace, Path(out_dir) / "solver_trace.csv")


def headline(name: str, result: TrackResult, metrics: dict) -> dict:
    """The numbers summary.json keeps per sequence."""
    return {
        "name": name,
        "frames": metrics["frames"],
        "precision_at_20": metrics["precision_at_20"],
        "auc": metrics["auc"],
        "success_rate_50": metrics["success_rate_50"],
        "mean_cle": None if math.isnan(metrics["mean_cle"]) else metrics["mean_cle"],
        "lost_frames": result.lost_frames,
    }


# =====================================================
# BATCH OPE
# =====================================================

def track_directory(directory, config: TrackerConfig, out_dir) -> dict:
    """Load, track and write one sequence directory; returns its headline."""
    sequence = load_sequence(directory)
    result, metrics = run_ope(sequence, config)
    write_outputs(result, metrics, out_dir, trace=config.trace)
    return headline(sequence.name, result, metrics)


def run_batch(directories, config: TrackerConfig, out_dir, jobs: int = 1) -> list[dict]:
    """
    OPE over several sequences, each written to out_dir/<name>/.

    Sequences run in parallel processes when jobs > 1; the frames
    of one sequence are always tracked in order. summary.json in
    out_dir lists every sequence's headline numbers.
    """
    out_dir = Path(out_dir)
    directories = [Path(d) for d in directories]
    targets = [out_dir / d.name for d in directories]

    if jobs > 1 and len(directories) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(track_directory, directories, [config] * len(directories), targets))
    else:
        summaries = [track_directory(d, config, t) for d, t in zip(directories, targets)]

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as f:
        json.dump({"sequences": summaries}, f, indent=2)
    return summaries
