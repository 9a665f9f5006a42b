# =====================================================
# TRACKER MODULE
# =====================================================
#
# The per-frame loop of the consensus tracker.
#
# FRAME 1 (initialize):
#   features at the given box -> learn the first filter ->
#   correlate it with those same features to get the IDEAL
#   response map (what a confident detection looks like)
#
# EVERY LATER FRAME (step):
#   1. detect    - correlate the filter with the search window at
#                  several scales, interpolate, take the best peak
#                  (each peak divided by its window's feature norm)
#   2. consensus - C = exp(-||M_ideal - M_curr||^2): how much the
#                  current response looks like the ideal one.
#                  Both maps are zero-mean and unit-norm, and
#                  M_curr is shifted so its peak sits where the
#                  ideal one does, so C scores the SHAPE of the
#                  response: ~1 for a clean detection, near
#                  exp(-2) for a response uncorrelated with the ideal
#   3. update    - gate the learning on C:
#                     C > threshold_high  -> boosted rate eta_high
#                     C > threshold_low   -> normal rate eta_low
#                     otherwise           -> learn nothing
#                  When learning, appearance and ideal response are
#                  blended toward the current frame and the filter
#                  is re-trained (warm-started) on the new appearance.
#
# Low consensus usually means occlusion or drift, so the model
# simply stops absorbing what it sees until the target is back.
#
# All functions are pure: they return a new TrackerState. The
# Tracker class at the bottom is a small stateful convenience.
#
# =====================================================

import csv
import logging
import math
import sys
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    ETA_HIGH,
    ETA_LOW,
    GAMMA,
    NUM_SCALES,
    SCALE_PENALTY,
    SCALE_STEP,
    SEARCH_PADDING,
    THRESHOLD_HIGH,
    THRESHOLD_LOW,
)

from src.errors import DataError, ExternalChannelsError, GridMismatchError, LostTargetError
from src.features import (
    FeatureConfig,
    FeatureStack,
    ModelGeometry,
    SpectralStack,
    apply_window,
    compute_features,
    extract_patch,
    model_geometry,
    sample_external_window,
    stack_spectrum,
)
from src.sequences import Box
from src.solver import (
    AdmmState,
    DesiredResponse,
    FilterBank,
    PenalizationMask,
    SolverConfig,
    TraceRow,
    make_desired_response,
    make_penalization_mask,
    run_admm,
)
from src.spectral import Grid2, fractional_shift, inverse_dft2, upsample_spectrum

logger = logging.getLogger(__name__)


# =====================================================
# CONFIGURATION
# =====================================================

class UpdateConfig(BaseModel):
    """Consensus gate thresholds and learning rates."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    threshold_high: float = Field(THRESHOLD_HIGH, gt=0, lt=1)
    threshold_low: float = Field(THRESHOLD_LOW, gt=0, lt=1)
    eta_high: float = Field(ETA_HIGH, gt=0, le=1)
    eta_low: float = Field(ETA_LOW, gt=0, le=1)
    gamma: float = Field(GAMMA, gt=0, le=1)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.threshold_low < self.threshold_high:
            raise ValueError("threshold_low must be below threshold_high")
        if not self.eta_low <= self.eta_high:
            raise ValueError("eta_low must not exceed eta_high")
        return self


class ScaleConfig(BaseModel):
    """Multi-scale search."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_scales: int = Field(NUM_SCALES, ge=1)
    scale_step: float = Field(SCALE_STEP, gt=1)
    search_padding: float = Field(SEARCH_PADDING, gt=1)
    # Multiplies the peak of every scale other than the current one
    scale_penalty: float = Field(SCALE_PENALTY, gt=0, le=1)

    @field_validator("num_scales")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("num_scales must be odd")
        return value

    def factors(self) -> np.ndarray:
        """Scale multipliers, centered on 1.0."""
        exponents = np.arange(self.num_scales) - self.num_scales // 2
        return self.scale_step ** exponents.astype(float)


class TrackerConfig(BaseModel):
    """Everything the tracker needs, one section per concern."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    solver: SolverConfig = SolverConfig()
    update: UpdateConfig = UpdateConfig()
    scale: ScaleConfig = ScaleConfig()
    features: FeatureConfig = FeatureConfig()
    trace: bool = False


# =====================================================
# TYPES
# =====================================================

@dataclass(frozen=True)
class ResponseMap:
    """A real correlation output; zero displacement sits at the grid center."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        self.grid.check(values, "response")
        if not np.all(np.isfinite(values)):
            raise DataError("response map contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DecisionRecord:
    """What the gate decided on one frame."""

    frame: int
    center_x: float
    center_y: float
    scale: float
    consensus: float
    eta_used: float
    learned: bool


@dataclass(frozen=True)
class Detection:
    """
    Result of one detect call.

    center        new target center in frame pixels
    scale         winning absolute scale
    response      winning pre-interpolation response (M_curr)
    offset_cells  peak displacement from the grid center, in cells
    score         winning peak over feature norm (after scale penalty)
    scale_index   index of the winning scale factor
    """

    center: tuple[float, float]
    scale: float
    response: ResponseMap
    offset_cells: tuple[float, float]
    score: float
    scale_index: int


@dataclass(frozen=True)
class TrackerState:
    """
    The tracker between frames.

    appearance and ideal_response are the two learned models;
    label, mask and geometry are fixed at initialization.
    """

    center: tuple[float, float]
    target_size: tuple[float, float]
    scale: float
    appearance: SpectralStack
    ideal_response: ResponseMap
    filter: FilterBank
    admm: AdmmState
    frame_index: int
    geometry: ModelGeometry
    label: DesiredResponse
    mask: PenalizationMask
    config: TrackerConfig
    decision: DecisionRecord | None = None
    trace: tuple[TraceRow, ...] = ()

    @property
    def box(self) -> Box:
        size = (self.target_size[0] * self.scale, self.target_size[1] * self.scale)
        return Box.from_center(self.center, size)


# =====================================================
# FEATURES AT A WINDOW
# =====================================================

def window_features(
    frame: np.ndarray,
    center,
    scale: float,
    geometry: ModelGeometry,
    config: FeatureConfig,
    external: FeatureStack | None = None,
) -> FeatureStack:
    """
    Windowed features of the search window around `center`.

    For the external backend `external` holds the frame's
    full-frame channels (see features.load_external_channels).
    """
    if config.backend == "external":
        if external is None:
            raise ExternalChannelsError("the external backend needs the frame's channel file")
        stack = sample_external_window(external, center, geometry.window_size, scale, geometry)
    else:
        patch = extract_patch(frame, center, geometry.window_size, scale, geometry.patch_shape)
        stack = compute_features(patch, config)
    geometry.outer.check(stack.data, "features")
    return apply_window(stack, config.window)


# =====================================================
# RESPONSES
# =====================================================

def response_map(filter_bank: FilterBank, features: SpectralStack) -> ResponseMap:
    """
    Correlate the filter with one window's features.

        R(n) = sum_d sum_k g_d(k) z_d(k + n)  =  idft2(sum_d z_hat_d conj(g_hat_d))

    A target displaced by +n cells in the window moves the peak by
    +n. The map is fftshifted, so zero displacement sits at
    (H // 2, W // 2).
    """
    if features.data.shape != filter_bank.spectral.shape:
        raise GridMismatchError(
            f"features {features.data.shape} do not match filter {filter_bank.spectral.shape}"
        )
    spectrum = np.sum(features.data * np.conj(filter_bank.spectral), axis=0)
    values = np.fft.fftshift(inverse_dft2(spectrum).real)
    return ResponseMap(features.grid, values)


def consensus(ideal: ResponseMap, current: ResponseMap) -> float:
    """
    C = exp(-||ideal - current||^2), squared Frobenius norm.

    EXAMPLE:
    --------
    >>> consensus(m, m)
    1.0
    """
    if ideal.grid != current.grid:
        raise GridMismatchError(f"response grids differ: {ideal.grid} vs {current.grid}")
    distance = float(np.sum((ideal.values - current.values) ** 2))
    # exp underflows past ~745; C stays strictly positive
    return max(math.exp(-distance), sys.float_info.min)


def align_response(current: ResponseMap, offset_cells) -> ResponseMap:
    """Shift a response back by its peak offset so the peak sits at the center."""
    if offset_cells[0] == 0 and offset_cells[1] == 0:
        return current
    shifted = fractional_shift(current.values, (-offset_cells[0], -offset_cells[1]))
    return ResponseMap(current.grid, shifted)


def normalize_response(response: ResponseMap) -> ResponseMap:
    """
    Zero-mean, unit-Frobenius-norm copy of a response.

    Two normalized maps are at squared distance 2 * (1 - rho), rho
    being their correlation coefficient. A constant map becomes all
    zeros.
    """
    centered = response.values - response.values.mean()
    norm = float(np.linalg.norm(centered))
    if norm == 0.0:
        return ResponseMap(response.grid, np.zeros_like(centered))
    return ResponseMap(response.grid, centered / norm)


# =====================================================
# INITIALIZATION
# =====================================================

def _check_box(frame: np.ndarray, box: Box) -> None:
    if box.is_absent or not all(math.isfinite(v) for v in box.as_tuple()):
        raise DataError(f"degenerate initial box {box.as_tuple()}")
    cx, cy = box.center
    height, width = frame.shape[:2]
    if not (0 <= cx <= width and 0 <= cy <= height):
        raise DataError(f"initial box center {box.center} lies outside the {width}x{height} frame")


def initialize(
    frame: np.ndarray,
    init_box: Box,
    config: TrackerConfig | None = None,
    external: FeatureStack | None = None,
) -> TrackerState:
    """
    Learn the first filter and the ideal response.

    PARAMETERS:
    -----------
    frame : np.ndarray
        First frame, float grayscale.
    init_box : Box
        Target in the first frame, positive area.
    config : TrackerConfig, optional
        Defaults from config.py when omitted.
    external : FeatureStack, optional
        Full-frame channels for the external backend.

    RETURNS:
    --------
    TrackerState
        frame_index 1, scale 1.0, appearance = first features,
        ideal_response = the normalized first response.
    """
    config = config or TrackerConfig()
    frame = np.asarray(frame, dtype=float)
    _check_box(frame, init_box)

    geometry = model_geometry(
        init_box.size,
        config.scale.search_padding,
        config.features.cell_size,
        config.features.max_cells,
    )
    center = init_box.center
    features = window_features(frame, center, 1.0, geometry, config.features, external)

    inner = geometry.inner
    label = make_desired_response(geometry.outer, config.solver.sigma_factor * math.sqrt(inner.size))
    mask = make_penalization_mask(inner, config.solver.penalty_floor, config.solver.penalty_slope)

    run = run_admm(
        features, label, mask, config.solver,
        iterations=config.solver.admm_iterations,
        trace=config.trace,
        frame=1,
    )
    appearance = stack_spectrum(features)
    ideal = normalize_response(response_map(run.filter, appearance))

    logger.info(
        "initialized on %s: grid %s, filter support %s, %d channels",
        init_box.as_tuple(), geometry.outer, inner, features.channels,
    )
    return TrackerState(
        center=center,
        target_size=init_box.size,
        scale=1.0,
        appearance=appearance,
        ideal_response=ideal,
        filter=run.filter,
        admm=run.state,
        frame_index=1,
        geometry=geometry,
        label=label,
        mask=mask,
        config=config,
        decision=DecisionRecord(1, center[0], center[1], 1.0, 1.0, 1.0, True),
        trace=tuple(run.trace),
    )


# =====================================================
# DETECTION
# =====================================================

def _window_overlaps_frame(frame: np.ndarray, center, window_size, scale: float) -> bool:
    height, width = frame.shape[:2]
    half_w, half_h = window_size[0] * scale / 2.0, window_size[1] * scale / 2.0
    return (center[0] + half_w > 0 and center[0] - half_w < width
            and center[1] + half_h > 0 and center[1] - half_h < height)


def detect(
    state: TrackerState,
    frame: np.ndarray,
    scale_cfg: ScaleConfig | None = None,
    external: FeatureStack | None = None,
) -> Detection:
    """
    Search the frame around the last position at every scale.

    HOW IT WORKS:
    -------------
    1. For each scale factor, cut the window, compute features and
       correlate them with the filter (response_map)
    2. Interpolate each response to the model pixel grid by
       spectral zero-padding
    3. Each peak is divided by the norm of its window's features,
       so scales compare like normalized cross-correlations
    4. The best score (non-unit scales multiplied by
       scale_penalty) wins; its offset from the grid center,
       converted to frame pixels, moves the target

    RAISES:
    -------
    LostTargetError
        The search window no longer overlaps the frame.
    """
    scale_cfg = scale_cfg or state.config.scale
    frame = np.asarray(frame, dtype=float)
    geometry = state.geometry

    if not _window_overlaps_frame(frame, state.center, geometry.window_size, state.scale):
        raise LostTargetError(f"search window at {state.center} is outside the frame")

    cell = geometry.cell_size
    fine_shape = geometry.patch_shape
    fine_center = ((geometry.outer.height // 2) * cell, (geometry.outer.width // 2) * cell)

    factors = scale_cfg.factors()
    unit_index = scale_cfg.num_scales // 2
    best = None

    for index, factor in enumerate(factors):
        scale = state.scale * float(factor)
        features = window_features(frame, state.center, scale, geometry, state.config.features, external)
        response = response_map(state.filter, stack_spectrum(features))
        fine = upsample_spectrum(response.values, fine_shape)

        peak_at = np.unravel_index(int(np.argmax(fine)), fine.shape)
        # Resampling changes feature energy with the scale factor
        energy = float(np.linalg.norm(features.data))
        score = float(fine[peak_at]) / energy if energy > 0 else 0.0
        if index != unit_index:
            score *= scale_cfg.scale_penalty

        if best is None or score > best[0]:
            best = (score, index, scale, response, peak_at)

    score, index, scale, response, peak_at = best
    rows = float(peak_at[0] - fine_center[0])
    cols = float(peak_at[1] - fine_center[1])
    step_x, step_y = geometry.pixels_per_model_pixel(scale)
    center = (state.center[0] + cols * step_x, state.center[1] + rows * step_y)

    logger.debug(
        "frame %d: peak %.4f at scale %.4f, moved (%.2f, %.2f) px",
        state.frame_index + 1, score, scale, cols * step_x, rows * step_y,
    )
    return Detection(center, scale, response, (rows / cell, cols / cell), score, index)


# =====================================================
# MODEL UPDATE
# =====================================================

def interpolate_models(
    appearance: np.ndarray,
    current_features: np.ndarray,
    ideal: np.ndarray,
    current_response: np.ndarray,
    eta: float,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    The two linear model updates:

        appearance <- (1 - eta) appearance + eta current_features
        ideal      <- (1 - gamma) ideal + gamma current_response
    """
    new_appearance = (1.0 - eta) * appearance + eta * current_features
    new_ideal = (1.0 - gamma) * ideal + gamma * current_response
    return new_appearance, new_ideal


def select_learning_rate(score: float, cfg: UpdateConfig) -> float | None:
    """eta_high above threshold_high, eta_low above threshold_low, else None (skip)."""
    if score > cfg.threshold_high:
        return cfg.eta_high
    if score > cfg.threshold_low:
        return cfg.eta_low
    return None


def gated_update(
    state: TrackerState,
    features_at_peak: SpectralStack,
    current: ResponseMap,
    cfg: UpdateConfig | None = None,
) -> tuple[TrackerState, DecisionRecord]:
    """
    Score the current response and learn only if it is trusted.

    PARAMETERS:
    -----------
    state : TrackerState
        State with center/scale already moved to the detection.
    features_at_peak : SpectralStack
        Features re-extracted at the detected position.
    current : ResponseMap
        The aligned, normalized current response (M_curr).
    cfg : UpdateConfig, optional
        Defaults to state.config.update.

    RETURNS:
    --------
    (TrackerState, DecisionRecord)
        frame_index is advanced either way. Without learning the
        models and the filter are left untouched.
    """
    cfg = cfg or state.config.update
    score = consensus(state.ideal_response, current)
    eta = select_learning_rate(score, cfg)
    frame = state.frame_index + 1

    if eta is None:
        record = DecisionRecord(frame, state.center[0], state.center[1], state.scale, score, 0.0, False)
        logger.debug("frame %d: consensus %.4f, learning skipped", frame, score)
        return replace(state, frame_index=frame, decision=record, trace=()), record

    appearance, ideal = interpolate_models(
        state.appearance.data, features_at_peak.data,
        state.ideal_response.values, current.values,
        eta, cfg.gamma,
    )
    appearance = SpectralStack(appearance, state.appearance.cell_size)

    run = run_admm(
        appearance.to_spatial(),
        state.label,
        state.mask,
        state.config.solver,
        iterations=state.config.solver.tracking_iterations,
        warm_start=state.filter,
        admm_state=state.admm,
        trace=state.config.trace,
        frame=frame,
    )

    record = DecisionRecord(frame, state.center[0], state.center[1], state.scale, score, eta, True)
    logger.debug("frame %d: consensus %.4f, learning at eta %.4f", frame, score, eta)
    new_state = replace(
        state,
        appearance=appearance,
        ideal_response=ResponseMap(state.ideal_response.grid, ideal),
        filter=run.filter,
        admm=run.state,
        frame_index=frame,
        decision=record,
        trace=tuple(run.trace),
    )
    return new_state, record


def step(
    state: TrackerState,
    frame: np.ndarray,
    external: FeatureStack | None = None,
) -> tuple[TrackerState, Box]:
    """
    One frame: detect -> consensus -> gated update.

    RETURNS:
    --------
    (TrackerState, Box)
        The box is centered on the detection with size
        scale * target_size.
    """
    frame = np.asarray(frame, dtype=float)
    found = detect(state, frame, external=external)
    moved = replace(state, center=found.center, scale=found.scale)

    features = window_features(
        frame, found.center, found.scale, state.geometry, state.config.features, external
    )
    current = normalize_response(align_response(found.response, found.offset_cells))
    new_state, _ = gated_update(moved, stack_spectrum(features), current)
    return new_state, new_state.box


# =====================================================
# STATEFUL WRAPPER
# =====================================================

class Tracker:
    """
    Keeps a TrackerState and the per-frame records.

    When the search window leaves the frame the last box is
    reported and the search continues from the last position.

    USAGE:
    ------
    >>> tracker = Tracker(TrackerConfig())
    >>> tracker.init(first_frame, Box(10, 20, 32, 32))
    >>> box = tracker.update(next_frame)
    """

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.state: TrackerState | None = None
        self.decisions: list[DecisionRecord] = []
        self.trace: list[TraceRow] = []
        self.lost_frames = 0

    def init(self, frame: np.ndarray, box: Box, external: FeatureStack | None = None) -> Box:
        self.state = initialize(frame, box, self.config, external)
        self.decisions = [self.state.decision]
        self.trace = list(self.state.trace)
        self.lost_frames = 0
        return self.state.box

    def update(self, frame: np.ndarray, external: FeatureStack | None = None) -> Box:
        if self.state is None:
            raise RuntimeError("Tracker.update called before Tracker.init")
        try:
            self.state, box = step(self.state, frame, external)
        except LostTargetError as e:
            logger.warning("frame %d: %s", self.state.frame_index + 1, e)
            self.lost_frames += 1
            frame_number = self.state.frame_index + 1
            record = DecisionRecord(
                frame_number, self.state.center[0], self.state.center[1],
                self.state.scale, 0.0, 0.0, False,
            )
            self.state = replace(self.state, frame_index=frame_number, decision=record, trace=())
            box = self.state.box

        self.decisions.append(self.state.decision)
        self.trace.extend(self.state.trace)
        return box


# =====================================================
# EXPORT
# =====================================================

DECISION_COLUMNS = ["frame", "center_x", "center_y", "scale", "consensus", "eta_used", "learned"]


def write_decisions_csv(records: list[DecisionRecord], path) -> None:
    """One row per frame: frame,center_x,center_y,scale,consensus,eta_used,learned"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(DECISION_COLUMNS)
        for r in records:
            writer.writerow([
                r.frame, repr(float(r.center_x)), repr(float(r.center_y)), repr(float(r.scale)),
                repr(float(r.consensus)), repr(float(r.eta_used)), "true" if r.learned else "false",
            ])
