# =====================================================
# SEQUENCES MODULE
# =====================================================
#
# Image sequences with ground truth: loading them from disk,
# rendering synthetic ones, and writing them back out.
#
# ON-DISK LAYOUT (UAV123 / OTB style):
# ------------------------------------
#     <dir>/0001.png, 0002.png, ...     (or <dir>/img/...)
#     <dir>/groundtruth_rect.txt        one "x,y,w,h" line per frame
#
# Boxes use a top-left origin in pixels. A line of NaNs marks a
# frame where the target is absent; a zero-size box means the
# same thing.
#
# SYNTHETIC SEQUENCES:
# --------------------
# A textured square blob moves at constant velocity over a fixed
# noise background, optionally growing by a constant factor per
# frame and optionally blanked out on chosen frames (occlusion).
# Everything is drawn from one seeded generator, so the same
# SyntheticSpec and seed always give bitwise-identical frames.
#
# =====================================================

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    SYNTH_BLOB_SIZE,
    SYNTH_FRAME_HEIGHT,
    SYNTH_FRAME_WIDTH,
    SYNTH_FRAMES,
    SYNTH_NOISE_LEVEL,
    SYNTH_SCALE_RAMP,
    SYNTH_START_X,
    SYNTH_START_Y,
    SYNTH_VELOCITY_X,
    SYNTH_VELOCITY_Y,
)

from src.errors import (
    AnnotationParseError,
    DataError,
    EmptySequenceError,
    MissingAnnotationError,
    SyntheticSpecError,
)
from src.features import as_gray

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
ANNOTATION_FILES = ["groundtruth_rect.txt", "groundtruth.txt"]


# =====================================================
# BOXES
# =====================================================

@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel rectangle, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    @classmethod
    def absent(cls) -> "Box":
        nan = float("nan")
        return cls(nan, nan, nan, nan)

    @classmethod
    def from_center(cls, center, size) -> "Box":
        cx, cy = center
        w, h = size
        return cls(cx - w / 2.0, cy - h / 2.0, float(w), float(h))

    @property
    def is_absent(self) -> bool:
        values = (self.x, self.y, self.w, self.h)
        return any(math.isnan(v) for v in values) or self.w <= 0 or self.h <= 0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def size(self) -> tuple[float, float]:
        return (self.w, self.h)

    @property
    def area(self) -> float:
        return 0.0 if self.is_absent else self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def format_box_line(box: Box) -> str:
    """One ground-truth line; repr keeps floats exact on re-load."""
    if any(math.isnan(v) for v in box.as_tuple()):
        return "NaN,NaN,NaN,NaN"
    return ",".join(repr(float(v)) for v in box.as_tuple())


def parse_box_line(line: str, line_number: int) -> Box:
    """Parse "x,y,w,h" (commas, tabs or spaces) into a Box."""
    parts = [p for p in re.split(r"[,\s]+", line.strip()) if p]
    if len(parts) != 4:
        raise AnnotationParseError(f"expected 4 values, got {len(parts)}: {line.strip()!r}", line_number)
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise AnnotationParseError(f"not a number in {line.strip()!r}", line_number) from None
    if any(math.isnan(v) for v in values):
        return Box.absent()
    return Box(*values)


# =====================================================
# SEQUENCES
# =====================================================

@dataclass
class AnnotatedSequence:
    """
    Ordered frames plus per-frame ground truth.

    frames holds either image paths (loaded sequences) or uint8
    arrays (synthetic ones). truth may be shorter than frames;
    missing entries count as absent.
    """

    name: str
    frames: list
    truth: list[Box]
    occluded_frames: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.truth) > len(self.frames):
            raise DataError(
                f"{self.name}: {len(self.truth)} truth boxes for {len(self.frames)} frames"
            )

    def __len__(self) -> int:
        return len(self.frames)

    def read_frame(self, index: int) -> np.ndarray:
        """Frame `index` (0-based) as float grayscale in [0, 1]."""
        ref = self.frames[index]
        if isinstance(ref, np.ndarray):
            return as_gray(ref)
        return read_image(ref)

    def frame_name(self, index: int) -> str:
        ref = self.frames[index]
        return Path(ref).name if not isinstance(ref, np.ndarray) else f"{index + 1:04d}.png"

    def truth_at(self, index: int) -> Box:
        return self.truth[index] if index < len(self.truth) else Box.absent()

    @property
    def initial_box(self) -> Box:
        box = self.truth_at(0)
        if box.is_absent:
            raise DataError(f"{self.name}: the first frame has no ground-truth box")
        return box


def read_image(path) -> np.ndarray:
    """Read an image file as float grayscale in [0, 1]."""
    image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if image is None:
        raise DataError(f"cannot read image {path}")
    return image.astype(float) / 255.0


def _find_frames(directory: Path) -> list[Path]:
    for candidate in (directory / "img", directory):
        if candidate.is_dir():
            frames = sorted(
                p for p in candidate.iterdir()
                if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
            )
            if frames:
                return frames
    return []


def load_sequence(directory) -> AnnotatedSequence:
    """
    Load a sequence directory.

    PARAMETERS:
    -----------
    directory : str or Path
        Holds the frames (directly or under img/) and a
        groundtruth_rect.txt / groundtruth.txt file.

    RETURNS:
    --------
    AnnotatedSequence
        Frames sorted by file name; truth parsed line by line.

    RAISES:
    -------
    MissingAnnotationError   no ground-truth file
    AnnotationParseError     a line is not 4 numbers (names the line)
    EmptySequenceError       no image frames
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"sequence directory not found: {directory}")

    annotation = next((directory / n for n in ANNOTATION_FILES if (directory / n).is_file()), None)
    if annotation is None:
        raise MissingAnnotationError(f"{directory} has no {' or '.join(ANNOTATION_FILES)}")

    frames = _find_frames(directory)
    if not frames:
        raise EmptySequenceError(f"{directory} contains no image frames")

    truth = []
    for number, line in enumerate(annotation.read_text().splitlines(), start=1):
        if line.strip():
            truth.append(parse_box_line(line, number))

    if len(truth) > len(frames):
        logger.warning(
            "%s: %d truth lines for %d frames, extra lines ignored",
            directory.name, len(truth), len(frames),
        )
        truth = truth[:len(frames)]
    elif len(truth) < len(frames):
        logger.warning(
            "%s: %d truth lines for %d frames, the rest count as absent",
            directory.name, len(truth), len(frames),
        )

    logger.info("loaded sequence %s: %d frames", directory.name, len(frames))
    return AnnotatedSequence(directory.name, list(frames), truth)


def write_sequence(sequence: AnnotatedSequence, directory) -> Path:
    """
    Write frames as 0001.png, 0002.png, ... and the truth as
    groundtruth_rect.txt, the layout load_sequence reads.

    RETURNS:
    --------
    Path
        The ground-truth file.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    for index in range(len(sequence)):
        ref = sequence.frames[index]
        if isinstance(ref, np.ndarray):
            image = ref if ref.dtype == np.uint8 else np.round(np.clip(ref, 0, 1) * 255).astype(np.uint8)
        else:
            image = cv2.imread(str(ref), cv2.IMREAD_UNCHANGED)
        cv2.imwrite(str(directory / f"{index + 1:04d}.png"), image)

    truth_path = directory / ANNOTATION_FILES[0]
    lines = [format_box_line(sequence.truth_at(i)) for i in range(len(sequence))]
    truth_path.write_text("\n".join(lines) + "\n")
    return truth_path


# =====================================================
# SYNTHETIC SEQUENCES
# =====================================================

class SyntheticSpec(BaseModel):
    """Motion and appearance of a synthetic test sequence."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: int = Field(SYNTH_FRAMES, ge=1)
    frame_width: int = Field(SYNTH_FRAME_WIDTH, ge=8)
    frame_height: int = Field(SYNTH_FRAME_HEIGHT, ge=8)
    blob_size: float = Field(SYNTH_BLOB_SIZE, gt=0)
    start_x: float = SYNTH_START_X
    start_y: float = SYNTH_START_Y
    velocity_x: float = SYNTH_VELOCITY_X
    velocity_y: float = SYNTH_VELOCITY_Y
    scale_ramp: float = Field(SYNTH_SCALE_RAMP, gt=0)
    noise_level: float = Field(SYNTH_NOISE_LEVEL, ge=0, le=1)
    # 0-based indices of frames on which the blob is blanked out
    occluded_frames: tuple[int, ...] = ()

    @field_validator("occluded_frames", mode="before")
    @classmethod
    def _split_frames(cls, value):
        if isinstance(value, str):
            return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
        return value


def blob_box(synthetic: SyntheticSpec, index: int) -> Box:
    """Ground truth of frame `index`: center moves linearly, size grows geometrically."""
    size = synthetic.blob_size * synthetic.scale_ramp ** index
    center = (synthetic.start_x + synthetic.velocity_x * index, synthetic.start_y + synthetic.velocity_y * index)
    return Box.from_center(center, (size, size))


def _render_blob(canvas: np.ndarray, texture: np.ndarray, box: Box) -> None:
    """Paint `texture` resampled onto `box`, covering pixels whose centers fall inside."""
    height, width = canvas.shape
    x0, x1 = max(0, math.floor(box.x)), min(width, math.ceil(box.x + box.w))
    y0, y1 = max(0, math.floor(box.y)), min(height, math.ceil(box.y + box.h))
    if x0 >= x1 or y0 >= y1:
        return

    px = np.arange(x0, x1) + 0.5
    py = np.arange(y0, y1) + 0.5
    inside_x = (px >= box.x) & (px < box.x + box.w)
    inside_y = (py >= box.y) & (py < box.y + box.h)

    side = texture.shape[0]
    tx = (px - box.x) / box.w * side - 0.5
    ty = (py - box.y) / box.h * side - 0.5
    grid_y, grid_x = np.meshgrid(ty, tx, indexing="ij")
    patch = ndimage.map_coordinates(texture, [grid_y, grid_x], order=1, mode="nearest")

    mask = inside_y[:, None] & inside_x[None, :]
    region = canvas[y0:y1, x0:x1]
    region[mask] = patch[mask]


def generate_synthetic(synthetic: SyntheticSpec, seed: int = 0) -> AnnotatedSequence:
    """
    Render a synthetic sequence with exact ground truth.

    PARAMETERS:
    -----------
    synthetic : SyntheticSpec
        Motion, size and frame parameters.
    seed : int
        Seeds the background and blob texture.

    RETURNS:
    --------
    AnnotatedSequence
        uint8 frames; occluded frames get absent truth and are
        listed in occluded_frames.

    EXAMPLE:
    --------
    >>> seq = generate_synthetic(SyntheticSpec(frames=3, velocity_x=2.0))
    >>> [b.x for b in seq.truth]
    [44.0, 46.0, 48.0]
    """
    largest = synthetic.blob_size * max(1.0, synthetic.scale_ramp ** (synthetic.frames - 1))
    if largest > min(synthetic.frame_width, synthetic.frame_height):
        raise SyntheticSpecError(
            f"blob grows to {largest:.1f} px, larger than the "
            f"{synthetic.frame_width}x{synthetic.frame_height} frame"
        )
    bad = [i for i in synthetic.occluded_frames if not 0 <= i < synthetic.frames]
    if bad:
        raise SyntheticSpecError(f"occluded frame indices out of range: {bad}")

    rng = np.random.default_rng(seed)
    shape = (synthetic.frame_height, synthetic.frame_width)
    background = 0.5 + synthetic.noise_level * (2.0 * rng.random(shape) - 1.0)

    side = max(4, math.ceil(synthetic.blob_size))
    texture = cv2.GaussianBlur(rng.random((side, side)), (0, 0), sigmaX=side / 16.0)
    texture = (texture - texture.min()) / max(np.ptp(texture), 1e-12)
    texture = 0.1 + 0.8 * texture

    occluded = set(synthetic.occluded_frames)
    frames, truth = [], []
    for index in range(synthetic.frames):
        canvas = background.copy()
        box = blob_box(synthetic, index)
        if index in occluded:
            truth.append(Box.absent())
        else:
            _render_blob(canvas, texture, box)
            truth.append(box)
        frames.append(np.round(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8))

    logger.info("rendered synthetic sequence: %d frames, seed %d", synthetic.frames, seed)
    return AnnotatedSequence("synthetic", frames, truth, tuple(sorted(occluded)))
