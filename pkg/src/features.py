# =====================================================
# FEATURES MODULE
# =====================================================
#
# This module turns an image patch into the D-channel
# feature stack the filter solver consumes.
#
# THE PIPELINE:
# -------------
# 1. extract_patch    - cut the search window out of the frame
#                       and resample it to a fixed model size
# 2. compute_features - one of the pluggable backends:
#       grayscale       D = 1, mean-subtracted intensity
#       gradient_cells  D = 9, orientation histograms per cell
#       external        channels computed elsewhere (e.g. deep
#                       network layers) and stored in CFB1 files
# 3. apply_window     - optional raised-cosine taper
#
# WHY A FIXED MODEL SIZE?
# -----------------------
# Targets come in every size. Resampling the search window
# so the feature grid is at most MAX_CELLS per side keeps the
# solver's per-pixel work bounded and makes every frame's
# features comparable cell for cell.
#
# EXTERNAL CHANNEL FILES (CFB1):
# ------------------------------
# Little-endian binary:
#     b"CFB1" | u32 D | u32 height | u32 width | D*H*W float32
# values in channel-major, row-major order.
#
# =====================================================

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    CELL_SIZE,
    FEATURE_BACKEND,
    FEATURE_NORMALIZE,
    FEATURE_WINDOW,
    GRADIENT_BINS,
    MAX_CELLS,
)

from src.errors import (
    ChannelFileParseError,
    ConfigError,
    DataError,
    ExternalChannelsError,
    GridMismatchError,
    NonFiniteFeaturesError,
)
from src.spectral import CropSpec, Grid2, dft2, inverse_dft2

logger = logging.getLogger(__name__)

CHANNEL_FILE_MAGIC = b"CFB1"
CHANNEL_FILE_SUFFIX = ".cfb"


# =====================================================
# TYPES
# =====================================================

class FeatureConfig(BaseModel):
    """Which backend builds the features, and how they are post-processed."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    backend: Literal["grayscale", "gradient_cells", "external"] = FEATURE_BACKEND
    cell_size: int = Field(CELL_SIZE, ge=1)
    window: Literal["none", "cosine"] = FEATURE_WINDOW
    normalize: bool = FEATURE_NORMALIZE
    bins: int = Field(GRADIENT_BINS, ge=1)
    # Largest feature grid side the search window is resampled to
    max_cells: int = Field(MAX_CELLS, ge=1)
    # Directory of per-frame CFB1 files, one per frame named <frame stem>.cfb
    external_dir: str | None = None


@dataclass(frozen=True)
class FeatureStack:
    """D real channels on a common grid, shape (D, H, W)."""

    data: np.ndarray
    cell_size: int = 1

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] < 1:
            raise GridMismatchError(f"feature stack must be (D, H, W), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteFeaturesError("feature stack contains non-finite values")
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        object.__setattr__(self, "data", data)

    @property
    def grid(self) -> Grid2:
        return Grid2.of(self.data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class SpectralStack:
    """Unitary spectra of a FeatureStack, shape (D, H, W), complex."""

    data: np.ndarray
    cell_size: int = 1

    @property
    def grid(self) -> Grid2:
        return Grid2.of(self.data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def to_spatial(self) -> FeatureStack:
        return FeatureStack(inverse_dft2(self.data).real, self.cell_size)


def stack_spectrum(stack: FeatureStack) -> SpectralStack:
    """Per-channel unitary DFT of a feature stack."""
    return SpectralStack(dft2(stack.data), stack.cell_size)


@dataclass(frozen=True)
class ModelGeometry:
    """
    How a target maps onto the model grids.

    outer        search-window feature grid (N cells)
    inner        filter support, about the target size (M cells)
    window_size  search window in frame pixels at scale 1, (w, h)
    patch_shape  model patch in pixels, (h, w) = outer * cell_size
    """

    outer: Grid2
    inner: Grid2
    window_size: tuple[float, float]
    cell_size: int

    @property
    def crop(self) -> CropSpec:
        return CropSpec(self.outer, self.inner)

    @property
    def patch_shape(self) -> tuple[int, int]:
        return (self.outer.height * self.cell_size, self.outer.width * self.cell_size)

    def pixels_per_model_pixel(self, scale: float) -> tuple[float, float]:
        """Frame pixels covered by one model pixel along (x, y)."""
        h, w = self.patch_shape
        return (self.window_size[0] * scale / w, self.window_size[1] * scale / h)


def model_geometry(
    target_size,
    search_padding: float,
    cell_size: int,
    max_cells: int,
) -> ModelGeometry:
    """
    Derive the feature grids for a target of the given pixel size.

    The search window is sqrt(search_padding) times the target per
    side. If that is more than max_cells cells wide, the window is
    resampled down so the larger side has exactly max_cells cells.

    EXAMPLE:
    --------
    >>> g = model_geometry((32, 32), 4.0, cell_size=4, max_cells=64)
    >>> g.outer, g.inner
    (Grid2(height=16, width=16), Grid2(height=8, width=8))
    """
    target_w, target_h = float(target_size[0]), float(target_size[1])
    if not (target_w > 0 and target_h > 0):
        raise DataError(f"target size must be positive, got {target_size}")

    side = math.sqrt(search_padding)
    window_w, window_h = target_w * side, target_h * side

    cells_w, cells_h = window_w / cell_size, window_h / cell_size
    shrink = max(1.0, max(cells_w, cells_h) / max_cells)
    outer = Grid2(max(1, round(cells_h / shrink)), max(1, round(cells_w / shrink)))
    inner = Grid2(
        min(outer.height, max(1, round(outer.height / side))),
        min(outer.width, max(1, round(outer.width / side))),
    )
    return ModelGeometry(outer, inner, (window_w, window_h), cell_size)


# =====================================================
# IMAGE HELPERS
# =====================================================

def as_gray(image: np.ndarray) -> np.ndarray:
    """Float grayscale in [0, 1] from a uint8 or float, gray or BGR image."""
    image = np.asarray(image)
    if image.ndim == 3:
        if image.dtype != np.uint8:
            image = image.astype(np.float32)
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype == np.uint8:
        # identical to sequences.read_image
        return image.astype(float) / 255.0
    return image.astype(float)


# =====================================================
# PATCH EXTRACTION
# =====================================================

def extract_patch(
    frame: np.ndarray,
    center,
    size,
    scale: float,
    out_shape: tuple[int, int],
) -> np.ndarray:
    """
    Cut a (size * scale) window centered at `center` out of the frame
    and resample it bilinearly to `out_shape` pixels.

    PARAMETERS:
    -----------
    frame : np.ndarray
        Grayscale frame (H, W). Pixel (i, j) covers [j, j+1) x [i, i+1).
    center : (x, y)
        Window center in continuous frame coordinates.
    size : (w, h)
        Window size in frame pixels at scale 1.
    scale : float
        Multiplies the window size.
    out_shape : (h, w)
        Model resolution of the returned patch.

    RETURNS:
    --------
    np.ndarray
        Float patch of shape out_shape. Pixels outside the frame
        repeat the nearest edge pixel.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2 or frame.size == 0:
        raise DataError(f"frame must be a non-empty 2D array, got shape {frame.shape}")
    cx, cy = float(center[0]), float(center[1])
    if not (math.isfinite(cx) and math.isfinite(cy) and math.isfinite(scale)) or scale <= 0:
        raise DataError(f"patch center/scale must be finite and positive: {center}, {scale}")
    if size[0] <= 0 or size[1] <= 0:
        raise DataError(f"patch size must be positive, got {size}")

    out_h, out_w = int(out_shape[0]), int(out_shape[1])
    step_x = size[0] * scale / out_w
    step_y = size[1] * scale / out_h

    # Sample at model-pixel centers; array index = continuous coordinate - 0.5
    xs = cx + (np.arange(out_w) + 0.5 - out_w / 2.0) * step_x - 0.5
    ys = cy + (np.arange(out_h) + 0.5 - out_h / 2.0) * step_y - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")

    return ndimage.map_coordinates(frame, [grid_y, grid_x], order=1, mode="nearest")


# =====================================================
# FEATURE BACKENDS
# =====================================================

def _cell_view(patch: np.ndarray, cell_size: int) -> tuple[int, int]:
    h, w = patch.shape
    if h % cell_size or w % cell_size:
        raise GridMismatchError(
            f"patch {h}x{w} is not divisible by cell size {cell_size}"
        )
    return h // cell_size, w // cell_size


def grayscale_cells(patch: np.ndarray, cell_size: int) -> np.ndarray:
    """Mean intensity per cell, mean-subtracted. Shape (1, Hc, Wc)."""
    hc, wc = _cell_view(patch, cell_size)
    cells = patch.reshape(hc, cell_size, wc, cell_size).mean(axis=(1, 3))
    return (cells - cells.mean())[None]


def gradient_cells(
    patch: np.ndarray,
    cell_size: int,
    bins: int = GRADIENT_BINS,
    normalize: bool = False,
) -> np.ndarray:
    """
    HOG-style orientation histograms, one per cell. Shape (bins, Hc, Wc).

    HOW IT WORKS:
    -------------
    1. Gradients from [-1, 0, 1] differences (edges replicated)
    2. Unsigned orientation in [0, pi), split into `bins` equal bins
    3. Each pixel adds its gradient magnitude to its own cell's bin
       (hard assignment, no interpolation)
    4. Optionally, each cell's histogram is L2-normalized

    Unlike cv2.HOGDescriptor there is no block grouping, no
    block normalization and no vote interpolation, so each
    cell depends only on its own pixels.
    """
    hc, wc = _cell_view(patch, cell_size)
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    # ksize=1 is the plain [-1, 0, 1] kernel, no smoothing
    gx = cv2.Sobel(patch, cv2.CV_64F, 1, 0, ksize=1, borderType=cv2.BORDER_REPLICATE)
    gy = cv2.Sobel(patch, cv2.CV_64F, 0, 1, ksize=1, borderType=cv2.BORDER_REPLICATE)

    magnitude = np.hypot(gx, gy)
    # cv2.cartToPolar angles are only accurate to ~0.3 degrees, which
    # moves pixels across hard bin edges
    orientation = np.mod(np.arctan2(gy, gx), np.pi)
    bin_index = np.minimum((orientation / (np.pi / bins)).astype(int), bins - 1)

    h, w = patch.shape
    cell_row = (np.arange(h) // cell_size)[:, None]
    cell_col = (np.arange(w) // cell_size)[None, :]
    flat = bin_index * (hc * wc) + cell_row * wc + cell_col

    hist = np.bincount(flat.ravel(), weights=magnitude.ravel(), minlength=bins * hc * wc)
    hist = hist.reshape(bins, hc, wc)

    if normalize:
        norm = np.sqrt(np.sum(hist ** 2, axis=0, keepdims=True) + 1e-12)
        hist = hist / norm
    return hist


def compute_features(patch: np.ndarray, config: FeatureConfig) -> FeatureStack:
    """
    Run the configured backend on a model-resolution patch.

    PARAMETERS:
    -----------
    patch : np.ndarray
        Grayscale patch whose sides are multiples of config.cell_size
        (extract_patch with ModelGeometry.patch_shape guarantees this).
    config : FeatureConfig
        Backend and cell size.

    RETURNS:
    --------
    FeatureStack
        grayscale -> 1 channel, gradient_cells -> config.bins channels.
    """
    patch = np.asarray(patch, dtype=float)
    backend = config.backend

    if backend == "grayscale":
        data = grayscale_cells(patch, config.cell_size)
    elif backend == "gradient_cells":
        data = gradient_cells(patch, config.cell_size, config.bins, config.normalize)
    elif backend == "external":
        raise ConfigError(
            "external channels are loaded with load_external_channels, not computed",
            key="features.backend",
        )
    else:
        raise ConfigError(f"unknown feature backend: {backend}", key="features.backend")

    return FeatureStack(data, config.cell_size)


def cosine_window(grid: Grid2) -> np.ndarray:
    """Separable raised cosine: 0 at the edges, largest at the center."""
    return np.outer(np.hanning(grid.height), np.hanning(grid.width))


def apply_window(stack: FeatureStack, window: str) -> FeatureStack:
    """Taper every channel with the chosen window ("none" is the identity)."""
    if window == "none":
        return stack
    if window == "cosine":
        return FeatureStack(stack.data * cosine_window(stack.grid), stack.cell_size)
    raise ConfigError(f"unknown window: {window}", key="features.window")


# =====================================================
# EXTERNAL CHANNELS (CFB1 files)
# =====================================================

def save_external_channels(path, stack: FeatureStack) -> None:
    """Write a stack in the CFB1 format (values stored as float32)."""
    d, h, w = stack.data.shape
    header = CHANNEL_FILE_MAGIC + np.array([d, h, w], dtype="<u4").tobytes()
    payload = np.ascontiguousarray(stack.data, dtype="<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_external_channels(path, expected_grid: Grid2, cell_size: int = 1) -> FeatureStack:
    """
    Read a CFB1 file and check it against the expected grid.

    RAISES:
    -------
    ChannelFileParseError   missing file, bad magic, truncated data
    GridMismatchError       header grid differs from expected_grid
    NonFiniteFeaturesError  NaN or infinite values
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ChannelFileParseError(f"cannot read channel file {path}: {e}") from e

    if len(raw) < 16 or raw[:4] != CHANNEL_FILE_MAGIC:
        raise ChannelFileParseError(f"{path} is not a CFB1 channel file")

    d, h, w = (int(v) for v in np.frombuffer(raw[4:16], dtype="<u4"))
    if min(d, h, w) < 1:
        raise ChannelFileParseError(f"{path} declares an empty stack ({d}x{h}x{w})")
    expected_bytes = 16 + 4 * d * h * w
    if len(raw) != expected_bytes:
        raise ChannelFileParseError(
            f"{path} holds {len(raw)} bytes, header implies {expected_bytes}"
        )

    if (h, w) != expected_grid.shape:
        raise GridMismatchError(
            f"{path} has grid {h}x{w}, expected {expected_grid}"
        )

    data = np.frombuffer(raw[16:], dtype="<f4").reshape(d, h, w)
    if not np.all(np.isfinite(data)):
        raise NonFiniteFeaturesError(f"{path} contains non-finite values")

    logger.debug("loaded %d external channels on %dx%d from %s", d, h, w, path)
    return FeatureStack(data.astype(float), cell_size)


def external_channel_path(external_dir, frame_name: str) -> Path:
    """Where the channels of a frame live: <external_dir>/<frame stem>.cfb"""
    if not external_dir:
        raise ExternalChannelsError("the external backend needs features.external_dir")
    return Path(external_dir) / (Path(frame_name).stem + CHANNEL_FILE_SUFFIX)


def sample_external_window(
    channels: FeatureStack,
    center,
    size,
    scale: float,
    geometry: ModelGeometry,
) -> FeatureStack:
    """
    Resample a search window out of full-frame external channels.

    External files hold channels for the WHOLE frame at a stride of
    cell_size pixels, so the window is cut in feature coordinates and
    lands directly on the model grid (no cell pooling).
    """
    stride = channels.cell_size
    window_center = (center[0] / stride, center[1] / stride)
    window_size = (size[0] / stride, size[1] / stride)
    data = np.stack([
        extract_patch(channel, window_center, window_size, scale, geometry.outer.shape)
        for channel in channels.data
    ])
    return FeatureStack(data, stride)
