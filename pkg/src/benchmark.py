# =====================================================
# BENCHMARK MODULE
# =====================================================
#
# Times the two hot paths:
#
#   train   one run_admm call on random features
#           (admm_iterations iterations)
#   detect  tracker.detect on a rendered synthetic frame: patches,
#           gradient cells, correlation and interpolation at every
#           search scale
#
# Each (op, grid) pair is repeated and reported as one CSV row:
#
#     op,grid,channels,iterations,ms_mean,ms_p95
#
# For detect rows the iterations column counts search scales. The
# target is sized so its search window spans `side` cells.
#
# Timings measure this machine; nothing is promised.
#
# =====================================================

import csv
import io
import logging
import math
import time

import numpy as np

from src.errors import ConfigError
from src.features import FeatureConfig, FeatureStack
from src.sequences import SyntheticSpec, generate_synthetic
from src.solver import SolverConfig, make_desired_response, make_penalization_mask, run_admm
from src.spectral import Grid2
from src.tracker import ScaleConfig, TrackerConfig, detect, initialize

logger = logging.getLogger(__name__)

DEFAULT_SIZES = [16, 32, 64]
BENCH_COLUMNS = ["op", "grid", "channels", "iterations", "ms_mean", "ms_p95"]


def _timed(fn, repeats: int) -> tuple[float, float]:
    samples = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - started) * 1000.0)
    return float(np.mean(samples)), float(np.percentile(samples, 95))


def _detection_frame(side: int, cell_size: int, scale: ScaleConfig, seed: int):
    """One synthetic frame whose target's search window is side x side cells."""
    window = side * cell_size
    synthetic = SyntheticSpec(
        frames=1,
        frame_width=2 * window,
        frame_height=2 * window,
        blob_size=window / math.sqrt(scale.search_padding),
        start_x=float(window),
        start_y=float(window),
        velocity_x=0.0,
        velocity_y=0.0,
    )
    sequence = generate_synthetic(synthetic, seed=seed)
    return sequence.read_frame(0), sequence.truth[0]


def run_benchmark(
    sizes=DEFAULT_SIZES,
    channels: int = 9,
    repeats: int = 5,
    solver: SolverConfig | None = None,
    scale: ScaleConfig | None = None,
    cell_size: int = 4,
    seed: int = 0,
) -> list[dict]:
    """
    Time train and detect for square grids of the given sides.

    RETURNS:
    --------
    list[dict]
        One row per (op, size), keys as BENCH_COLUMNS.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 4 for s in sizes):
        raise ConfigError(f"benchmark grid sides must be >= 4, got {sizes}", key="bench.sizes")
    if channels < 1 or repeats < 1:
        raise ConfigError("channels and repeats must be positive", key="bench")

    solver = solver or SolverConfig()
    scale = scale or ScaleConfig()
    rng = np.random.default_rng(seed)
    rows = []

    for side in sizes:
        outer = Grid2(side, side)
        inner = Grid2(max(1, round(side / math.sqrt(scale.search_padding))),
                      max(1, round(side / math.sqrt(scale.search_padding))))
        x = FeatureStack(rng.standard_normal((channels,) + outer.shape))
        y = make_desired_response(outer, solver.sigma_factor * math.sqrt(inner.size))
        p = make_penalization_mask(inner, solver.penalty_floor, solver.penalty_slope)

        mean, p95 = _timed(lambda: run_admm(x, y, p, solver), repeats)
        rows.append({"op": "train", "grid": f"{side}x{side}", "channels": channels,
                     "iterations": solver.admm_iterations, "ms_mean": mean, "ms_p95": p95})

        frame, box = _detection_frame(side, cell_size, scale, seed)
        features = FeatureConfig(backend="gradient_cells", cell_size=cell_size, bins=channels, max_cells=side)
        state = initialize(frame, box, TrackerConfig(solver=solver, scale=scale, features=features))

        mean, p95 = _timed(lambda: detect(state, frame), repeats)
        rows.append({"op": "detect", "grid": f"{side}x{side}", "channels": channels,
                     "iterations": scale.num_scales, "ms_mean": mean, "ms_p95": p95})
        logger.info("benchmarked %dx%d", side, side)

    return rows


def format_benchmark_csv(rows: list[dict]) -> str:
    """Rows as CSV text with a header line."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "ms_mean": f"{row['ms_mean']:.3f}", "ms_p95": f"{row['ms_p95']:.3f}"})
    return buffer.getvalue()
