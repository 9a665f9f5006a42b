# =====================================================
# CORRELATION FILTER SOLVER MODULE
# =====================================================
#
# This module learns the multi-channel correlation filter.
#
# THE OBJECTIVE:
# --------------
# For features x (D channels on the search window, N cells),
# a desired response y (N cells) and a filter w (D channels on
# the small central support, M cells):
#
#     E(w) = 1/2 || y - sum_d x_d (*) embed(w_d) ||^2
#            + sum_d || p . w_d ||^2
#
# (*) is circular cross-correlation and p a bowl-shaped
# penalization mask. Because the filter lives on the M-cell
# support but is correlated over the whole N-cell window, every
# cyclic shift of the window is a REAL background sample.
#
# HOW IT IS SOLVED (ADMM):
# ------------------------
# An auxiliary filter g_hat (the full N-cell spectrum) is tied
# to w by the constraint  g_hat = sqrt(N) * dft2(embed(w)).
# Each iteration then alternates three cheap steps:
#
# 1. w-step: elementwise closed form on the M-cell support
#        w = (zeta + mu * g) / (2 p^2 / N + mu)
#    with g, zeta the cropped inverse transforms of g_hat, zeta_hat
# 2. g-step: one D x D rank-one system per frequency bin,
#    solved in closed form with Sherman-Morrison
# 3. multiplier step: zeta_hat += mu * (g_hat - w_hat),
#    then mu grows by mu_scale up to mu_max
#
# SCALES:
# -------
# Feature and label spectra are unitary (x_hat = dft2(x)).
# Filter-side spectra (g_hat, w_hat, zeta_hat) carry an extra
# sqrt(N), so sum_d conj(x_hat_d) * g_hat_d is exactly the
# unitary spectrum of the correlation term above. The ADMM
# therefore minimizes E(w) itself.
#
# =====================================================

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    ADMM_ITERATIONS,
    CARRY_MULTIPLIERS,
    MU_INIT,
    MU_MAX,
    MU_SCALE,
    PENALTY_FLOOR,
    PENALTY_MODE,
    PENALTY_SLOPE,
    SIGMA_FACTOR,
    TOLERANCE,
    TRACKING_ITERATIONS,
)

from src.errors import GridMismatchError, SolverDivergedError
from src.features import FeatureStack
from src.spectral import (
    CropSpec,
    Grid2,
    correlate,
    crop_of_inverse,
    dft2,
    embed_center,
    embed_of_forward,
)

logger = logging.getLogger(__name__)


# =====================================================
# CONFIGURATION
# =====================================================

class SolverConfig(BaseModel):
    """ADMM schedule and the shape of the penalization / label."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    admm_iterations: int = Field(ADMM_ITERATIONS, ge=1)
    tracking_iterations: int = Field(TRACKING_ITERATIONS, ge=1)
    mu_init: float = Field(MU_INIT, gt=0)
    mu_scale: float = Field(MU_SCALE, ge=1)
    mu_max: float = Field(MU_MAX, gt=0)
    tolerance: float = Field(TOLERANCE, gt=0)
    penalty_floor: float = Field(PENALTY_FLOOR, gt=0)
    penalty_slope: float = Field(PENALTY_SLOPE, ge=0)
    penalty_mode: Literal["elementwise", "scalar"] = PENALTY_MODE
    sigma_factor: float = Field(SIGMA_FACTOR, gt=0)
    carry_multipliers: bool = CARRY_MULTIPLIERS

    @model_validator(mode="after")
    def _mu_range(self):
        if self.mu_init > self.mu_max:
            raise ValueError("mu_init must not exceed mu_max")
        return self


# =====================================================
# TYPES
# =====================================================

@dataclass(frozen=True)
class PenalizationMask:
    """Per-cell weights p on the filter support, bowl-shaped."""

    grid: Grid2
    weights: np.ndarray
    floor: float
    slope: float

    def squared_total(self) -> float:
        """p~' p~ : the sum of squared weights (scalar penalty mode)."""
        return float(np.sum(self.weights ** 2))


@dataclass(frozen=True)
class DesiredResponse:
    """
    The label y: a Gaussian with its peak at the window center.

    `values` is the centered (display) layout. Training correlates
    in the wrapped layout where zero displacement is index (0, 0),
    available as `training_layout`.
    """

    grid: Grid2
    values: np.ndarray
    sigma: float

    @property
    def training_layout(self) -> np.ndarray:
        return np.fft.ifftshift(self.values)


@dataclass(frozen=True)
class FilterBank:
    """
    The learned filter.

    spatial   w, shape (D, M1, M2) on the filter support
    spectral  g_hat, shape (D, N1, N2), sqrt(N)-scaled spectrum
    """

    spatial: np.ndarray
    spectral: np.ndarray
    crop: CropSpec

    @property
    def channels(self) -> int:
        return self.spatial.shape[0]

    def embedded_spectrum(self) -> np.ndarray:
        """w_hat = sqrt(N) * dft2(embed(w)), what g_hat converges to."""
        return math.sqrt(self.crop.outer.size) * embed_of_forward(self.spatial, self.crop)


@dataclass(frozen=True)
class AdmmState:
    """Lagrange multipliers zeta_hat and the penalty schedule."""

    multipliers: np.ndarray
    mu: float
    mu_max: float
    mu_scale: float
    iteration: int = 0

    @classmethod
    def fresh(cls, shape, config: SolverConfig) -> "AdmmState":
        return cls(
            multipliers=np.zeros(shape, dtype=complex),
            mu=config.mu_init,
            mu_max=config.mu_max,
            mu_scale=config.mu_scale,
        )


@dataclass(frozen=True)
class TraceRow:
    """One ADMM iteration, as exported to the trace CSV."""

    iteration: int
    objective: float
    primal_residual: float
    mu: float
    frame: int = 1


@dataclass
class AdmmRun:
    """Everything one run_admm call produces."""

    filter: FilterBank
    state: AdmmState
    trace: list[TraceRow] = field(default_factory=list)
    primal_residual: float = math.inf
    iterations: int = 0


# =====================================================
# LABEL AND PENALIZATION
# =====================================================

def make_desired_response(grid: Grid2, sigma: float) -> DesiredResponse:
    """
    Gaussian label peaking at 1 on the grid center (H // 2, W // 2).

    EXAMPLE:
    --------
    >>> y = make_desired_response(Grid2(16, 16), sigma=2.0)
    >>> y.values[8, 8], y.training_layout[0, 0]
    (1.0, 1.0)
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rows = np.arange(grid.height)[:, None] - grid.height // 2
    cols = np.arange(grid.width)[None, :] - grid.width // 2
    values = np.exp(-(rows ** 2 + cols ** 2) / (2.0 * sigma ** 2))
    return DesiredResponse(grid, values, float(sigma))


def make_penalization_mask(grid: Grid2, floor: float, slope: float) -> PenalizationMask:
    """
    Bowl-shaped weights: floor at the support center, rising
    quadratically toward the corners.

        p(i, j) = floor + slope * (((i - c1) / M1)^2 + ((j - c2) / M2)^2)

    with c = ((M1 - 1) / 2, (M2 - 1) / 2), so the bowl is symmetric
    under a 180 degree rotation.
    """
    if not floor > 0:
        raise ValueError(f"penalty floor must be positive, got {floor}")
    if slope < 0:
        raise ValueError(f"penalty slope must be non-negative, got {slope}")
    c1, c2 = (grid.height - 1) / 2.0, (grid.width - 1) / 2.0
    rows = ((np.arange(grid.height) - c1) / grid.height)[:, None]
    cols = ((np.arange(grid.width) - c2) / grid.width)[None, :]
    weights = floor + slope * (rows ** 2 + cols ** 2)
    return PenalizationMask(grid, weights, float(floor), float(slope))


# =====================================================
# OBJECTIVE
# =====================================================

def _penalty(w: np.ndarray, p: PenalizationMask, penalty_mode: str) -> float:
    if penalty_mode == "scalar":
        return p.squared_total() * float(np.sum(w ** 2))
    return float(np.sum((p.weights * w) ** 2))


def _filter_array(w) -> np.ndarray:
    return w.spatial if isinstance(w, FilterBank) else np.asarray(w, dtype=float)


def objective_value(
    w,
    x: FeatureStack,
    y: DesiredResponse,
    p: PenalizationMask,
    penalty_mode: str = "elementwise",
    method: str = "spectral",
) -> float:
    """
    Evaluate E(w) entirely in the spatial domain.

    This is the reference the spectral solver is checked against:
    each channel of w is embedded in the window, correlated with
    its feature channel, and the sum compared with the label.

    PARAMETERS:
    -----------
    w : FilterBank or np.ndarray
        Filter, shape (D, M1, M2).
    x : FeatureStack
        Features on the window grid.
    y : DesiredResponse
        Label on the window grid.
    p : PenalizationMask
        Weights on the filter support.
    penalty_mode : str
        "elementwise" sums (p . w)^2, "scalar" uses (p~' p~) ||w||^2.
    method : str
        Correlation method passed to spectral.correlate.
    """
    w = _filter_array(w)
    y.grid.check(x.data, "features")
    p.grid.check(w, "filter")
    if w.shape[0] != x.channels:
        raise GridMismatchError(f"filter has {w.shape[0]} channels, features {x.channels}")

    crop = CropSpec(x.grid, p.grid)
    response = np.zeros(x.grid.shape)
    for channel, filt in zip(x.data, w):
        response += correlate(channel, embed_center(filt, crop), method=method)

    data_term = 0.5 * float(np.sum((y.training_layout - response) ** 2))
    return data_term + _penalty(w, p, penalty_mode)


def objective_value_spectral(
    w: np.ndarray,
    x_hat: np.ndarray,
    y_hat: np.ndarray,
    p: PenalizationMask,
    crop: CropSpec,
    penalty_mode: str = "elementwise",
) -> float:
    """Same value as objective_value, from precomputed unitary spectra."""
    w_hat = math.sqrt(crop.outer.size) * embed_of_forward(w, crop)
    response_hat = np.sum(np.conj(x_hat) * w_hat, axis=0)
    data_term = 0.5 * float(np.sum(np.abs(y_hat - response_hat) ** 2))
    return data_term + _penalty(w, p, penalty_mode)


# =====================================================
# ADMM SUB-STEPS
# =====================================================

def w_step_divisor(p: PenalizationMask, mu: float, n_total: int, penalty_mode: str = "elementwise"):
    """2 p^2 / N + mu, per cell (elementwise) or as one number (scalar)."""
    if penalty_mode == "scalar":
        return 2.0 * p.squared_total() / n_total + mu
    return 2.0 * p.weights ** 2 / n_total + mu


def solve_w(
    g_spatial: np.ndarray,
    zeta_spatial: np.ndarray,
    p: PenalizationMask,
    mu: float,
    n_total: int,
    penalty_mode: str = "elementwise",
) -> np.ndarray:
    """
    Closed-form w-subproblem: w = (zeta + mu * g) / (2 p^2 / N + mu).

    Works on one channel (M1, M2) or a stack (D, M1, M2); every
    channel uses the same divisor.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    g_spatial = np.asarray(g_spatial, dtype=float)
    zeta_spatial = np.asarray(zeta_spatial, dtype=float)
    p.grid.check(g_spatial, "g")
    p.grid.check(zeta_spatial, "zeta")
    divisor = w_step_divisor(p, mu, n_total, penalty_mode)
    return (zeta_spatial + mu * g_spatial) / divisor


def solve_g_pixel(x_hat_n, y_hat_n, zeta_hat_n, w_hat_n, mu: float) -> np.ndarray:
    """
    The g-subproblem at ONE frequency bin.

    Solves (x x^H + mu I) g = x y - zeta + mu w with Sherman-Morrison:

        g = (x y - zeta + mu w) / mu
            - x / (mu b) * (s_x y - s_zeta + mu s_w)

    where s_x = x^H x, s_zeta = x^H zeta, s_w = x^H w, b = s_x + mu.

    PARAMETERS:
    -----------
    x_hat_n, zeta_hat_n, w_hat_n : array of D complex values
    y_hat_n : complex
    mu : float
        Must be positive, so b >= mu > 0.
    """
    x = np.asarray(x_hat_n, dtype=complex)
    zeta = np.asarray(zeta_hat_n, dtype=complex)
    w = np.asarray(w_hat_n, dtype=complex)

    s_x = np.vdot(x, x).real
    s_zeta = np.vdot(x, zeta)
    s_w = np.vdot(x, w)
    b = s_x + mu

    return (x * y_hat_n - zeta + mu * w) / mu - x / (mu * b) * (s_x * y_hat_n - s_zeta + mu * s_w)


def solve_g(x_hat, y_hat, zeta_hat, w_hat, mu: float) -> np.ndarray:
    """
    solve_g_pixel applied at every bin at once.

    PARAMETERS:
    -----------
    x_hat, zeta_hat, w_hat : np.ndarray
        Shape (D, H, W).
    y_hat : np.ndarray
        Shape (H, W).
    """
    x_hat = np.asarray(x_hat)
    grid = Grid2.of(y_hat)
    for name, arr in (("x_hat", x_hat), ("zeta_hat", zeta_hat), ("w_hat", w_hat)):
        grid.check(arr, name)
    if not (x_hat.shape == np.shape(zeta_hat) == np.shape(w_hat)):
        raise GridMismatchError(
            f"channel mismatch: x_hat {x_hat.shape}, zeta_hat {np.shape(zeta_hat)}, "
            f"w_hat {np.shape(w_hat)}"
        )

    s_x = np.sum(np.abs(x_hat) ** 2, axis=0)
    s_zeta = np.sum(np.conj(x_hat) * zeta_hat, axis=0)
    s_w = np.sum(np.conj(x_hat) * w_hat, axis=0)
    b = s_x + mu

    return (x_hat * y_hat - zeta_hat + mu * w_hat) / mu - x_hat / (mu * b) * (
        s_x * y_hat - s_zeta + mu * s_w
    )


def update_multipliers(state: AdmmState, g_hat, w_hat_embedded) -> AdmmState:
    """zeta_hat += mu (g_hat - w_hat), then mu = min(mu_scale * mu, mu_max)."""
    return replace(
        state,
        multipliers=state.multipliers + state.mu * (np.asarray(g_hat) - np.asarray(w_hat_embedded)),
        mu=min(state.mu_scale * state.mu, state.mu_max),
        iteration=state.iteration + 1,
    )


def primal_residual(g_hat: np.ndarray, w_hat: np.ndarray) -> float:
    """||g_hat - w_hat|| / ||w_hat|| (absolute when w_hat is zero)."""
    gap = float(np.linalg.norm(g_hat - w_hat))
    norm = float(np.linalg.norm(w_hat))
    return gap / norm if norm > 0 else gap


# =====================================================
# FULL SOLVE
# =====================================================

def run_admm(
    x: FeatureStack,
    y: DesiredResponse,
    p: PenalizationMask,
    config: SolverConfig,
    iterations: int | None = None,
    warm_start: FilterBank | None = None,
    admm_state: AdmmState | None = None,
    trace: bool = False,
    frame: int = 1,
) -> AdmmRun:
    """
    Run ADMM until the primal residual drops below config.tolerance
    or the iteration budget is spent.

    At a fixed mu the residual never rises. Once mu has grown to
    mu_max the residual bottoms out near 1e-8 (relative) and then
    wanders in rounding noise, so tolerances below that only spend
    the budget.

    PARAMETERS:
    -----------
    x : FeatureStack
        Training features on the window grid.
    y : DesiredResponse
        Label on the window grid.
    p : PenalizationMask
        Weights on the filter support.
    config : SolverConfig
        Schedule, tolerance and penalty mode.
    iterations : int, optional
        Budget; defaults to config.admm_iterations.
    warm_start : FilterBank, optional
        Seeds g_hat (and therefore the first w-step).
    admm_state : AdmmState, optional
        Previous multipliers; only used when config.carry_multipliers.
    trace : bool
        Record objective / residual / mu per iteration.
    frame : int
        Frame number stamped on trace rows.

    RETURNS:
    --------
    AdmmRun
        The filter, the final ADMM state and the trace rows.
    """
    y.grid.check(x.data, "features")
    crop = CropSpec(x.grid, p.grid)
    n_total = crop.outer.size
    sqrt_n = math.sqrt(n_total)
    budget = iterations or config.admm_iterations

    x_hat = dft2(x.data)
    y_hat = dft2(y.training_layout)

    if warm_start is not None:
        if warm_start.spectral.shape != x_hat.shape:
            raise GridMismatchError(
                f"warm start has shape {warm_start.spectral.shape}, features {x_hat.shape}"
            )
        g_hat = warm_start.spectral.copy()
    else:
        g_hat = np.zeros(x_hat.shape, dtype=complex)

    if config.carry_multipliers and admm_state is not None:
        if admm_state.multipliers.shape != x_hat.shape:
            raise GridMismatchError("carried multipliers do not match the features")
        state = admm_state
    else:
        state = AdmmState.fresh(x_hat.shape, config)

    rows: list[TraceRow] = []
    residual = math.inf
    w = np.zeros((x.channels,) + crop.inner.shape)
    done = 0

    for it in range(1, budget + 1):
        mu = state.mu
        g_spatial = crop_of_inverse(g_hat / sqrt_n, crop)
        zeta_spatial = crop_of_inverse(state.multipliers / sqrt_n, crop)
        w = solve_w(g_spatial, zeta_spatial, p, mu, n_total, config.penalty_mode)
        w_hat = sqrt_n * embed_of_forward(w, crop)

        g_hat = solve_g(x_hat, y_hat, state.multipliers, w_hat, mu)
        if not (np.all(np.isfinite(g_hat)) and np.all(np.isfinite(w))):
            raise SolverDivergedError(it)

        residual = primal_residual(g_hat, w_hat)
        state = update_multipliers(state, g_hat, w_hat)
        done = it

        if trace:
            objective = objective_value_spectral(w, x_hat, y_hat, p, crop, config.penalty_mode)
            rows.append(TraceRow(it, objective, residual, mu, frame))

        logger.debug("admm iteration %d: residual %.3e, mu %.3g", it, residual, mu)
        if residual < config.tolerance:
            break

    return AdmmRun(FilterBank(w, g_hat, crop), state, rows, residual, done)


def train_filter(
    x: FeatureStack,
    y: DesiredResponse,
    p: PenalizationMask,
    config: SolverConfig,
    warm_start: FilterBank | None = None,
) -> FilterBank:
    """Learn a filter; run_admm without the bookkeeping."""
    return run_admm(x, y, p, config, warm_start=warm_start).filter


# =====================================================
# TRACE EXPORT
# =====================================================

TRACE_COLUMNS = ["frame", "iteration", "objective", "primal_residual", "mu"]


def write_trace_csv(rows: list[TraceRow], path) -> None:
    """Write trace rows; one row per ADMM iteration of every training call."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([row.frame, row.iteration, repr(float(row.objective)),
                             repr(float(row.primal_residual)), repr(float(row.mu))])
