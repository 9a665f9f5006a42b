# =====================================================
# SELF-TEST MODULE
# =====================================================
#
# Randomized checks of the math against the dense oracles in
# src/oracles.py. `python main.py selftest` runs every suite
# and exits non-zero if any fails.
#
# THE SUITES:
# -----------
#   spectral-identities    Parseval, dense DFT, shift theorem,
#                          correlation theorem, crop/embed adjoint
#   sherman-morrison       per-bin g-step vs a dense D x D solve
#   objective-matrix-form  spatial objective vs the same objective
#                          built from dense B and circulant X
#   solver-equivalence     ADMM result vs the normal-equations optimum
#   consensus-formula      exp(-||a - b||^2), bounds and symmetry
#   gated-update           learning-rate gate and the model blends
#
# Each suite owns its instances and is independent of the others,
# so a broken w-step shows up in solver-equivalence only.
#
# =====================================================

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from src.features import FeatureStack, stack_spectrum
from src.oracles import (
    crop_matrix,
    dense_dft2,
    dense_objective,
    dense_optimum,
    dense_pixel_solve,
)
from src.sequences import SyntheticSpec, generate_synthetic
from src.solver import (
    SolverConfig,
    make_desired_response,
    make_penalization_mask,
    objective_value,
    run_admm,
    solve_g_pixel,
)
from src.spectral import (
    CropSpec,
    Grid2,
    circular_shift,
    correlate,
    crop_center,
    dft2,
    embed_center,
    inverse_dft2,
    phase_ramp,
)
from src.tracker import (
    ResponseMap,
    TrackerConfig,
    UpdateConfig,
    consensus,
    gated_update,
    initialize,
    interpolate_models,
    select_learning_rate,
)

logger = logging.getLogger(__name__)

# Constant, moderate mu and a firm penalty floor make ADMM converge
# to machine precision on small instances within the iteration cap.
ORACLE_SOLVER = SolverConfig(
    admm_iterations=600,
    mu_init=0.1,
    mu_scale=1.0,
    mu_max=0.1,
    tolerance=1e-14,
    penalty_floor=1.0,
    penalty_slope=1.0,
)


@dataclass
class SuiteResult:
    """Outcome of one suite."""

    name: str
    checks: int = 0
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool, message: str) -> None:
        self.checks += 1
        if not ok:
            self.failures.append(message)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": self.checks,
            "failures": self.failures[:5],
            "seconds": round(self.seconds, 3),
        }


def _relative(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


def random_instance(rng: np.random.Generator, max_outer: int = 8, max_inner: int = 4, max_channels: int = 4):
    """A random (features, label, mask) triple on small grids."""
    outer = Grid2(int(rng.integers(2, max_outer + 1)), int(rng.integers(2, max_outer + 1)))
    inner = Grid2(
        int(rng.integers(1, min(max_inner, outer.height) + 1)),
        int(rng.integers(1, min(max_inner, outer.width) + 1)),
    )
    channels = int(rng.integers(1, max_channels + 1))
    x = FeatureStack(rng.standard_normal((channels,) + outer.shape))
    y = make_desired_response(outer, float(rng.uniform(0.5, 2.0)))
    p = make_penalization_mask(inner, ORACLE_SOLVER.penalty_floor, ORACLE_SOLVER.penalty_slope)
    return x, y, p


# =====================================================
# SUITES
# =====================================================

def suite_spectral(rng: np.random.Generator, suite: SuiteResult, trials: int = 100) -> None:
    for t in range(trials):
        h, w = int(rng.integers(2, 17)), int(rng.integers(2, 17))
        x = rng.standard_normal((h, w))
        spectrum = dft2(x)

        energy = float(np.sum(x ** 2))
        suite.check(abs(float(np.sum(np.abs(spectrum) ** 2)) - energy) <= 1e-10 * energy,
                    f"trial {t}: Parseval")
        suite.check(_relative(inverse_dft2(spectrum).real, x) <= 1e-12, f"trial {t}: round trip")

        if h <= 8 and w <= 8:
            suite.check(_relative(spectrum, dense_dft2(x)) <= 1e-9, f"trial {t}: dense DFT")
            other = rng.standard_normal((h, w))
            suite.check(
                _relative(correlate(x, other), correlate(x, other, method="direct")) <= 1e-9,
                f"trial {t}: correlation theorem",
            )

        delta = (int(rng.integers(-20, 21)), int(rng.integers(-20, 21)))
        shifted = dft2(circular_shift(x, delta))
        suite.check(_relative(shifted, spectrum * phase_ramp(Grid2(h, w), delta)) <= 1e-9,
                    f"trial {t}: shift theorem {delta}")

        crop = CropSpec(Grid2(h, w), Grid2(int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))))
        small = rng.standard_normal(crop.inner.shape)
        left = float(np.sum(crop_center(x, crop) * small))
        right = float(np.sum(x * embed_center(small, crop)))
        suite.check(abs(left - right) <= 1e-9 * max(1.0, abs(left)), f"trial {t}: crop/embed adjoint")
        dense = (crop_matrix(crop) @ x.ravel()).reshape(crop.inner.shape)
        suite.check(np.array_equal(dense, crop_center(x, crop)), f"trial {t}: crop matrix")


def suite_sherman_morrison(rng: np.random.Generator, suite: SuiteResult, trials: int = 1000) -> None:
    for t in range(trials):
        d = int(rng.integers(1, 9))
        cplx = lambda: rng.standard_normal(d) + 1j * rng.standard_normal(d)
        x, zeta, w = cplx(), cplx(), cplx()
        y = complex(rng.standard_normal(), rng.standard_normal())
        mu = float(10 ** rng.uniform(-2, 3))
        fast = solve_g_pixel(x, y, zeta, w, mu)
        slow = dense_pixel_solve(x, y, zeta, w, mu)
        suite.check(float(np.max(np.abs(fast - slow))) <= 1e-10, f"pixel {t}: D={d}, mu={mu:.3g}")


def suite_matrix_form(rng: np.random.Generator, suite: SuiteResult, trials: int = 100) -> None:
    for t in range(trials):
        x, y, p = random_instance(rng)
        w = rng.standard_normal((x.channels,) + p.grid.shape)
        spatial = objective_value(w, x, y, p)
        dense = dense_objective(w, x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid))
        suite.check(abs(spatial - dense) <= 1e-9 * abs(dense), f"instance {t}: {spatial} vs {dense}")


def suite_solver(rng: np.random.Generator, suite: SuiteResult, trials: int = 40) -> None:
    for t in range(trials):
        x, y, p = random_instance(rng)
        run = run_admm(x, y, p, ORACLE_SOLVER)
        best = dense_optimum(x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid))
        found = objective_value(run.filter, x, y, p)
        optimum = objective_value(best, x, y, p)
        suite.check(
            found - optimum <= 1e-5 * abs(optimum),
            f"instance {t}: objective {found:.9g} vs optimum {optimum:.9g}",
        )


def suite_consensus(rng: np.random.Generator, suite: SuiteResult, trials: int = 100) -> None:
    grid = Grid2(8, 8)
    a = ResponseMap(grid, rng.standard_normal(grid.shape))
    suite.check(consensus(a, a) == 1.0, "consensus(a, a) != 1")

    unit = np.zeros(grid.shape)
    unit[3, 5] = 1.0
    b = ResponseMap(grid, a.values + unit)
    suite.check(abs(consensus(a, b) - math.exp(-1.0)) <= 1e-12, "unit distance is not exp(-1)")

    for t in range(trials):
        left = ResponseMap(grid, 0.3 * rng.standard_normal(grid.shape))
        right = ResponseMap(grid, 0.3 * rng.standard_normal(grid.shape))
        c = consensus(left, right)
        suite.check(c == consensus(right, left), f"pair {t}: not symmetric")
        suite.check(0.0 < c <= 1.0, f"pair {t}: {c} outside (0, 1]")
        direct = math.exp(-sum(
            (left.values[i, j] - right.values[i, j]) ** 2
            for i in range(grid.height) for j in range(grid.width)
        ))
        suite.check(abs(c - direct) <= 1e-15, f"pair {t}: formula")


def suite_gated_update(rng: np.random.Generator, suite: SuiteResult) -> None:
    cfg = UpdateConfig()
    for score, expected in ((0.9, cfg.eta_high), (0.4, cfg.eta_low), (0.1, None)):
        suite.check(select_learning_rate(score, cfg) == expected, f"gate at C={score}")

    shape = (3, 6, 6)
    old_x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    new_x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    old_m, new_m = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
    for eta in (0.0, 0.25, 0.5, 1.0):
        for gamma in (0.0, 0.25, 0.5, 1.0):
            x, m = interpolate_models(old_x, new_x, old_m, new_m, eta, gamma)
            suite.check(np.array_equal(x, (1 - eta) * old_x + eta * new_x), f"appearance at eta={eta}")
            suite.check(np.array_equal(m, (1 - gamma) * old_m + gamma * new_m), f"response at gamma={gamma}")
    x, _ = interpolate_models(old_x, new_x, old_m, new_m, 1.0, 0.0)
    suite.check(np.array_equal(x, new_x), "eta = 1 does not replace the appearance")

    # A closed gate must leave every model bitwise untouched
    sequence = generate_synthetic(SyntheticSpec(frames=1, frame_width=96, frame_height=96,
                                                blob_size=24.0, start_x=48.0, start_y=48.0))
    state = initialize(sequence.read_frame(0), sequence.truth[0], TrackerConfig())
    far = ResponseMap(state.ideal_response.grid, state.ideal_response.values + 10.0)
    features = stack_spectrum(FeatureStack(rng.standard_normal(state.appearance.data.shape)))
    after, record = gated_update(state, features, far)
    suite.check(not record.learned, "learning happened with the gate closed")
    suite.check(after.appearance is state.appearance, "appearance changed with the gate closed")
    suite.check(after.ideal_response is state.ideal_response, "ideal response changed with the gate closed")
    suite.check(after.filter is state.filter, "filter changed with the gate closed")


SUITES = {
    "spectral-identities": suite_spectral,
    "sherman-morrison": suite_sherman_morrison,
    "objective-matrix-form": suite_matrix_form,
    "solver-equivalence": suite_solver,
    "consensus-formula": suite_consensus,
    "gated-update": suite_gated_update,
}


def run_selftest(seed: int = 0, names: list[str] | None = None) -> list[SuiteResult]:
    """
    Run the named suites (all by default), each with its own
    generator derived from `seed`.

    RETURNS:
    --------
    list[SuiteResult]
        In SUITES order.
    """
    results = []
    for offset, (name, suite_fn) in enumerate(SUITES.items()):
        if names and name not in names:
            continue
        suite = SuiteResult(name)
        started = time.perf_counter()
        suite_fn(np.random.default_rng(seed + offset), suite)
        suite.seconds = time.perf_counter() - started
        logger.info("suite %s: %d checks, %d failures", name, suite.checks, len(suite.failures))
        results.append(suite)
    return results
