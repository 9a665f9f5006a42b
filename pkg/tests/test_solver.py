import csv
import math

import numpy as np
import pytest
from pydantic import ValidationError

import src.solver as solver
from src.errors import GridMismatchError, SolverDivergedError
from src.features import FeatureStack
from src.oracles import dense_objective, dense_optimum, dense_pixel_solve, dense_w_step, gaussian_map
from src.selftest import ORACLE_SOLVER, random_instance
from src.solver import (
    AdmmState,
    SolverConfig,
    make_desired_response,
    make_penalization_mask,
    objective_value,
    objective_value_spectral,
    run_admm,
    solve_g,
    solve_g_pixel,
    solve_w,
    train_filter,
    update_multipliers,
    write_trace_csv,
)
from src.spectral import CropSpec, Grid2, dft2


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# =====================================================
# CONFIG, LABEL, MASK
# =====================================================

def test_config_rejects_mu_above_max():
    with pytest.raises(ValidationError):
        SolverConfig(mu_init=10.0, mu_max=1.0)
    with pytest.raises(ValidationError):
        SolverConfig(penalty_floor=0.0)


def test_desired_response_peaks_at_center():
    y = make_desired_response(Grid2(16, 12), sigma=2.0)
    assert y.values[8, 6] == 1.0
    assert y.training_layout[0, 0] == 1.0
    assert np.unravel_index(np.argmax(y.values), y.values.shape) == (8, 6)


def test_desired_response_matches_formula():
    y = make_desired_response(Grid2(7, 10), sigma=1.5)
    np.testing.assert_allclose(y.values, gaussian_map(Grid2(7, 10), 1.5), atol=1e-15)


def test_desired_response_needs_positive_sigma():
    with pytest.raises(ValueError):
        make_desired_response(Grid2(4, 4), 0.0)


def test_penalization_mask_is_a_bowl():
    p = make_penalization_mask(Grid2(5, 5), floor=0.1, slope=3.0)
    assert p.weights[2, 2] == pytest.approx(0.1)
    assert p.weights.min() == pytest.approx(0.1)
    assert p.weights[0, 0] == p.weights.max()
    np.testing.assert_array_equal(p.weights, p.weights[::-1, ::-1])
    assert p.squared_total() == pytest.approx(np.sum(p.weights ** 2))


def test_penalization_mask_arguments():
    with pytest.raises(ValueError):
        make_penalization_mask(Grid2(3, 3), 0.0, 1.0)
    with pytest.raises(ValueError):
        make_penalization_mask(Grid2(3, 3), 1.0, -1.0)


# =====================================================
# OBJECTIVE
# =====================================================

def test_objective_matches_matrix_form(rng):
    for _ in range(20):
        x, y, p = random_instance(rng)
        w = rng.standard_normal((x.channels,) + p.grid.shape)
        crop = CropSpec(x.grid, p.grid)
        for mode in ("elementwise", "scalar"):
            expected = dense_objective(w, x.data, y.training_layout, p.weights, crop, mode)
            assert objective_value(w, x, y, p, penalty_mode=mode) == pytest.approx(expected, rel=1e-9)


def test_objective_spectral_and_direct_agree(small_instance, rng):
    x, y, p = small_instance
    w = rng.standard_normal((2, 3, 3))
    spectral = objective_value(w, x, y, p)
    assert objective_value(w, x, y, p, method="direct") == pytest.approx(spectral, rel=1e-9)
    fast = objective_value_spectral(w, dft2(x.data), dft2(y.training_layout), p, CropSpec(x.grid, p.grid))
    assert fast == pytest.approx(spectral, rel=1e-9)


def test_objective_checks_channels(small_instance):
    x, y, p = small_instance
    with pytest.raises(GridMismatchError):
        objective_value(np.zeros((3, 3, 3)), x, y, p)


# =====================================================
# SUB-STEPS
# =====================================================

def test_pixel_solve_matches_dense_inverse(rng):
    for _ in range(200):
        d = int(rng.integers(1, 9))
        x, zeta, w = _complex(rng, d), _complex(rng, d), _complex(rng, d)
        y = complex(*rng.standard_normal(2))
        mu = float(10 ** rng.uniform(-2, 3))
        np.testing.assert_allclose(solve_g_pixel(x, y, zeta, w, mu), dense_pixel_solve(x, y, zeta, w, mu), atol=1e-10)


def test_pixel_solve_single_channel_closed_form():
    x, y, zeta, w, mu = 2.0 - 1.0j, 0.5 + 0.25j, 0.1j, 1.0 + 1.0j, 0.7
    expected = (x * y - zeta + mu * w) / (abs(x) ** 2 + mu)
    assert solve_g_pixel([x], y, [zeta], [w], mu)[0] == pytest.approx(expected, abs=1e-14)


def test_vectorized_g_step_matches_pixels(rng):
    x_hat, zeta, w_hat = _complex(rng, (3, 4, 5)), _complex(rng, (3, 4, 5)), _complex(rng, (3, 4, 5))
    y_hat = _complex(rng, (4, 5))
    g = solve_g(x_hat, y_hat, zeta, w_hat, 0.3)
    for i in range(4):
        for j in range(5):
            np.testing.assert_allclose(
                g[:, i, j], solve_g_pixel(x_hat[:, i, j], y_hat[i, j], zeta[:, i, j], w_hat[:, i, j], 0.3), atol=1e-12
            )


def test_g_step_checks_shapes(rng):
    with pytest.raises(GridMismatchError):
        solve_g(_complex(rng, (2, 4, 4)), _complex(rng, (4, 4)), _complex(rng, (3, 4, 4)), _complex(rng, (2, 4, 4)), 1.0)


def test_w_step_matches_dense_quadratic(rng):
    p = make_penalization_mask(Grid2(3, 4), 0.2, 2.0)
    g, zeta = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    np.testing.assert_allclose(solve_w(g, zeta, p, 0.8, 36), dense_w_step(g, zeta, p.weights, 0.8, 36), atol=1e-12)


def test_w_step_scalar_mode_uses_one_divisor(rng):
    p = make_penalization_mask(Grid2(3, 3), 1.0, 1.0)
    g = rng.standard_normal((3, 3))
    w = solve_w(g, np.zeros((3, 3)), p, 2.0, 25, penalty_mode="scalar")
    np.testing.assert_allclose(w, 2.0 * g / (2.0 * p.squared_total() / 25 + 2.0))


def test_w_step_needs_positive_mu(rng):
    p = make_penalization_mask(Grid2(2, 2), 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_w(np.zeros((2, 2)), np.zeros((2, 2)), p, 0.0, 16)


def test_multiplier_update_and_schedule():
    state = AdmmState(np.zeros((1, 2, 2), dtype=complex), mu=1.0, mu_max=5.0, mu_scale=3.0)
    g, w = np.ones((1, 2, 2)), np.zeros((1, 2, 2))
    state = update_multipliers(state, g, w)
    np.testing.assert_array_equal(state.multipliers, 1.0)
    assert (state.mu, state.iteration) == (3.0, 1)
    state = update_multipliers(state, g, w)
    np.testing.assert_array_equal(state.multipliers, 4.0)
    assert state.mu == 5.0


# =====================================================
# FULL SOLVE
# =====================================================

def _optimality_gap(rng) -> float:
    x, y, p = random_instance(rng)
    found = objective_value(train_filter(x, y, p, ORACLE_SOLVER), x, y, p)
    optimum = objective_value(dense_optimum(x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid)), x, y, p)
    return (found - optimum) / abs(optimum)


def test_admm_reaches_dense_optimum(rng):
    for _ in range(25):
        assert _optimality_gap(rng) <= 1e-5


@pytest.mark.slow
def test_admm_reaches_dense_optimum_on_many_instances():
    rng = np.random.default_rng(2024)
    gaps = [_optimality_gap(rng) for _ in range(200)]
    assert max(gaps) <= 1e-5


def test_admm_scalar_mode_reaches_its_optimum(small_instance):
    x, y, p = small_instance
    config = ORACLE_SOLVER.model_copy(update={"penalty_mode": "scalar"})
    found = objective_value(train_filter(x, y, p, config), x, y, p, penalty_mode="scalar")
    best = dense_optimum(x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid), "scalar")
    optimum = objective_value(best, x, y, p, penalty_mode="scalar")
    assert found - optimum <= 1e-5 * optimum


def test_thin_grid_reaches_dense_optimum(rng):
    x = FeatureStack(rng.standard_normal((1, 1, 8)))
    y = make_desired_response(Grid2(1, 8), 1.0)
    p = make_penalization_mask(Grid2(1, 4), 1.0, 1.0)
    found = objective_value(train_filter(x, y, p, ORACLE_SOLVER), x, y, p)
    best = dense_optimum(x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid))
    optimum = objective_value(best, x, y, p)
    assert abs(found - optimum) <= 1e-6 * abs(optimum)


def test_zero_features_give_a_zero_filter(small_instance):
    _, y, p = small_instance
    run = run_admm(FeatureStack(np.zeros((2, 6, 6))), y, p, SolverConfig())
    assert np.all(run.filter.spatial == 0)
    assert np.all(run.filter.spectral == 0)
    assert run.iterations == 1


def test_residual_never_rises_at_fixed_mu(rng):
    config = ORACLE_SOLVER.model_copy(update={"admm_iterations": 40})
    y = make_desired_response(Grid2(8, 8), 1.0)
    p = make_penalization_mask(Grid2(4, 4), 1.0, 1.0)
    for _ in range(5):
        x = FeatureStack(rng.standard_normal((3, 8, 8)))
        residuals = [row.primal_residual for row in run_admm(x, y, p, config, trace=True).trace]
        assert len(residuals) == 40
        for before, after in zip(residuals, residuals[1:]):
            assert after <= before * (1 + 1e-9) + 1e-13


def test_default_schedule_reaches_its_tolerance(small_instance):
    x, y, p = small_instance
    run = run_admm(x, y, p, SolverConfig(), iterations=100)
    assert run.primal_residual < SolverConfig().tolerance


def test_filter_spectrum_converges_to_embedded_filter(small_instance):
    x, y, p = small_instance
    run = run_admm(x, y, p, ORACLE_SOLVER)
    assert run.primal_residual < 1e-6
    gap = np.linalg.norm(run.filter.spectral - run.filter.embedded_spectrum())
    assert gap <= 1e-6 * np.linalg.norm(run.filter.spectral)


def test_converged_filter_is_a_fixed_point(small_instance):
    x, y, p = small_instance
    config = ORACLE_SOLVER.model_copy(update={"carry_multipliers": True})
    first = run_admm(x, y, p, config)
    again = run_admm(x, y, p, config, iterations=1, warm_start=first.filter, admm_state=first.state)
    change = np.linalg.norm(again.filter.spatial - first.filter.spatial)
    assert change <= 1e-6 * np.linalg.norm(first.filter.spatial)


def test_warm_start_from_a_converged_filter_stays_converged(small_instance):
    x, y, p = small_instance
    config = ORACLE_SOLVER.model_copy(
        update={"carry_multipliers": True, "tolerance": 1e-8, "admm_iterations": 5000}
    )
    first = run_admm(x, y, p, config)
    assert first.primal_residual < config.tolerance
    again = run_admm(x, y, p, config, iterations=1, warm_start=first.filter, admm_state=first.state)
    assert again.iterations == 1
    assert again.primal_residual <= config.tolerance


def test_multipliers_restart_unless_carried(small_instance):
    x, y, p = small_instance
    first = run_admm(x, y, p, SolverConfig(), iterations=3)
    again = run_admm(x, y, p, SolverConfig(), iterations=2, admm_state=first.state)
    assert again.state.iteration == again.iterations
    carried = run_admm(x, y, p, SolverConfig(carry_multipliers=True), iterations=2, admm_state=first.state)
    assert carried.state.iteration == first.state.iteration + carried.iterations


def test_wrong_w_step_divisor_misses_the_optimum(small_instance, monkeypatch):
    x, y, p = small_instance
    best = dense_optimum(x.data, y.training_layout, p.weights, CropSpec(x.grid, p.grid))
    monkeypatch.setattr(solver, "w_step_divisor", lambda p, mu, n, mode="elementwise": p.weights ** 2 / n + mu)
    found = train_filter(x, y, p, ORACLE_SOLVER)
    assert np.linalg.norm(found.spatial - best) > 1e-3 * np.linalg.norm(best)


def test_divergence_is_reported(small_instance, monkeypatch):
    x, y, p = small_instance
    monkeypatch.setattr(solver, "solve_g", lambda *args: np.full(args[0].shape, np.nan, dtype=complex))
    with pytest.raises(SolverDivergedError) as info:
        run_admm(x, y, p, SolverConfig())
    assert info.value.iteration == 1


def test_warm_start_shape_is_checked(small_instance, rng):
    x, y, p = small_instance
    other = train_filter(FeatureStack(rng.standard_normal((3, 6, 6))), y, p, SolverConfig())
    with pytest.raises(GridMismatchError):
        run_admm(x, y, p, SolverConfig(), warm_start=other)


def test_trace_rows(small_instance, tmp_path):
    x, y, p = small_instance
    run = run_admm(x, y, p, SolverConfig(admm_iterations=5), trace=True, frame=7)
    assert [r.iteration for r in run.trace] == list(range(1, run.iterations + 1))
    assert all(r.frame == 7 for r in run.trace)
    assert [r.mu for r in run.trace][:2] == [1.0, 10.0]
    assert run.trace[-1].objective == pytest.approx(objective_value(run.filter, x, y, p), rel=1e-9)

    path = tmp_path / "trace.csv"
    write_trace_csv(run.trace, path)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["frame", "iteration", "objective", "primal_residual", "mu"]
    assert len(rows) == run.iterations + 1
    assert math.isclose(float(rows[1][4]), 1.0)
