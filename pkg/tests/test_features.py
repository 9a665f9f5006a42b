import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import (
    ChannelFileParseError,
    ConfigError,
    DataError,
    ExternalChannelsError,
    GridMismatchError,
    NonFiniteFeaturesError,
)
from src.features import (
    CHANNEL_FILE_MAGIC,
    FeatureConfig,
    FeatureStack,
    apply_window,
    as_gray,
    compute_features,
    cosine_window,
    external_channel_path,
    extract_patch,
    gradient_cells,
    grayscale_cells,
    load_external_channels,
    model_geometry,
    sample_external_window,
    save_external_channels,
    stack_spectrum,
)
from src.oracles import raised_cosine, reference_gradient_histograms, reference_patch
from src.spectral import Grid2


# =====================================================
# GEOMETRY
# =====================================================

def test_geometry_of_small_target():
    g = model_geometry((32, 32), 4.0, cell_size=4, max_cells=64)
    assert g.outer == Grid2(16, 16)
    assert g.inner == Grid2(8, 8)
    assert g.window_size == (64.0, 64.0)
    assert g.patch_shape == (64, 64)
    assert g.pixels_per_model_pixel(1.0) == (1.0, 1.0)


def test_geometry_caps_grid_at_max_cells():
    g = model_geometry((400, 200), 4.0, cell_size=4, max_cells=64)
    assert g.outer == Grid2(32, 64)
    assert g.inner == Grid2(16, 32)
    # the window is resampled: one model pixel covers several frame pixels
    assert g.pixels_per_model_pixel(1.0) == pytest.approx((800 / 256, 400 / 128))


def test_geometry_rejects_empty_target():
    with pytest.raises(DataError):
        model_geometry((0, 10), 4.0, 4, 64)


# =====================================================
# PATCHES
# =====================================================

def test_patch_at_native_resolution_is_the_frame(rng):
    frame = rng.random((12, 20))
    patch = extract_patch(frame, (10.0, 6.0), (20, 12), 1.0, (12, 20))
    np.testing.assert_allclose(patch, frame, atol=1e-12)


def test_patch_matches_bilinear_reference(rng):
    frame = rng.random((30, 40))
    for center, size, scale, out_shape in [
        ((20.3, 14.8), (16, 12), 1.0, (12, 16)),
        ((5.0, 3.0), (24, 24), 1.3, (8, 8)),
        ((38.0, 28.5), (10, 20), 0.7, (20, 12)),
    ]:
        np.testing.assert_allclose(
            extract_patch(frame, center, size, scale, out_shape),
            reference_patch(frame, center, size, scale, out_shape),
            atol=1e-12,
        )


def test_patch_rejects_bad_center(rng):
    with pytest.raises(DataError):
        extract_patch(rng.random((8, 8)), (float("nan"), 4.0), (4, 4), 1.0, (4, 4))
    with pytest.raises(DataError):
        extract_patch(rng.random((8, 8)), (4.0, 4.0), (4, 4), 0.0, (4, 4))


def test_as_gray_scales_uint8():
    gray = as_gray(np.full((3, 3), 255, dtype=np.uint8))
    np.testing.assert_allclose(gray, 1.0)
    color = as_gray(np.zeros((3, 3, 3), dtype=np.uint8))
    assert color.shape == (3, 3)


# =====================================================
# BACKENDS
# =====================================================

def test_grayscale_cells_are_zero_mean(rng):
    cells = grayscale_cells(rng.random((16, 12)), 4)
    assert cells.shape == (1, 4, 3)
    assert cells.mean() == pytest.approx(0.0, abs=1e-12)


def test_gradient_cells_match_reference(rng):
    patch = rng.random((16, 24))
    np.testing.assert_allclose(
        gradient_cells(patch, 4, 9),
        reference_gradient_histograms(patch, 4, 9),
        atol=1e-12,
    )


def test_gradient_cells_of_vertical_edge():
    patch = np.zeros((8, 8))
    patch[:, 4:] = 1.0
    hist = gradient_cells(patch, 4, 9)
    # horizontal gradient -> orientation 0 -> first bin only
    assert hist[1:].sum() == 0.0
    assert hist[0].sum() > 0.0


def test_gradient_cells_normalized_per_cell(rng):
    hist = gradient_cells(rng.random((12, 12)), 4, 9, normalize=True)
    np.testing.assert_allclose(np.sqrt(np.sum(hist ** 2, axis=0)), 1.0, atol=1e-9)


def test_gradient_cells_need_whole_cells(rng):
    with pytest.raises(GridMismatchError):
        gradient_cells(rng.random((10, 12)), 4, 9)


def test_compute_features_channels(rng):
    patch = rng.random((16, 16))
    assert compute_features(patch, FeatureConfig(backend="grayscale")).channels == 1
    stack = compute_features(patch, FeatureConfig(backend="gradient_cells", bins=6))
    assert stack.channels == 6
    assert stack.cell_size == 4


def test_compute_features_refuses_external(rng):
    with pytest.raises(ConfigError) as info:
        compute_features(rng.random((8, 8)), FeatureConfig(backend="external"))
    assert info.value.key == "features.backend"


def test_feature_config_forbids_unknown_fields():
    with pytest.raises(ValidationError):
        FeatureConfig(colour=True)


def test_cosine_window_matches_formula():
    for grid in (Grid2(1, 5), Grid2(6, 6), Grid2(7, 4)):
        np.testing.assert_allclose(cosine_window(grid), raised_cosine(grid), atol=1e-15)


def test_apply_window(rng):
    stack = FeatureStack(rng.random((2, 6, 6)))
    assert apply_window(stack, "none") is stack
    tapered = apply_window(stack, "cosine")
    np.testing.assert_array_equal(tapered.data[:, 0, :], 0.0)
    with pytest.raises(ConfigError):
        apply_window(stack, "hamming")


def test_feature_stack_validation():
    assert FeatureStack(np.zeros((4, 5))).data.shape == (1, 4, 5)
    with pytest.raises(NonFiniteFeaturesError):
        FeatureStack(np.array([[[np.nan]]]))
    with pytest.raises(GridMismatchError):
        FeatureStack(np.zeros(5))


def test_spectral_stack_returns_to_spatial(rng):
    stack = FeatureStack(rng.standard_normal((3, 5, 4)), cell_size=2)
    back = stack_spectrum(stack).to_spatial()
    np.testing.assert_allclose(back.data, stack.data, atol=1e-12)
    assert back.cell_size == 2


# =====================================================
# EXTERNAL CHANNELS
# =====================================================

def test_channel_file_round_trip(tmp_path, rng):
    stack = FeatureStack(rng.standard_normal((3, 4, 5)))
    path = tmp_path / "0001.cfb"
    save_external_channels(path, stack)
    loaded = load_external_channels(path, Grid2(4, 5), cell_size=4)
    np.testing.assert_allclose(loaded.data, stack.data.astype(np.float32))
    assert loaded.cell_size == 4


def test_channel_file_grid_mismatch(tmp_path, rng):
    path = tmp_path / "a.cfb"
    save_external_channels(path, FeatureStack(rng.standard_normal((2, 4, 5))))
    with pytest.raises(GridMismatchError):
        load_external_channels(path, Grid2(5, 4))


def test_channel_file_parse_errors(tmp_path, rng):
    with pytest.raises(ChannelFileParseError):
        load_external_channels(tmp_path / "missing.cfb", Grid2(2, 2))

    bad_magic = tmp_path / "magic.cfb"
    bad_magic.write_bytes(b"XXXX" + np.array([1, 2, 2], dtype="<u4").tobytes() + bytes(16))
    with pytest.raises(ChannelFileParseError):
        load_external_channels(bad_magic, Grid2(2, 2))

    truncated = tmp_path / "short.cfb"
    save_external_channels(truncated, FeatureStack(rng.standard_normal((1, 2, 2))))
    truncated.write_bytes(truncated.read_bytes()[:-4])
    with pytest.raises(ChannelFileParseError):
        load_external_channels(truncated, Grid2(2, 2))


def test_channel_file_with_nan(tmp_path):
    values = np.array([1.0, np.nan, 0.0, 2.0], dtype="<f4")
    path = tmp_path / "nan.cfb"
    path.write_bytes(CHANNEL_FILE_MAGIC + np.array([1, 2, 2], dtype="<u4").tobytes() + values.tobytes())
    with pytest.raises(NonFiniteFeaturesError):
        load_external_channels(path, Grid2(2, 2))


def test_external_channel_path():
    assert external_channel_path("feats", "img/0007.jpg").as_posix() == "feats/0007.cfb"
    with pytest.raises(ExternalChannelsError):
        external_channel_path(None, "0001.png")


def test_external_window_lands_on_model_grid(rng):
    geometry = model_geometry((32, 32), 4.0, cell_size=4, max_cells=64)
    channels = FeatureStack(rng.random((5, 24, 32)), cell_size=4)
    window = sample_external_window(channels, (64.0, 48.0), geometry.window_size, 1.0, geometry)
    assert window.grid == geometry.outer
    assert window.channels == 5
    # at stride 4 and scale 1 the window is an exact sub-grid of the channels
    np.testing.assert_allclose(window.data, channels.data[:, 4:20, 8:24], atol=1e-12)
