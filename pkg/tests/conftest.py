# =====================================================
# SHARED TEST FIXTURES
# =====================================================

import numpy as np
import pytest

from src.sequences import SyntheticSpec, generate_synthetic, write_sequence
from src.solver import make_desired_response, make_penalization_mask
from src.features import FeatureStack
from src.spectral import Grid2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_instance(rng):
    """Features, label and mask on a 6x6 window with a 3x3 filter support."""
    x = FeatureStack(rng.standard_normal((2, 6, 6)))
    y = make_desired_response(Grid2(6, 6), 1.0)
    p = make_penalization_mask(Grid2(3, 3), 1.0, 1.0)
    return x, y, p


@pytest.fixture
def short_spec():
    """A small, fast synthetic sequence."""
    return SyntheticSpec(
        frames=6, frame_width=128, frame_height=96,
        blob_size=24.0, start_x=48.0, start_y=48.0,
        velocity_x=2.0, velocity_y=1.0, noise_level=0.1,
    )


@pytest.fixture
def short_sequence(short_spec):
    return generate_synthetic(short_spec, seed=3)


@pytest.fixture
def sequence_dir(tmp_path, short_sequence):
    """short_sequence written to disk in the loader's layout."""
    directory = tmp_path / "blob"
    write_sequence(short_sequence, directory)
    return directory
