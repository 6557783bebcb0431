import numpy as np
import pytest

from bma_forge.data import digits_image_set


@pytest.fixture(scope="session")
def digits():
    """Bundled handwritten-digit scans (8x8, pixels in [0, 1])."""
    return digits_image_set()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240214)
