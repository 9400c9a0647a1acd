import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h=96, w=96):
    """Structured random image: smooth gradient plus speckle, in [0, 1]."""
    yy, xx = np.mgrid[0:h, 0:w]
    base = 0.5 + 0.3 * np.sin(yy / 11.0)[..., None] * np.cos(xx / 7.0)[..., None]
    img = np.clip(base + 0.2 * rng.random((h, w, 3)) - 0.1, 0.0, 1.0)
    return img
