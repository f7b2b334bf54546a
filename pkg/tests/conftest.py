import numpy as np
import pytest

from pointsources.model import SystemState


def random_state(rng, n, *, min_sep=0.1, complex_intensities=False, weight_range=3.0):
    """Positions in the unit disk with pairwise separation >= min_sep."""
    pts: list[complex] = []
    while len(pts) < n:
        r = np.sqrt(rng.uniform())
        z = r * np.exp(2j * np.pi * rng.uniform())
        if all(abs(z - p) >= min_sep for p in pts):
            pts.append(z)
    g = rng.uniform(-weight_range, weight_range, n)
    g[np.abs(g) < 1e-3] = 1.0
    if complex_intensities:
        g = g + 1j * rng.uniform(-weight_range, weight_range, n)
    return SystemState(0.0, pts, g)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
