import numpy as np
import pytest

from fdboot import FunctionalDataset, Grid


def random_dataset(rng, sizes=(6, 7), m=8, scale=1.0, spread=1.0):
    """Small dataset of smooth-ish random curves for exact-identity tests."""
    grid = Grid.uniform(m)
    groups = []
    for n in sizes:
        coef = rng.standard_normal((n, 3)) * spread
        t = grid.points
        base = (
            coef[:, 0:1] * np.sin(np.pi * t)
            + coef[:, 1:2] * np.cos(np.pi * t)
            + coef[:, 2:3] * t
        )
        groups.append(scale * base + rng.standard_normal((n, m)) * 0.3)
    return FunctionalDataset(grid, tuple(groups))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def micro_dataset(rng):
    return random_dataset(rng, sizes=(5, 6), m=5)
