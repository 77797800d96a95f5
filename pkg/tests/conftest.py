import numpy as np
import pytest

from romkit.grid import Field, Grid

CHANNEL_TAGS = {"left": "inlet", "right": "outlet_0", "top": "wall", "bottom": "wall"}


@pytest.fixture
def channel_grid():
    return Grid(16, 8, 2.0, 0.5, CHANNEL_TAGS)


@pytest.fixture
def small_grid():
    return Grid(4, 4, 1.0, 1.0, CHANNEL_TAGS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_scalar(grid, rng):
    return Field.scalar(grid, rng.standard_normal(grid.n_scalar))


def random_vector(grid, rng):
    return Field.vector2(
        grid,
        rng.standard_normal((grid.ny, grid.nx + 1)),
        rng.standard_normal((grid.ny + 1, grid.nx)),
    )
