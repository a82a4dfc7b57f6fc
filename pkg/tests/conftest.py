import hypothesis
import numpy as np
import pytest

from dualtv.grid import CellField, EdgeField, GridGeometry

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20200807)


def random_edges(rng, g: GridGeometry, scale=1.0) -> EdgeField:
    return EdgeField(g, scale * rng.standard_normal(g.n_edges))


def random_feasible(rng, g: GridGeometry) -> EdgeField:
    return EdgeField(g, rng.uniform(-1.0, 1.0, g.n_edges))


def random_cells(rng, g: GridGeometry) -> CellField:
    return CellField(g, rng.standard_normal(g.shape))


def synthetic_image(m: int) -> np.ndarray:
    a = np.full((m, m), 0.2)
    a[m // 4 : 3 * m // 4, m // 4 : m // 2] = 0.8
    a[m // 2 : 7 * m // 8, m // 2 : 7 * m // 8] = 0.5
    return a
