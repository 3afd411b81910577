import logging

import numpy as np
import pytest

from transitveil.data.generator import ScenarioGenerator, random_grid_map
from transitveil.data.maps import GridMap, load_fixture
from transitveil.models.domain import build_domain
from transitveil.utils.error_handlers import ScenarioExhaustedError

CORRIDOR_TRANSIT = [(1, 0), (3, 0), (1, 2), (3, 2)]


@pytest.fixture(autouse=True)
def quiet_logs():
    logging.getLogger('transitveil').setLevel(logging.WARNING)
    yield


@pytest.fixture
def make_domain():
    """Factory: domain over a grid given as row strings."""
    def factory(rows, transit=(), r=0, name=None):
        grid = GridMap('octile', len(rows[0]), len(rows), tuple(rows))
        return build_domain(grid, list(transit), r, name=name)
    return factory


@pytest.fixture
def corridor(make_domain):
    """1x5 corridor, cells 0..4 left to right."""
    return make_domain(['.....'], name='corridor')


@pytest.fixture
def corridor_intuition():
    """5x3 map where the straight s-g walk sees all four candidates."""
    grid = load_fixture('corridor_intuition')
    domain = build_domain(grid, CORRIDOR_TRANSIT, r=1, name='corridor_intuition')
    return domain, domain.node((0, 1)), domain.node((4, 1))


@pytest.fixture
def directed_branch():
    fixture = load_fixture('directed_branch')
    return fixture.domain, fixture.start, fixture.goal


@pytest.fixture(scope='session')
def random_instances():
    """Factory: seeded (domain, s, g) triples on random grid maps."""
    def factory(count, n_transit, size=8, obstacle_ratio=0.2, r=0, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        attempt = 0
        while len(out) < count:
            attempt += 1
            grid = random_grid_map(size, size, obstacle_ratio, seed=seed * 10_000 + attempt)
            try:
                generator = ScenarioGenerator(grid, rng)
                s, g = generator.sample_pair()
                transit = generator.sample_transit(n_transit, exclude=[s, g])
            except ScenarioExhaustedError:
                continue
            radius = r(rng) if callable(r) else r
            domain = build_domain(grid, transit, radius, name=f"random-{seed}-{attempt}")
            out.append((domain, domain.node(s), domain.node(g)))
        return out
    return factory
