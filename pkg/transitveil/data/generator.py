"""Seeded scenario sampling and random grid maps."""
import logging
import math
from pathlib import Path as FilePath
from typing import List, Optional, Sequence, Tuple

import numpy as np

from transitveil.config import Config
from transitveil.data.maps import GridMap
from transitveil.models.domain import Domain, build_domain
from transitveil.schemas import Scenario
from transitveil.utils.error_handlers import ConfigurationError, ScenarioExhaustedError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]


def random_grid_map(width: int, height: int, obstacle_ratio: float = 0.2,
                    seed: int = 0, map_type: str = 'octile') -> GridMap:
    """Moving AI map with each cell blocked independently with ``obstacle_ratio``."""
    if width <= 0 or height <= 0:
        raise ConfigurationError(f"map size must be positive, got {width}x{height}")
    if not 0 <= obstacle_ratio < 1:
        raise ConfigurationError(f"obstacle ratio must be in [0, 1), got {obstacle_ratio}")
    rng = np.random.default_rng(seed)
    blocked = rng.random((height, width)) < obstacle_ratio
    rows = tuple(''.join('@' if b else '.' for b in row) for row in blocked)
    return GridMap(map_type, width, height, rows)


class ScenarioGenerator:
    """Draws (s, g, candidates) tuples over one grid map.

    Pairs are distinct, g is reachable from s, and candidates never include
    s or g. Rejected draws are retried up to a bounded number of attempts.
    """

    def __init__(self, grid: GridMap, rng: np.random.Generator):
        self.logger = logging.getLogger(__name__)
        self.grid = grid
        self.rng = rng
        # Reachability does not depend on candidates or radius.
        self.base: Domain = build_domain(grid, [], 0)
        self.cells: List[Cell] = list(self.base.labels)
        if len(self.cells) < 2:
            raise ScenarioExhaustedError("map has fewer than two passable cells")

    def reachable(self, s: Cell, g: Cell) -> bool:
        return math.isfinite(self.base.dist(self.base.node(s), self.base.node(g)))

    def sample_cell(self, exclude: Sequence[Cell] = ()) -> Cell:
        while True:
            cell = self.cells[int(self.rng.integers(len(self.cells)))]
            if cell not in exclude:
                return cell

    def sample_pair(self, start: Optional[Cell] = None, goal: Optional[Cell] = None,
                    seen: Optional[set] = None, max_attempts: int = Config.GEN_MAX_ATTEMPTS_PER_SCENARIO
                    ) -> Tuple[Cell, Cell]:
        """Feasible (s, g) with either end optionally fixed."""
        for _ in range(max_attempts):
            s = start if start is not None else self.sample_cell(exclude=[goal] if goal is not None else ())
            g = goal if goal is not None else self.sample_cell(exclude=[s])
            if s == g or (seen is not None and (s, g) in seen):
                continue
            if self.reachable(s, g):
                return s, g
        raise ScenarioExhaustedError(f"no feasible start/goal pair after {max_attempts} attempts")

    def sample_transit(self, count: int, exclude: Sequence[Cell],
                       rng: Optional[np.random.Generator] = None) -> List[Cell]:
        pool = [c for c in self.cells if c not in exclude]
        if count > len(pool):
            raise ScenarioExhaustedError(f"cannot draw {count} candidates from {len(pool)} free cells")
        rng = rng or self.rng
        picks = rng.choice(len(pool), size=count, replace=False)
        return sorted(pool[int(i)] for i in picks)


def gen_scenarios(grid: GridMap, count: int, seed: int = 0, n_transit: int = 8,
                  r: float = 0, map_ref: str = 'map.map') -> List[Scenario]:
    """Sample ``count`` scenarios with explicit coordinates.

    Args:
        grid: Map to sample on
        count: Number of distinct (s, g) pairs
        seed: Seed for every draw
        n_transit: Candidates per scenario
        r: Visibility radius recorded on each scenario
        map_ref: Map reference written into the scenarios

    Returns:
        Scenarios named ``<map stem>-<i>``; identical for identical arguments

    Raises:
        ScenarioExhaustedError: fewer than ``count`` feasible pairs were found
            within the attempt budget
    """
    if count < 0:
        raise ConfigurationError(f"count must be non-negative, got {count}")
    generator = ScenarioGenerator(grid, np.random.default_rng(seed))
    stem = FilePath(map_ref).stem
    seen: set = set()
    scenarios = []
    budget = max(1, count) * Config.GEN_MAX_ATTEMPTS_PER_SCENARIO
    for i in range(count):
        s, g = generator.sample_pair(seen=seen, max_attempts=budget)
        seen.add((s, g))
        transit = generator.sample_transit(n_transit, exclude=[s, g])
        scenarios.append(Scenario(name=f"{stem}-{i}", map=map_ref, start=s, goal=g,
                                  transit=transit, r=r))
    logger.info(f"Generated {len(scenarios)} scenarios on {stem} (seed={seed}, |T|={n_transit})")
    return scenarios
