"""Map and fixture file formats.

Moving AI grid maps::

    type octile
    height H
    width W
    map
    <H rows of W cells>

``.`` and ``G`` are passable; ``@``, ``O``, ``T``, ``S`` and ``W`` are not.
(0, 0) is the upper-left cell; cells are addressed as ``(x, y)``.

Fixture graphs are edge lists, one declaration per line::

    directed            # optional, graphs are undirected by default
    radius 0            # optional
    node s
    edge s t1 1
    transit t1
    start s
    goal g
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from transitveil.models.domain import Domain
from transitveil.utils.error_handlers import ConfigurationError, MapParseError

logger = logging.getLogger(__name__)

PASSABLE = frozenset('.G')
IMPASSABLE = frozenset('@OTSW')
HEADER_KEYS = ('type', 'height', 'width', 'map')
FIXTURE_DIR = Path(__file__).parent / 'fixtures'


@dataclass(frozen=True)
class GridMap:
    """Parsed grid map; keeps raw rows so serialization is byte-exact."""
    map_type: str
    width: int
    height: int
    rows: Tuple[str, ...]
    newline: str = '\n'
    trailing_newline: bool = True
    passable: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.rows) != self.height or any(len(row) != self.width for row in self.rows):
            raise MapParseError(f"cell grid does not match {self.width}x{self.height}")
        grid = np.array([[c in PASSABLE for c in row] for row in self.rows], dtype=bool)
        grid = grid.reshape(self.height, self.width)
        grid.flags.writeable = False
        object.__setattr__(self, 'passable', grid)

    def is_passable(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height and bool(self.passable[y, x])

    def passable_cells(self) -> List[Tuple[int, int]]:
        """Passable cells in row-major order (the domain's node order)."""
        ys, xs = np.nonzero(self.passable)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]


def _header_value(line: str, key: str, lineno: int, numeric: bool) -> Union[str, int]:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise MapParseError(f"expected '{key} <value>' header, found {line!r}", line=lineno)
    if not numeric:
        return parts[1]
    try:
        value = int(parts[1])
    except ValueError:
        raise MapParseError(f"{key} must be an integer, found {parts[1]!r}", line=lineno) from None
    if value <= 0:
        raise MapParseError(f"{key} must be positive, found {value}", line=lineno)
    return value


def parse_map(text: str) -> GridMap:
    """Parse Moving AI map text.

    Raises:
        MapParseError: malformed header, wrong row count or width, or an
            unknown cell character. The error names line and column.
    """
    newline = '\r\n' if '\r\n' in text else '\n'
    trailing = text.endswith(newline)
    lines = text.split(newline)
    if trailing:
        lines = lines[:-1]
    if len(lines) < 4:
        raise MapParseError("truncated header", line=len(lines) + 1)

    map_type = _header_value(lines[0], 'type', 1, numeric=False)
    height = _header_value(lines[1], 'height', 2, numeric=True)
    width = _header_value(lines[2], 'width', 3, numeric=True)
    if lines[3].strip() != 'map':
        raise MapParseError(f"expected 'map' line, found {lines[3]!r}", line=4)

    rows = lines[4:]
    if len(rows) < height:
        raise MapParseError(f"header says height {height} but only {len(rows)} rows follow",
                            line=4 + len(rows) + 1, row=len(rows) + 1)
    extra = rows[height:]
    if any(r.strip() for r in extra):
        raise MapParseError(f"more than {height} rows", line=4 + height + 1, row=height + 1)
    rows = rows[:height]

    for i, row in enumerate(rows):
        if len(row) != width:
            raise MapParseError(f"header says width {width} but row has {len(row)} chars",
                                line=5 + i, row=i + 1)
        for j, cell in enumerate(row):
            if cell not in PASSABLE and cell not in IMPASSABLE:
                raise MapParseError(f"unknown cell character {cell!r}", line=5 + i, column=j + 1, row=i + 1)

    # Blank trailing lines beyond the grid are not kept.
    trailing = trailing or bool(extra)
    return GridMap(map_type, width, height, tuple(rows), newline, trailing)


def serialize_map(grid: GridMap) -> str:
    lines = [f"type {grid.map_type}", f"height {grid.height}", f"width {grid.width}", "map", *grid.rows]
    text = grid.newline.join(lines)
    return text + grid.newline if grid.trailing_newline else text


def read_map(path: Union[str, Path]) -> GridMap:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"map file not found: {path}")
    return parse_map(path.read_text())


@dataclass(frozen=True)
class GraphFixture:
    """Edge-list fixture with its own start, goal and candidates."""
    name: str
    domain: Domain
    start: int
    goal: int


def parse_graph_fixture(text: str, name: str = 'fixture', radius_override: Optional[float] = None) -> GraphFixture:
    labels: List[str] = []
    edges = []
    transit: List[str] = []
    start = goal = None
    radius = 0.0
    undirected = True

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        try:
            if keyword == 'node' and len(args) == 1:
                labels.append(args[0])
            elif keyword == 'edge' and len(args) == 3:
                edges.append((args[0], args[1], float(args[2])))
            elif keyword == 'transit' and args:
                transit.extend(args)
            elif keyword == 'start' and len(args) == 1:
                start = args[0]
            elif keyword == 'goal' and len(args) == 1:
                goal = args[0]
            elif keyword == 'radius' and len(args) == 1:
                radius = float(args[0])
            elif keyword in ('directed', 'undirected') and not args:
                undirected = keyword == 'undirected'
            else:
                raise MapParseError(f"unrecognised declaration {line!r}", line=lineno)
        except ValueError:
            raise MapParseError(f"bad number in {line!r}", line=lineno) from None

    known = set(labels)
    for a, b, _ in edges:
        for label in (a, b):
            if label not in known:
                raise MapParseError(f"edge references undeclared node {label!r}")
    if start is None or goal is None:
        raise MapParseError("fixture must declare start and goal")
    for label in [start, goal, *transit]:
        if label not in known:
            raise MapParseError(f"undeclared node {label!r}")

    if radius_override is not None:
        radius = radius_override
    domain = Domain.from_edges(labels, edges, transit, radius=radius, undirected=undirected, name=name)
    return GraphFixture(name, domain, domain.node(start), domain.node(goal))


def resolve_map_path(reference: str, base_dir: Optional[Path] = None) -> Path:
    """Resolve ``fixture:<name>`` or a path relative to ``base_dir``."""
    if reference.startswith('fixture:'):
        name = reference.split(':', 1)[1]
        for suffix in ('.map', '.graph'):
            candidate = FIXTURE_DIR / f"{name}{suffix}"
            if candidate.exists():
                return candidate
        raise ConfigurationError(f"unknown fixture {name!r}")
    path = Path(reference)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    if not path.exists():
        raise ConfigurationError(f"map file not found: {path}")
    return path


def load_fixture(name: str) -> Union[GridMap, GraphFixture]:
    """Load a packaged fixture by name."""
    path = resolve_map_path(f"fixture:{name}")
    if path.suffix == '.graph':
        return parse_graph_fixture(path.read_text(), name=name)
    return parse_map(path.read_text())
