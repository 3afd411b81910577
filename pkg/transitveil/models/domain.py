"""Path-planning domains with visibility constraints.

A :class:`Domain` is an immutable weighted digraph over integer node indices
plus a visibility structure and a set of transit candidates. Grid maps are
turned into domains by :func:`build_domain`; fixture graphs use
:meth:`Domain.from_edges` directly.
"""
import hashlib
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from transitveil.utils.error_handlers import DomainError

logger = logging.getLogger(__name__)

INF = math.inf
Node = int
Label = Hashable


@dataclass(frozen=True)
class Path:
    """Node sequence with per-edge costs.

    ``edge_costs[i]`` is the cost of moving from ``nodes[i]`` to ``nodes[i + 1]``.
    Equality compares node sequences and costs exactly.
    """
    nodes: Tuple[Node, ...]
    edge_costs: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.nodes:
            raise DomainError("path must contain at least one node")
        if len(self.edge_costs) != len(self.nodes) - 1:
            raise DomainError("path needs exactly one edge cost per step")

    @classmethod
    def from_nodes(cls, domain: "Domain", nodes: Sequence[Node]) -> "Path":
        """Build a path, validating every step against the domain's edges."""
        nodes = tuple(int(n) for n in nodes)
        costs = tuple(domain.edge_cost(a, b) for a, b in zip(nodes, nodes[1:]))
        return cls(nodes, costs)

    @property
    def cost(self) -> float:
        return math.fsum(self.edge_costs)

    @property
    def first(self) -> Node:
        return self.nodes[0]

    @property
    def last(self) -> Node:
        return self.nodes[-1]

    def __len__(self) -> int:
        return len(self.nodes)

    def prefix(self, m: Union[int, float]) -> "Path":
        """First ``m`` nodes; the whole path when ``m >= len(self)``."""
        if m >= len(self.nodes):
            return self
        if m < 1:
            raise DomainError(f"prefix length must be at least 1, got {m}")
        m = int(m)
        return Path(self.nodes[:m], self.edge_costs[:m - 1])

    def concat(self, other: "Path") -> "Path":
        """Join two paths sharing a junction node, which appears once."""
        if self.last != other.first:
            raise DomainError(
                f"cannot concatenate: path ends at {self.last} but next starts at {other.first}"
            )
        return Path(self.nodes + other.nodes[1:], self.edge_costs + other.edge_costs)

    def labels(self, domain: "Domain") -> List[Label]:
        return [domain.labels[n] for n in self.nodes]


def prefix(path: Path, m: Union[int, float]) -> Path:
    return path.prefix(m)


def concat(path_a: Path, path_b: Path) -> Path:
    return path_a.concat(path_b)


class Domain:
    """Immutable graph, visibility relation and transit candidate set.

    Distance fields are computed on first use and cached; the caches are
    guarded by a lock so one domain can be shared across worker threads.
    """

    def __init__(self, labels: Sequence[Label], edges: Iterable[Tuple[Node, Node, float]],
                 transit: Sequence[Node], radius: float = 0, undirected: bool = True,
                 name: str = 'domain', grid=None):
        self.name = name
        self.labels: Tuple[Label, ...] = tuple(labels)
        self.index: Dict[Label, Node] = {label: i for i, label in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise DomainError("node labels must be unique")
        if radius < 0:
            raise DomainError(f"visibility radius must be non-negative, got {radius}")
        self.radius = radius
        self.undirected = undirected
        self.grid = grid

        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.labels)))
        for a, b, cost in edges:
            self._add_edge(graph, a, b, cost)
        self.graph = graph
        self._reverse = graph if undirected else graph.reverse(copy=False)
        self.unit_cost = all(w == 1 for _, _, w in graph.edges(data='weight'))
        self.successors: Tuple[Tuple[Tuple[Node, float], ...], ...] = tuple(
            tuple(sorted((b, data['weight']) for b, data in graph[a].items()))
            for a in range(len(self.labels))
        )

        transit = tuple(int(t) for t in transit)
        if len(set(transit)) != len(transit):
            raise DomainError("duplicate transit candidates")
        for t in transit:
            if not 0 <= t < len(self.labels):
                raise DomainError(f"transit candidate {t} is not a node")
        self.transit: Tuple[Node, ...] = transit

        self._lock = threading.Lock()
        self._forward: Dict[Node, np.ndarray] = {}
        self._backward: Dict[Node, np.ndarray] = {}
        self._to_sets: Dict[FrozenSet[Node], np.ndarray] = {}

        self.visibility: Tuple[FrozenSet[Node], ...] = self._compute_visibility()
        inverse: List[set] = [set() for _ in self.labels]
        for n, seen in enumerate(self.visibility):
            for q in seen:
                inverse[q].add(n)
        self.visibility_inv: Tuple[FrozenSet[Node], ...] = tuple(frozenset(s) for s in inverse)

        logger.debug(f"Built domain {name}: {len(self.labels)} nodes, "
                     f"{graph.number_of_edges()} edges, {len(transit)} transit candidates, r={radius}")

    def _add_edge(self, graph: nx.DiGraph, a: Node, b: Node, cost: float):
        if a == b:
            raise DomainError(f"self-loop on node {self.labels[a]!r}")
        if cost < 0:
            raise DomainError(f"negative edge cost {cost} on {self.labels[a]!r}->{self.labels[b]!r}")
        pairs = [(a, b), (b, a)] if self.undirected else [(a, b)]
        for u, v in pairs:
            existing = graph.get_edge_data(u, v)
            if existing is not None and existing['weight'] != cost:
                raise DomainError(
                    f"conflicting costs for edge {self.labels[u]!r}->{self.labels[v]!r}"
                )
            graph.add_edge(u, v, weight=float(cost))

    @classmethod
    def from_edges(cls, labels: Sequence[Label], edges: Iterable[Tuple[Label, Label, float]],
                   transit: Sequence[Label], radius: float = 0, undirected: bool = True,
                   name: str = 'graph') -> "Domain":
        """Build a domain from labelled edges (fixture graphs)."""
        index = {label: i for i, label in enumerate(labels)}
        try:
            indexed = [(index[a], index[b], cost) for a, b, cost in edges]
            transit_idx = [index[t] for t in transit]
        except KeyError as e:
            raise DomainError(f"unknown node {e.args[0]!r}") from None
        return cls(labels, indexed, transit_idx, radius=radius, undirected=undirected, name=name)

    def _compute_visibility(self) -> Tuple[FrozenSet[Node], ...]:
        if self.radius == 0:
            return tuple(frozenset((n,)) for n in range(len(self.labels)))
        seen = []
        for n in range(len(self.labels)):
            if self.unit_cost:
                reached = nx.single_source_shortest_path_length(self.graph, n, cutoff=self.radius)
            else:
                reached = nx.single_source_dijkstra_path_length(self.graph, n, cutoff=self.radius)
            seen.append(frozenset(reached))
        return tuple(seen)

    # -- lookup ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        kind = 'undirected' if self.undirected else 'directed'
        return f"Domain({self.name!r}, nodes={len(self)}, transit={len(self.transit)}, r={self.radius}, {kind})"

    def node(self, label: Label) -> Node:
        try:
            return self.index[label]
        except KeyError:
            raise DomainError(f"{label!r} is not a node of {self.name}") from None

    def edge_cost(self, a: Node, b: Node) -> float:
        data = self.graph.get_edge_data(a, b)
        if data is None:
            raise DomainError(f"no edge {self.labels[a]!r}->{self.labels[b]!r}")
        return data['weight']

    # -- distances ------------------------------------------------------

    def _field(self, graph: nx.DiGraph, source: Node) -> np.ndarray:
        if self.unit_cost:
            lengths = nx.single_source_shortest_path_length(graph, source)
        else:
            lengths = nx.single_source_dijkstra_path_length(graph, source)
        return self._as_array(lengths)

    def _as_array(self, lengths: Dict[Node, float]) -> np.ndarray:
        arr = np.full(len(self.labels), INF)
        keys = np.fromiter(lengths.keys(), dtype=np.int64, count=len(lengths))
        arr[keys] = np.fromiter(lengths.values(), dtype=float, count=len(lengths))
        arr.flags.writeable = False
        return arr

    def _cached(self, cache: dict, key, compute) -> np.ndarray:
        with self._lock:
            arr = cache.get(key)
        if arr is None:
            arr = compute()
            with self._lock:
                arr = cache.setdefault(key, arr)
        return arr

    def distances_from(self, a: Node) -> np.ndarray:
        """dist(a, n) for every node n."""
        return self._cached(self._forward, a, lambda: self._field(self.graph, a))

    def distances_to(self, b: Node) -> np.ndarray:
        """dist(n, b) for every node n."""
        if self.undirected:
            return self.distances_from(b)
        return self._cached(self._backward, b, lambda: self._field(self._reverse, b))

    def distances_to_set(self, targets: Iterable[Node]) -> np.ndarray:
        """min over q in ``targets`` of dist(n, q), for every node n."""
        key = frozenset(targets)
        if not key:
            return np.full(len(self.labels), INF)

        def compute():
            lengths = nx.multi_source_dijkstra_path_length(self._reverse, set(key))
            return self._as_array(lengths)

        return self._cached(self._to_sets, key, compute)

    def dist(self, a: Node, b: Node) -> float:
        return float(self.distances_from(a)[b])

    def dispersion(self, a: Node, b: Node) -> float:
        """Distance used by the ℓ condition; infinite on the diagonal."""
        if a == b:
            return INF
        return self.dist(a, b)

    def min_dispersion(self, nodes: Iterable[Node], others: Optional[Iterable[Node]] = None) -> float:
        """Minimum dispersion over ordered pairs within ``nodes`` or across to ``others``."""
        nodes = list(nodes)
        others = nodes if others is None else list(others)
        best = INF
        for a in nodes:
            for b in others:
                if a != b:
                    best = min(best, self.dist(a, b), self.dist(b, a))
        return best

    def shortest_path(self, a: Node, b: Node) -> Optional[Path]:
        """Deterministic geodesic a -> b, or None when b is unreachable.

        Among tight successors the smallest node index is taken.
        """
        to_b = self.distances_to(b)
        if not math.isfinite(to_b[a]):
            return None
        nodes, costs = [a], []
        current = a
        while current != b:
            remaining = to_b[current]
            for nbr, cost in self.successors[current]:
                if abs(to_b[nbr] + cost - remaining) <= 1e-9 * max(1.0, remaining):
                    nodes.append(nbr)
                    costs.append(cost)
                    current = nbr
                    break
            else:
                raise DomainError("inconsistent distance field")  # unreachable on valid fields
        return Path(tuple(nodes), tuple(costs))

    # -- visibility -----------------------------------------------------

    def covers(self, path: Path, n: Node) -> bool:
        """True iff some node of ``path`` sees ``n``."""
        watchers = self.visibility_inv[n]
        return any(p in watchers for p in path.nodes)

    def coverable(self, s: Node, g: Node, t: Node) -> bool:
        """True iff some watcher of t is reachable from s and reaches g."""
        watchers = np.fromiter(self.visibility_inv[t], dtype=np.int64)
        from_s = self.distances_from(s)[watchers]
        to_g = self.distances_to(g)[watchers]
        return bool(np.any(np.isfinite(from_s) & np.isfinite(to_g)))


@dataclass(frozen=True)
class ProblemTuple:
    """One planning query ⟨domain, s, g, t⟩."""
    domain: Domain = field(repr=False)
    s: Node
    g: Node
    t: Node

    def __post_init__(self):
        if self.s == self.t or self.g == self.t:
            raise DomainError("transit node must differ from start and goal")


def build_domain(grid, transit: Sequence[Tuple[int, int]], r: int = 0,
                 undirected: bool = True, name: Optional[str] = None) -> Domain:
    """Build the 4-connected unit-cost domain over a grid map's passable cells.

    Args:
        grid: Parsed :class:`~transitveil.data.maps.GridMap`
        transit: Transit candidates as ``(x, y)`` cells
        r: Visibility radius in moves through free cells
        undirected: Flag recorded on the domain; grid edges exist both ways
        name: Identifier used for seeding; defaults to a digest of the cells

    Returns:
        Domain whose node labels are ``(x, y)`` tuples in row-major order
    """
    passable = grid.passable
    labels = [(x, y) for y in range(grid.height) for x in range(grid.width) if passable[y, x]]
    index = {label: i for i, label in enumerate(labels)}

    for cell in transit:
        cell = tuple(cell)
        x, y = cell
        if not (0 <= x < grid.width and 0 <= y < grid.height):
            raise DomainError(f"transit cell {cell} lies outside the {grid.width}x{grid.height} map")
        if cell not in index:
            raise DomainError(f"transit cell {cell} is on an obstacle")
    if len({tuple(c) for c in transit}) != len(transit):
        raise DomainError("duplicate transit candidates")

    edges = []
    for (x, y), i in index.items():
        for nbr in ((x + 1, y), (x, y + 1)):
            j = index.get(nbr)
            if j is not None:
                edges.append((i, j, 1.0))
                if not undirected:
                    edges.append((j, i, 1.0))

    if name is None:
        digest = hashlib.blake2b('\n'.join(grid.rows).encode(), digest_size=6).hexdigest()
        name = f"grid-{digest}"
    return Domain(labels, edges, [index[tuple(c)] for c in transit], radius=r,
                  undirected=undirected, name=name, grid=grid)
