"""Watchman route with targets.

Finds a minimum-cost path from ``s`` to ``g`` that covers every target of a
set ψ. The search runs over states ⟨node, uncovered⟩ where ``uncovered`` is a
bit set indexed by each target's position in the sorted target tuple.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from transitveil.config import Config
from transitveil.models.domain import Domain, Node, Path
from transitveil.utils.helpers import Deadline

logger = logging.getLogger(__name__)

INF = math.inf


class WrptOutcome(str, Enum):
    SOLVED = 'solved'
    NO_PATH = 'no_path'
    TIMED_OUT = 'timed_out'


class Heuristic(str, Enum):
    BLIND = 'blind'
    TUNNEL = 'tunnel'


@dataclass(frozen=True)
class WrptState:
    node: Node
    uncovered: int


@dataclass
class WrptResult:
    outcome: WrptOutcome
    path: Optional[Path] = None
    expansions: int = 0
    generated: int = 0

    @property
    def solved(self) -> bool:
        return self.outcome is WrptOutcome.SOLVED

    @property
    def timed_out(self) -> bool:
        return self.outcome is WrptOutcome.TIMED_OUT

    @property
    def cost(self) -> float:
        return self.path.cost if self.path is not None else INF


@dataclass
class WrptCounters:
    """Running totals over many solves, exported to the CSV harness."""
    calls: int = 0
    expansions: int = 0
    generated: int = 0
    timeouts: int = 0

    def add(self, result: WrptResult):
        self.calls += 1
        self.expansions += result.expansions
        self.generated += result.generated
        if result.timed_out:
            self.timeouts += 1


@dataclass(frozen=True)
class CoverFields:
    """Distance data behind the tunnel heuristic.

    ``reach[i, n]`` is the cost from n to the nearest watcher of target i,
    ``exit[i]`` the cheapest watcher-to-goal cost and ``to_goal[n]`` dist(n, g).
    """
    targets: Tuple[Node, ...]
    reach: np.ndarray = field(repr=False)
    exit: np.ndarray = field(repr=False)
    to_goal: np.ndarray = field(repr=False)


def build_cover_fields(domain: Domain, g: Node, targets: Iterable[Node]) -> CoverFields:
    targets = tuple(sorted(set(targets)))
    to_goal = domain.distances_to(g)
    if targets:
        reach = np.vstack([domain.distances_to_set(domain.visibility_inv[u]) for u in targets])
        exit_costs = np.array([
            min(to_goal[q] for q in domain.visibility_inv[u]) for u in targets
        ], dtype=float)
    else:
        reach = np.empty((0, len(domain)))
        exit_costs = np.empty(0)
    return CoverFields(targets, reach, exit_costs, to_goal)


def target_masks(domain: Domain, targets: Tuple[Node, ...]) -> Dict[Node, int]:
    """Bit mask of the targets each watcher node sees."""
    masks: Dict[Node, int] = {}
    for i, u in enumerate(targets):
        for q in domain.visibility_inv[u]:
            masks[q] = masks.get(q, 0) | (1 << i)
    return masks


def initial_state(domain: Domain, s: Node, targets: Iterable[Node]) -> WrptState:
    targets = tuple(sorted(set(targets)))
    full = (1 << len(targets)) - 1
    return WrptState(s, full & ~target_masks(domain, targets).get(s, 0))


def _bits(mask: int) -> List[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _popcount(mask: int) -> int:
    return bin(mask).count('1')


def h_blind(state: WrptState, fields: Optional[CoverFields] = None) -> float:
    return 0.0


def h_tunnel(state: WrptState, fields: CoverFields) -> float:
    """Farthest cost to reach an uncovered target plus the cheapest exit."""
    if state.uncovered == 0:
        return float(fields.to_goal[state.node])
    idx = _bits(state.uncovered)
    return float(fields.reach[idx, state.node].max() + fields.exit[idx].min())


class _TunnelEvaluator:
    """h_tunnel over plain lists, with per-mask lookups memoized."""

    def __init__(self, fields: CoverFields):
        self.reach = fields.reach.tolist()
        self.exit = fields.exit.tolist()
        self.to_goal = fields.to_goal.tolist()
        self._masks: Dict[int, Tuple[List[int], float]] = {}

    def __call__(self, node: Node, uncovered: int) -> float:
        if uncovered == 0:
            return self.to_goal[node]
        entry = self._masks.get(uncovered)
        if entry is None:
            idx = _bits(uncovered)
            entry = (idx, min(self.exit[i] for i in idx))
            self._masks[uncovered] = entry
        idx, exit_cost = entry
        return max(self.reach[i][node] for i in idx) + exit_cost


class WrptSolver:
    """A* over ⟨node, uncovered⟩ with blind or tunnel heuristic."""

    def __init__(self, domain: Domain, heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
                 check_interval: int = Config.WRPT_CHECK_INTERVAL, record_expansions: bool = False):
        self.domain = domain
        self.heuristic = Heuristic(heuristic)
        self.check_interval = check_interval
        self.record_expansions = record_expansions
        self.expanded: List[WrptState] = []

    def solve(self, s: Node, g: Node, targets: Iterable[Node],
              deadline: Optional[Deadline] = None) -> WrptResult:
        """Cost-optimal s -> g path covering every target.

        Args:
            s: Start node
            g: Goal node
            targets: Nodes that must be covered
            deadline: Optional time budget, checked every ``check_interval`` expansions

        Returns:
            WrptResult; ``NO_PATH`` when no covering path exists, ``TIMED_OUT``
            when the budget runs out (no partial path is returned)
        """
        domain = self.domain
        targets = tuple(sorted(set(targets)))
        if len(targets) > Config.WRPT_MAX_TARGETS:
            raise ValueError(f"at most {Config.WRPT_MAX_TARGETS} targets supported, got {len(targets)}")

        masks = target_masks(domain, targets)
        full = (1 << len(targets)) - 1
        if self.heuristic is Heuristic.TUNNEL:
            h = _TunnelEvaluator(build_cover_fields(domain, g, targets))
        else:
            h = lambda node, uncovered: 0.0  # noqa: E731

        start = (s, full & ~masks.get(s, 0))
        h0 = h(*start)
        if h0 == INF:
            return WrptResult(WrptOutcome.NO_PATH)

        heap = [(h0, _popcount(start[1]), -0.0, s, start[1])]
        best_g = {start: 0.0}
        parent: Dict[Tuple[Node, int], Optional[Tuple[Node, int]]] = {start: None}
        closed: Dict[Tuple[Node, int], float] = {}
        expansions = 0
        generated = 1
        successors = domain.successors
        self.expanded = []

        while heap:
            _, _, neg_g, node, uncovered = heapq.heappop(heap)
            g_cost = -neg_g
            key = (node, uncovered)
            if g_cost > best_g[key]:
                continue
            if node == g and uncovered == 0:
                path = self._reconstruct(parent, key)
                return WrptResult(WrptOutcome.SOLVED, path, expansions, generated)
            if closed.get(key, INF) <= g_cost:
                continue
            closed[key] = g_cost
            expansions += 1
            if self.record_expansions:
                self.expanded.append(WrptState(node, uncovered))
            if deadline is not None and expansions % self.check_interval == 0 and deadline.expired():
                logger.debug(f"WRPT timed out after {expansions} expansions")
                return WrptResult(WrptOutcome.TIMED_OUT, None, expansions, generated)

            for nbr, cost in successors[node]:
                child = (nbr, uncovered & ~masks.get(nbr, 0))
                child_g = g_cost + cost
                if child_g >= best_g.get(child, INF):
                    continue
                h_child = h(*child)
                if h_child == INF:
                    continue
                best_g[child] = child_g
                parent[child] = key
                heapq.heappush(heap, (child_g + h_child, _popcount(child[1]), -child_g, nbr, child[1]))
                generated += 1

        return WrptResult(WrptOutcome.NO_PATH, None, expansions, generated)

    def _reconstruct(self, parent, key) -> Path:
        nodes = []
        while key is not None:
            nodes.append(key[0])
            key = parent[key]
        return Path.from_nodes(self.domain, reversed(nodes))


def solve_wrpt(domain: Domain, s: Node, g: Node, targets: Iterable[Node],
               heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
               budget: Union[Deadline, float, None] = None) -> WrptResult:
    """Convenience wrapper around :class:`WrptSolver`; ``budget`` may be seconds."""
    if budget is not None and not isinstance(budget, Deadline):
        budget = Deadline(budget)
    return WrptSolver(domain, heuristic).solve(s, g, targets, budget)


def oracle_wrpt(domain: Domain, s: Node, g: Node, targets: Iterable[Node],
                max_states: int = Config.ORACLE_MAX_STATES) -> WrptResult:
    """Uniform-cost search over ⟨node, frozenset of uncovered targets⟩.

    Shares no code with :class:`WrptSolver`; used to cross-check it on small
    instances. Returns ``TIMED_OUT`` if more than ``max_states`` states are settled.
    """
    remaining = frozenset(u for u in set(targets) if u not in domain.visibility[s])
    settled = set()
    dist = {(s, remaining): 0.0}
    back = {(s, remaining): None}
    order = 0
    frontier = [(0.0, order, s, remaining)]
    expansions = 0
    while frontier:
        cost, _, node, left = heapq.heappop(frontier)
        state = (node, left)
        if state in settled:
            continue
        if node == g and not left:
            nodes = []
            while state is not None:
                nodes.append(state[0])
                state = back[state]
            return WrptResult(WrptOutcome.SOLVED, Path.from_nodes(domain, nodes[::-1]),
                              expansions, len(dist))
        settled.add(state)
        expansions += 1
        if expansions > max_states:
            return WrptResult(WrptOutcome.TIMED_OUT, None, expansions, len(dist))
        for nbr in domain.graph.successors(node):
            seen = domain.visibility[nbr]
            nxt = (nbr, frozenset(u for u in left if u not in seen))
            new_cost = cost + domain.graph[node][nbr]['weight']
            if new_cost < dist.get(nxt, INF):
                dist[nxt] = new_cost
                back[nxt] = state
                order += 1
                heapq.heappush(frontier, (new_cost, order, nbr, nxt[1]))
    return WrptResult(WrptOutcome.NO_PATH, None, expansions, len(dist))
