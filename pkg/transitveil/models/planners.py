"""Anonymizing path planners.

Every planner maps a query ⟨domain, s, g, t⟩ to a :class:`PlanResult`. Work
that must not depend on ``t`` (partitions, clusterings, random walks, the
full-cover route) is computed from (domain, s, g, settings) only and cached on
the planner instance.
"""
import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from transitveil.config import Config
from transitveil.models.domain import Domain, Node, Path, ProblemTuple
from transitveil.models.partition import (MergeOrder, Partition, PartitionerKind,
                                          PartitionSearchStats, search_partition)
from transitveil.models.wrpt import Heuristic, WrptCounters, WrptSolver
from transitveil.utils.error_handlers import ConfigurationError
from transitveil.utils.helpers import INF, Deadline, format_m, make_rng

logger = logging.getLogger(__name__)


class Failure:
    """Planner non-result. Never equal to anything, itself included."""
    __slots__ = ('reason',)

    def __init__(self, reason: str = ''):
        self.reason = reason

    def __eq__(self, other):
        return False

    def __ne__(self, other):
        return True

    __hash__ = object.__hash__

    def __repr__(self):
        return f"Failure({self.reason!r})"


@dataclass(frozen=True, eq=False)
class PlanResult:
    outcome: Union[Path, Failure]
    group_id: Optional[int] = None
    shared_prefix: Optional[float] = None

    @classmethod
    def failure(cls, reason: str = '') -> "PlanResult":
        return cls(Failure(reason))

    @property
    def failed(self) -> bool:
        return isinstance(self.outcome, Failure)

    @property
    def path(self) -> Optional[Path]:
        return None if self.failed else self.outcome


class PlannerKind(str, Enum):
    PBP = 'pbp'
    M_PBP = 'm_pbp'
    RBP = 'rbp'
    CBP = 'cbp'
    FULL_COVER = 'full_cover'


PREFIX_PLANNERS = {PlannerKind.M_PBP, PlannerKind.RBP, PlannerKind.CBP}
PARTITION_PLANNERS = {PlannerKind.PBP, PlannerKind.M_PBP}


@dataclass(frozen=True)
class PlannerConfig:
    kind: PlannerKind = PlannerKind.PBP
    k: int = 2
    l: float = 1.0
    m: Union[int, float] = INF
    seed: int = 0
    partitioner: PartitionerKind = PartitionerKind.MERGE_BB
    merge_order: MergeOrder = MergeOrder.COST_ASC
    heuristic: Heuristic = Heuristic.TUNNEL
    time_limit: Optional[float] = None
    deduplicate: bool = False

    def __post_init__(self):
        for name, enum in (('kind', PlannerKind), ('partitioner', PartitionerKind),
                           ('merge_order', MergeOrder), ('heuristic', Heuristic)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        if self.k < 1:
            raise ConfigurationError(f"k must be at least 1, got {self.k}")
        if self.l < 0:
            raise ConfigurationError(f"l must be non-negative, got {self.l}")
        if self.m != INF and (self.m < 1 or int(self.m) != self.m):
            raise ConfigurationError(f"m must be a positive integer or inf, got {self.m}")
        if self.kind in PREFIX_PLANNERS and self.m == INF:
            raise ConfigurationError(f"{self.kind.value} needs a finite m")


class PlanCache:
    """t-independent results of one planner run, keyed by (kind, s, g, settings).

    Lives on a planner instance, so two runs over the same domain never share
    work; only the domain's distance fields are shared.
    """

    def __init__(self):
        self._values: Dict = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._values)

    def get(self, key, compute):
        with self._lock:
            if key in self._values:
                return self._values[key]
        value = compute()
        with self._lock:
            return self._values.setdefault(key, value)


def coverable_candidates(domain: Domain, s: Node, g: Node) -> List[Node]:
    return sorted(t for t in domain.transit if t not in (s, g) and domain.coverable(s, g, t))


# -- partitioning --------------------------------------------------------

def pbp_preprocess(domain: Domain, s: Node, g: Node, k: int, l: float,
                   partitioner: Union[PartitionerKind, str] = PartitionerKind.MERGE_BB,
                   budget: Optional[float] = None,
                   order: Union[MergeOrder, str] = MergeOrder.COST_ASC,
                   heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
                   seed: int = 0, deduplicate: bool = False,
                   cache: Optional[PlanCache] = None) -> Tuple[Partition, PartitionSearchStats]:
    """Partition for (s, g); with ``cache`` it is computed once per cache."""
    partitioner = PartitionerKind(partitioner)
    order = MergeOrder(order)
    heuristic = Heuristic(heuristic)

    def compute():
        return search_partition(domain, s, g, k, l, partitioner, order, heuristic, budget, seed, deduplicate)

    if cache is None:
        return compute()
    key = ('partition', s, g, k, l, partitioner, order, heuristic, seed, deduplicate, budget)
    return cache.get(key, compute)


# -- clustering ----------------------------------------------------------

@dataclass(frozen=True)
class Clustering:
    assignment: Mapping[Node, int]
    centroids: Mapping[int, Node]
    objective: float = 0.0

    def clusters(self) -> Dict[int, List[Node]]:
        out: Dict[int, List[Node]] = {cid: [] for cid in self.centroids}
        for t, cid in sorted(self.assignment.items()):
            out[cid].append(t)
        return out


def _centroid(reach: np.ndarray, rows: np.ndarray) -> int:
    """Node minimizing the largest cost to cover any member; lowest index on ties."""
    return int(np.argmin(reach[rows].max(axis=0)))


def _round_robin(n: int, c: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % c
    return labels


def _farthest_first(reach: np.ndarray, nodes: np.ndarray, c: int,
                    rng: np.random.Generator) -> np.ndarray:
    centers = [int(rng.integers(len(nodes)))]
    while len(centers) < c:
        spread = reach[:, nodes[centers]].min(axis=1)
        spread[centers] = -1.0
        centers.append(int(np.argmax(spread)))
    return np.argmin(reach[:, nodes[centers]], axis=1).astype(np.int64)


def _lloyd(reach: np.ndarray, labels: np.ndarray, max_iterations: int) -> Tuple[np.ndarray, Dict[int, int]]:
    for _ in range(max_iterations):
        ids = sorted(set(labels.tolist()))
        centroids = [_centroid(reach, np.flatnonzero(labels == cid)) for cid in ids]
        assigned = np.asarray(ids)[np.argmin(reach[:, centroids], axis=1)]
        if np.array_equal(assigned, labels):
            break
        labels = assigned
    else:
        logger.debug(f"clustering stopped at the {max_iterations}-iteration cap")
    ids = sorted(set(labels.tolist()))
    return labels, {cid: _centroid(reach, np.flatnonzero(labels == cid)) for cid in ids}


def _merge_small(domain: Domain, reach: np.ndarray, labels: np.ndarray,
                 centroids: Dict[int, int], k: int) -> Tuple[np.ndarray, Dict[int, int]]:
    labels = labels.copy()
    centroids = dict(centroids)
    while len(centroids) > 1:
        sizes = Counter(labels.tolist())
        small = [cid for cid in sorted(sizes) if sizes[cid] < k]
        if not small:
            break
        cid = small[0]
        target = min((o for o in sorted(centroids) if o != cid),
                     key=lambda o: (domain.dist(centroids[cid], centroids[o]), o))
        labels[labels == cid] = target
        del centroids[cid]
        centroids[target] = _centroid(reach, np.flatnonzero(labels == target))
    return labels, centroids


def cbp_cluster(domain: Domain, candidates: Sequence[Node], k: int, seed: int = 0,
                max_iterations: int = Config.CBP_MAX_ITERATIONS,
                restarts: int = Config.CBP_RESTARTS) -> Clustering:
    """Group candidates around centroid nodes, every group at least ``k`` strong.

    ⌊n/k⌋ initial clusters are refined by alternating assignment and centroid
    steps, then clusters smaller than ``k`` are folded into the cluster with
    the nearest centroid. One restart seeds clusters farthest-first, the rest
    use a shuffled round-robin; the clustering with the smallest summed
    cluster radius wins.
    """
    cands = sorted(set(candidates))
    n = len(cands)
    if n == 0:
        return Clustering({}, {})
    nodes = np.asarray(cands, dtype=np.int64)
    reach = np.vstack([domain.distances_to_set(domain.visibility_inv[u]) for u in cands])
    c = max(1, n // k)
    rng = make_rng('cbp-cluster', domain.name, tuple(cands), k, seed)

    inits = [_farthest_first(reach, nodes, c, rng)]
    inits += [_round_robin(n, c, rng) for _ in range(max(0, restarts - 1))]

    best = None
    for init in inits:
        labels, centroids = _lloyd(reach, init, max_iterations)
        labels, centroids = _merge_small(domain, reach, labels, centroids, k)
        objective = math.fsum(
            float(reach[np.flatnonzero(labels == cid), sigma].max()) for cid, sigma in centroids.items()
        )
        if best is None or objective < best[0]:
            best = (objective, labels, centroids)

    objective, labels, centroids = best
    # Renumber clusters by their smallest member.
    order = sorted(centroids, key=lambda cid: int(np.flatnonzero(labels == cid)[0]))
    renumber = {old: new for new, old in enumerate(order)}
    assignment = {cands[i]: renumber[int(cid)] for i, cid in enumerate(labels)}
    return Clustering(assignment, {renumber[cid]: centroids[cid] for cid in order}, objective)


# -- planners ------------------------------------------------------------

class Planner:
    """Base planner: query dispatch, WRPT continuation and counters."""

    kind: PlannerKind = None

    def __init__(self, domain: Domain, config: PlannerConfig):
        self.logger = logging.getLogger(__name__)
        self.domain = domain
        self.config = config
        self.counters = WrptCounters()
        self.cache = PlanCache()
        self._solver = WrptSolver(domain, config.heuristic)
        if not domain.undirected and self.kind is not PlannerKind.PBP:
            self.logger.warning(f"{self.kind.value} on directed domain {domain.name}: "
                                f"anonymity guarantee does not apply")

    def __call__(self, query: ProblemTuple) -> PlanResult:
        return self.plan(query)

    def plan(self, query: ProblemTuple) -> PlanResult:
        raise NotImplementedError

    def prepare(self, s: Node, g: Node):
        """Run the t-independent preprocessing for (s, g)."""

    @property
    def completed(self) -> bool:
        return self.counters.timeouts == 0

    @property
    def wrpt_expansions(self) -> int:
        return self.counters.expansions

    def covering_path(self, s: Node, g: Node, t: Node) -> Optional[Path]:
        deadline = Deadline(self.config.time_limit) if self.config.time_limit else None
        result = self._solver.solve(s, g, (t,), deadline)
        self.counters.add(result)
        return result.path

    def continue_from(self, head: Path, g: Node, t: Node) -> Optional[Path]:
        """``head`` followed by the cheapest way on to g that covers t."""
        if self.domain.covers(head, t):
            tail = self.domain.shortest_path(head.last, g)
        else:
            tail = self.covering_path(head.last, g, t)
        return None if tail is None else head.concat(tail)


class PartitioningPlanner(Planner):
    """Pbp: every member of a subset gets the subset's shared covering path."""

    kind = PlannerKind.PBP

    def __init__(self, domain: Domain, config: PlannerConfig):
        super().__init__(domain, config)
        self.search_stats: Dict[Tuple[Node, Node], PartitionSearchStats] = {}

    def preprocess(self, s: Node, g: Node) -> Partition:
        cfg = self.config
        partition, stats = pbp_preprocess(self.domain, s, g, cfg.k, cfg.l, cfg.partitioner,
                                          cfg.time_limit, cfg.merge_order, cfg.heuristic,
                                          cfg.seed, cfg.deduplicate, self.cache)
        self.search_stats.setdefault((s, g), stats)
        return partition

    prepare = preprocess

    @property
    def completed(self) -> bool:
        return super().completed and all(st.completed for st in self.search_stats.values())

    @property
    def wrpt_expansions(self) -> int:
        return self.counters.expansions + sum(st.wrpt_expansions for st in self.search_stats.values())

    @property
    def evaluated_partitions(self) -> int:
        return sum(st.evaluated_partitions for st in self.search_stats.values())

    def plan(self, query: ProblemTuple) -> PlanResult:
        hit = self.preprocess(query.s, query.g).subset_of(query.t)
        if hit is None:
            return PlanResult.failure('bucket')
        group, subset = hit
        return PlanResult(subset.covering_path, group_id=group, shared_prefix=INF)


class PrefixPartitioningPlanner(PartitioningPlanner):
    """m-Pbp: first m nodes of the Pbp path, then an unanonymized finish."""

    kind = PlannerKind.M_PBP

    def plan(self, query: ProblemTuple) -> PlanResult:
        base = super().plan(query)
        if base.failed:
            return base
        m = self.config.m
        if m >= len(base.path):
            return PlanResult(base.path, base.group_id, m)
        path = self.continue_from(base.path.prefix(m), query.g, query.t)
        if path is None:
            return PlanResult.failure('no continuation')
        return PlanResult(path, base.group_id, m)


class RandomWalkPlanner(Planner):
    """Rbp: a seeded random walk of m nodes, then the cheapest covering finish."""

    kind = PlannerKind.RBP

    def walk(self, s: Node, g: Node) -> Optional[Path]:
        m = int(self.config.m)

        def compute():
            rng = make_rng('rbp', self.domain.name, s, g, format_m(m), self.config.seed)
            nodes, costs = [s], []
            for _ in range(m - 1):
                options = self.domain.successors[nodes[-1]]
                if not options:
                    return None
                nbr, cost = options[int(rng.integers(len(options)))]
                nodes.append(nbr)
                costs.append(cost)
            return Path(tuple(nodes), tuple(costs))

        return self.cache.get(('rbp-walk', s, g, m, self.config.seed), compute)

    prepare = walk

    def plan(self, query: ProblemTuple) -> PlanResult:
        head = self.walk(query.s, query.g)
        if head is None:
            return PlanResult.failure('start has no neighbours')
        path = self.continue_from(head, query.g, query.t)
        if path is None:
            return PlanResult.failure('no continuation')
        return PlanResult(path, group_id=0, shared_prefix=self.config.m)


class ClusteringPlanner(Planner):
    """Cbp: head for the cluster centroid, then cover t and finish."""

    kind = PlannerKind.CBP

    def clustering(self, s: Node, g: Node) -> Clustering:
        cfg = self.config
        return self.cache.get(('cbp-clusters', s, g, cfg.k, cfg.seed), lambda: cbp_cluster(
            self.domain, coverable_candidates(self.domain, s, g), cfg.k, cfg.seed))

    prepare = clustering

    def head(self, s: Node, g: Node, cluster: int, sigma: Node) -> Optional[Path]:
        """Prefix shared by the whole cluster; at least m nodes long."""
        m = int(self.config.m)

        def compute():
            to_sigma = self.domain.shortest_path(s, sigma)
            if to_sigma is None:
                return None
            if len(to_sigma) >= m:
                return to_sigma.prefix(m)
            rng = make_rng('cbp-walk', self.domain.name, s, g, format_m(m), cluster, self.config.seed)
            walk = Path((s,))
            while True:
                tail = self.domain.shortest_path(walk.last, sigma)
                if tail is None:
                    return None
                if len(walk) + len(tail) - 1 >= m:
                    return walk.concat(tail)
                options = self.domain.successors[walk.last]
                if not options:
                    return None
                nbr, cost = options[int(rng.integers(len(options)))]
                walk = Path(walk.nodes + (nbr,), walk.edge_costs + (cost,))

        return self.cache.get(('cbp-head', s, g, m, cluster, sigma, self.config.seed), compute)

    def plan(self, query: ProblemTuple) -> PlanResult:
        clustering = self.clustering(query.s, query.g)
        cluster = clustering.assignment.get(query.t)
        if cluster is None:
            return PlanResult.failure('uncoverable')
        head = self.head(query.s, query.g, cluster, clustering.centroids[cluster])
        if head is None:
            return PlanResult.failure('centroid unreachable')
        path = self.continue_from(head, query.g, query.t)
        if path is None:
            return PlanResult.failure('no continuation')
        return PlanResult(path, group_id=cluster, shared_prefix=self.config.m)


class FullCoverPlanner(Planner):
    """One route covering every coverable candidate, returned for all of them."""

    kind = PlannerKind.FULL_COVER

    def route(self, s: Node, g: Node) -> Optional[Path]:
        def compute():
            route = None
            back = None
            for t in coverable_candidates(self.domain, s, g):
                if route is not None and self.domain.covers(route, t):
                    continue
                piece = self.covering_path(s, g, t)
                if piece is None:
                    return None
                if route is None:
                    route = piece
                    continue
                back = back or self.domain.shortest_path(g, s)
                if back is None:
                    self.logger.warning("goal cannot return to start; no full-cover route")
                    return None
                route = route.concat(back).concat(piece)
            return route

        return self.cache.get(('full-cover', s, g), compute)

    prepare = route

    def plan(self, query: ProblemTuple) -> PlanResult:
        if not self.domain.coverable(query.s, query.g, query.t):
            return PlanResult.failure('uncoverable')
        route = self.route(query.s, query.g)
        if route is None:
            return PlanResult.failure('no full-cover route')
        return PlanResult(route, group_id=0, shared_prefix=INF)


class ExtendedPlanner:
    """Wraps a planner with fixed lead-in and lead-out paths.

    A query from ``lead_in.first`` to ``lead_out.last`` is answered by asking
    the inner planner for ``lead_in.last`` to ``lead_out.first`` and splicing.
    """

    def __init__(self, inner, lead_in: Path, lead_out: Path):
        self.inner = inner
        self.lead_in = lead_in
        self.lead_out = lead_out

    def __call__(self, query: ProblemTuple) -> PlanResult:
        inner_query = ProblemTuple(query.domain, self.lead_in.last, self.lead_out.first, query.t)
        result = self.inner(inner_query)
        if result.failed:
            return result
        path = self.lead_in.concat(result.path).concat(self.lead_out)
        return PlanResult(path, result.group_id, result.shared_prefix)


PLANNERS = {
    PlannerKind.PBP: PartitioningPlanner,
    PlannerKind.M_PBP: PrefixPartitioningPlanner,
    PlannerKind.RBP: RandomWalkPlanner,
    PlannerKind.CBP: ClusteringPlanner,
    PlannerKind.FULL_COVER: FullCoverPlanner,
}


def make_planner(domain: Domain, config: PlannerConfig) -> Planner:
    return PLANNERS[config.kind](domain, config)


def pbp_plan(query: ProblemTuple, config: PlannerConfig) -> PlanResult:
    return PartitioningPlanner(query.domain, config).plan(query)


def m_pbp_plan(query: ProblemTuple, m: int, config: PlannerConfig) -> PlanResult:
    cfg = replace(config, kind=PlannerKind.M_PBP, m=m)
    return PrefixPartitioningPlanner(query.domain, cfg).plan(query)


def rbp_plan(query: ProblemTuple, m: int, seed: int = 0,
             heuristic: Union[Heuristic, str] = Heuristic.TUNNEL) -> PlanResult:
    cfg = PlannerConfig(PlannerKind.RBP, k=1, l=0, m=m, seed=seed, heuristic=heuristic)
    return RandomWalkPlanner(query.domain, cfg).plan(query)


def cbp_plan(query: ProblemTuple, m: int, k: int, seed: int = 0,
             heuristic: Union[Heuristic, str] = Heuristic.TUNNEL) -> PlanResult:
    cfg = PlannerConfig(PlannerKind.CBP, k=k, l=0, m=m, seed=seed, heuristic=heuristic)
    return ClusteringPlanner(query.domain, cfg).plan(query)


def full_cover_plan(query: ProblemTuple,
                    heuristic: Union[Heuristic, str] = Heuristic.TUNNEL) -> PlanResult:
    cfg = PlannerConfig(PlannerKind.FULL_COVER, k=1, l=0, heuristic=heuristic)
    return FullCoverPlanner(query.domain, cfg).plan(query)
