"""Definition-level anonymity checks and the APR/MAC metrics.

A planner output for t is anonymized at (k, l, m) when at least ``k``
candidates, pairwise at least ``l`` apart, receive outputs whose first ``m``
nodes match t's exactly.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx

from transitveil.config import Config
from transitveil.models.domain import Domain, Node, ProblemTuple
from transitveil.models.partition import PartitionListing
from transitveil.models.planners import PlanResult
from transitveil.models.wrpt import Heuristic, WrptSolver
from transitveil.utils.error_handlers import AuditError, UndecidedError
from transitveil.utils.helpers import INF

logger = logging.getLogger(__name__)

PlannerFn = Callable[[ProblemTuple], PlanResult]


@dataclass(frozen=True)
class AnonymityReport:
    t: Node
    k: int
    l: float
    m: Union[int, float]
    equal_prefix: FrozenSet[Node]
    best_subset: Tuple[Node, ...]
    achieved_l: float
    anonymized: bool

    @property
    def best_k(self) -> int:
        return len(self.best_subset)

    @property
    def verdict(self) -> str:
        return 'anonymized' if self.anonymized else 'not-anonymized'


@dataclass(frozen=True)
class MetricsRow:
    apr: Optional[float]
    mac: Optional[float]
    coverable: int
    anonymized: int
    delta_lower_bound: Optional[float]
    flags: Tuple[str, ...] = field(default=())


def far_graph(domain: Domain, nodes: Sequence[Node], l: float) -> nx.Graph:
    """Graph joining every pair at dispersion >= l in both directions."""
    graph = nx.Graph()
    graph.add_nodes_from(nodes)
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if domain.min_dispersion((a,), (b,)) >= l:
                graph.add_edge(a, b)
    return graph


def find_dispersed_subset(domain: Domain, nodes: Sequence[Node], k: int, l: float) -> Tuple[Node, ...]:
    """Largest l-dispersed subset found, stopping at the first of size >= k.

    Exact: maximal cliques of the l-far graph are enumerated until one reaches
    ``k`` members, so a negative answer means no such subset exists.
    """
    nodes = sorted(set(nodes))
    best: Tuple[Node, ...] = ()
    for clique in nx.find_cliques(far_graph(domain, nodes, l)):
        if len(clique) > len(best):
            best = tuple(sorted(clique))
            if len(best) >= k:
                break
    return best


class AnonymityVerifier:
    """Runs a planner once per candidate for (s, g) and checks its outputs."""

    def __init__(self, planner: PlannerFn, domain: Domain, s: Node, g: Node,
                 heuristic: Union[Heuristic, str] = Heuristic.TUNNEL):
        self.logger = logging.getLogger(__name__)
        self.planner = planner
        self.domain = domain
        self.s = s
        self.g = g
        self._solver = WrptSolver(domain, heuristic)
        self._outputs: Optional[Dict[Node, PlanResult]] = None
        self._reports: Dict[tuple, AnonymityReport] = {}
        self._base: Dict[Node, float] = {}

    def outputs(self) -> Dict[Node, PlanResult]:
        """Planner output for every candidate, computed once."""
        if self._outputs is None:
            outputs = {}
            for t in self.domain.transit:
                if t in (self.s, self.g):
                    outputs[t] = PlanResult.failure('candidate coincides with start or goal')
                else:
                    outputs[t] = self.planner(ProblemTuple(self.domain, self.s, self.g, t))
            self._outputs = outputs
        return self._outputs

    def coverable(self) -> List[Node]:
        return [t for t in self.domain.transit
                if t not in (self.s, self.g) and self.domain.coverable(self.s, self.g, t)]

    def base_cost(self, t: Node) -> float:
        """Cost of the cheapest path from s to g covering t."""
        if t not in self._base:
            self._base[t] = self._solver.solve(self.s, self.g, (t,)).cost
        return self._base[t]

    def verify(self, t: Node, k: int, l: float, m: Union[int, float] = INF) -> AnonymityReport:
        key = (t, k, l, m)
        report = self._reports.get(key)
        if report is not None:
            return report
        if len(self.domain.transit) > Config.VERIFIER_MAX_CANDIDATES:
            raise ValueError(f"exact verification supports at most {Config.VERIFIER_MAX_CANDIDATES} "
                             f"candidates, got {len(self.domain.transit)}")

        outputs = self.outputs()
        mine = outputs[t]
        if mine.failed:
            report = AnonymityReport(t, k, l, m, frozenset(), (), INF, False)
        else:
            seen = mine.path.prefix(m).nodes
            equal = frozenset(u for u, out in outputs.items()
                              if not out.failed and out.path.prefix(m).nodes == seen)
            best = find_dispersed_subset(self.domain, sorted(equal), k, l)
            report = AnonymityReport(t, k, l, m, equal, best, self.domain.min_dispersion(best),
                                     len(best) >= k)
        self._reports[key] = report
        return report

    def anonymized(self, k: int, l: float, m: Union[int, float] = INF) -> List[Node]:
        return [t for t in self.coverable() if self.verify(t, k, l, m).anonymized]

    def apr(self, k: int, l: float, m: Union[int, float] = INF) -> Optional[float]:
        coverable = self.coverable()
        if not coverable:
            return None
        return len(self.anonymized(k, l, m)) / len(coverable)

    def mac(self, k: int, l: float, m: Union[int, float] = INF) -> Tuple[Optional[float], List[Node]]:
        """Mean relative overhead over anonymized candidates, plus excluded ones."""
        terms, excluded = [], []
        outputs = self.outputs()
        for t in self.anonymized(k, l, m):
            cost, base = outputs[t].path.cost, self.base_cost(t)
            if base == 0:
                if cost == 0:
                    terms.append(0.0)
                else:
                    excluded.append(t)
                    self.logger.warning(f"zero-cost base path for {self.domain.labels[t]!r}; term excluded")
                continue
            terms.append((cost - base) / base)
        return (math.fsum(terms) / len(terms) if terms else None), excluded

    def local_anonymity_delta(self, k: int, l: float, m: Union[int, float] = INF) -> Tuple[float, bool]:
        """Anonymized share of anonymizable candidates; (1.0, True) when vacuous."""
        anonymizable = [t for t in self.coverable()
                        if is_anonymizable_tuple(self.domain, self.s, self.g, t, k, l, m)]
        if not anonymizable:
            return 1.0, True
        done = [t for t in anonymizable if self.verify(t, k, l, m).anonymized]
        return len(done) / len(anonymizable), False

    def metrics(self, k: int, l: float, m: Union[int, float] = INF) -> MetricsRow:
        coverable = self.coverable()
        anonymized = self.anonymized(k, l, m)
        mac_value, excluded = self.mac(k, l, m)
        flags = tuple(f"zero-base:{self.domain.labels[t]}" for t in excluded)
        if not coverable:
            # Nothing is anonymizable, so δ holds vacuously.
            return MetricsRow(None, mac_value, 0, 0, 1.0, flags + ('vacuous-delta',))
        apr_value = len(anonymized) / len(coverable)
        return MetricsRow(apr_value, mac_value, len(coverable), len(anonymized), apr_value, flags)


def is_anonymizable_tuple(domain: Domain, s: Node, g: Node, t: Node, k: int, l: float,
                          m: Union[int, float] = INF) -> bool:
    """Whether any planner could anonymize t at (k, l, m).

    On undirected domains joint coverage is free (paths concatenate through
    s and g), so only coverability of t and an l-dispersed k-subset of the
    coverable candidates matter.
    """
    if not domain.undirected:
        raise UndecidedError("anonymizability is undecided for directed domains")
    if not domain.coverable(s, g, t):
        return False
    coverable = [u for u in domain.transit if u not in (s, g) and domain.coverable(s, g, u)]
    return len(find_dispersed_subset(domain, coverable, k, l)) >= k


def verify_anonymized_path(planner: PlannerFn, domain: Domain, s: Node, g: Node, t: Node,
                           k: int, l: float, m: Union[int, float] = INF) -> AnonymityReport:
    return AnonymityVerifier(planner, domain, s, g).verify(t, k, l, m)


def apr(planner: PlannerFn, domain: Domain, s: Node, g: Node, k: int, l: float,
        m: Union[int, float] = INF) -> Optional[float]:
    return AnonymityVerifier(planner, domain, s, g).apr(k, l, m)


def mac(planner: PlannerFn, domain: Domain, s: Node, g: Node, k: int, l: float,
        m: Union[int, float] = INF) -> Optional[float]:
    return AnonymityVerifier(planner, domain, s, g).mac(k, l, m)[0]


def local_anonymity_delta(planner: PlannerFn, domain: Domain, s: Node, g: Node, k: int, l: float,
                          m: Union[int, float] = INF) -> float:
    return AnonymityVerifier(planner, domain, s, g).local_anonymity_delta(k, l, m)[0]


def audit_partition_metrics(listing: PartitionListing, outputs: Mapping[Node, PlanResult],
                            coverable: int, rel_tol: float = 1e-5) -> Tuple[Optional[float], Optional[float]]:
    """APR and MAC of a partitioning run recomputed from its partition listing.

    Every listed member must have received its subset's shared path (same
    group id, listed cost) and every bucket member a failure.
    """
    for gid, subset in enumerate(listing.subsets):
        for t in sorted(subset.members):
            out = outputs.get(t)
            if out is None or out.failed or out.group_id != gid:
                raise AuditError(f"node {t} is listed in subset {gid} but was not planned with it")
            if not math.isclose(out.path.cost, subset.cost, rel_tol=rel_tol):
                raise AuditError(f"node {t}: output cost {out.path.cost:g} != listed {subset.cost:g}")
    for t in sorted(listing.bucket):
        if t in outputs and not outputs[t].failed:
            raise AuditError(f"bucket node {t} received a path")
    apr_value = listing.ap / coverable if coverable else None
    return apr_value, listing.mac
