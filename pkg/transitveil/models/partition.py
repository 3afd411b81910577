"""Partition searches over transit candidates.

Each search splits the coverable candidates into disjoint subsets. A subset is
anonymized when it satisfies the 3C condition:

- cardinality: at least ``k`` members;
- cost: pairwise dispersion of at least ``l``;
- coverage: some s -> g path covers every member.

The incumbent maximizes the anonymized count ``ap`` and breaks ties by the
smaller mean anonymization cost ``mac``. Candidates outside every anonymized
subset end up in the bucket.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from transitveil.config import Config
from transitveil.models.domain import Domain, Node, Path
from transitveil.models.wrpt import Heuristic, WrptCounters, WrptResult, WrptSolver
from transitveil.utils.error_handlers import MapParseError
from transitveil.utils.helpers import Deadline, format_node, make_rng

logger = logging.getLogger(__name__)

INF = math.inf


class PartitionerKind(str, Enum):
    MERGE_BB = 'merge_bb'
    DF_BB = 'df_bb'
    NAIVE = 'naive'
    EXHAUSTIVE = 'exhaustive'


class MergeOrder(str, Enum):
    RANDOM = 'random'
    COST_ASC = 'cost_asc'


@dataclass(frozen=True)
class Subset:
    members: FrozenSet[Node]
    covering_path: Optional[Path]
    ac: float
    satisfies_3c: bool
    unknown: bool = False

    @property
    def cost(self) -> float:
        return self.covering_path.cost if self.covering_path is not None else INF

    @property
    def min_member(self) -> Node:
        return min(self.members)

    def sorted_members(self) -> List[Node]:
        return sorted(self.members)


@dataclass(frozen=True)
class ThreeCResult:
    ok: bool
    path: Optional[Path] = None
    unknown: bool = False


@dataclass(frozen=True)
class Partition:
    """Anonymized subsets plus the residual bucket."""
    subsets: Tuple[Subset, ...]
    bucket: FrozenSet[Node]
    guaranteed: bool = True

    @property
    def ap(self) -> int:
        return sum(len(x.members) for x in self.subsets)

    @property
    def ac_sum(self) -> float:
        return math.fsum(x.ac for x in self.subsets)

    @property
    def mac(self) -> Optional[float]:
        return self.ac_sum / self.ap if self.ap else None

    def subset_of(self, t: Node) -> Optional[Tuple[int, Subset]]:
        for i, subset in enumerate(self.subsets):
            if t in subset.members:
                return i, subset
        return None

    def to_text(self, domain: Domain) -> str:
        """One line per subset, bucket last."""
        lines = []
        for i, subset in enumerate(self.subsets):
            nodes = ' '.join(format_node(domain.labels[n]) for n in subset.sorted_members())
            lines.append(f"subset {i}: {nodes} cost={subset.cost:g} ac={subset.ac:.6g}")
        bucket = ' '.join(format_node(domain.labels[n]) for n in sorted(self.bucket))
        lines.append(f"bucket: {bucket}".rstrip())
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class ListedSubset:
    members: FrozenSet[Node]
    cost: float
    ac: float


@dataclass(frozen=True)
class PartitionListing:
    """A partition read back from its text form; costs only, no paths."""
    subsets: Tuple[ListedSubset, ...]
    bucket: FrozenSet[Node]

    @property
    def ap(self) -> int:
        return sum(len(x.members) for x in self.subsets)

    @property
    def ac_sum(self) -> float:
        return math.fsum(x.ac for x in self.subsets)

    @property
    def mac(self) -> Optional[float]:
        return self.ac_sum / self.ap if self.ap else None


def _node_from_text(domain: Domain, token: str, line_no: int) -> Node:
    if token in domain.index:
        return domain.index[token]
    parts = token.split(':')
    try:
        label = tuple(int(p) for p in parts) if len(parts) == 2 else token
    except ValueError:
        label = token
    if label not in domain.index:
        raise MapParseError(f"unknown node {token!r}", line=line_no)
    return domain.index[label]


def parse_partition_text(text: str, domain: Domain) -> PartitionListing:
    """Inverse of :meth:`Partition.to_text` for the members, costs and ac values."""
    subsets: List[ListedSubset] = []
    bucket: Optional[FrozenSet[Node]] = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if bucket is not None:
            raise MapParseError("content after the bucket line", line=line_no)
        head, _, body = line.partition(':')
        tokens = body.split()
        if head == 'bucket':
            bucket = frozenset(_node_from_text(domain, tok, line_no) for tok in tokens)
            continue
        if head != f"subset {len(subsets)}":
            raise MapParseError(f"expected 'subset {len(subsets)}:', got {head!r}", line=line_no)
        if len(tokens) < 2 or not tokens[-2].startswith('cost=') or not tokens[-1].startswith('ac='):
            raise MapParseError("subset line needs trailing cost=<c> ac=<v>", line=line_no)
        try:
            cost, ac = float(tokens[-2][5:]), float(tokens[-1][3:])
        except ValueError:
            raise MapParseError("cost and ac must be numbers", line=line_no)
        members = frozenset(_node_from_text(domain, tok, line_no) for tok in tokens[:-2])
        if not members:
            raise MapParseError("subset without members", line=line_no)
        subsets.append(ListedSubset(members, cost, ac))
    if bucket is None:
        raise MapParseError("missing bucket line")
    return PartitionListing(tuple(subsets), bucket)


@dataclass(frozen=True)
class IncumbentRecord:
    evaluated: int
    elapsed: float
    ap: int
    mac: float


@dataclass
class PartitionSearchStats:
    evaluated_partitions: int = 0
    best_ap: int = 0
    best_mac: Optional[float] = None
    completed: bool = True
    elapsed: float = 0.0
    wrpt_calls: int = 0
    wrpt_expansions: int = 0
    guaranteed: bool = True
    incumbent_trace: List[IncumbentRecord] = field(default_factory=list)


@dataclass(frozen=True)
class IncumbentContext:
    """What the merge bound needs to know about the current search node."""
    l: float
    ap: int
    ac_sum: float
    best_ap: int
    best_ac_sum: float
    total: int


def relative_overhead(cost: float, base: float) -> float:
    """(cost - base) / base with the zero-denominator guard.

    A zero-cost base contributes 0 when ``cost`` is also 0 and is otherwise
    infinite, which excludes the subset.
    """
    if base == 0:
        return 0.0 if cost == 0 else INF
    return (cost - base) / base


def prunable(domain: Domain, a: Subset, b: Subset, context: IncumbentContext,
             base_costs: Mapping[Node, float]) -> bool:
    """Whether merging ``a`` and ``b`` cannot lead to a better incumbent.

    True when both subsets already satisfy 3C, when some cross pair is closer
    than ``l``, or when an incumbent already covers everything and the cheapest
    possible merged cost cannot undercut it. Only subsets already counted in
    ``ap`` contribute their ``ac`` to the bound.
    """
    if a.satisfies_3c and b.satisfies_3c:
        return True
    if domain.min_dispersion(a.members, b.members) < context.l:
        return True
    if context.best_ap == context.total and context.total > 0:
        bound = (context.best_ac_sum - context.ac_sum
                 + (a.ac if a.satisfies_3c else 0.0) + (b.ac if b.satisfies_3c else 0.0))
        floor_cost = max(a.cost, b.cost)
        estimate = math.fsum(relative_overhead(floor_cost, base_costs[t]) for t in a.members | b.members)
        if estimate >= bound:
            return True
    return False


def merge_order_cost_asc(psi: Sequence[Subset]) -> List[Tuple[int, int]]:
    """Pairs ascending by max covering cost times combined size."""
    pairs = [(i, j) for i in range(len(psi)) for j in range(i + 1, len(psi))]

    def score(pair):
        a, b = psi[pair[0]], psi[pair[1]]
        return (max(a.cost, b.cost) * (len(a.members) + len(b.members)), a.min_member, b.min_member)

    return sorted(pairs, key=score)


class PartitionSearch:
    """Shared machinery: WRPT memo, 3C evaluation and incumbent bookkeeping."""

    kind = None

    def __init__(self, domain: Domain, s: Node, g: Node, k: int, l: float,
                 heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
                 time_limit: Optional[float] = None):
        self.logger = logging.getLogger(__name__)
        self.domain = domain
        self.s = s
        self.g = g
        self.k = k
        self.l = l
        self.time_limit = time_limit
        self.solver = WrptSolver(domain, heuristic)
        self.counters = WrptCounters()
        self.stats = PartitionSearchStats(guaranteed=domain.undirected)
        self.deadline = Deadline(time_limit)
        self._covering: Dict[FrozenSet[Node], WrptResult] = {}
        self._subsets: Dict[FrozenSet[Node], Subset] = {}
        self._base_costs: Dict[Node, float] = {}
        self._best: Optional[Tuple[Subset, ...]] = None
        self.best_ap = 0
        self.best_ac_sum = INF
        self.best_mac = INF
        self._total = 0

    # -- building blocks ------------------------------------------------

    def candidates(self) -> List[Node]:
        """Coverable transit candidates in node-index order."""
        return sorted(
            t for t in self.domain.transit
            if t not in (self.s, self.g) and self.domain.coverable(self.s, self.g, t)
        )

    def covering(self, members: FrozenSet[Node]) -> WrptResult:
        """Memoized WRPT optimum for a member set."""
        result = self._covering.get(members)
        if result is None:
            result = self.solver.solve(self.s, self.g, members, self.deadline)
            self.counters.add(result)
            if result.timed_out:
                self.stats.completed = False
                self.logger.warning(f"WRPT timed out for {len(members)} targets; merge skipped")
            self._covering[members] = result
        return result

    def base_cost(self, t: Node) -> float:
        """Cost of the cheapest s -> g path covering ``t`` alone."""
        cost = self._base_costs.get(t)
        if cost is None:
            cost = self._base_costs[t] = self.covering(frozenset((t,))).cost
        return cost

    def make_subset(self, members: Iterable[Node]) -> Subset:
        members = frozenset(members)
        subset = self._subsets.get(members)
        if subset is not None:
            return subset
        result = self.covering(members)
        if result.path is None:
            subset = Subset(members, None, INF, False, unknown=result.timed_out)
        else:
            cost = result.path.cost
            ac = math.fsum(relative_overhead(cost, self.base_cost(t)) for t in members)
            if math.isnan(ac):
                ac = INF
            if ac == INF:
                self.logger.warning("zero-cost base path for a member; subset excluded")
            ok = (len(members) >= self.k
                  and self.domain.min_dispersion(members) >= self.l
                  and ac < INF)
            subset = Subset(members, result.path, ac, ok)
        self._subsets[members] = subset
        return subset

    def evaluate(self, psi: Sequence[Subset]) -> Tuple[int, float]:
        """Score a partition and update the incumbent; returns (ap, ac_sum)."""
        self.stats.evaluated_partitions += 1
        anonymized = [x for x in psi if x.satisfies_3c]
        ap = sum(len(x.members) for x in anonymized)
        ac_sum = math.fsum(x.ac for x in anonymized)
        mac = ac_sum / ap if ap else 0.0
        if ap > self.best_ap or (ap == self.best_ap and mac < self.best_mac):
            self._best = tuple(psi)
            self.best_ap, self.best_ac_sum, self.best_mac = ap, ac_sum, mac
            self.stats.incumbent_trace.append(
                IncumbentRecord(self.stats.evaluated_partitions, self.deadline.elapsed(), ap, mac)
            )
            self.logger.debug(f"incumbent ap={ap} mac={mac:.6g} after "
                              f"{self.stats.evaluated_partitions} partitions")
        return ap, ac_sum

    def expired(self) -> bool:
        if self.deadline.expired():
            if self.stats.completed:
                self.logger.warning(f"{self.kind.value} budget of {self.time_limit}s exhausted; "
                                    f"returning incumbent")
            self.stats.completed = False
            return True
        return False

    # -- driver ---------------------------------------------------------

    def run(self) -> Tuple[Partition, PartitionSearchStats]:
        if not self.domain.undirected:
            self.logger.warning(f"{self.domain.name} is directed; partition carries no completeness guarantee")
        self.deadline = Deadline(self.time_limit)
        candidates = self.candidates()
        self._total = len(candidates)
        self.logger.info(f"{self.kind.value}: {len(candidates)} of {len(self.domain.transit)} "
                         f"candidates coverable (k={self.k}, l={self.l})")
        self.search(candidates)
        partition = self.finalize()
        self.logger.info(f"{self.kind.value}: ap={partition.ap} mac={partition.mac} "
                         f"evaluated={self.stats.evaluated_partitions} completed={self.stats.completed}")
        return partition, self.stats

    def search(self, candidates: List[Node]):
        raise NotImplementedError

    def finalize(self) -> Partition:
        best = self._best or ()
        subsets = tuple(sorted((x for x in best if x.satisfies_3c), key=lambda x: x.min_member))
        assigned = frozenset().union(*(x.members for x in subsets))
        bucket = frozenset(self.domain.transit) - assigned
        partition = Partition(subsets, bucket, guaranteed=self.domain.undirected)

        self.stats.best_ap = partition.ap
        self.stats.best_mac = partition.mac
        self.stats.elapsed = self.deadline.elapsed()
        self.stats.wrpt_calls = self.counters.calls
        self.stats.wrpt_expansions = self.counters.expansions
        return partition


class MergeBBPartitioner(PartitionSearch):
    """Branch and bound by recursively merging pairs of subsets."""

    kind = PartitionerKind.MERGE_BB

    def __init__(self, *args, order: Union[MergeOrder, str] = MergeOrder.COST_ASC,
                 seed: int = 0, deduplicate: bool = False, **kwargs):
        super().__init__(*args, **kwargs)
        self.order = MergeOrder(order)
        self.rng = make_rng('merge-order', self.domain.name, self.s, self.g, seed)
        self.deduplicate = deduplicate
        self._visited = set()

    def merge_order(self, psi: Sequence[Subset]) -> List[Tuple[int, int]]:
        if self.order is MergeOrder.COST_ASC:
            return merge_order_cost_asc(psi)
        pairs = [(i, j) for i in range(len(psi)) for j in range(i + 1, len(psi))]
        return [pairs[i] for i in self.rng.permutation(len(pairs))]

    def search(self, candidates: List[Node]):
        self._search(tuple(self.make_subset((t,)) for t in candidates))

    def _search(self, psi: Tuple[Subset, ...]):
        ap, ac_sum = self.evaluate(psi)
        total = self._total
        if len(psi) <= 1 or ap == total:
            return
        # Merging never lowers the anonymization cost sum of counted subsets.
        if self.best_ap == total and ac_sum >= self.best_ac_sum:
            return
        if self.expired():
            return
        if self.deduplicate:
            key = frozenset(x.members for x in psi)
            if key in self._visited:
                return
            self._visited.add(key)

        for i, j in self.merge_order(psi):
            if self.expired():
                return
            a, b = psi[i], psi[j]
            context = IncumbentContext(self.l, ap, ac_sum, self.best_ap, self.best_ac_sum, total)
            if prunable(self.domain, a, b, context, self._base_costs):
                continue
            merged = self.make_subset(a.members | b.members)
            if merged.covering_path is None:
                continue
            rest = [x for n, x in enumerate(psi) if n not in (i, j)]
            self._search(tuple(sorted(rest + [merged], key=lambda x: x.min_member)))


class DFBBPartitioner(PartitionSearch):
    """Depth-first assignment of candidates to subsets."""

    kind = PartitionerKind.DF_BB

    def search(self, candidates: List[Node]):
        self._search([], tuple(candidates))

    def _search(self, psi: List[FrozenSet[Node]], unassigned: Tuple[Node, ...]):
        if self.expired():
            return
        if not unassigned:
            self.evaluate([self.make_subset(members) for members in psi])
            return
        n, rest = unassigned[0], unassigned[1:]
        for i, members in enumerate(psi):
            if self.domain.min_dispersion(members, (n,)) < self.l:
                continue
            self._search(psi[:i] + [members | {n}] + psi[i + 1:], rest)
        self._search(psi + [frozenset((n,))], rest)


class NaivePartitioner(PartitionSearch):
    """Random pairs (one triple when the count is odd)."""

    kind = PartitionerKind.NAIVE

    def __init__(self, *args, seed: int = 0, **kwargs):
        super().__init__(*args, **kwargs)
        self.rng = make_rng('naive', self.domain.name, self.s, self.g, seed)

    def search(self, candidates: List[Node]):
        order = [candidates[i] for i in self.rng.permutation(len(candidates))]
        n = len(order)
        cut = n - 3 if n % 2 and n >= 3 else n - n % 2
        groups = [order[i:i + 2] for i in range(0, cut, 2)]
        if n % 2 and n >= 3:
            groups.append(order[-3:])
        self.evaluate([self.make_subset(group) for group in groups])


def set_partitions(items: Sequence[Node]) -> Iterator[List[FrozenSet[Node]]]:
    """Every set partition of ``items`` (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in set_partitions(rest):
        for i, block in enumerate(smaller):
            yield smaller[:i] + [block | {first}] + smaller[i + 1:]
        yield [frozenset((first,))] + smaller


class ExhaustivePartitioner(PartitionSearch):
    """Optimality oracle enumerating all set partitions."""

    kind = PartitionerKind.EXHAUSTIVE

    def search(self, candidates: List[Node]):
        if len(candidates) > Config.ORACLE_MAX_CANDIDATES:
            raise ValueError(f"exhaustive search supports at most {Config.ORACLE_MAX_CANDIDATES} "
                             f"coverable candidates, got {len(candidates)}")
        for blocks in set_partitions(candidates):
            self.evaluate([self.make_subset(block) for block in blocks])


PARTITIONERS = {
    PartitionerKind.MERGE_BB: MergeBBPartitioner,
    PartitionerKind.DF_BB: DFBBPartitioner,
    PartitionerKind.NAIVE: NaivePartitioner,
    PartitionerKind.EXHAUSTIVE: ExhaustivePartitioner,
}


def search_partition(domain: Domain, s: Node, g: Node, k: int, l: float,
                     partitioner: Union[PartitionerKind, str] = PartitionerKind.MERGE_BB,
                     order: Union[MergeOrder, str] = MergeOrder.COST_ASC,
                     heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
                     time_limit: Optional[float] = None, seed: int = 0,
                     deduplicate: bool = False) -> Tuple[Partition, PartitionSearchStats]:
    """Run the named partitioner and return its partition and statistics."""
    kind = PartitionerKind(partitioner)
    kwargs = {'heuristic': heuristic, 'time_limit': time_limit}
    if kind is PartitionerKind.MERGE_BB:
        kwargs.update(order=order, seed=seed, deduplicate=deduplicate)
    elif kind is PartitionerKind.NAIVE:
        kwargs.update(seed=seed)
    return PARTITIONERS[kind](domain, s, g, k, l, **kwargs).run()


def check_3c(domain: Domain, s: Node, g: Node, members: Iterable[Node], k: int, l: float,
             heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
             budget: Union[Deadline, float, None] = None) -> ThreeCResult:
    """Cardinality, cost and coverage check for one subset.

    A timed-out WRPT yields ``ok=False`` with ``unknown=True``.
    """
    members = frozenset(members)
    if len(members) < k or domain.min_dispersion(members) < l:
        return ThreeCResult(False)
    if budget is not None and not isinstance(budget, Deadline):
        budget = Deadline(budget)
    result = WrptSolver(domain, heuristic).solve(s, g, members, budget)
    if result.timed_out:
        return ThreeCResult(False, None, unknown=True)
    return ThreeCResult(result.solved, result.path)


def merge_bb(domain: Domain, s: Node, g: Node, k: int, l: float,
             order: Union[MergeOrder, str] = MergeOrder.COST_ASC,
             heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
             budget: Optional[float] = None, seed: int = 0,
             deduplicate: bool = False) -> Tuple[Partition, PartitionSearchStats]:
    return search_partition(domain, s, g, k, l, PartitionerKind.MERGE_BB, order, heuristic,
                            budget, seed, deduplicate)


def df_bb(domain: Domain, s: Node, g: Node, k: int, l: float,
          heuristic: Union[Heuristic, str] = Heuristic.TUNNEL,
          budget: Optional[float] = None) -> Tuple[Partition, PartitionSearchStats]:
    return search_partition(domain, s, g, k, l, PartitionerKind.DF_BB, heuristic=heuristic,
                            time_limit=budget)


def naive_partition(domain: Domain, s: Node, g: Node, seed: int = 0, k: int = 2, l: float = 1,
                    heuristic: Union[Heuristic, str] = Heuristic.TUNNEL) -> Partition:
    partition, _ = search_partition(domain, s, g, k, l, PartitionerKind.NAIVE,
                                    heuristic=heuristic, seed=seed)
    return partition


def exhaustive_oracle(domain: Domain, s: Node, g: Node, k: int, l: float,
                      heuristic: Union[Heuristic, str] = Heuristic.TUNNEL) -> Partition:
    partition, _ = search_partition(domain, s, g, k, l, PartitionerKind.EXHAUSTIVE,
                                    heuristic=heuristic)
    return partition
