"""Benchmark runner: scenarios x algorithm configurations -> result rows."""
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import List, Optional, Tuple, Union

from marshmallow import ValidationError

from transitveil.config import get_config
from transitveil.data.generator import ScenarioGenerator
from transitveil.data.maps import parse_graph_fixture, read_map, resolve_map_path
from transitveil.models.anonymity import AnonymityVerifier
from transitveil.models.domain import Domain, Node, build_domain
from transitveil.models.partition import MergeOrder, PartitionerKind
from transitveil.models.planners import (PARTITION_PLANNERS, PartitioningPlanner, PlannerConfig,
                                         PlannerKind, make_planner)
from transitveil.schemas import RANDOM, RunConfig, RunConfigSchema, Scenario, TransitSample
from transitveil.utils.error_handlers import ConfigurationError, DomainError
from transitveil.utils.helpers import format_node, make_rng

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Configuration for the benchmark runner."""
    max_workers: int = 1
    deterministic: bool = False
    default_time_limit: Optional[float] = None


@dataclass(frozen=True)
class ScenarioInstance:
    scenario: Scenario
    index: int
    domain: Domain
    s: Node
    g: Node

    @property
    def scenario_id(self) -> str:
        return f"{self.scenario.name}#{self.index}"

    @property
    def map_name(self) -> str:
        return self.domain.name


@dataclass(frozen=True)
class RunUnit:
    instance: ScenarioInstance
    config: PlannerConfig


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    map: str
    s: str
    g: str
    n_transit: int
    k: int
    l: float
    m: Union[int, float]
    r: float
    planner: str
    partitioner: str
    merge_order: str
    heuristic: str
    apr: Optional[float]
    mac: Optional[float]
    coverage_completed: bool
    total_time_s: Optional[float]
    wrpt_expansions: int
    evaluated_partitions: Optional[int]
    # Text form of the partition behind a partitioning run; not a CSV column.
    partition: Optional[str] = field(default=None, compare=False, repr=False)


@dataclass
class RunReport:
    rows: List[ResultRow]

    @property
    def timed_out(self) -> bool:
        return any(not row.coverage_completed for row in self.rows)


def load_run_config(path: Union[str, FilePath]) -> RunConfig:
    path = FilePath(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON in {path}: {e}") from e
    try:
        return RunConfigSchema().load(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run config {path}: {e.messages}", payload=e.messages) from e


def _grid_cell(domain_grid, value, what: str) -> Tuple[int, int]:
    if isinstance(value, str):
        raise ConfigurationError(f"{what} must be [x, y] on a grid map, got {value!r}")
    x, y = value
    if not (0 <= x < domain_grid.width and 0 <= y < domain_grid.height):
        raise DomainError(f"{what} {tuple(value)} lies outside the {domain_grid.width}x{domain_grid.height} map")
    if not domain_grid.is_passable(x, y):
        raise DomainError(f"{what} {tuple(value)} is on an obstacle")
    return x, y


def instantiate(scenario: Scenario, base_dir: Optional[FilePath] = None) -> List[ScenarioInstance]:
    """Resolve a scenario's map, endpoints and candidates into concrete instances.

    Random choices are keyed on the map, the scenario name, the declared seeds
    and the instance index, so the same config always yields the same instances.
    """
    path = resolve_map_path(scenario.map, base_dir)
    if path.suffix == '.graph':
        return [_graph_instance(scenario, path)]

    grid = read_map(path)
    name = path.stem
    fixed_s = None if scenario.start == RANDOM else _grid_cell(grid, scenario.start, 'start')
    fixed_g = None if scenario.goal == RANDOM else _grid_cell(grid, scenario.goal, 'goal')
    if scenario.transit is None:
        raise ConfigurationError(f"scenario {scenario.name!r} declares no transit candidates")

    instances = []
    for i in range(scenario.instances):
        generator = ScenarioGenerator(grid, make_rng('instance', name, scenario.name, scenario.instance_seed, i))
        if fixed_s is not None and fixed_g is not None:
            if fixed_s == fixed_g:
                raise ConfigurationError(f"scenario {scenario.name!r}: start and goal coincide")
            s, g = fixed_s, fixed_g
        else:
            s, g = generator.sample_pair(start=fixed_s, goal=fixed_g)
        if isinstance(scenario.transit, TransitSample):
            rng = make_rng('transit', name, scenario.name, scenario.transit.seed, i)
            transit = generator.sample_transit(scenario.transit.count, exclude=[s, g], rng=rng)
        else:
            transit = [_grid_cell(grid, c, 'transit candidate') for c in scenario.transit]
        domain = build_domain(grid, transit, scenario.r or 0, name=name)
        instances.append(ScenarioInstance(scenario, i, domain, domain.node(s), domain.node(g)))
    return instances


def _graph_instance(scenario: Scenario, path: FilePath) -> ScenarioInstance:
    if scenario.transit is not None:
        raise ConfigurationError(f"scenario {scenario.name!r}: graph fixtures declare their own candidates")
    fixture = parse_graph_fixture(path.read_text(), name=path.stem, radius_override=scenario.r)
    domain = fixture.domain
    s, g = fixture.start, fixture.goal
    for attr in ('start', 'goal'):
        value = getattr(scenario, attr)
        if value == RANDOM:
            continue
        if not isinstance(value, str) or value not in domain.index:
            raise ConfigurationError(f"scenario {scenario.name!r}: unknown {attr} node {value!r}")
        if attr == 'start':
            s = domain.node(value)
        else:
            g = domain.node(value)
    return ScenarioInstance(scenario, 0, domain, s, g)


def algorithm_configs(scenario: Scenario, default_time_limit: Optional[float] = None) -> List[PlannerConfig]:
    """Cross-product of the scenario's matrix axes.

    Partitioner and merge order only vary for planners that use them.
    """
    time_limit = scenario.time_limit if scenario.time_limit is not None else default_time_limit
    configs = []
    for kind, k, l, m, heuristic in itertools.product(scenario.planner, scenario.k, scenario.l,
                                                      scenario.m, scenario.heuristic):
        kind = PlannerKind(kind)
        partitioners = scenario.partitioner if kind in PARTITION_PLANNERS else [PartitionerKind.MERGE_BB.value]
        for partitioner in partitioners:
            partitioner = PartitionerKind(partitioner)
            orders = scenario.merge_order if (kind in PARTITION_PLANNERS
                                              and partitioner is PartitionerKind.MERGE_BB) \
                else [MergeOrder.COST_ASC.value]
            for order in orders:
                configs.append(PlannerConfig(kind=kind, k=k, l=l, m=m, seed=scenario.seed,
                                             partitioner=partitioner, merge_order=order,
                                             heuristic=heuristic, time_limit=time_limit))
    return configs


class BenchmarkRunner:
    def __init__(self, config: Optional[PipelineConfig] = None):
        self.config = config or PipelineConfig()
        if self.config.default_time_limit is None:
            self.config.default_time_limit = get_config().DEFAULT_TIME_LIMIT
        self.logger = logging.getLogger(__name__)

    def plan_units(self, run_config: RunConfig, base_dir: Optional[FilePath] = None) -> List[RunUnit]:
        """Every (instance, algorithm configuration) pair, in emission order."""
        verifier_cap = get_config().VERIFIER_MAX_CANDIDATES
        units = []
        for scenario in run_config.scenarios:
            configs = algorithm_configs(scenario, self.config.default_time_limit)
            for instance in instantiate(scenario, base_dir):
                n_transit = len(instance.domain.transit)
                if max(scenario.k) > n_transit:
                    raise ConfigurationError(f"scenario {scenario.name!r}: k={max(scenario.k)} "
                                             f"exceeds the {n_transit} transit candidates")
                if n_transit > verifier_cap:
                    raise ConfigurationError(f"scenario {scenario.name!r}: {n_transit} candidates exceed "
                                             f"the verifier limit of {verifier_cap}")
                units.extend(RunUnit(instance, cfg) for cfg in configs)
        return units

    def execute(self, unit: RunUnit) -> ResultRow:
        """Run one planner over every candidate of one instance and score it.

        Time covers preprocessing plus one query per candidate; map parsing
        and metric computation are excluded.
        """
        inst, cfg = unit.instance, unit.config
        domain = inst.domain
        planner = make_planner(domain, cfg)
        started = time.perf_counter()
        planner.prepare(inst.s, inst.g)
        verifier = AnonymityVerifier(planner, domain, inst.s, inst.g, cfg.heuristic)
        verifier.outputs()
        elapsed = time.perf_counter() - started

        metrics = verifier.metrics(cfg.k, cfg.l, cfg.m)
        if metrics.flags:
            self.logger.warning(f"{inst.scenario_id} {cfg.kind.value}: {', '.join(metrics.flags)}",
                                extra={'scenario': inst.scenario_id, 'planner': cfg.kind.value})
        partitioning = isinstance(planner, PartitioningPlanner)
        merge_bb = partitioning and cfg.partitioner is PartitionerKind.MERGE_BB
        completed = planner.completed
        if not completed:
            self.logger.warning(f"{inst.scenario_id} {cfg.kind.value}: time limit reached, "
                                f"reporting the anytime result",
                                extra={'scenario': inst.scenario_id, 'planner': cfg.kind.value})
        return ResultRow(
            scenario=inst.scenario_id,
            map=inst.map_name,
            s=format_node(domain.labels[inst.s]),
            g=format_node(domain.labels[inst.g]),
            n_transit=len(domain.transit),
            k=cfg.k,
            l=cfg.l,
            m=cfg.m,
            r=domain.radius,
            planner=cfg.kind.value,
            partitioner=cfg.partitioner.value if partitioning else '',
            merge_order=cfg.merge_order.value if merge_bb else '',
            heuristic=cfg.heuristic.value,
            apr=metrics.apr,
            mac=metrics.mac,
            coverage_completed=completed,
            total_time_s=None if self.config.deterministic else elapsed,
            wrpt_expansions=planner.wrpt_expansions,
            evaluated_partitions=planner.evaluated_partitions if partitioning else None,
            partition=planner.preprocess(inst.s, inst.g).to_text(domain) if partitioning else None,
        )

    def run(self, run_config: RunConfig, base_dir: Optional[FilePath] = None) -> RunReport:
        units = self.plan_units(run_config, base_dir)
        self.logger.info(f"Running {len(units)} runs on {self.config.max_workers} worker(s)")
        if self.config.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
                rows = list(executor.map(self.execute, units))
        else:
            rows = [self.execute(unit) for unit in units]
        report = RunReport(rows)
        self.logger.info(f"Finished {len(rows)} runs"
                         f"{' (some timed out)' if report.timed_out else ''}")
        return report
