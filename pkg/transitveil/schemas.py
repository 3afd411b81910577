from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple, Union

from marshmallow import Schema, ValidationError, fields, post_load, validate

from transitveil.models.partition import MergeOrder, PartitionerKind
from transitveil.models.planners import PlannerKind
from transitveil.models.wrpt import Heuristic
from transitveil.utils.helpers import INF, parse_m

RANDOM = 'random'

Coordinate = Union[Tuple[int, int], str]


@dataclass
class TransitSample:
    """``count`` candidates drawn with ``seed`` instead of an explicit list."""
    count: int
    seed: int = 0


@dataclass
class Scenario:
    name: str
    map: str
    start: Union[Coordinate, str] = RANDOM
    goal: Union[Coordinate, str] = RANDOM
    transit: Union[List[Coordinate], TransitSample, None] = None
    instances: int = 1
    instance_seed: int = 0
    k: List[int] = field(default_factory=lambda: [2])
    l: List[float] = field(default_factory=lambda: [1.0])
    m: List[Union[int, float]] = field(default_factory=lambda: [INF])
    r: Optional[float] = None
    planner: List[str] = field(default_factory=lambda: [PlannerKind.PBP.value])
    partitioner: List[str] = field(default_factory=lambda: [PartitionerKind.MERGE_BB.value])
    merge_order: List[str] = field(default_factory=lambda: [MergeOrder.COST_ASC.value])
    heuristic: List[str] = field(default_factory=lambda: [Heuristic.TUNNEL.value])
    time_limit: Optional[float] = None
    seed: int = 0


@dataclass
class RunConfig:
    scenarios: List[Scenario]
    jobs: Optional[int] = None
    deterministic: bool = False


class PrefixLength(fields.Field):
    """``"inf"`` or a positive integer."""

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, bool):
            raise ValidationError("m must be a positive integer or 'inf'")
        try:
            return parse_m(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(str(e)) from e

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return 'inf' if value == INF else int(value)


class NodeRef(fields.Field):
    """Grid cell ``[x, y]`` or a node name in a graph fixture."""

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str) and value:
            return value
        if (isinstance(value, (list, tuple)) and len(value) == 2
                and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            return int(value[0]), int(value[1])
        raise ValidationError(f"expected [x, y] or a node name, got {value!r}")

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None or isinstance(value, str):
            return value
        return [int(v) for v in value]


class TransitSpec(fields.Field):
    """Explicit candidate list, or ``{"count": N, "seed": S}``."""

    _node = NodeRef()

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, dict):
            unknown = set(value) - {'count', 'seed'}
            if unknown or 'count' not in value:
                raise ValidationError("transit sample needs 'count' and optional 'seed'")
            count, seed = value['count'], value.get('seed', 0)
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise ValidationError(f"transit count must be a non-negative integer, got {count!r}")
            if not isinstance(seed, int) or isinstance(seed, bool):
                raise ValidationError(f"transit seed must be an integer, got {seed!r}")
            return TransitSample(count, seed)
        if isinstance(value, list):
            return [self._node.deserialize(v) for v in value]
        raise ValidationError("transit must be a list of nodes or a {count, seed} object")

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        if isinstance(value, TransitSample):
            return {'count': value.count, 'seed': value.seed}
        return [self._node._serialize(v, attr, obj) for v in value]


class Endpoint(NodeRef):
    """A node reference or ``"random"``."""

    def _deserialize(self, value, attr, data, **kwargs):
        if value == RANDOM:
            return RANDOM
        return super()._deserialize(value, attr, data, **kwargs)


class Axis(fields.Field):
    """Matrix axis: a scalar or a non-empty list of values of ``inner``."""

    def __init__(self, inner: fields.Field, **kwargs):
        super().__init__(**kwargs)
        self.inner = inner

    def _deserialize(self, value, attr, data, **kwargs):
        values = value if isinstance(value, list) else [value]
        if not values:
            raise ValidationError("must not be empty")
        return [self.inner.deserialize(v) for v in values]

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        out = [self.inner._serialize(v, attr, obj) for v in value]
        return out[0] if len(out) == 1 else out


def _choices(enum) -> List[str]:
    return [member.value for member in enum]


class ScenarioSchema(Schema):
    name = fields.Str(required=True, validate=validate.Length(min=1))
    map = fields.Str(required=True, validate=validate.Length(min=1))
    start = Endpoint(load_default=RANDOM)
    goal = Endpoint(load_default=RANDOM)
    transit = TransitSpec(load_default=None, allow_none=True)
    instances = fields.Int(load_default=1, validate=validate.Range(min=1))
    instance_seed = fields.Int(load_default=0)
    k = Axis(fields.Int(validate=validate.Range(min=1)), load_default=[2])
    l = Axis(fields.Float(validate=validate.Range(min=0)), load_default=[1.0])
    m = Axis(PrefixLength(), load_default=[INF])
    r = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0))
    planner = Axis(fields.Str(validate=validate.OneOf(_choices(PlannerKind))),
                   load_default=[PlannerKind.PBP.value])
    partitioner = Axis(fields.Str(validate=validate.OneOf(_choices(PartitionerKind))),
                       load_default=[PartitionerKind.MERGE_BB.value])
    merge_order = Axis(fields.Str(validate=validate.OneOf(_choices(MergeOrder))),
                       load_default=[MergeOrder.COST_ASC.value])
    heuristic = Axis(fields.Str(validate=validate.OneOf(_choices(Heuristic))),
                     load_default=[Heuristic.TUNNEL.value])
    time_limit = fields.Float(load_default=None, allow_none=True,
                              validate=validate.Range(min=0, min_inclusive=False))
    seed = fields.Int(load_default=0)

    @post_load
    def make_scenario(self, data, **kwargs) -> Scenario:
        return Scenario(**data)


class RunConfigSchema(Schema):
    scenarios = fields.List(fields.Nested(ScenarioSchema), required=True, validate=validate.Length(min=1))
    jobs = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=1))
    deterministic = fields.Bool(load_default=False)

    @post_load
    def make_run_config(self, data, **kwargs) -> RunConfig:
        names = [s.name for s in data['scenarios']]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValidationError(f"duplicate scenario names: {', '.join(duplicates)}", 'scenarios')
        return RunConfig(**data)


def scenario_to_dict(scenario: Scenario) -> Any:
    """JSON-ready dict for a scenario; inverse of ``ScenarioSchema().load``."""
    return ScenarioSchema().dump(scenario)
