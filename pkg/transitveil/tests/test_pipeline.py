import io
import json

import numpy as np
import pandas as pd
import pytest
from marshmallow import ValidationError

from transitveil.data.exporter import (COLUMNS, partition_key, read_partitions, read_results, rows_to_frame,
                                       summarize, summary_to_csv, to_csv, write_partitions, write_results)
from transitveil.data.generator import ScenarioGenerator, gen_scenarios, random_grid_map
from transitveil.data.maps import GridMap, resolve_map_path
from transitveil.data.pipeline import (BenchmarkRunner, PipelineConfig, algorithm_configs, instantiate,
                                       load_run_config)
from transitveil.models import planners
from transitveil.models.anonymity import AnonymityVerifier, audit_partition_metrics
from transitveil.models.partition import parse_partition_text
from transitveil.models.planners import PlannerKind, make_planner
from transitveil.schemas import RANDOM, RunConfigSchema, ScenarioSchema, TransitSample, scenario_to_dict
from transitveil.utils.error_handlers import ConfigurationError, DomainError, ScenarioExhaustedError
from transitveil.utils.helpers import INF

OPEN_MAP = "type octile\nheight 8\nwidth 8\nmap\n" + "........\n" * 8
OPEN_TRANSIT = [[1, 1], [6, 1], [3, 3], [1, 6], [6, 6], [4, 7]]


def _scenario(**overrides):
    data = {'name': 'corridor', 'map': 'fixture:corridor_intuition', 'start': [0, 1], 'goal': [4, 1],
            'transit': [[1, 0], [3, 0], [1, 2], [3, 2]], 'r': 1, 'k': 4}
    data.update(overrides)
    return ScenarioSchema().load(data)


def _run_config(tmp_path, scenarios, name='run.json', **extra):
    path = tmp_path / name
    path.write_text(json.dumps({'scenarios': scenarios, **extra}))
    return path


class TestSchemas:
    def test_defaults(self):
        scenario = ScenarioSchema().load({'name': 'a', 'map': 'm.map', 'transit': [[0, 0]]})
        assert scenario.start == RANDOM and scenario.goal == RANDOM
        assert scenario.k == [2]
        assert scenario.m == [INF]
        assert scenario.planner == ['pbp']
        assert scenario.instances == 1

    def test_scalar_axes_become_lists(self):
        scenario = _scenario(l=2, m=3, planner='cbp')
        assert scenario.k == [4]
        assert scenario.l == [2.0]
        assert scenario.m == [3]
        assert scenario.planner == ['cbp']

    def test_m_values(self):
        assert _scenario(m=['inf', 1, '5']).m == [INF, 1, 5]
        for bad in (0, -2, 1.5, True, 'many'):
            with pytest.raises(ValidationError):
                _scenario(m=bad)

    def test_transit_sample(self):
        scenario = _scenario(transit={'count': 5, 'seed': 2})
        assert scenario.transit == TransitSample(5, 2)
        with pytest.raises(ValidationError):
            _scenario(transit={'count': -1})
        with pytest.raises(ValidationError):
            _scenario(transit={'seed': 1})

    def test_node_references(self):
        assert _scenario(start='s').start == 's'
        assert _scenario(start=[2, 3]).start == (2, 3)
        with pytest.raises(ValidationError):
            _scenario(start=[1, 2, 3])
        with pytest.raises(ValidationError):
            _scenario(goal=[1.5, 2])

    def test_rejects_unknown_choices(self):
        with pytest.raises(ValidationError):
            _scenario(planner='dijkstra')
        with pytest.raises(ValidationError):
            _scenario(k=0)
        with pytest.raises(ValidationError):
            _scenario(time_limit=0)
        with pytest.raises(ValidationError):
            _scenario(k=[])

    def test_run_config(self):
        run = RunConfigSchema().load({'scenarios': [{'name': 'a', 'map': 'x.map'}], 'jobs': 3})
        assert run.jobs == 3 and not run.deterministic
        with pytest.raises(ValidationError):
            RunConfigSchema().load({'scenarios': []})
        with pytest.raises(ValidationError):
            RunConfigSchema().load({'scenarios': [{'name': 'a', 'map': 'x'}, {'name': 'a', 'map': 'y'}]})

    def test_dump_loads_back(self):
        scenario = _scenario(m=[2, 'inf'], planner=['pbp', 'rbp'])
        assert ScenarioSchema().load(scenario_to_dict(scenario)) == scenario

    def test_load_run_config_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / 'missing.json')
        broken = tmp_path / 'broken.json'
        broken.write_text('{"scenarios": [')
        with pytest.raises(ConfigurationError):
            load_run_config(broken)
        invalid = _run_config(tmp_path, [{'name': 'a'}], name='invalid.json')
        with pytest.raises(ConfigurationError) as ctx:
            load_run_config(invalid)
        assert 'scenarios' in ctx.value.payload


class TestGenerator:
    def test_random_grid_map(self):
        grid = random_grid_map(6, 4, 0.3, seed=5)
        assert (grid.width, grid.height) == (6, 4)
        assert grid == random_grid_map(6, 4, 0.3, seed=5)
        assert random_grid_map(5, 5, 0.0).passable.all()
        with pytest.raises(ConfigurationError):
            random_grid_map(0, 3)
        with pytest.raises(ConfigurationError):
            random_grid_map(3, 3, 1.0)

    def test_gen_scenarios_deterministic(self):
        grid = random_grid_map(10, 10, 0.2, seed=1)
        first = gen_scenarios(grid, 5, seed=9, n_transit=4, map_ref='maps/den.map')
        second = gen_scenarios(grid, 5, seed=9, n_transit=4, map_ref='maps/den.map')
        assert first == second
        assert [s.name for s in first] == [f"den-{i}" for i in range(5)]
        assert len({(s.start, s.goal) for s in first}) == 5
        for scenario in first:
            assert scenario.start != scenario.goal
            assert len(scenario.transit) == 4
            assert scenario.start not in scenario.transit and scenario.goal not in scenario.transit

    def test_gen_scenarios_exhausted(self):
        grid = GridMap('octile', 3, 1, ('...',))
        assert len(gen_scenarios(grid, 6, n_transit=1)) == 6
        with pytest.raises(ScenarioExhaustedError):
            gen_scenarios(grid, 7, n_transit=1)

    def test_generator_needs_two_cells(self):
        with pytest.raises(ScenarioExhaustedError):
            ScenarioGenerator(GridMap('octile', 2, 1, ('.@',)), None)

    def test_unreachable_pairs_rejected(self):
        grid = GridMap('octile', 3, 1, ('.@.',))
        generator = ScenarioGenerator(grid, np.random.default_rng(0))
        with pytest.raises(ScenarioExhaustedError):
            generator.sample_pair(max_attempts=50)


class TestInstantiate:
    def test_fixed_endpoints(self):
        [instance] = instantiate(_scenario())
        assert instance.scenario_id == 'corridor#0'
        assert instance.map_name == 'corridor_intuition'
        assert instance.domain.labels[instance.s] == (0, 1)
        assert len(instance.domain.transit) == 4
        assert instance.domain.radius == 1

    def test_sampled_instances_are_seeded(self, tmp_path):
        (tmp_path / 'open.map').write_text(OPEN_MAP)
        scenario = ScenarioSchema().load({'name': 'rand', 'map': 'open.map', 'instances': 3,
                                          'transit': {'count': 4, 'seed': 1}})
        first = instantiate(scenario, tmp_path)
        second = instantiate(scenario, tmp_path)
        assert [(i.s, i.g, i.domain.transit) for i in first] == [(i.s, i.g, i.domain.transit) for i in second]
        assert [i.index for i in first] == [0, 1, 2]
        for inst in first:
            assert inst.s != inst.g
            assert len(inst.domain.transit) == 4
            assert inst.s not in inst.domain.transit and inst.g not in inst.domain.transit

    def test_bad_cells(self):
        with pytest.raises(DomainError):
            instantiate(_scenario(start=[0, 0]))
        with pytest.raises(DomainError):
            instantiate(_scenario(goal=[9, 9]))
        with pytest.raises(ConfigurationError):
            instantiate(_scenario(start='s'))
        with pytest.raises(ConfigurationError):
            instantiate(_scenario(transit=None))
        with pytest.raises(ConfigurationError):
            instantiate(_scenario(goal=[0, 1]))

    def test_graph_fixture(self):
        scenario = ScenarioSchema().load({'name': 'branch', 'map': 'fixture:directed_branch', 'k': 3})
        [instance] = instantiate(scenario)
        assert instance.domain.labels[instance.s] == 's'
        assert len(instance.domain.transit) == 5
        with pytest.raises(ConfigurationError):
            instantiate(ScenarioSchema().load({'name': 'b', 'map': 'fixture:directed_branch',
                                               'transit': ['t1']}))
        with pytest.raises(ConfigurationError):
            instantiate(ScenarioSchema().load({'name': 'b', 'map': 'fixture:directed_branch',
                                               'start': 'nowhere'}))

    def test_missing_map(self, tmp_path):
        with pytest.raises(ConfigurationError):
            instantiate(_scenario(map='nope.map'), tmp_path)


class TestAlgorithmConfigs:
    def test_cross_product(self):
        scenario = _scenario(k=[2, 3], m=[2, 3], planner=['pbp', 'm_pbp', 'rbp'],
                             partitioner=['merge_bb', 'naive'], merge_order=['cost_asc', 'random'])
        configs = algorithm_configs(scenario)
        pbp = [c for c in configs if c.kind is PlannerKind.PBP]
        # merge_bb x 2 orders + naive, for each (k, m)
        assert len(pbp) == 2 * 2 * 3
        rbp = [c for c in configs if c.kind is PlannerKind.RBP]
        assert len(rbp) == 2 * 2

    def test_time_limit_fallback(self):
        assert algorithm_configs(_scenario(), 7.0)[0].time_limit == 7.0
        assert algorithm_configs(_scenario(time_limit=2), 7.0)[0].time_limit == 2.0


class TestBenchmarkRunner:
    def _run(self, tmp_path, max_workers=1):
        path = resolve_map_path('fixture:corridor_intuition').with_suffix('.json')
        run_config = load_run_config(path)
        runner = BenchmarkRunner(PipelineConfig(max_workers=max_workers, deterministic=True))
        return runner.run(run_config, path.parent)

    def test_corridor_rows(self, tmp_path):
        report = self._run(tmp_path)
        assert not report.timed_out
        pbp, full = report.rows
        assert (pbp.planner, full.planner) == ('pbp', 'full_cover')
        assert pbp.s == '0:1' and pbp.g == '4:1'
        assert pbp.apr == pytest.approx(1.0)
        assert pbp.mac == pytest.approx(0.0)
        assert pbp.partitioner == 'merge_bb' and pbp.merge_order == 'cost_asc'
        assert pbp.evaluated_partitions >= 1
        assert full.partitioner == '' and full.merge_order == ''
        assert full.evaluated_partitions is None
        assert full.apr == pytest.approx(1.0)
        assert pbp.total_time_s is None

    def test_csv_is_byte_identical(self, tmp_path):
        serial = to_csv(self._run(tmp_path).rows)
        assert serial == to_csv(self._run(tmp_path).rows)
        assert serial == to_csv(self._run(tmp_path, max_workers=2).rows)
        lines = serial.splitlines()
        assert lines[0] == ','.join(COLUMNS)
        assert lines[1].startswith('corridor#0,corridor_intuition,0:1,4:1,4,4,1,inf,1,pbp,merge_bb,'
                                   'cost_asc,tunnel,1,0,true,,')

    def test_timing_recorded(self, tmp_path):
        path = resolve_map_path('fixture:corridor_intuition').with_suffix('.json')
        runner = BenchmarkRunner(PipelineConfig())
        rows = runner.run(load_run_config(path), path.parent).rows
        assert all(row.total_time_s >= 0 for row in rows)

    def test_time_limit_marks_incomplete(self, tmp_path):
        (tmp_path / 'open.map').write_text(OPEN_MAP)
        path = _run_config(tmp_path, [{'name': 'tight', 'map': 'open.map', 'start': [0, 0], 'goal': [7, 7],
                                       'transit': OPEN_TRANSIT, 'k': 2, 'time_limit': 1e-9}])
        report = BenchmarkRunner(PipelineConfig(deterministic=True)).run(load_run_config(path), tmp_path)
        assert report.timed_out
        assert to_csv(report.rows).splitlines()[1].split(',')[15] == 'false'

    def test_k_larger_than_candidates(self, tmp_path):
        run_config = RunConfigSchema().load({'scenarios': [{'name': 'c', 'map': 'fixture:corridor_intuition',
                                                            'start': [0, 1], 'goal': [4, 1],
                                                            'transit': [[1, 0]], 'k': 2}]})
        with pytest.raises(ConfigurationError):
            BenchmarkRunner().plan_units(run_config)

    def test_verifier_cap(self, tmp_path):
        (tmp_path / 'open.map').write_text(OPEN_MAP)
        run_config = RunConfigSchema().load({'scenarios': [{'name': 'big', 'map': 'open.map',
                                                            'transit': {'count': 30}}]})
        with pytest.raises(ConfigurationError):
            BenchmarkRunner().plan_units(run_config, tmp_path)

    def test_each_run_searches_afresh(self, monkeypatch):
        searches = []
        search = planners.search_partition

        def counting(*args, **kwargs):
            searches.append(args[1:3])
            return search(*args, **kwargs)

        monkeypatch.setattr(planners, 'search_partition', counting)
        run_config = RunConfigSchema().load({'scenarios': [{'name': 'c', 'map': 'fixture:corridor_intuition',
                                                            'start': [0, 1], 'goal': [4, 1], 'r': 1, 'k': 4,
                                                            'transit': [[1, 0], [3, 0], [1, 2], [3, 2]],
                                                            'planner': ['pbp', 'm_pbp'], 'm': [3]}]})
        report = BenchmarkRunner(PipelineConfig(deterministic=True)).run(run_config)
        pbp, m_pbp = report.rows
        assert len(searches) == 2
        assert pbp.evaluated_partitions == m_pbp.evaluated_partitions >= 1


class TestExporter:
    @pytest.fixture
    def rows(self):
        path = resolve_map_path('fixture:corridor_intuition').with_suffix('.json')
        runner = BenchmarkRunner(PipelineConfig(deterministic=True))
        return runner.run(load_run_config(path), path.parent).rows

    def test_frame_is_strings(self, rows):
        frame = rows_to_frame(rows)
        assert list(frame.columns) == COLUMNS
        assert frame.loc[0, 'coverage_completed'] == 'true'
        assert frame.loc[1, 'evaluated_partitions'] == ''

    def test_write_and_read(self, rows, tmp_path):
        stream = io.StringIO()
        text = write_results(rows, stream)
        assert stream.getvalue() == text
        out = tmp_path / 'results.csv'
        write_results(rows, out)
        df = read_results(out)
        assert len(df) == 2
        assert list(df['partitioner']) == ['merge_bb', '']

    def test_read_rejects_other_csv(self, tmp_path):
        other = tmp_path / 'other.csv'
        other.write_text('a,b\n1,2\n')
        with pytest.raises(ConfigurationError):
            read_results(other)

    def test_summarize(self, rows, tmp_path):
        out = tmp_path / 'results.csv'
        write_results(rows + rows, out)
        summary = summarize(read_results(out))
        assert len(summary) == 2
        assert list(summary['runs']) == [2, 2]
        assert list(summary['coverage_pct']) == [100.0, 100.0]
        assert summary['mean_time_s'].isna().all()
        assert list(summary['mean_apr']) == [1.0, 1.0]
        text = summary_to_csv(summary)
        assert text.splitlines()[0].startswith('planner,partitioner,merge_order,heuristic,n_transit,k,l,runs')

    def test_summarize_mixed_coverage(self):
        df = pd.DataFrame([
            {**{c: '' for c in COLUMNS}, 'planner': 'pbp', 'n_transit': 4, 'k': 2, 'l': 1,
             'apr': '1', 'mac': '0.5', 'coverage_completed': 'true', 'total_time_s': '1.000'},
            {**{c: '' for c in COLUMNS}, 'planner': 'pbp', 'n_transit': 4, 'k': 2, 'l': 1,
             'apr': '0.5', 'mac': '', 'coverage_completed': 'false', 'total_time_s': '3.000'},
        ])
        [row] = summarize(df).to_dict('records')
        assert row['coverage_pct'] == 50.0
        assert row['mean_time_s'] == pytest.approx(2.0)
        assert row['mean_apr'] == pytest.approx(0.75)
        assert row['mean_mac'] == pytest.approx(0.5)


class TestPartitionAudit:
    def test_row_metrics_recomputed_from_partition(self, tmp_path):
        (tmp_path / 'open.map').write_text(OPEN_MAP)
        path = _run_config(tmp_path, [{'name': 'open', 'map': 'open.map', 'start': [0, 0], 'goal': [7, 7],
                                       'transit': OPEN_TRANSIT, 'k': 2, 'l': 1}])
        run_config = load_run_config(path)
        report = BenchmarkRunner(PipelineConfig(deterministic=True)).run(run_config, tmp_path)
        write_results(report.rows, tmp_path / 'results.csv')
        assert write_partitions(report.rows, tmp_path / 'partitions.txt') == 1

        [record] = read_results(tmp_path / 'results.csv').to_dict('records')
        blocks = read_partitions(tmp_path / 'partitions.txt')
        scenario = run_config.scenarios[0]
        [instance] = instantiate(scenario, tmp_path)
        listing = parse_partition_text(blocks[partition_key(record)], instance.domain)

        planner = make_planner(instance.domain, algorithm_configs(scenario)[0])
        verifier = AnonymityVerifier(planner, instance.domain, instance.s, instance.g)
        apr, mac = audit_partition_metrics(listing, verifier.outputs(), len(verifier.coverable()))
        assert apr == pytest.approx(float(record['apr']))
        if mac is None:
            assert record['mac'] == ''
        else:
            assert mac == pytest.approx(float(record['mac']), rel=1e-4)

    def test_non_partitioning_rows_have_no_block(self, tmp_path):
        path = resolve_map_path('fixture:corridor_intuition').with_suffix('.json')
        rows = BenchmarkRunner(PipelineConfig(deterministic=True)).run(load_run_config(path), path.parent).rows
        out = tmp_path / 'partitions.txt'
        assert write_partitions(rows, out) == 1
        assert rows[1].partition is None
        assert list(read_partitions(out)) == ['corridor#0,pbp,4,1,inf,merge_bb,cost_asc,tunnel']

    def test_read_partitions_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_partitions(tmp_path / 'missing.txt')
        stray = tmp_path / 'stray.txt'
        stray.write_text('subset 0: 1:1 cost=1 ac=0\n')
        with pytest.raises(ConfigurationError):
            read_partitions(stray)
