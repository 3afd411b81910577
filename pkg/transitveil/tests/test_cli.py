import json
import logging

import pytest

from transitveil import __version__
from transitveil.cli import build_parser, main
from transitveil.data.exporter import read_partitions
from transitveil.data.maps import resolve_map_path
from transitveil.schemas import RunConfigSchema
from transitveil.utils.error_handlers import EXIT_ERROR, EXIT_OK, EXIT_TIMED_OUT
from transitveil.utils.logger import ROOT_LOGGER

CORRIDOR_CONFIG = str(resolve_map_path('fixture:corridor_intuition').with_suffix('.json'))
OPEN_MAP = "type octile\nheight 8\nwidth 8\nmap\n" + "........\n" * 8


@pytest.fixture(autouse=True)
def reset_handlers():
    yield
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True


class TestRun:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / 'results.csv'
        assert main(['run', CORRIDOR_CONFIG, '--out', str(out), '--no-timing']) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith('scenario,map,s,g,n_transit,k,l,m,r,planner')
        assert len(lines) == 3

    def test_writes_partitions(self, tmp_path):
        partitions = tmp_path / 'partitions.txt'
        assert main(['run', CORRIDOR_CONFIG, '--out', str(tmp_path / 'r.csv'), '--partitions', str(partitions)]) \
            == EXIT_OK
        blocks = read_partitions(partitions)
        assert list(blocks) == ['corridor#0,pbp,4,1,inf,merge_bb,cost_asc,tunnel']
        assert blocks['corridor#0,pbp,4,1,inf,merge_bb,cost_asc,tunnel'].startswith('subset 0: 1:0 3:0 1:2 3:2 cost=4')

    def test_stdout_is_csv_only(self, capsys):
        assert main(['run', CORRIDOR_CONFIG, '--jobs', '2']) == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out.startswith('scenario,')
        assert 'scenario,' not in captured.err

    def test_missing_config(self, tmp_path, capsys):
        assert main(['run', str(tmp_path / 'nope.json')]) == EXIT_ERROR
        assert 'ConfigurationError' in capsys.readouterr().err

    def test_timeout_exit_code(self, tmp_path):
        (tmp_path / 'open.map').write_text(OPEN_MAP)
        config = tmp_path / 'tight.json'
        config.write_text(json.dumps({'scenarios': [{
            'name': 'tight', 'map': 'open.map', 'start': [0, 0], 'goal': [7, 7],
            'transit': [[1, 1], [6, 1], [3, 3], [1, 6], [6, 6], [4, 7]], 'k': 2, 'time_limit': 1e-9,
        }]}))
        assert main(['run', str(config), '--out', str(tmp_path / 'r.csv')]) == EXIT_TIMED_OUT


class TestRender:
    def test_corridor_ascii(self, capsys):
        assert main(['render', CORRIDOR_CONFIG]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("#0#0#\nSaaaG\n#0#0#\n")
        assert 'subset 0: 1:0 3:0 1:2 3:2' in out
        assert out.rstrip('\n').endswith('bucket:')

    def test_svg(self, tmp_path):
        svg = tmp_path / 'corridor.svg'
        assert main(['render', CORRIDOR_CONFIG, '--svg', str(svg)]) == EXIT_OK
        assert '<svg' in svg.read_text()

    def test_unknown_scenario(self):
        assert main(['render', CORRIDOR_CONFIG, '--scenario', 'other']) == EXIT_ERROR

    def test_graph_fixture_has_no_grid(self, tmp_path):
        config = tmp_path / 'branch.json'
        config.write_text(json.dumps({'scenarios': [{'name': 'b', 'map': 'fixture:directed_branch', 'k': 3}]}))
        assert main(['render', str(config)]) == EXIT_ERROR


class TestGen:
    def test_generates_loadable_config(self, tmp_path):
        map_path = tmp_path / 'open.map'
        map_path.write_text(OPEN_MAP)
        out = tmp_path / 'gen.json'
        argv = ['gen', str(map_path), '--count', '3', '--seed', '4', '--transit', '5', '--out', str(out)]
        assert main(argv) == EXIT_OK
        run_config = RunConfigSchema().load(json.loads(out.read_text()))
        assert [s.name for s in run_config.scenarios] == ['open-0', 'open-1', 'open-2']
        assert all(len(s.transit) == 5 for s in run_config.scenarios)

        again = tmp_path / 'again.json'
        main(argv[:-1] + [str(again)])
        assert again.read_text() == out.read_text()

    def test_exhausted(self, tmp_path):
        map_path = tmp_path / 'tiny.map'
        map_path.write_text("type octile\nheight 1\nwidth 3\nmap\n...\n")
        assert main(['gen', str(map_path), '--count', '7', '--seed', '0', '--transit', '1']) == EXIT_ERROR


class TestSummarize:
    def test_round_trip(self, tmp_path, capsys):
        results = tmp_path / 'results.csv'
        assert main(['run', CORRIDOR_CONFIG, '--out', str(results)]) == EXIT_OK
        assert main(['summarize', str(results)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith('planner,partitioner,merge_order,heuristic,n_transit,k,l,runs,coverage_pct')
        assert len(lines) == 3


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as ctx:
            build_parser().parse_args(['--version'])
        assert ctx.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])
