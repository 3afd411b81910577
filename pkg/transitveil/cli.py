"""Command-line interface.

::

    python -m transitveil run <config.json> [--out results.csv] [--jobs N] [--no-timing] [--partitions FILE]
    python -m transitveil render <config.json> [--scenario NAME] [--svg out.svg]
    python -m transitveil gen <map> --count N --seed S [--transit T] [--r R]
    python -m transitveil summarize <results.csv> [--out summary.csv]

CSV and renderings go to stdout; logs go to stderr.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path as FilePath
from typing import List, Optional

from transitveil import __version__
from transitveil.config import get_config
from transitveil.data.exporter import read_results, summarize, summary_to_csv, write_partitions, write_results
from transitveil.data.generator import gen_scenarios
from transitveil.data.maps import read_map
from transitveil.data.pipeline import (BenchmarkRunner, PipelineConfig, algorithm_configs, instantiate,
                                       load_run_config)
from transitveil.data.visualization import render_ascii, render_svg
from transitveil.models.planners import PlannerKind, pbp_preprocess
from transitveil.schemas import scenario_to_dict
from transitveil.utils.error_handlers import EXIT_OK, EXIT_TIMED_OUT, ConfigurationError, handle_errors
from transitveil.utils.helpers import INF
from transitveil.utils.logger import LogConfig, setup_logging

logger = logging.getLogger(__name__)


@handle_errors
def cmd_run(args) -> int:
    run_config = load_run_config(args.config)
    cfg = get_config()
    jobs = args.jobs or run_config.jobs or cfg.DEFAULT_JOBS
    deterministic = args.no_timing or run_config.deterministic
    runner = BenchmarkRunner(PipelineConfig(max_workers=jobs, deterministic=deterministic,
                                            default_time_limit=cfg.DEFAULT_TIME_LIMIT))
    report = runner.run(run_config, FilePath(args.config).parent)
    write_results(report.rows, args.out or sys.stdout)
    if args.partitions:
        write_partitions(report.rows, args.partitions)
    return EXIT_TIMED_OUT if report.timed_out else EXIT_OK


@handle_errors
def cmd_render(args) -> int:
    run_config = load_run_config(args.config)
    scenarios = run_config.scenarios
    if args.scenario:
        scenarios = [s for s in scenarios if s.name == args.scenario]
        if not scenarios:
            raise ConfigurationError(f"no scenario named {args.scenario!r}")
    scenario = scenarios[0]
    instance = instantiate(scenario, FilePath(args.config).parent)[0]
    # Partition settings come from the first configuration of the matrix.
    planner_cfg = replace(algorithm_configs(scenario, get_config().DEFAULT_TIME_LIMIT)[0], kind=PlannerKind.PBP,
                          m=INF)
    partition, _ = pbp_preprocess(instance.domain, instance.s, instance.g, planner_cfg.k, planner_cfg.l,
                                  planner_cfg.partitioner, planner_cfg.time_limit, planner_cfg.merge_order,
                                  planner_cfg.heuristic, planner_cfg.seed)
    sys.stdout.write(render_ascii(instance.domain, instance.s, instance.g, partition))
    sys.stdout.write(partition.to_text(instance.domain))
    if args.svg:
        render_svg(instance.domain, instance.s, instance.g, args.svg, partition)
    return EXIT_OK


@handle_errors
def cmd_gen(args) -> int:
    grid = read_map(args.map)
    scenarios = gen_scenarios(grid, args.count, args.seed, n_transit=args.transit, r=args.r, map_ref=args.map)
    document = {'deterministic': False, 'scenarios': [scenario_to_dict(s) for s in scenarios]}
    text = json.dumps(document, indent=2) + '\n'
    if args.out:
        FilePath(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


@handle_errors
def cmd_summarize(args) -> int:
    text = summary_to_csv(summarize(read_results(args.results)))
    if args.out:
        FilePath(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='transitveil',
                                     description='Transit-obfuscating path planners and benchmark harness')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', help='override TRANSITVEIL_LOG_LEVEL')
    parser.add_argument('--log-json', action='store_true', help='emit JSON log lines')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run a scenario config and emit result CSV')
    run.add_argument('config')
    run.add_argument('--out', help='write CSV here instead of stdout')
    run.add_argument('--jobs', type=int, help='parallel worker slots')
    run.add_argument('--no-timing', action='store_true', help='leave total_time_s empty')
    run.add_argument('--partitions', help='also write the partition of every partitioning run here')
    run.set_defaults(func=cmd_run)

    render = sub.add_parser('render', help='render the partition of a scenario')
    render.add_argument('config')
    render.add_argument('--scenario', help='scenario name (default: first)')
    render.add_argument('--svg', help='also write an SVG rendering')
    render.set_defaults(func=cmd_render)

    gen = sub.add_parser('gen', help='sample scenarios on a map')
    gen.add_argument('map')
    gen.add_argument('--count', type=int, required=True)
    gen.add_argument('--seed', type=int, required=True)
    gen.add_argument('--transit', type=int, default=8, help='candidates per scenario')
    gen.add_argument('--r', type=float, default=0, help='visibility radius')
    gen.add_argument('--out', help='write JSON here instead of stdout')
    gen.set_defaults(func=cmd_gen)

    summ = sub.add_parser('summarize', help='aggregate a results CSV per configuration')
    summ.add_argument('results')
    summ.add_argument('--out')
    summ.set_defaults(func=cmd_summarize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_config = LogConfig.from_config()
    if args.log_level:
        log_config.level = args.log_level
    if args.log_json:
        log_config.json_format = True
    setup_logging(log_config)
    return args.func(args)
