"""ASCII and SVG renderings of partitions over grid maps."""
import logging
import string
from pathlib import Path as FilePath
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from transitveil.models.domain import Domain, Node, Path
from transitveil.models.partition import Partition
from transitveil.utils.error_handlers import ConfigurationError

logger = logging.getLogger(__name__)

OBSTACLE = '#'
FREE = '.'
START = 'S'
GOAL = 'G'
BUCKET = '*'


def _require_grid(domain: Domain):
    if domain.grid is None:
        raise ConfigurationError(f"domain {domain.name} has no grid map to render")
    return domain.grid


def _subset_paths(partition: Optional[Partition],
                  paths: Optional[Sequence[Optional[Path]]]) -> Sequence[Optional[Path]]:
    if paths is not None:
        return paths
    if partition is None:
        return ()
    return [subset.covering_path for subset in partition.subsets]


def render_ascii(domain: Domain, s: Node, g: Node, partition: Optional[Partition] = None,
                 paths: Optional[Sequence[Optional[Path]]] = None) -> str:
    """Text rendering, one character per cell.

    Obstacles ``#``, free ``.``, start ``S``, goal ``G``, subset members by
    subset id (mod 10), bucket members ``*`` and path cells by lowercase
    letter per subset. S/G win over members, members over paths; where paths
    overlap the lowest subset id wins.
    """
    grid = _require_grid(domain)
    cells = [[FREE if grid.passable[y, x] else OBSTACLE for x in range(grid.width)]
             for y in range(grid.height)]

    def put(node: Node, glyph: str):
        x, y = domain.labels[node]
        cells[y][x] = glyph

    for i, path in reversed(list(enumerate(_subset_paths(partition, paths)))):
        if path is None:
            continue
        for node in path.nodes:
            put(node, string.ascii_lowercase[i % 26])
    if partition is not None:
        for node in partition.bucket:
            put(node, BUCKET)
        for i, subset in enumerate(partition.subsets):
            for node in subset.members:
                put(node, str(i % 10))
    put(s, START)
    put(g, GOAL)
    return '\n'.join(''.join(row) for row in cells) + '\n'


def render_svg(domain: Domain, s: Node, g: Node, out: Union[str, FilePath],
               partition: Optional[Partition] = None,
               paths: Optional[Sequence[Optional[Path]]] = None) -> FilePath:
    """SVG with one color per subset; each path drawn in a lighter stroke."""
    grid = _require_grid(domain)
    out = FilePath(out)
    fig, ax = plt.subplots(figsize=(0.35 * grid.width + 1, 0.35 * grid.height + 1))
    try:
        ax.imshow(~grid.passable, cmap='Greys', vmin=0, vmax=1.5, interpolation='nearest')
        colors = plt.get_cmap('tab10')

        for i, path in enumerate(_subset_paths(partition, paths)):
            if path is None:
                continue
            xs, ys = zip(*(domain.labels[n] for n in path.nodes))
            ax.plot(xs, ys, color=colors(i % 10), alpha=0.35, linewidth=6, solid_capstyle='round')

        if partition is not None:
            for i, subset in enumerate(partition.subsets):
                xs, ys = zip(*(domain.labels[n] for n in subset.sorted_members()))
                ax.scatter(xs, ys, color=colors(i % 10), s=90, zorder=3, label=f"subset {i}")
            if partition.bucket:
                xs, ys = zip(*(domain.labels[n] for n in sorted(partition.bucket)))
                ax.scatter(xs, ys, color='dimgray', marker='x', s=60, zorder=3, label='bucket')

        for node, glyph in ((s, START), (g, GOAL)):
            x, y = domain.labels[node]
            ax.text(x, y, glyph, ha='center', va='center', fontweight='bold', zorder=4)

        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_xlim(-0.5, grid.width - 0.5)
        ax.set_ylim(grid.height - 0.5, -0.5)
        fig.savefig(out, format='svg', bbox_inches='tight', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.info(f"Wrote SVG rendering to {out}")
    return out
