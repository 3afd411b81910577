import math
import threading

import numpy as np
import pytest

from transitveil.models.domain import Domain, Path, ProblemTuple, concat, prefix
from transitveil.utils.error_handlers import DomainError

INF = math.inf


class TestPath:
    def test_concat_drops_junction(self, corridor):
        a = Path.from_nodes(corridor, [0, 1])
        b = Path.from_nodes(corridor, [1, 2])
        joined = concat(a, b)
        assert joined.nodes == (0, 1, 2)
        assert joined.cost == a.cost + b.cost

    def test_concat_mismatch(self, corridor):
        with pytest.raises(DomainError):
            Path.from_nodes(corridor, [0, 1]).concat(Path.from_nodes(corridor, [2, 3]))

    def test_prefix(self, corridor):
        path = Path.from_nodes(corridor, [0, 1, 2])
        assert prefix(path, 2).nodes == (0, 1)
        assert prefix(path, 2).cost == 1
        assert prefix(path, len(path) + 5) == path
        assert prefix(path, INF) == path

    def test_from_nodes_rejects_non_edges(self, corridor):
        with pytest.raises(DomainError):
            Path.from_nodes(corridor, [0, 2])

    def test_empty_path(self):
        with pytest.raises(DomainError):
            Path(())


class TestBuildDomain:
    def test_corridor_radius_zero(self, corridor):
        assert all(corridor.visibility[n] == frozenset((n,)) for n in range(len(corridor)))

    def test_corridor_radius_two(self, make_domain):
        domain = make_domain(['.....'], r=2)
        assert domain.visibility[0] == frozenset({0, 1, 2})
        assert domain.visibility_inv[0] == frozenset({0, 1, 2})

    def test_sight_goes_around_obstacles(self, make_domain):
        domain = make_domain(['...', '.@.', '...'], r=2)
        nw = domain.node((0, 0))
        seen = {domain.labels[n] for n in domain.visibility[nw]}
        assert seen == {(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)}

    def test_transit_on_obstacle(self, make_domain):
        with pytest.raises(DomainError):
            make_domain(['.@.'], transit=[(1, 0)])

    def test_duplicate_transit(self, make_domain):
        with pytest.raises(DomainError):
            make_domain(['...'], transit=[(0, 0), (0, 0)])

    def test_row_major_nodes(self, make_domain):
        domain = make_domain(['.@', '..'])
        assert domain.labels == ((0, 0), (0, 1), (1, 1))

    def test_default_name_is_stable(self, make_domain):
        assert make_domain(['..']).name == make_domain(['..']).name
        assert make_domain(['..']).name != make_domain(['.@']).name


class TestDistances:
    def test_basic(self, make_domain):
        domain = make_domain(['..@..'])
        assert domain.dist(0, 1) == 1
        assert domain.dist(1, 1) == 0
        assert domain.dist(0, 3) == INF

    def test_dispersion(self, make_domain):
        domain = make_domain(['..@..'])
        assert domain.dispersion(0, 0) == INF
        assert domain.dispersion(0, 1) == 1
        assert domain.dispersion(0, 3) == INF
        assert domain.min_dispersion([0]) == INF
        assert domain.min_dispersion([0, 1, 2]) == 1

    def test_symmetry_and_triangle(self, random_instances):
        rng = np.random.default_rng(11)
        for domain, _, _ in random_instances(5, 2, size=9):
            nodes = rng.choice(len(domain), size=(40, 3))
            for a, b, c in nodes.tolist():
                assert domain.dist(a, b) == domain.dist(b, a)
                assert domain.dist(a, c) <= domain.dist(a, b) + domain.dist(b, c)

    def test_distances_to_set(self, corridor):
        field = corridor.distances_to_set({0, 4})
        assert field.tolist() == [0, 1, 2, 1, 0]
        assert np.all(np.isinf(corridor.distances_to_set(set())))

    def test_shortest_path_deterministic(self, make_domain):
        domain = make_domain(['...', '...'])
        path = domain.shortest_path(domain.node((0, 0)), domain.node((2, 1)))
        assert path.cost == 3
        # Lowest-index tight successor first: along the top row.
        assert path.labels(domain) == [(0, 0), (1, 0), (2, 0), (2, 1)]
        assert domain.shortest_path(0, 0).nodes == (0,)

    def test_shortest_path_unreachable(self, make_domain):
        domain = make_domain(['.@.'])
        assert domain.shortest_path(0, 1) is None

    def test_concurrent_fields(self, make_domain):
        domain = make_domain(['.' * 20] * 20)
        results = []

        def work():
            results.append(domain.distances_from(0))

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r is results[0] for r in results)


class TestVisibility:
    def test_covers(self, make_domain):
        domain = make_domain(['.....'], r=1)
        path = Path.from_nodes(domain, [0, 1])
        assert domain.covers(path, 2)
        assert not domain.covers(path, 3)

    def test_covers_radius_zero(self, corridor):
        path = Path.from_nodes(corridor, [0, 1, 2])
        assert corridor.covers(path, 1)
        assert not corridor.covers(path, 3)

    def test_coverable(self, make_domain):
        walled = make_domain(['...', '@@@', '...'])
        assert walled.coverable(0, 2, 1)
        assert not walled.coverable(0, 2, walled.node((1, 2)))

    def test_coverable_through_sight(self, make_domain):
        """A walled-off cell within r of the corridor is still coverable."""
        domain = make_domain(['...', '.@.', '...'], r=2)
        assert domain.coverable(domain.node((0, 0)), domain.node((2, 0)), domain.node((1, 2)))

    def test_visibility_monotone_in_radius(self, make_domain):
        rows = ['....@', '.@@..', '.....']
        small, large = make_domain(rows, r=1), make_domain(rows, r=3)
        for n in range(len(small)):
            assert small.visibility[n] <= large.visibility[n]


class TestDirectedDomain:
    def test_edges_one_way(self, directed_branch):
        domain, s, g = directed_branch
        assert domain.dist(s, g) == 4
        assert domain.dist(g, s) == INF
        assert domain.coverable(s, g, domain.node('t4'))

    def test_self_loop(self):
        with pytest.raises(DomainError):
            Domain.from_edges(['a'], [('a', 'a', 1)], [])

    def test_conflicting_costs(self):
        with pytest.raises(DomainError):
            Domain.from_edges(['a', 'b'], [('a', 'b', 1), ('b', 'a', 2)], [])


class TestProblemTuple:
    def test_rejects_transit_at_endpoint(self, corridor):
        with pytest.raises(DomainError):
            ProblemTuple(corridor, 0, 4, 0)
        with pytest.raises(DomainError):
            ProblemTuple(corridor, 0, 4, 4)
        assert ProblemTuple(corridor, 0, 4, 2).t == 2
