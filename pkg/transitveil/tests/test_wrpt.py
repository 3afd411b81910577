import numpy as np
import pytest

from transitveil.models.wrpt import (Heuristic, WrptCounters, WrptOutcome, WrptSolver, WrptState,
                                     build_cover_fields, h_blind, h_tunnel, initial_state, oracle_wrpt,
                                     solve_wrpt)
from transitveil.utils.helpers import Deadline


class TestSolveWrpt:
    def test_target_on_corridor(self, corridor):
        """A target between s and g costs nothing extra."""
        result = solve_wrpt(corridor, 0, 4, [2])
        assert result.outcome is WrptOutcome.SOLVED
        assert result.cost == 4
        assert result.path.nodes == (0, 1, 2, 3, 4)

    def test_target_behind_start(self, corridor):
        """The path must double back to see a target behind s."""
        result = solve_wrpt(corridor, 2, 4, [0])
        assert result.cost == 6
        assert result.path.nodes == (2, 1, 0, 1, 2, 3, 4)

    def test_no_targets_is_shortest_path(self, corridor):
        assert solve_wrpt(corridor, 0, 3, []).cost == corridor.dist(0, 3)

    def test_radius_lets_neighbour_cover(self, make_domain):
        domain = make_domain(['.....'], r=1)
        result = solve_wrpt(domain, 0, 2, [3])
        assert result.cost == 2

    def test_walled_off_target(self, make_domain):
        domain = make_domain(['..@.'])
        for heuristic in Heuristic:
            result = solve_wrpt(domain, 0, 1, [domain.node((3, 0))], heuristic=heuristic)
            assert result.outcome is WrptOutcome.NO_PATH
            assert result.path is None

    def test_walled_off_target_visible_across_wall(self, make_domain):
        """Sight runs through free cells only, so a wall blocks it."""
        domain = make_domain(['..@.'], r=2)
        assert solve_wrpt(domain, 0, 1, [domain.node((3, 0))]).outcome is WrptOutcome.NO_PATH

    def test_timeout(self, make_domain):
        domain = make_domain(['.' * 12] * 12)
        solver = WrptSolver(domain, Heuristic.BLIND, check_interval=1)
        result = solver.solve(0, len(domain) - 1, [5, 70, 100], Deadline(0))
        assert result.outcome is WrptOutcome.TIMED_OUT
        assert result.path is None
        assert result.cost == float('inf')

    def test_too_many_targets(self, make_domain):
        domain = make_domain(['.' * 70])
        with pytest.raises(ValueError):
            solve_wrpt(domain, 0, 69, range(1, 66))

    def test_budget_in_seconds(self, corridor):
        assert solve_wrpt(corridor, 0, 4, [2], budget=10.0).solved

    def test_counters_accumulate(self, corridor):
        counters = WrptCounters()
        counters.add(solve_wrpt(corridor, 0, 4, [2]))
        counters.add(solve_wrpt(corridor, 2, 4, [0]))
        assert counters.calls == 2
        assert counters.expansions > 0
        assert counters.timeouts == 0


class TestHeuristics:
    def test_tunnel_corridor_value(self, corridor):
        """reach 2 to the target plus exit 2 to the goal."""
        fields = build_cover_fields(corridor, 4, [2])
        state = initial_state(corridor, 0, [2])
        assert state == WrptState(0, 1)
        assert h_tunnel(state, fields) == 4

    def test_tunnel_when_standing_on_watcher(self, make_domain):
        domain = make_domain(['.....'], r=1)
        fields = build_cover_fields(domain, 4, [2])
        assert h_tunnel(WrptState(1, 1), fields) == pytest.approx(fields.exit[0])

    def test_tunnel_all_covered_is_goal_distance(self, corridor):
        fields = build_cover_fields(corridor, 4, [2])
        assert h_tunnel(WrptState(1, 0), fields) == 3
        assert h_tunnel(WrptState(4, 0), fields) == 0

    def test_blind_is_zero(self, corridor):
        assert h_blind(WrptState(0, 1)) == 0.0


class TestOracleAgreement:
    @pytest.fixture
    def instances(self, random_instances):
        return random_instances(40, 4, size=10, r=lambda rng: int(rng.integers(0, 3)), seed=7)

    def _targets(self, domain, seed):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(1, len(domain.transit) + 1))
        return sorted(int(t) for t in rng.choice(domain.transit, size=size, replace=False))

    def test_costs_match_oracle(self, instances):
        """Tunnel, blind and the uniform-cost oracle agree on every cost."""
        for i, (domain, s, g) in enumerate(instances):
            targets = self._targets(domain, i)
            oracle = oracle_wrpt(domain, s, g, targets)
            tunnel = solve_wrpt(domain, s, g, targets, Heuristic.TUNNEL)
            blind = solve_wrpt(domain, s, g, targets, Heuristic.BLIND)
            assert tunnel.outcome is oracle.outcome
            assert tunnel.cost == oracle.cost
            assert blind.cost == oracle.cost
            if tunnel.solved:
                assert all(domain.covers(tunnel.path, t) for t in targets)
                assert tunnel.path.first == s and tunnel.path.last == g

    def test_tunnel_is_admissible(self, instances):
        """h_tunnel never exceeds the true remaining cost of an expanded state."""
        rng = np.random.default_rng(3)
        checked = 0
        for i, (domain, s, g) in enumerate(instances[:15]):
            targets = self._targets(domain, i)
            solver = WrptSolver(domain, Heuristic.TUNNEL, record_expansions=True)
            if not solver.solve(s, g, targets).solved:
                continue
            fields = build_cover_fields(domain, g, targets)
            states = solver.expanded
            picks = rng.choice(len(states), size=min(20, len(states)), replace=False)
            for idx in picks:
                state = states[int(idx)]
                left = [targets[b] for b in range(len(targets)) if state.uncovered >> b & 1]
                remaining = oracle_wrpt(domain, state.node, g, left).cost
                assert h_tunnel(state, fields) <= remaining + 1e-9
                checked += 1
        assert checked > 0

    def test_tunnel_expands_no_more_than_blind(self, instances):
        better = 0
        for i, (domain, s, g) in enumerate(instances):
            targets = self._targets(domain, i)
            tunnel = solve_wrpt(domain, s, g, targets, Heuristic.TUNNEL)
            blind = solve_wrpt(domain, s, g, targets, Heuristic.BLIND)
            better += tunnel.expansions <= blind.expansions
        assert better / len(instances) >= 0.9
