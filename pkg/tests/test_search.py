import math

import pytest

from timmdp.baselines import dp_solve, evaluate_policy
from timmdp.crg import build_crgs, partition_rewards
from timmdp.domains import example_partition, example_two_agent
from timmdp.search import (
    IncompleteSolveError,
    SearchConfig,
    core_solve,
    crg_ps_solve,
    extract_policy,
    independent_components,
    joint_action_bounds,
)

from util import random_instance


class TestSearchConfig:
    def test_tolerance_must_be_positive(self):
        with pytest.raises(ValueError):
            SearchConfig(tolerance=0.0)


class TestCoreSolve:
    def test_trivial_horizon_boundary(self):
        m = random_instance(0, horizon=1)
        crgs = build_crgs(m)
        report = core_solve(m, crgs)
        assert abs(report.value - dp_solve(m).value) <= 1e-9

    def test_zero_interactions_decouple_at_root(self):
        m = random_instance(1, n_agents=3, n_interactions=0)
        report = core_solve(m, build_crgs(m))
        per_agent = []
        for i in m.agents:
            sub = _restrict_to_agent(m, i)
            per_agent.append(dp_solve(sub).value)
        assert abs(report.value - math.fsum(per_agent)) <= 1e-9
        assert report.stats.decouple_events >= 1
        assert report.stats.max_component_size == 1

    def test_matches_dp_on_random_batch(self):
        for seed in range(100):
            m = random_instance(seed, n_agents=2, max_actions=3,
                                max_states=4, horizon=4,
                                feature_scoped=(seed % 3 == 0))
            crgs = build_crgs(m)
            dp = dp_solve(m)
            core = core_solve(m, crgs)
            assert abs(core.value - dp.value) <= 1e-9, seed

    def test_timeout_reports_incomplete(self):
        m = random_instance(2, n_agents=3, horizon=4)
        crgs = build_crgs(m)
        report = core_solve(m, crgs, SearchConfig(time_budget=0.0))
        assert report.status == "timeout"
        assert report.value is None
        with pytest.raises(IncompleteSolveError):
            extract_policy(report)


def _restrict_to_agent(m, i):
    from timmdp.model import TiMmdpInstance

    return TiMmdpInstance(
        locals=(m.locals[i],),
        rewards=[_shift(rf) for rf in m.rewards if rf.scope == (i,)],
        horizon=m.horizon, initial=(m.initial[i],))


def _shift(rf):
    from timmdp.model import RewardFunction

    return RewardFunction(scope=(0,), table=dict(rf.table),
                          default=rf.default, feature_scope=None)


class TestPruningSafety:
    def test_values_identical_and_fewer_evaluations(self):
        for seed in range(40):
            m = random_instance(seed, n_agents=2, horizon=3,
                                feature_scoped=(seed % 2 == 0))
            crgs = build_crgs(m)
            pruned = core_solve(m, crgs)
            plain = crg_ps_solve(m, crgs)
            assert abs(pruned.value - plain.value) <= 1e-9, seed
            assert plain.stats.nodes_pruned == 0
            assert (pruned.stats.joint_actions_evaluated
                    <= plain.stats.joint_actions_evaluated), seed

    def test_memoization_changes_nothing_but_work(self):
        for seed in range(15):
            m = random_instance(seed, n_agents=2, horizon=4)
            crgs = build_crgs(m)
            plain = core_solve(m, crgs, SearchConfig(memoization=False))
            memo = core_solve(m, crgs, SearchConfig(memoization=True))
            assert abs(plain.value - memo.value) <= 1e-9
            assert (memo.stats.joint_actions_evaluated
                    <= plain.stats.joint_actions_evaluated)

    def test_determinism_of_reports(self):
        m = random_instance(9, n_agents=2, horizon=4)
        crgs = build_crgs(m)
        a = core_solve(m, crgs)
        b = core_solve(m, crgs)
        assert a.value == b.value
        assert a.stats.as_dict() == b.stats.as_dict()
        assert a.policy.entries == b.policy.entries

    def test_lower_bound_only_rises_within_a_node(self):
        from itertools import product

        import timmdp.search as search_mod

        m = random_instance(12, n_agents=2, horizon=3)
        crgs = build_crgs(m)
        search = search_mod._Search(m, crgs, SearchConfig())
        agents = tuple(m.agents)
        state_of = dict(zip(agents, m.initial))
        for comp in search.components(0, agents, state_of):
            comp_states = tuple(state_of[i] for i in comp)
            actions = list(product(*(
                crgs[i].nodes[(0, s)].kept_actions
                for i, s in zip(comp, comp_states))))
            expansions = {a: search._expand(0, comp, comp_states, a)
                          for a in actions}
            bounds = {a: sum(p * dn for _, p, _, _, dn in rows)
                      for a, rows in expansions.items()}
            lower_max = max(bounds.values())
            history = [lower_max]
            for a in actions:
                value = sum(p * (r + search.solve(1, comp, nxt))
                            for nxt, p, r, _, _ in expansions[a])
                lower_max = max(lower_max, value)
                history.append(lower_max)
            assert history == sorted(history)

    def test_exhaustive_cri_same_values_refined_components(self):
        import timmdp.search as search_mod

        for seed in range(15):
            m = random_instance(seed, n_agents=2, horizon=3)
            crgs = build_crgs(m)
            fast = core_solve(m, crgs, SearchConfig())
            exact = core_solve(m, crgs, SearchConfig(exhaustive_cri=True))
            assert abs(fast.value - exact.value) <= 1e-9, seed
            # the exact test never keeps an edge the cheap test dropped
            agents = tuple(m.agents)
            state_of = dict(zip(agents, m.initial))
            cheap = search_mod._Search(m, crgs, SearchConfig())
            full = search_mod._Search(m, crgs,
                                      SearchConfig(exhaustive_cri=True))
            coarse = {i: comp
                      for comp in cheap.components(0, agents, state_of)
                      for i in comp}
            for comp in full.components(0, agents, state_of):
                assert len({coarse[i] for i in comp}) == 1, seed


class TestComponents:
    def test_no_interactions_gives_singletons(self):
        m = random_instance(3, n_agents=3, n_interactions=0)
        crgs = build_crgs(m)
        comps = independent_components(m, crgs, 0, m.initial)
        assert comps == [(0,), (1,), (2,)]

    def test_worked_example_decouples_after_joint_ba(self):
        m = example_two_agent()
        crgs = build_crgs(m, partition_rewards(m, example_partition()))
        assert independent_components(m, crgs, 0, (0, 0)) == [(0, 1)]
        # joint action (b, a) leads to local states (2, 1)
        assert independent_components(m, crgs, 1, (2, 1)) == [(0,), (1,)]

    def test_pyramid_is_one_component_at_root(self):
        from timmdp.domains import compile_mpp, gen_pyra

        m = compile_mpp(gen_pyra(7, 3, seed=1))
        crgs = build_crgs(m)
        comps = independent_components(m, crgs, 0, m.initial)
        assert comps == [tuple(range(7))]

    def test_components_refine_along_branches(self):
        from timmdp.model import enumerate_successors

        for seed in range(10):
            m = random_instance(seed, n_agents=3, n_interactions=2)
            crgs = build_crgs(m)
            frontier = {(0, tuple(m.initial))}
            seen = set()
            while frontier:
                t, s = frontier.pop()
                if (t, s) in seen or t >= m.horizon:
                    continue
                seen.add((t, s))
                comps = independent_components(m, crgs, t, s)
                blocks = {i: comp for comp in comps for i in comp}
                for a in m.joint_actions(s):
                    for s2, _ in enumerate_successors(m, s, a):
                        if t + 1 >= m.horizon:
                            continue
                        comps2 = independent_components(m, crgs, t + 1, s2)
                        for comp in comps2:
                            parents = {blocks[i] for i in comp}
                            assert len(parents) == 1, (seed, t, s, comp)
                        frontier.add((t + 1, s2))


class TestJointActionBounds:
    def test_terminal_transition_bounds_collapse_to_reward(self):
        m = example_two_agent()
        crgs = build_crgs(m, partition_rewards(m, example_partition()))
        # from joint state (2, 1) at t=1, joint action (a, b) is deterministic
        lo, hi = joint_action_bounds(m, crgs, 1, (0, 1), (2, 1), (0, 1))
        assert lo == hi

    def test_q_values_lie_within_bounds(self):
        from timmdp.model import enumerate_successors, total_reward

        for seed in range(15):
            m = random_instance(seed, n_agents=2, feature_scoped=True)
            crgs = build_crgs(m)
            dp = dp_solve(m)
            agents = tuple(m.agents)
            frontier = {tuple(m.initial)}
            for t in range(m.horizon):
                nxt = set()
                for s in frontier:
                    for a in m.joint_actions(s):
                        q = math.fsum(
                            p * (total_reward(m, s, a, s2)
                                 + dp.values[(t + 1, s2)])
                            for s2, p in enumerate_successors(m, s, a))
                        lo, hi = joint_action_bounds(m, crgs, t, agents, s, a)
                        assert lo - 1e-9 <= q <= hi + 1e-9, (seed, t, s, a)
                        nxt.update(
                            s2 for s2, _ in enumerate_successors(m, s, a))
                frontier = nxt


class TestPolicyExtraction:
    def test_single_action_instance_maps_the_only_choice(self):
        m = random_instance(5, max_actions=2)
        # restrict to one action per state by rebuilding kept transitions
        report = core_solve(m, build_crgs(m))
        policy = report.policy
        assert (0, tuple(m.initial)) in policy.entries

    def test_policy_value_matches_report_on_batch(self):
        for seed in range(100):
            m = random_instance(seed, n_agents=2, horizon=3,
                                feature_scoped=(seed % 4 == 0))
            report = core_solve(m, build_crgs(m))
            assert abs(evaluate_policy(m, report.policy)
                       - report.value) <= 1e-9, seed

    def test_tie_breaks_prefer_lexicographic_action(self):
        m = random_instance(6)
        for rf in m.rewards:
            rf.table.clear()
        report = core_solve(m, build_crgs(m))
        assert report.value == 0.0
        for (t, s), action in report.policy.entries.items():
            smallest = tuple(min(m.locals[i].available(s[i]))
                             for i in m.agents)
            assert action == smallest
