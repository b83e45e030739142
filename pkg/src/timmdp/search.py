"""Branch-and-bound policy search over execution sequences.

The solver walks the joint search space depth first. At every node it splits
the active agents into conditionally independent components (agents linked
only by reward functions that can no longer fire are solved separately and
their values added), computes probability-weighted return bounds per joint
action from the conditional return graphs, visits actions in order of
falling upper bound and skips any action whose upper bound drops below the
best lower bound seen so far. With pruning disabled the same walk evaluates
every available action, which isolates what the graph structure alone buys.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

from .crg import ConditionalReturnGraph, assigned_reward, resolve_arc
from .model import (
    JointAction,
    JointState,
    TiMmdpInstance,
    enumerate_successors,
    reward_value_local,
)


class TimeBudgetExceeded(Exception):
    pass


class IncompleteSolveError(Exception):
    pass


@dataclass
class SearchConfig:
    pruning: bool = True          # False gives the plain graph-backed search
    memoization: bool = False
    tolerance: float = 1e-9
    time_budget: float | None = None  # seconds, checked at recursion entry
    # Decide independence by walking the coupled agents' exact joint future
    # instead of the cheap graph-reachability test. Both depend only on the
    # current states; the exhaustive one decouples earlier but costs more.
    exhaustive_cri: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SearchStats:
    joint_actions_evaluated: int = 0
    nodes_pruned: int = 0
    decouple_events: int = 0
    max_component_size: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "joint_actions_evaluated": self.joint_actions_evaluated,
            "nodes_pruned": self.nodes_pruned,
            "decouple_events": self.decouple_events,
            "max_component_size": self.max_component_size,
        }


@dataclass
class Policy:
    """Joint decisions, assembled from per-component argmax choices.

    ``entries`` maps (stage, joint state) to the full joint action and is
    closed under its own reachable states from the initial one.
    ``components`` keeps the raw per-component decisions for inspection.
    """

    n_agents: int
    entries: dict[tuple[int, JointState], JointAction]
    components: dict[tuple[int, tuple[int, ...], tuple[int, ...]],
                     tuple[int, ...]] = field(default_factory=dict)

    def action(self, t: int, s: JointState) -> JointAction:
        try:
            return self.entries[(t, tuple(s))]
        except KeyError:
            raise KeyError(f"policy undefined at stage {t}, state {tuple(s)}") \
                from None


@dataclass
class SolveReport:
    value: float | None
    policy: Policy | None
    stats: SearchStats
    wall_time: float
    status: str                    # "solved" or "timeout"
    algorithm: str
    config: SearchConfig | None = None
    trace: dict | None = None
    instance: TiMmdpInstance | None = None
    crgs: Mapping[int, ConditionalReturnGraph] | None = None


class _Search:
    def __init__(self, m: TiMmdpInstance,
                 crgs: Mapping[int, ConditionalReturnGraph],
                 cfg: SearchConfig):
        self.m = m
        self.crgs = crgs
        self.cfg = cfg
        self.index = next(iter(crgs.values())).index
        self.stats = SearchStats()
        self.decisions: dict = {}
        self.memo: dict = {}
        self.owner_of: dict[int, int] = {}
        for i, g in crgs.items():
            for k in g.functions:
                self.owner_of[k] = i
        self.interactions = [k for k, rf in enumerate(m.rewards)
                             if rf.is_interaction]
        self.deadline = (time.monotonic() + cfg.time_budget
                         if cfg.time_budget is not None else None)
        self._fires_cache: dict = {}

    def _rf_future_fires(self, k: int, t: int,
                         states: Mapping[int, int]) -> bool:
        """Exact: can function k still fire given its scope agents' states?
        Transition independence lets the walk stay inside the scope."""
        rf = self.m.rewards[k]
        start = tuple(states[j] for j in rf.scope)
        key = (k, t, start)
        if key in self._fires_cache:
            return self._fires_cache[key]
        fires = False
        frontier = {start}
        for x in range(t, self.m.horizon):
            if fires:
                break
            nxt = set()
            for combo in frontier:
                per_agent = []
                for pos, j in enumerate(rf.scope):
                    local = self.m.locals[j]
                    outs = []
                    for a in local.available(combo[pos]):
                        outs.extend((a, dst)
                                    for dst, _ in local.outcomes(combo[pos], a))
                    per_agent.append(outs)
                for moves in product(*per_agent):
                    acts = [a for a, _ in moves]
                    dsts = [d for _, d in moves]
                    if reward_value_local(self.m, rf, combo, acts, dsts) != 0.0:
                        fires = True
                        break
                    nxt.add(tuple(dsts))
                if fires:
                    break
            frontier = nxt
        self._fires_cache[key] = fires
        return fires

    # -- decoupling ---------------------------------------------------------

    def components(self, t: int, agents: Sequence[int],
                   states: Mapping[int, int]) -> list[tuple[int, ...]]:
        """Connected components of the still-interacting relation.

        A function links its scope only while a nonzero arc of it remains
        reachable in its owner's graph and no member's local state already
        rules it out. Both tests depend on the current states alone, so the
        partition can only refine along a branch.
        """
        agent_set = set(agents)
        parent = {i: i for i in agents}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for k in self.interactions:
            scope = self.m.rewards[k].scope
            if not set(scope) <= agent_set:
                continue
            if self.cfg.exhaustive_cri:
                if not self._rf_future_fires(k, t, states):
                    continue
            else:
                owner = self.owner_of[k]
                g = self.crgs[owner]
                if k not in g.nodes[(t, states[owner])].live_interactions:
                    continue
                if any(self.index.interaction_dead(j, states[j], t, k)
                       for j in scope):
                    continue
            root = find(scope[0])
            for j in scope[1:]:
                parent[find(j)] = root
        groups: dict[int, list[int]] = {}
        for i in agents:
            groups.setdefault(find(i), []).append(i)
        return sorted(tuple(sorted(g)) for g in groups.values())

    # -- expansion ----------------------------------------------------------

    def _expand(self, t: int, agents: tuple[int, ...],
                states: tuple[int, ...], action: tuple[int, ...]):
        """Successor rows for one component action.

        Each row is (next states, probability, step reward, upper, lower);
        the bounds already include the step reward, matching the weighted
        per-transition bound the action-level pruning sums up.
        """
        covered = frozenset(agents)
        per_agent = []
        for i, s, a in zip(agents, states, action):
            outs = sorted(self.crgs[i].outcomes(s, a))
            per_agent.append([(i, s, a, dst, p) for dst, p in outs])
        rows = []
        for combo in product(*per_agent):
            context = {i: (s, a, dst) for i, s, a, dst, _ in combo}
            p = 1.0
            reward_parts, up, dn = [], 0.0, 0.0
            for i, s, a, dst, q in combo:
                p *= q
                g = self.crgs[i]
                arc = resolve_arc(g, t, (s, a, dst), context, strict=False)
                r_i = assigned_reward(g, arc, covered)
                reward_parts.append(r_i)
                child = g.nodes[(t + 1, dst)]
                up += r_i + child.upper
                dn += r_i + child.lower
            nxt = tuple(context[i][2] for i in agents)
            rows.append((nxt, p, math.fsum(reward_parts), up, dn))
        return rows

    # -- recursion ----------------------------------------------------------

    def solve(self, t: int, agents: tuple[int, ...],
              states: tuple[int, ...]) -> float:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise TimeBudgetExceeded
        if t == self.m.horizon:
            return 0.0
        state_of = dict(zip(agents, states))
        comps = self.components(t, agents, state_of)
        if len(comps) > 1:
            self.stats.decouple_events += 1
        values = []
        for comp in comps:
            self.stats.max_component_size = max(self.stats.max_component_size,
                                                len(comp))
            comp_states = tuple(state_of[i] for i in comp)
            if self.cfg.memoization:
                key = (t, comp, comp_states)
                if key in self.memo:
                    values.append(self.memo[key])
                    continue
            v = self._solve_component(t, comp, comp_states)
            if self.cfg.memoization:
                self.memo[(t, comp, comp_states)] = v
            values.append(v)
        return math.fsum(values)

    def _solve_component(self, t: int, agents: tuple[int, ...],
                         states: tuple[int, ...]) -> float:
        actions = list(product(*(
            self.crgs[i].nodes[(t, s)].kept_actions
            for i, s in zip(agents, states))))
        expansions = {a: self._expand(t, agents, states, a) for a in actions}
        bounds = {}
        for a, rows in expansions.items():
            bounds[a] = (math.fsum(p * up for _, p, _, up, _ in rows),
                         math.fsum(p * dn for _, p, _, _, dn in rows))
        lower_max = max(dn for _, dn in bounds.values())
        best_value, best_action = None, None
        for a in sorted(actions, key=lambda a: (-bounds[a][0], a)):
            if (self.cfg.pruning
                    and bounds[a][0] < lower_max - self.cfg.tolerance):
                self.stats.nodes_pruned += 1
                continue
            value = math.fsum(
                p * (r + self.solve(t + 1, agents, nxt))
                for nxt, p, r, _, _ in expansions[a])
            self.stats.joint_actions_evaluated += 1
            if (best_value is None or value > best_value
                    or (value == best_value and a < best_action)):
                best_value, best_action = value, a
            lower_max = max(lower_max, value)
        self.decisions[(t, agents, states)] = best_action
        return best_value if best_value is not None else 0.0


def core_solve(m: TiMmdpInstance,
               crgs: Mapping[int, ConditionalReturnGraph],
               cfg: SearchConfig | None = None) -> SolveReport:
    """Solve the instance exactly; see the module docstring for the walk.

    Returns the optimal joint value, the extracted policy and search
    statistics. On a blown time budget the report carries no value and is
    flagged ``timeout``.
    """
    cfg = cfg or SearchConfig()
    search = _Search(m, crgs, cfg)
    agents = tuple(m.agents)
    start = time.perf_counter()
    try:
        value = search.solve(0, agents, tuple(m.initial))
        status = "solved"
    except TimeBudgetExceeded:
        value, status = None, "timeout"
    wall = time.perf_counter() - start
    algorithm = "core" if cfg.pruning else "crg-ps"
    report = SolveReport(value=value, policy=None, stats=search.stats,
                         wall_time=wall, status=status, algorithm=algorithm,
                         config=cfg, trace=search.decisions, instance=m,
                         crgs=crgs)
    if status == "solved":
        report.policy = extract_policy(report)
    return report


def crg_ps_solve(m: TiMmdpInstance,
                 crgs: Mapping[int, ConditionalReturnGraph],
                 cfg: SearchConfig | None = None) -> SolveReport:
    """The same search with bound pruning switched off."""
    base = cfg or SearchConfig()
    return core_solve(m, crgs, SearchConfig(
        pruning=False, memoization=base.memoization,
        tolerance=base.tolerance, time_budget=base.time_budget))


def joint_action_bounds(m: TiMmdpInstance,
                        crgs: Mapping[int, ConditionalReturnGraph],
                        t: int, agents: Sequence[int],
                        states: Sequence[int],
                        action: Sequence[int]) -> tuple[float, float]:
    """Probability-weighted (lower, upper) return bounds for one joint action
    of the given agent subset."""
    search = _Search(m, crgs, SearchConfig())
    rows = search._expand(t, tuple(agents), tuple(states), tuple(action))
    upper = math.fsum(p * up for _, p, _, up, _ in rows)
    lower = math.fsum(p * dn for _, p, _, _, dn in rows)
    return lower, upper


def independent_components(m: TiMmdpInstance,
                           crgs: Mapping[int, ConditionalReturnGraph],
                           t: int, s: JointState) -> list[tuple[int, ...]]:
    """Conditionally independent agent subsets at one joint state."""
    search = _Search(m, crgs, SearchConfig())
    agents = tuple(m.agents)
    return search.components(t, agents, dict(zip(agents, s)))


def extract_policy(report: SolveReport) -> Policy:
    """Compose the recorded per-component argmax decisions into a joint
    policy defined on every state it can reach from the start."""
    if report.status != "solved" or report.trace is None:
        raise IncompleteSolveError("cannot extract a policy from an "
                                   "incomplete solve")
    m = report.instance
    search = _Search(m, report.crgs, report.config or SearchConfig())
    entries: dict[tuple[int, JointState], JointAction] = {}
    components: dict = {}
    stack = [(0, tuple(m.initial))]
    seen = set()
    while stack:
        t, s = stack.pop()
        if t >= m.horizon or (t, s) in seen:
            continue
        seen.add((t, s))
        state_of = dict(zip(m.agents, s))
        action = [None] * m.n_agents
        for comp in search.components(t, tuple(m.agents), state_of):
            comp_states = tuple(state_of[i] for i in comp)
            decision = report.trace[(t, comp, comp_states)]
            components[(t, comp, comp_states)] = decision
            for i, a in zip(comp, decision):
                action[i] = a
        joint = tuple(action)
        entries[(t, s)] = joint
        for nxt, _ in enumerate_successors(m, s, joint):
            stack.append((t + 1, nxt))
    return Policy(n_agents=m.n_agents, entries=entries, components=components)
