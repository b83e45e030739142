"""Conditional return graphs: compact per-agent storage of assigned rewards.

Each agent owns a disjoint share of the reward functions. Its graph is a
layered DAG over its reachable local states; every local transition carries a
small tree that discriminates exactly those actions and state moves of other
agents that can change the assigned rewards. Everything else is grouped
behind an "any other action" wildcard arc and an "any other state pair"
no-influence arc, both of which pin the interaction contribution to zero.
Leaf arcs enter the next layer labeled with the fully resolved reward, which
is what makes recursive return bounds and reward lookups cheap during search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .model import (
    RewardFunction,
    TiMmdpInstance,
    Violation,
    project_state,
    reachable_local_states,
    reward_value_local,
)

WILDCARD = "*"
NO_INFLUENCE = "⊥"

LocalTransition = tuple[int, int, int]  # (state, action, next state)


class CrgError(Exception):
    """Internal inconsistency: a lookup path that the graph cannot resolve."""


# ---------------------------------------------------------------------------
# Reward partitioning


@dataclass
class RewardPartition:
    """Disjoint assignment of reward-function indices to agents."""

    assignment: dict[int, list[int]]

    def functions(self, agent: int) -> list[int]:
        return self.assignment.get(agent, [])

    def owner(self, fn_index: int) -> int:
        for agent, fns in self.assignment.items():
            if fn_index in fns:
                return agent
        raise KeyError(fn_index)


def partition_rewards(m: TiMmdpInstance,
                      strategy: str | Mapping[int, Sequence[int]] = "balanced",
                      ) -> RewardPartition:
    """Split the reward set over agents.

    ``"balanced"`` pins each agent's own local functions to itself and then
    greedily hands every interaction function to the in-scope agent holding
    the fewest functions so far (ties to the lowest agent id). Passing a
    mapping agent -> function indices uses that fixed assignment after
    checking scope membership, disjointness and completeness.
    """
    if isinstance(strategy, str):
        if strategy != "balanced":
            raise ValueError(f"unknown partition strategy {strategy!r}")
        assignment: dict[int, list[int]] = {i: [] for i in m.agents}
        interactions = []
        for k, rf in enumerate(m.rewards):
            if rf.is_interaction:
                interactions.append(k)
            else:
                assignment[rf.scope[0]].append(k)
        for k in interactions:
            scope = m.rewards[k].scope
            best = min(scope, key=lambda j: (len(assignment[j]), j))
            assignment[best].append(k)
        return RewardPartition(assignment)

    assignment = {i: list(strategy.get(i, [])) for i in m.agents}
    seen: set[int] = set()
    for agent, fns in assignment.items():
        for k in fns:
            if not 0 <= k < len(m.rewards):
                raise ValueError(f"assignment names unknown reward {k}")
            if agent not in m.rewards[k].scope:
                raise ValueError(
                    f"reward {k} (scope {m.rewards[k].scope}) assigned to "
                    f"agent {agent} outside its scope")
            if k in seen:
                raise ValueError(f"reward {k} assigned twice")
            seen.add(k)
    missing = set(range(len(m.rewards))) - seen
    if missing:
        raise ValueError(f"assignment misses rewards {sorted(missing)}")
    return RewardPartition(assignment)


# ---------------------------------------------------------------------------
# Instance-level indices shared by CRG construction and the search


class InstanceIndex:
    """Caches of stage reachability, availability and reward-entry matching."""

    def __init__(self, m: TiMmdpInstance):
        self.m = m
        self.stage_reach = [reachable_local_states(m, i) for i in m.agents]
        # Stage-free availability: every (s, a, s') with positive probability.
        self.available: list[list[LocalTransition]] = []
        self.by_action: list[dict[int, list[tuple[int, int]]]] = []
        for i in m.agents:
            trs = []
            per_action: dict[int, list[tuple[int, int]]] = {}
            for (s, a), outs in sorted(m.locals[i].transitions.items()):
                for dst, _ in sorted(outs):
                    trs.append((s, a, dst))
                    per_action.setdefault(a, []).append((s, dst))
            self.available.append(trs)
            self.by_action.append(per_action)
        self._reach_from: dict[tuple[int, int, int], list[set[int]]] = {}
        self._entry_sources: dict[tuple[int, tuple], tuple[frozenset, ...]] = {}
        self._dead: dict[tuple[int, int, int, int], bool] = {}

    def reach_from(self, agent: int, state: int, stage: int) -> list[set[int]]:
        key = (agent, state, stage)
        if key not in self._reach_from:
            self._reach_from[key] = reachable_local_states(
                self.m, agent, start=state, from_stage=stage)
        return self._reach_from[key]

    def part_matches(self, rf: RewardFunction, agent: int,
                     tr: LocalTransition, part: tuple) -> bool:
        sp, ap, np_ = part
        if tr[1] != ap:
            return False
        feats = rf.features_read(agent)
        if feats is None:
            return tr[0] == sp and tr[2] == np_
        return (project_state(self.m, agent, tr[0], feats) == sp
                and project_state(self.m, agent, tr[2], feats) == np_)

    def entry_sources(self, rf_index: int, key: tuple) -> tuple[frozenset, ...]:
        """Per scope position, source states of available transitions matching
        the entry's slice of this table key."""
        cache_key = (rf_index, key)
        if cache_key in self._entry_sources:
            return self._entry_sources[cache_key]
        rf = self.m.rewards[rf_index]
        states, actions, nexts = key
        out = []
        for pos, agent in enumerate(rf.scope):
            part = (states[pos], actions[pos], nexts[pos])
            out.append(frozenset(
                tr[0] for tr in self.available[agent]
                if self.part_matches(rf, agent, tr, part)))
        result = tuple(out)
        self._entry_sources[cache_key] = result
        return result

    def interaction_dead(self, agent: int, state: int, stage: int,
                         rf_index: int) -> bool:
        """True when, from this local state onward, the interaction function
        can never yield a nonzero value no matter what any agent does.

        Other agents are quantified over everything reachable from their
        initial states at matching stages, so the answer holds for every
        joint history putting this agent here - it depends on the local
        state alone.
        """
        key = (agent, state, stage, rf_index)
        if key in self._dead:
            return self._dead[key]
        rf = self.m.rewards[rf_index]
        dead = True
        if rf.default != 0.0:
            dead = False
        else:
            own = self.reach_from(agent, state, stage)
            pos_own = rf.scope.index(agent)
            for entry_key, value in rf.table.items():
                if value == 0.0:
                    continue
                sources = self.entry_sources(rf_index, entry_key)
                if any(not src for src in sources):
                    continue
                for x in range(stage, self.m.horizon):
                    if not (own[x] & sources[pos_own]):
                        continue
                    ok = True
                    for pos, other in enumerate(rf.scope):
                        if other == agent:
                            continue
                        if not (self.stage_reach[other][x] & sources[pos]):
                            ok = False
                            break
                    if ok:
                        dead = False
                        break
                if not dead:
                    break
        self._dead[key] = dead
        return dead


# ---------------------------------------------------------------------------
# Dependent actions and transition influence


def _matching_owner_entries(index: InstanceIndex, fns: Sequence[int],
                            owner: int, tr_i: LocalTransition,
                            ) -> Iterator[tuple[int, tuple, float]]:
    """Nonzero-beyond-default table entries whose owner slice matches tr_i
    and whose every slice is realizable by some available transition."""
    m = index.m
    for k in fns:
        rf = m.rewards[k]
        if owner not in rf.scope or not rf.is_interaction:
            continue
        pos_own = rf.scope.index(owner)
        for key, value in rf.table.items():
            if value == rf.default:
                continue
            states, actions, nexts = key
            part = (states[pos_own], actions[pos_own], nexts[pos_own])
            if not index.part_matches(rf, owner, tr_i, part):
                continue
            if any(not src for src in index.entry_sources(k, key)):
                continue
            yield k, key, value


def dependent_actions(m: TiMmdpInstance, partition_i: Sequence[int],
                      owner: int, tr_i: LocalTransition, j: int,
                      index: InstanceIndex | None = None) -> set[int]:
    """Actions of agent j that can change some reward assigned here, given
    the owner performs tr_i.

    An action qualifies when it appears in an available joint transition
    containing tr_i whose reward differs from the function's default, and
    some other action of j would produce a different value there. Actions
    outside the set provably cannot move any assigned reward.
    """
    index = index or InstanceIndex(m)
    deps: set[int] = set()
    n_actions = len(m.locals[j].actions)
    for k, key, value in _matching_owner_entries(index, partition_i, owner, tr_i):
        rf = m.rewards[k]
        if j not in rf.scope:
            continue
        pos_j = rf.scope.index(j)
        a_j = key[1][pos_j]
        if a_j in deps:
            continue
        for b in range(n_actions):
            if b == a_j:
                continue
            swapped = (key[0],
                       key[1][:pos_j] + (b,) + key[1][pos_j + 1:],
                       key[2])
            if rf.table.get(swapped, rf.default) != value:
                deps.add(a_j)
                break
    return deps


def influence_set(m: TiMmdpInstance, partition_i: Sequence[int],
                  owner: int, tr_i: LocalTransition,
                  j: int, action: int | str,
                  index: InstanceIndex | None = None,
                  ) -> set[tuple[int, int]]:
    """State pairs of agent j that can change some assigned reward when the
    owner performs tr_i and j plays ``action`` (or any non-dependent action
    for the wildcard).

    A pair qualifies when it occurs in an available joint transition
    containing tr_i with nonzero-beyond-default reward and some other pair
    of j's states would produce a different value.
    """
    index = index or InstanceIndex(m)
    if action == WILDCARD:
        deps = dependent_actions(m, partition_i, owner, tr_i, j, index)
        pairs: set[tuple[int, int]] = set()
        for a in range(len(m.locals[j].actions)):
            if a not in deps:
                pairs |= influence_set(m, partition_i, owner, tr_i, j, a, index)
        return pairs

    pairs = set()
    n_states = len(m.locals[j].states)
    for k, key, value in _matching_owner_entries(index, partition_i, owner, tr_i):
        rf = m.rewards[k]
        if j not in rf.scope:
            continue
        pos_j = rf.scope.index(j)
        if key[1][pos_j] != action:
            continue
        part = (key[0][pos_j], action, key[2][pos_j])
        concrete = [
            (s, dst) for (s, dst) in index.by_action[j].get(action, [])
            if index.part_matches(rf, j, (s, action, dst), part)]
        feats = rf.features_read(j)
        for s_j, n_j in concrete:
            if (s_j, n_j) in pairs:
                continue
            for s2 in range(n_states):
                for n2 in range(n_states):
                    if (s2, n2) == (s_j, n_j):
                        continue
                    if feats is None:
                        sp2, np2 = s2, n2
                    else:
                        sp2 = project_state(m, j, s2, feats)
                        np2 = project_state(m, j, n2, feats)
                    swapped = (key[0][:pos_j] + (sp2,) + key[0][pos_j + 1:],
                               key[1],
                               key[2][:pos_j] + (np2,) + key[2][pos_j + 1:])
                    if rf.table.get(swapped, rf.default) != value:
                        pairs.add((s_j, n_j))
                        break
                else:
                    continue
                break
    return pairs


# ---------------------------------------------------------------------------
# Graph structure


@dataclass
class CrgArc:
    """One fully resolved leaf arc of a transition tree."""

    target: int
    labels: tuple
    components: tuple[float, ...]  # per assigned function, in g.functions order
    reward: float
    nonzero_interactions: frozenset[int]


@dataclass
class TransitionTree:
    """Action tree plus influence trees for one local transition."""

    transition: LocalTransition
    skeleton: tuple[tuple[str, int], ...]  # ("act"|"inf", agent) per level
    act_labels: dict[int, tuple]           # agent -> usable action labels
    deps: dict[int, frozenset[int]]
    inf_labels: dict[tuple[int, object], tuple]  # (agent, act label) -> labels
    arcs: dict[tuple, CrgArc]

    @property
    def degenerate(self) -> bool:
        return not self.skeleton

    def internal_nodes(self) -> set[tuple]:
        """Distinct label prefixes, root included; empty when degenerate."""
        if self.degenerate:
            return set()
        nodes = set()
        for labels in self.arcs:
            for cut in range(len(labels)):
                nodes.add(labels[:cut])
        return nodes


@dataclass
class CrgNode:
    state: int
    layer: int
    kept_actions: tuple[int, ...]
    locally_cri: bool
    represented: bool = True
    upper: float = 0.0
    lower: float = 0.0
    live_interactions: frozenset[int] = frozenset()


@dataclass
class ConditionalReturnGraph:
    owner: int
    horizon: int
    functions: tuple[int, ...]
    scope: tuple[int, ...]
    feature_level: dict[int, tuple[str, ...] | None]
    nodes: dict[tuple[int, int], CrgNode]
    trees: dict[LocalTransition, TransitionTree]
    instance: TiMmdpInstance
    index: InstanceIndex
    cri_pruning: bool

    def node(self, t: int, state: int) -> CrgNode:
        return self.nodes[(t, state)]

    def outcomes(self, state: int, action: int) -> tuple[tuple[int, float], ...]:
        return self.instance.locals[self.owner].outcomes(state, action)

    def tree(self, s: int, a: int, s_next: int) -> TransitionTree:
        return self.trees[(s, a, s_next)]

    def arcs_from(self, t: int, state: int,
                  kept_only: bool = True) -> Iterator[tuple[int, CrgArc]]:
        """Yield (action, arc) over this node's outgoing leaf arcs."""
        node = self.nodes[(t, state)]
        actions = node.kept_actions if kept_only else tuple(
            self.instance.locals[self.owner].available(state))
        for a in actions:
            for dst, _ in self.outcomes(state, a):
                yield from ((a, arc)
                            for arc in self.trees[(state, a, dst)].arcs.values())


def _interaction_indices(m: TiMmdpInstance) -> list[int]:
    return [k for k, rf in enumerate(m.rewards) if rf.is_interaction]


def _resolve_with_completion(index: InstanceIndex, g_functions: Sequence[int],
                             owner: int, tr_i: LocalTransition,
                             tree_meta: dict, labels: tuple,
                             skeleton: tuple) -> tuple[tuple[float, ...], bool]:
    """Per-function values along one label path, via an arbitrary available
    completion consistent with the path. Returns (values, realizable)."""
    m = index.m
    act_of: dict[int, object] = {}
    pair_of: dict[int, object] = {}
    for (kind, agent), label in zip(skeleton, labels):
        if kind == "act":
            act_of[agent] = label
        else:
            pair_of[agent] = label

    completions: dict[int, LocalTransition] = {}
    for agent in tree_meta["others"]:
        a_lab = act_of.get(agent, WILDCARD)
        p_lab = pair_of.get(agent, NO_INFLUENCE)
        deps = tree_meta["deps"].get(agent, frozenset())
        feats = tree_meta["feature_level"].get(agent)
        if a_lab == WILDCARD:
            candidates = [tr for tr in index.available[agent] if tr[1] not in deps]
        else:
            candidates = [tr for tr in index.available[agent] if tr[1] == a_lab]
        known = tree_meta["inf_labels"].get((agent, a_lab), ())
        chosen = None
        for tr in candidates:
            pair = ((tr[0], tr[2]) if feats is None else
                    (project_state(m, agent, tr[0], feats),
                     project_state(m, agent, tr[2], feats)))
            if p_lab == NO_INFLUENCE:
                if pair not in known:
                    chosen = tr
                    break
            elif pair == p_lab:
                chosen = tr
                break
        if chosen is None:
            return (), False
        completions[agent] = chosen

    values = []
    for k in g_functions:
        rf = m.rewards[k]
        states, actions, nexts = [], [], []
        for agent in rf.scope:
            tr = tr_i if agent == owner else completions[agent]
            states.append(tr[0])
            actions.append(tr[1])
            nexts.append(tr[2])
        values.append(reward_value_local(m, rf, states, actions, nexts))
    return tuple(values), True


def _build_tree(m: TiMmdpInstance, index: InstanceIndex, owner: int,
                fns: Sequence[int], tr_i: LocalTransition,
                scope_others: Sequence[int],
                feature_level: dict) -> TransitionTree:
    deps: dict[int, frozenset[int]] = {}
    act_labels: dict[int, tuple] = {}
    inf_labels: dict[tuple[int, object], tuple] = {}
    has_bot: dict[tuple[int, object], bool] = {}

    def project_pairs(agent: int, pairs: set[tuple[int, int]]) -> set:
        feats = feature_level.get(agent)
        if feats is None:
            return pairs
        return {(project_state(m, agent, s, feats),
                 project_state(m, agent, n, feats)) for s, n in pairs}

    def positive_pairs(agent: int, actions: Sequence[int]) -> set:
        pairs = set()
        for a in actions:
            pairs.update(index.by_action[agent].get(a, []))
        return project_pairs(agent, pairs)

    for j in scope_others:
        dep_j = frozenset(dependent_actions(m, fns, owner, tr_i, j, index))
        deps[j] = dep_j
        n_actions = len(m.locals[j].actions)
        nondep = [a for a in range(n_actions) if a not in dep_j]
        nondep_live = [a for a in nondep if index.by_action[j].get(a)]
        labels: list = sorted(dep_j)
        if dep_j and nondep_live:
            labels.append(WILDCARD)
        if dep_j:
            act_labels[j] = tuple(labels)
        # Influence label sets, per action context actually present.
        contexts: list = list(sorted(dep_j))
        if not dep_j or nondep_live:
            contexts.append(WILDCARD)
        for ctx in contexts:
            raw = influence_set(m, fns, owner, tr_i, j, ctx, index)
            lab = project_pairs(j, raw)
            acts = nondep_live if ctx == WILDCARD else [ctx]
            uncovered = positive_pairs(j, acts) - lab
            inf_labels[(j, ctx)] = tuple(sorted(lab, key=repr))
            has_bot[(j, ctx)] = bool(uncovered)

    skeleton: list[tuple[str, int]] = []
    for j in scope_others:
        if deps[j]:
            skeleton.append(("act", j))
    for j in scope_others:
        if deps[j] or inf_labels.get((j, WILDCARD)):
            skeleton.append(("inf", j))
    skeleton_t = tuple(skeleton)

    meta = {"others": list(scope_others), "deps": deps,
            "inf_labels": inf_labels, "feature_level": feature_level}

    # Enumerate label combinations level by level.
    paths: list[tuple] = [()]
    act_agents = [j for kind, j in skeleton_t if kind == "act"]
    for j in act_agents:
        paths = [p + (lab,) for p in paths for lab in act_labels[j]]
    inf_agents = [j for kind, j in skeleton_t if kind == "inf"]
    pos = {a: idx for idx, a in enumerate(act_agents)}
    for j in inf_agents:
        new_paths = []
        for p in paths:
            ctx = p[pos[j]] if j in pos else WILDCARD
            options: list = list(inf_labels[(j, ctx)])
            if has_bot[(j, ctx)]:
                options.append(NO_INFLUENCE)
            new_paths.extend(p + (lab,) for lab in options)
        paths = new_paths

    arcs: dict[tuple, CrgArc] = {}
    interactions = {k for k in fns if m.rewards[k].is_interaction}
    for labels in paths:
        values, ok = _resolve_with_completion(
            index, fns, owner, tr_i, meta, labels, skeleton_t)
        if not ok:
            continue
        nonzero = frozenset(
            k for k, v in zip(fns, values) if v != 0.0 and k in interactions)
        arcs[labels] = CrgArc(target=tr_i[2], labels=labels,
                              components=values, reward=math.fsum(values),
                              nonzero_interactions=nonzero)
    if not arcs:
        raise CrgError(f"transition {tr_i} of agent {owner} produced no arcs")
    return TransitionTree(transition=tr_i, skeleton=skeleton_t,
                          act_labels=act_labels, deps=deps,
                          inf_labels=inf_labels, arcs=arcs)


def _local_optimal_actions(m: TiMmdpInstance, index: InstanceIndex,
                           owner: int, fns: Sequence[int]) -> dict[tuple[int, int], int]:
    """Backward induction over the owner's local MDP under its own local
    reward functions only; ties go to the lowest action id."""
    from .model import reward_value_local
    local_fns = [m.rewards[k] for k in fns if not m.rewards[k].is_interaction]
    local = m.locals[owner]
    values: dict[tuple[int, int], float] = {}
    choice: dict[tuple[int, int], int] = {}
    all_states = range(len(local.states))
    for t in range(m.horizon, -1, -1):
        for s in all_states:
            if t == m.horizon:
                values[(t, s)] = 0.0
                continue
            best, best_a = None, None
            for a in local.available(s):
                q = math.fsum(
                    p * (math.fsum(reward_value_local(m, rf, [s], [a], [dst])
                                   for rf in local_fns)
                         + values[(t + 1, dst)])
                    for dst, p in local.outcomes(s, a))
                if best is None or q > best:
                    best, best_a = q, a
            values[(t, s)] = best if best is not None else 0.0
            if best_a is not None:
                choice[(t, s)] = best_a
    return choice


def build_crg(m: TiMmdpInstance, partition: RewardPartition, i: int,
              cri_pruning: bool = True,
              index: InstanceIndex | None = None) -> ConditionalReturnGraph:
    """Construct agent i's conditional return graph for its assigned rewards.

    Other agents appear in the trees in ascending id order. Feature-level
    influence arcs are used for agent j whenever every assigned function
    reading j declares a feature scope for it. States from which no future
    interaction involving the owner can fire are flagged; with
    ``cri_pruning`` their non-optimal local branches are dropped from the
    represented graph (they remain resolvable for lookups). Bounds are
    annotated before returning.
    """
    assigned_everywhere = {k for fns in partition.assignment.values() for k in fns}
    for k, rf in enumerate(m.rewards):
        if i in rf.scope and k not in assigned_everywhere:
            raise ValueError(f"partition does not cover reward {k} "
                             f"whose scope contains agent {i}")
    index = index or InstanceIndex(m)
    fns = tuple(partition.functions(i))
    scope = sorted({j for k in fns for j in m.rewards[k].scope} | {i})
    others = [j for j in scope if j != i]

    feature_level: dict[int, tuple[str, ...] | None] = {}
    for j in others:
        reading = [m.rewards[k] for k in fns if j in m.rewards[k].scope]
        declared = [rf.features_read(j) for rf in reading]
        if reading and all(d is not None for d in declared):
            merged: list[str] = []
            for d in declared:
                for f in d:
                    if f not in merged:
                        merged.append(f)
            feature_level[j] = tuple(merged)
        else:
            feature_level[j] = None

    # Interaction functions anywhere in the instance that involve the owner
    # drive the independence flag (not only the assigned ones).
    touching = [k for k, rf in enumerate(m.rewards)
                if rf.is_interaction and i in rf.scope]

    local = m.locals[i]
    reach = index.stage_reach[i]
    local_opt = _local_optimal_actions(m, index, i, fns)

    nodes: dict[tuple[int, int], CrgNode] = {}
    trees: dict[LocalTransition, TransitionTree] = {}
    for t in range(m.horizon + 1):
        for s in sorted(reach[t]):
            cri = all(index.interaction_dead(i, s, t, k) for k in touching)
            avail = tuple(local.available(s)) if t < m.horizon else ()
            kept = avail
            if cri and cri_pruning and avail:
                kept = (local_opt[(t, s)],)
            nodes[(t, s)] = CrgNode(state=s, layer=t, kept_actions=kept,
                                    locally_cri=cri)
            for a in avail:
                for dst, _ in local.outcomes(s, a):
                    tr = (s, a, dst)
                    if tr not in trees:
                        trees[tr] = _build_tree(m, index, i, fns, tr,
                                                others, feature_level)

    g = ConditionalReturnGraph(owner=i, horizon=m.horizon, functions=fns,
                               scope=tuple(scope), feature_level=feature_level,
                               nodes=nodes, trees=trees, instance=m,
                               index=index, cri_pruning=cri_pruning)
    _mark_represented(g)
    annotate_bounds(g)
    return g


def build_crgs(m: TiMmdpInstance, partition: RewardPartition | None = None,
               cri_pruning: bool = True) -> dict[int, ConditionalReturnGraph]:
    """All agents' graphs over one shared instance index."""
    partition = partition or partition_rewards(m)
    index = InstanceIndex(m)
    return {i: build_crg(m, partition, i, cri_pruning=cri_pruning, index=index)
            for i in m.agents}


def _mark_represented(g: ConditionalReturnGraph) -> None:
    for node in g.nodes.values():
        node.represented = False
    frontier = {g.instance.initial[g.owner]}
    g.nodes[(0, next(iter(frontier)))].represented = True
    for t in range(g.horizon):
        nxt: set[int] = set()
        for s in frontier:
            node = g.nodes[(t, s)]
            node.represented = True
            for a in node.kept_actions:
                nxt.update(dst for dst, _ in g.outcomes(s, a))
        for s in nxt:
            g.nodes[(t + 1, s)].represented = True
        frontier = nxt


def annotate_bounds(g: ConditionalReturnGraph) -> ConditionalReturnGraph:
    """One backward pass filling per-node return bounds and live functions.

    The upper bound at a node is the best assigned return obtainable along
    represented arcs over *any* behavior of the other agents; the lower
    bound is the worst. Layer-h nodes carry zero.
    """
    for (t, s), node in sorted(g.nodes.items(), reverse=True):
        if t == g.horizon:
            node.upper = node.lower = 0.0
            node.live_interactions = frozenset()
            continue
        hi = lo = None
        live: set[int] = set()
        for a in node.kept_actions:
            for dst, _ in g.outcomes(s, a):
                child = g.nodes[(t + 1, dst)]
                for arc in g.trees[(s, a, dst)].arcs.values():
                    up = arc.reward + child.upper
                    dn = arc.reward + child.lower
                    hi = up if hi is None else max(hi, up)
                    lo = dn if lo is None else min(lo, dn)
                    live |= arc.nonzero_interactions
                live |= child.live_interactions
        node.upper = hi if hi is not None else 0.0
        node.lower = lo if lo is not None else 0.0
        node.live_interactions = frozenset(live)
    return g


# ---------------------------------------------------------------------------
# Queries


def resolve_arc(g: ConditionalReturnGraph, t: int, tr_i: LocalTransition,
                context: Mapping[int, LocalTransition],
                strict: bool = True) -> CrgArc:
    """Descend one transition tree to the leaf arc selected by ``context``.

    ``context`` maps other agents to their concurrent local transitions.
    With ``strict`` every agent in the graph's scope must be present; the
    lenient mode fills gaps with wildcard arcs, which is sound exactly when
    the missing agents' interactions are dead (as during decoupled search).
    """
    m = g.instance
    tree = g.trees.get(tr_i)
    if tree is None:
        raise CrgError(f"transition {tr_i} not represented for agent {g.owner}")
    labels: list = []
    fixed: dict[int, object] = {}
    for pos, (kind, agent) in enumerate(tree.skeleton):
        ctx = context.get(agent)
        if ctx is None:
            if strict:
                raise CrgError(f"context is missing agent {agent}")
            labels.append(None)
            continue
        if kind == "act":
            options = tree.act_labels[agent]
            if ctx[1] in tree.deps[agent]:
                labels.append(ctx[1])
            elif WILDCARD in options:
                labels.append(WILDCARD)
            else:
                raise CrgError(
                    f"action {ctx[1]} of agent {agent} has no arc under {tr_i}")
        else:
            act_pos = _act_position(tree, agent)
            act_label = labels[act_pos] if act_pos is not None else WILDCARD
            known = tree.inf_labels.get((agent, act_label), ())
            feats = g.feature_level.get(agent)
            pair = ((ctx[0], ctx[2]) if feats is None else
                    (project_state(m, agent, ctx[0], feats),
                     project_state(m, agent, ctx[2], feats)))
            labels.append(pair if pair in known else NO_INFLUENCE)
        fixed[pos] = labels[-1]
    if len(fixed) == len(labels):
        try:
            return tree.arcs[tuple(labels)]
        except KeyError:
            raise CrgError(f"unresolvable path {labels} for {tr_i} "
                           f"in agent {g.owner}'s graph") from None
    # Lenient mode with absent agents: their interactions are dead for the
    # caller, and resolved functions carry identical values on every arc
    # agreeing with the resolved labels, so the first such arc serves.
    for key in sorted(tree.arcs, key=repr):
        if all(key[pos] == lab for pos, lab in fixed.items()):
            return tree.arcs[key]
    raise CrgError(f"no arc matches resolved labels {fixed} for {tr_i} "
                   f"in agent {g.owner}'s graph")


def _act_position(tree: TransitionTree, agent: int) -> int | None:
    for idx, (kind, j) in enumerate(tree.skeleton):
        if kind == "act" and j == agent:
            return idx
    return None


def lookup_transition_reward(g: ConditionalReturnGraph, t: int,
                             tr_i: LocalTransition,
                             context: Mapping[int, LocalTransition]) -> float:
    """Assigned reward of the joint transition resolved by ``context``."""
    return resolve_arc(g, t, tr_i, context, strict=True).reward


def assigned_reward(g: ConditionalReturnGraph, arc: CrgArc,
                    covered: frozenset[int] | None = None) -> float:
    """Arc reward restricted to functions whose scope lies inside ``covered``.

    Functions straddling the cover are conditionally dead wherever a search
    legitimately solves the covered agents alone, so their true contribution
    is zero and they are dropped rather than resolved through the arc.
    """
    if covered is None:
        return arc.reward
    m = g.instance
    return math.fsum(
        v for k, v in zip(g.functions, arc.components)
        if all(j in covered for j in m.rewards[k].scope))


def local_cri(g: ConditionalReturnGraph, s_i: int, t: int) -> bool:
    """Is the owner conditionally reward independent from everyone here?

    True when no interaction function whose scope contains the owner -
    wherever it was assigned - can still produce a nonzero value from this
    local state at stage t.
    """
    return g.nodes[(t, s_i)].locally_cri


def interaction_reachable(g: ConditionalReturnGraph, s_i: int, t: int,
                          e: Sequence[int]) -> bool:
    """Can a nonzero arc of an assigned function with scope ``e`` still be
    reached from this node? False is definitive: the agents of ``e`` are
    conditionally reward independent for that function from here on.
    """
    scope = tuple(e)
    fns = [k for k in g.functions if g.instance.rewards[k].scope == scope]
    live = g.nodes[(t, s_i)].live_interactions
    return any(k in live for k in fns)


def interaction_reachable_fn(g: ConditionalReturnGraph, s_i: int, t: int,
                             fn_index: int) -> bool:
    return fn_index in g.nodes[(t, s_i)].live_interactions


def cri_pair_exhaustive(m: TiMmdpInstance, i: int, j: int, t: int,
                        s: Sequence[int]) -> bool:
    """Definition-level independence test: walk every joint future from the
    given joint state and report True only if no function coupling i and j
    ever yields a nonzero value.

    Exact but exponential; the search defaults to the cheaper per-graph
    reachability plus local deadness tests, which are sound relative to
    this one.
    """
    from .model import enumerate_successors, reward_value

    fns = [rf for rf in m.rewards
           if rf.is_interaction and i in rf.scope and j in rf.scope]
    if not fns:
        return True
    frontier = {tuple(s)}
    for _stage in range(t, m.horizon):
        nxt = set()
        for state in frontier:
            for a in m.joint_actions(state):
                for s2, _ in enumerate_successors(m, state, a):
                    for rf in fns:
                        if reward_value(m, rf, state, a, s2) != 0.0:
                            return False
                    nxt.add(s2)
        frontier = nxt
    return True


# ---------------------------------------------------------------------------
# Size accounting


@dataclass
class SizeAudit:
    """Measured size of a graph against its evaluated worst-case bound.

    State nodes are the per-layer local-state circles; internal nodes are
    the action/influence tree nodes hanging off layer t's transitions.
    Reward arcs (the leaf arcs entering the next layer) are also broken out
    since they count the represented transitions.
    """

    state_nodes_per_layer: list[int]
    internal_nodes_per_layer: list[int]
    arcs_per_layer: list[int]
    reward_arcs_per_layer: list[int]
    alpha: int
    rho: int
    i_max: int
    worst_case_bound: int

    @property
    def measured(self) -> int:
        return (sum(self.state_nodes_per_layer)
                + sum(self.internal_nodes_per_layer)
                + sum(self.arcs_per_layer))


def size_audit(g: ConditionalReturnGraph) -> SizeAudit:
    """Count represented nodes and arcs and evaluate the size bound.

    The bound concretizes the asymptotic expression
    h * |A_max| * |S_max|^2 * (alpha * I_max)^rho with measured parameters:
    wildcard and no-influence branches add one to each base and the per-path
    node/arc overhead contributes the constant 4 * (rho + 1), both absorbed
    by the asymptotic form. The measured size can never exceed it.
    """
    m = g.instance
    h = g.horizon
    state_nodes = [0] * (h + 1)
    internal_nodes = [0] * (h + 1)
    arcs_per_layer = [0] * h
    reward_arcs = [0] * h
    alpha = 0
    i_max = 0
    for (t, s), node in g.nodes.items():
        if not node.represented:
            continue
        state_nodes[t] += 1
        for a in node.kept_actions:
            for dst, _ in g.outcomes(s, a):
                tree = g.trees[(s, a, dst)]
                n_leaf = len(tree.arcs)
                reward_arcs[t] += n_leaf
                if tree.degenerate:
                    arcs_per_layer[t] += n_leaf
                else:
                    internal = tree.internal_nodes()
                    internal_nodes[t] += len(internal)
                    # entry arc + one arc per non-root internal node + leaves
                    arcs_per_layer[t] += 1 + (len(internal) - 1) + n_leaf
                for deps in tree.deps.values():
                    alpha = max(alpha, len(deps))
                for labels in tree.inf_labels.values():
                    i_max = max(i_max, len(labels))
    rho = max((len(m.rewards[k].scope) - 1 for k in g.functions
               if m.rewards[k].is_interaction), default=0)
    s_max = max(len(loc.states) for loc in m.locals)
    a_max = max(len(loc.actions) for loc in m.locals)
    bound = ((h + 1) * a_max * s_max * s_max * 4 * (rho + 1)
             * ((alpha + 1) * (i_max + 1)) ** rho)
    return SizeAudit(state_nodes_per_layer=state_nodes,
                     internal_nodes_per_layer=internal_nodes,
                     arcs_per_layer=arcs_per_layer,
                     reward_arcs_per_layer=reward_arcs,
                     alpha=alpha, rho=rho, i_max=i_max,
                     worst_case_bound=bound)


def partition_violations(m: TiMmdpInstance,
                         partition: RewardPartition) -> list[Violation]:
    """Sanity checks mirroring partition_rewards' fixed-mode validation."""
    out = []
    try:
        partition_rewards(m, {a: fns for a, fns in partition.assignment.items()})
    except ValueError as exc:
        out.append(Violation("partition", "partition", str(exc)))
    return out
