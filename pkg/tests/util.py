"""Shared test helpers: seeded random instances and brute-force oracles.

The oracles re-state the definitions directly over concrete transitions -
no table-entry shortcuts, no caching - so they stay independent of the
implementation paths they check.
"""

from __future__ import annotations

from itertools import product

from timmdp.model import (
    LocalAction,
    LocalMdp,
    LocalState,
    RewardFunction,
    TiMmdpInstance,
    reachable_local_states,
    reward_value_local,
)
from timmdp.rng import SplitMix64

# Outcome probability menus with exact float sums.
_DYADIC = ((1.0,), (0.5, 0.5), (0.75, 0.25), (0.25, 0.75),
           (0.25, 0.25, 0.5))


def random_instance(seed: int, n_agents: int = 2, max_states: int = 4,
                    max_actions: int = 3, horizon: int = 3,
                    n_interactions: int = 1, feature_scoped: bool = False,
                    layered: bool = False,
                    interaction_horizon: int | None = None) -> TiMmdpInstance:
    """A small random TI-MMDP with every state reachable and no dead ends.

    ``layered`` builds once-visitable states carrying a time feature, and
    ``interaction_horizon`` then restricts interaction entries to
    transitions starting before that stage.
    """
    rng = SplitMix64(seed)
    if layered:
        return _layered_instance(rng, n_agents, max_states, max_actions,
                                 horizon, n_interactions, interaction_horizon)
    locals_ = []
    for _ in range(n_agents):
        n_states = rng.randint(2, max_states)
        n_actions = rng.randint(2, max_actions)
        transitions = {}
        for s in range(n_states):
            available = [a for a in range(n_actions) if rng.uniform() < 0.75]
            if not available:
                available = [rng.randint(0, n_actions - 1)]
            for a in available:
                probs = rng.choice(_DYADIC)
                outs = {}
                for p in probs:
                    dst = rng.randint(0, n_states - 1)
                    outs[dst] = outs.get(dst, 0.0) + p
                transitions[(s, a)] = tuple(sorted(outs.items()))
        locals_.append(_trimmed_local(n_states, n_actions, transitions))
    rewards = _random_rewards(rng, locals_, n_agents, n_interactions,
                              feature_scoped)
    return TiMmdpInstance(locals=tuple(locals_), rewards=rewards,
                          horizon=horizon, initial=(0,) * n_agents)


def _trimmed_local(n_states, n_actions, transitions) -> LocalMdp:
    """Drop states unreachable from 0 and remap ids densely."""
    reachable = {0}
    frontier = [0]
    while frontier:
        s = frontier.pop()
        for (src, _), outs in transitions.items():
            if src != s:
                continue
            for dst, _ in outs:
                if dst not in reachable:
                    reachable.add(dst)
                    frontier.append(dst)
    order = sorted(reachable)
    remap = {old: new for new, old in enumerate(order)}
    new_transitions = {}
    for (s, a), outs in transitions.items():
        if s in reachable:
            new_transitions[(remap[s], a)] = tuple(
                sorted((remap[dst], p) for dst, p in outs))
    states = tuple(LocalState(i, {"par": order[i] % 2})
                   for i in range(len(order)))
    actions = tuple(LocalAction(a, f"a{a}") for a in range(n_actions))
    return LocalMdp(states=states, actions=actions,
                    transitions=new_transitions)


def _layered_instance(rng, n_agents, max_states, max_actions, horizon,
                      n_interactions, interaction_horizon):
    locals_ = []
    for _ in range(n_agents):
        width = rng.randint(2, max_states)
        n_actions = rng.randint(2, max_actions)
        states = []
        ids = {}
        for t in range(horizon + 1):
            for k in range(width if t else 1):
                ids[(t, k)] = len(states)
                states.append(LocalState(len(states), {"t": t, "k": k}))
        transitions = {}
        for t in range(horizon):
            for k in range(width if t else 1):
                sid = ids[(t, k)]
                available = [a for a in range(n_actions)
                             if rng.uniform() < 0.8] or [0]
                for a in available:
                    probs = rng.choice(_DYADIC)
                    outs = {}
                    for p in probs:
                        dst = ids[(t + 1, rng.randint(0, width - 1))]
                        outs[dst] = outs.get(dst, 0.0) + p
                    transitions[(sid, a)] = tuple(sorted(outs.items()))
        # keep only states reachable within the layer structure
        reach = set()
        frontier = {ids[(0, 0)]}
        while frontier:
            reach |= frontier
            nxt = set()
            for (s, _), outs in transitions.items():
                if s in reach:
                    nxt.update(dst for dst, _ in outs if dst not in reach)
            frontier = nxt
        order = sorted(reach)
        remap = {old: new for new, old in enumerate(order)}
        new_states = tuple(
            LocalState(remap[s.id], dict(s.features))
            for s in states if s.id in reach)
        new_transitions = {
            (remap[s], a): tuple(sorted((remap[d], p) for d, p in outs))
            for (s, a), outs in transitions.items() if s in reach}
        locals_.append(LocalMdp(
            states=tuple(sorted(new_states, key=lambda st: st.id)),
            actions=tuple(LocalAction(a, f"a{a}") for a in range(n_actions)),
            transitions=new_transitions))
    rewards = _random_rewards(rng, locals_, n_agents, n_interactions, False,
                              interaction_horizon=interaction_horizon)
    return TiMmdpInstance(locals=tuple(locals_), rewards=rewards,
                          horizon=horizon, initial=(0,) * n_agents)


def _available_transitions(local: LocalMdp) -> list[tuple[int, int, int]]:
    out = []
    for (s, a), outs in sorted(local.transitions.items()):
        for dst, _ in sorted(outs):
            out.append((s, a, dst))
    return out


def _random_rewards(rng, locals_, n_agents, n_interactions, feature_scoped,
                    interaction_horizon=None) -> list[RewardFunction]:
    rewards = []
    for i, local in enumerate(locals_):
        table = {}
        for tr in _available_transitions(local):
            if rng.uniform() < 0.5:
                table[((tr[0],), (tr[1],), (tr[2],))] = float(
                    rng.randint(-5, 8))
        rewards.append(RewardFunction(scope=(i,), table=table))
    for _ in range(n_interactions):
        if n_agents >= 3 and rng.uniform() < 0.25:
            scope = tuple(sorted(rng_sample(rng, range(n_agents), 3)))
        else:
            scope = tuple(sorted(rng_sample(rng, range(n_agents), 2)))
        feature_mode = feature_scoped and rng.uniform() < 0.6
        feature_scope = None
        if feature_mode:
            feature_scope = {}
            for j in scope:
                feature_scope[j] = ("par",) if rng.uniform() < 0.7 else ()
        table = {}
        per_agent = [_available_transitions(locals_[j]) for j in scope]
        combos = list(product(*per_agent))
        rng_shuffle(rng, combos)
        for combo in combos[:max(2, len(combos) // 3)]:
            if interaction_horizon is not None:
                t0 = locals_[scope[0]].states[combo[0][0]].features["t"]
                if t0 >= interaction_horizon:
                    continue
            key_s, key_a, key_n = [], [], []
            for pos, j in enumerate(scope):
                s, a, dst = combo[pos]
                if feature_scope is not None:
                    feats = feature_scope[j]
                    st = locals_[j].states
                    key_s.append(tuple(st[s].features[f] for f in feats))
                    key_n.append(tuple(st[dst].features[f] for f in feats))
                else:
                    key_s.append(s)
                    key_n.append(dst)
                key_a.append(a)
            value = float(rng.randint(-6, 6))
            if value != 0.0:
                table[(tuple(key_s), tuple(key_a), tuple(key_n))] = value
        rewards.append(RewardFunction(scope=scope, table=table,
                                      feature_scope=feature_scope))
    return rewards


def rng_sample(rng: SplitMix64, population, k: int) -> list:
    items = list(population)
    rng_shuffle(rng, items)
    return items[:k]


def rng_shuffle(rng: SplitMix64, items: list) -> None:
    rng.shuffle(items)


# ---------------------------------------------------------------------------
# Brute-force oracles, straight from the definitions


def available_transitions(m: TiMmdpInstance, agent: int):
    return _available_transitions(m.locals[agent])


def bf_dependent_actions(m: TiMmdpInstance, fns: list[int], owner: int,
                         tr_i: tuple[int, int, int], j: int) -> set[int]:
    """Enumerate every available joint transition containing tr_i and apply
    the three conditions literally."""
    deps = set()
    for k in fns:
        rf = m.rewards[k]
        if owner not in rf.scope or j not in rf.scope or not rf.is_interaction:
            continue
        others = [q for q in rf.scope if q != owner]
        for combo in product(*(available_transitions(m, q) for q in others)):
            parts = {owner: tr_i}
            parts.update(dict(zip(others, combo)))
            states = [parts[q][0] for q in rf.scope]
            actions = [parts[q][1] for q in rf.scope]
            nexts = [parts[q][2] for q in rf.scope]
            v = reward_value_local(m, rf, states, actions, nexts)
            if v == rf.default:
                continue
            a_j = parts[j][1]
            pos = rf.scope.index(j)
            for b in range(len(m.locals[j].actions)):
                if b == a_j:
                    continue
                swapped = list(actions)
                swapped[pos] = b
                if reward_value_local(m, rf, states, swapped, nexts) != v:
                    deps.add(a_j)
                    break
    return deps


def bf_influence_set(m: TiMmdpInstance, fns: list[int], owner: int,
                     tr_i: tuple[int, int, int], j: int,
                     action: int) -> set[tuple[int, int]]:
    pairs = set()
    n_states = len(m.locals[j].states)
    for k in fns:
        rf = m.rewards[k]
        if owner not in rf.scope or j not in rf.scope or not rf.is_interaction:
            continue
        others = [q for q in rf.scope if q != owner]
        for combo in product(*(available_transitions(m, q) for q in others)):
            parts = {owner: tr_i}
            parts.update(dict(zip(others, combo)))
            if parts[j][1] != action:
                continue
            states = [parts[q][0] for q in rf.scope]
            actions = [parts[q][1] for q in rf.scope]
            nexts = [parts[q][2] for q in rf.scope]
            v = reward_value_local(m, rf, states, actions, nexts)
            if v == rf.default:
                continue
            s_j, n_j = parts[j][0], parts[j][2]
            pos = rf.scope.index(j)
            for s2 in range(n_states):
                for n2 in range(n_states):
                    if (s2, n2) == (s_j, n_j):
                        continue
                    st2, nx2 = list(states), list(nexts)
                    st2[pos], nx2[pos] = s2, n2
                    if reward_value_local(m, rf, st2, actions, nx2) != v:
                        pairs.add((s_j, n_j))
                        break
                else:
                    continue
                break
    return pairs


def bf_interaction_alive(m: TiMmdpInstance, rf_index: int, agent: int,
                         state: int, stage: int) -> bool:
    """Can the function still fire, over all stage-consistent joint futures,
    given only this agent's local position?"""
    rf = m.rewards[rf_index]
    if rf.default != 0.0:
        return True
    own = reachable_local_states(m, agent, start=state, from_stage=stage)
    others = {q: reachable_local_states(m, q) for q in rf.scope if q != agent}
    for x in range(stage, m.horizon):
        own_trs = [tr for tr in available_transitions(m, agent)
                   if tr[0] in own[x]]
        other_trs = []
        for q in rf.scope:
            if q == agent:
                continue
            other_trs.append([tr for tr in available_transitions(m, q)
                              if tr[0] in others[q][x]])
        for tr in own_trs:
            for combo in product(*other_trs):
                parts = {agent: tr}
                parts.update(dict(zip([q for q in rf.scope if q != agent],
                                      combo)))
                states = [parts[q][0] for q in rf.scope]
                actions = [parts[q][1] for q in rf.scope]
                nexts = [parts[q][2] for q in rf.scope]
                if reward_value_local(m, rf, states, actions, nexts) != 0.0:
                    return True
    return False


def bf_joint_future_fires(m: TiMmdpInstance, rf_index: int, t: int,
                          s: tuple[int, ...]) -> bool:
    """Exhaustive check over all joint futures from (t, s): does any joint
    transition give the function a nonzero value?"""
    from timmdp.model import enumerate_successors, reward_value

    rf = m.rewards[rf_index]
    frontier = {tuple(s)}
    for x in range(t, m.horizon):
        nxt = set()
        for state in frontier:
            for a in m.joint_actions(state):
                for s2, _ in enumerate_successors(m, state, a):
                    if reward_value(m, rf, state, a, s2) != 0.0:
                        return True
                    nxt.add(s2)
        frontier = nxt
    return False


def all_joint_transitions(m: TiMmdpInstance):
    """Every (t, s, a, s2) with positive probability, stage-reachable."""
    from timmdp.model import enumerate_successors

    frontier = {tuple(m.initial)}
    for t in range(m.horizon):
        nxt = set()
        for s in sorted(frontier):
            for a in sorted(m.joint_actions(s)):
                for s2, p in enumerate_successors(m, s, a):
                    yield t, s, a, s2, p
                    nxt.add(s2)
        frontier = nxt


def random_execution_sequence(m: TiMmdpInstance, rng: SplitMix64):
    from timmdp.model import ExecutionSequence, enumerate_successors

    steps = [tuple(m.initial)]
    s = tuple(m.initial)
    for t in range(m.horizon):
        actions = sorted(m.joint_actions(s))
        a = rng.choice(actions)
        outs = enumerate_successors(m, s, a)
        pick = rng.uniform()
        acc = 0.0
        s2 = outs[-1][0]
        for cand, p in outs:
            acc += p
            if pick <= acc:
                s2 = cand
                break
        steps.extend([a, s2])
        s = s2
    return ExecutionSequence(steps=tuple(steps))
