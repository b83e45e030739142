"""Transition-independent multi-agent MDP: model types and joint dynamics.

A problem instance couples n agents that move through fully independent
local MDPs; only rewards read across agents. Joint states and actions are
fixed-length tuples of local ids indexed by agent, so projecting onto one
agent is a constant-time index. Reward functions are sparse tables over the
local transitions of their scope plus an explicit default for everything
unlisted - the sparsity is what the rest of the package exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Mapping, Sequence

PROB_TOL = 1e-9

JointState = tuple[int, ...]
JointAction = tuple[int, ...]

# (state id, action id) -> ((next state id, probability), ...)
LocalTransitionModel = Mapping[tuple[int, int], tuple[tuple[int, float], ...]]


@dataclass(frozen=True)
class LocalState:
    """A local state: dense id plus the discrete features composing it."""

    id: int
    features: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class LocalAction:
    id: int
    label: str = ""


@dataclass
class LocalMdp:
    """One agent's state set, action set and transition model."""

    states: tuple[LocalState, ...]
    actions: tuple[LocalAction, ...]
    transitions: LocalTransitionModel

    def available(self, state_id: int) -> list[int]:
        return [a.id for a in self.actions if (state_id, a.id) in self.transitions]

    def outcomes(self, state_id: int, action_id: int) -> tuple[tuple[int, float], ...]:
        return self.transitions.get((state_id, action_id), ())


@dataclass
class RewardFunction:
    """Sparse reward over the local joint transitions of an agent subset.

    ``scope`` lists the agents the function reads, ascending. Table keys are
    ``(states, actions, next_states)`` with one component per scope agent in
    scope order. A state component is the local state id, unless
    ``feature_scope`` declares that this function only reads some features of
    that agent - then the component is the tuple of those feature values
    (the empty tuple declares pure action dependence). Unlisted transitions
    earn ``default``.
    """

    scope: tuple[int, ...]
    table: dict[tuple, float]
    default: float = 0.0
    feature_scope: Mapping[int, tuple[str, ...]] | None = None

    @property
    def is_interaction(self) -> bool:
        return len(self.scope) > 1

    def features_read(self, agent: int) -> tuple[str, ...] | None:
        if self.feature_scope is None:
            return None
        return self.feature_scope.get(agent)


@dataclass(frozen=True)
class ExecutionSequence:
    """Alternating joint states and joint actions, s_0 a_0 s_1 ... s_t."""

    steps: tuple

    @property
    def t(self) -> int:
        return len(self.steps) // 2

    def transitions(self) -> Iterator[tuple[JointState, JointAction, JointState]]:
        for x in range(self.t):
            yield self.steps[2 * x], self.steps[2 * x + 1], self.steps[2 * x + 2]


@dataclass
class TiMmdpInstance:
    """A full problem: per-agent local MDPs, reward set, horizon, start state."""

    locals: tuple[LocalMdp, ...]
    rewards: list[RewardFunction]
    horizon: int
    initial: JointState
    metadata: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return len(self.locals)

    @property
    def agents(self) -> range:
        return range(len(self.locals))

    def joint_actions(self, s: JointState) -> Iterator[JointAction]:
        per_agent = [self.locals[i].available(s[i]) for i in self.agents]
        return product(*per_agent)


@dataclass(frozen=True)
class Violation:
    """One broken invariant; data for the caller, not an exception."""

    kind: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.message}"


def project_state(m: TiMmdpInstance, agent: int, state_id: int,
                  features: tuple[str, ...]) -> tuple:
    st = m.locals[agent].states[state_id]
    return tuple(st.features[f] for f in features)


def reward_key(m: TiMmdpInstance, rf: RewardFunction,
               states: Sequence[int], actions: Sequence[int],
               next_states: Sequence[int]) -> tuple:
    """Table key for local components given in scope order."""
    s_part, a_part, n_part = [], [], []
    for pos, j in enumerate(rf.scope):
        feats = rf.features_read(j)
        if feats is None:
            s_part.append(states[pos])
            n_part.append(next_states[pos])
        else:
            s_part.append(project_state(m, j, states[pos], feats))
            n_part.append(project_state(m, j, next_states[pos], feats))
        a_part.append(actions[pos])
    return tuple(s_part), tuple(a_part), tuple(n_part)


def reward_value_local(m: TiMmdpInstance, rf: RewardFunction,
                       states: Sequence[int], actions: Sequence[int],
                       next_states: Sequence[int]) -> float:
    """Evaluate one reward function on scope-ordered local components."""
    return rf.table.get(reward_key(m, rf, states, actions, next_states), rf.default)


def reward_value(m: TiMmdpInstance, rf: RewardFunction,
                 s: JointState, a: JointAction, s_next: JointState) -> float:
    states = [s[j] for j in rf.scope]
    actions = [a[j] for j in rf.scope]
    nexts = [s_next[j] for j in rf.scope]
    return reward_value_local(m, rf, states, actions, nexts)


def joint_transition_probability(m: TiMmdpInstance, s: JointState,
                                 a: JointAction, s_next: JointState) -> float:
    """Product of local transition probabilities; 0 if any local move is absent."""
    if not (len(s) == len(a) == len(s_next) == m.n_agents):
        raise ValueError("joint state/action arity does not match agent count")
    p = 1.0
    for i in m.agents:
        local = 0.0
        for nxt, q in m.locals[i].outcomes(s[i], a[i]):
            if nxt == s_next[i]:
                local = q
                break
        if local == 0.0:
            return 0.0
        p *= local
    return p


def total_reward(m: TiMmdpInstance, s: JointState, a: JointAction,
                 s_next: JointState) -> float:
    """Team reward for one joint transition: the sum over all reward functions."""
    return math.fsum(reward_value(m, rf, s, a, s_next) for rf in m.rewards)


def enumerate_successors(m: TiMmdpInstance, s: JointState,
                         a: JointAction) -> list[tuple[JointState, float]]:
    """All joint successors with probabilities, ordered agent-major by state id."""
    per_agent = []
    for i in m.agents:
        outs = m.locals[i].outcomes(s[i], a[i])
        if not outs:
            return []
        per_agent.append(sorted(outs))
    result = []
    for combo in product(*per_agent):
        p = 1.0
        for _, q in combo:
            p *= q
        result.append((tuple(nxt for nxt, _ in combo), p))
    return result


def sequence_return(m: TiMmdpInstance,
                    phi: ExecutionSequence) -> tuple[float, dict[int, float]]:
    """Return of an execution sequence and its split per reward function.

    The per-component map is keyed by index into ``m.rewards``. Both the
    total and the components are exact (fsum), so the components always add
    back to the total bit-for-bit regardless of summation order.
    """
    _check_sequence(m, phi)
    per_fn: dict[int, list[float]] = {k: [] for k in range(len(m.rewards))}
    for s, a, s_next in phi.transitions():
        for k, rf in enumerate(m.rewards):
            per_fn[k].append(reward_value(m, rf, s, a, s_next))
    components = {k: math.fsum(vals) for k, vals in per_fn.items()}
    total = math.fsum(v for vals in per_fn.values() for v in vals)
    return total, components


def _check_sequence(m: TiMmdpInstance, phi: ExecutionSequence) -> None:
    if len(phi.steps) % 2 == 0 or not phi.steps:
        raise ValueError("execution sequence must start and end with a state")
    for s, a, s_next in phi.transitions():
        if joint_transition_probability(m, s, a, s_next) <= 0.0:
            raise ValueError(f"impossible step {s} {a} {s_next} in sequence")


def reachable_local_states(m: TiMmdpInstance, agent: int,
                           start: int | None = None,
                           from_stage: int = 0) -> list[set[int]]:
    """Per-stage sets of local states reachable from ``start`` at ``from_stage``.

    Index x of the result holds the states reachable at stage x; stages
    before ``from_stage`` are empty sets.
    """
    local = m.locals[agent]
    sets: list[set[int]] = [set() for _ in range(m.horizon + 1)]
    sets[from_stage] = {m.initial[agent] if start is None else start}
    for t in range(from_stage, m.horizon):
        nxt: set[int] = set()
        for sid in sets[t]:
            for a in local.available(sid):
                nxt.update(dst for dst, _ in local.outcomes(sid, a))
        sets[t + 1] = nxt
    return sets


def validate_instance(m: TiMmdpInstance) -> list[Violation]:
    """Check every structural invariant; an empty list means well-formed.

    Violations are returned, never raised: a bad generated instance is data
    to report, not a crash. Probabilities are checked to 1e-9 and never
    silently renormalized.
    """
    out: list[Violation] = []
    if m.horizon < 1:
        out.append(Violation("horizon", "instance", f"horizon {m.horizon} < 1"))
    if len(m.initial) != m.n_agents:
        out.append(Violation("initial", "instance",
                             f"initial state has arity {len(m.initial)}, "
                             f"expected {m.n_agents}"))
        return out

    for i, local in enumerate(m.locals):
        where = f"agent {i}"
        for idx, st in enumerate(local.states):
            if st.id != idx:
                out.append(Violation("state-ids", where,
                                     f"state at index {idx} has id {st.id}; "
                                     "ids must be dense and ascending"))
        for idx, act in enumerate(local.actions):
            if act.id != idx:
                out.append(Violation("action-ids", where,
                                     f"action at index {idx} has id {act.id}"))
        n_states, n_actions = len(local.states), len(local.actions)
        for (sid, aid), outs in local.transitions.items():
            tag = f"{where} (s={sid}, a={aid})"
            if not (0 <= sid < n_states and 0 <= aid < n_actions):
                out.append(Violation("transition-ids", tag, "unknown state or action"))
                continue
            if not outs:
                out.append(Violation("transition-empty", tag, "no outcomes listed"))
                continue
            total = math.fsum(p for _, p in outs)
            if any(p <= 0.0 for _, p in outs):
                out.append(Violation("probability-positive", tag,
                                     "listed probabilities must be > 0"))
            if any(not (0 <= dst < n_states) for dst, _ in outs):
                out.append(Violation("transition-ids", tag, "unknown successor state"))
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("probability-sum", tag,
                                     f"outcome probabilities sum to {total!r}"))
        if not (0 <= m.initial[i] < n_states):
            out.append(Violation("initial", where,
                                 f"initial state {m.initial[i]} unknown"))

    for k, rf in enumerate(m.rewards):
        where = f"reward {k} (scope {rf.scope})"
        if not rf.scope:
            out.append(Violation("reward-scope", where, "scope is empty"))
            continue
        if list(rf.scope) != sorted(set(rf.scope)):
            out.append(Violation("reward-scope", where,
                                 "scope must be strictly ascending agent ids"))
            continue
        if any(j not in m.agents for j in rf.scope):
            out.append(Violation("reward-scope", where,
                                 "scope names an agent outside the instance"))
            continue
        if not math.isfinite(rf.default):
            out.append(Violation("reward-finite", where, "default is not finite"))
        if rf.feature_scope is not None:
            for j, feats in rf.feature_scope.items():
                if j not in rf.scope:
                    out.append(Violation("feature-scope", where,
                                         f"feature scope names agent {j} "
                                         "outside the reward scope"))
                    continue
                known = set(m.locals[j].states[0].features) if m.locals[j].states else set()
                for f in feats:
                    if f not in known:
                        out.append(Violation("feature-scope", where,
                                             f"agent {j} has no feature {f!r}"))
        arity = len(rf.scope)
        for key, value in rf.table.items():
            if not math.isfinite(value):
                out.append(Violation("reward-finite", where,
                                     f"entry {key} is not finite"))
            if (len(key) != 3 or any(len(part) != arity for part in key)):
                out.append(Violation("reward-key", where,
                                     f"entry {key} does not match scope arity"))

    # Feature maps must be a function of the state id.
    for i, local in enumerate(m.locals):
        keys = {tuple(sorted(st.features)) for st in local.states}
        if len(keys) > 1:
            out.append(Violation("features", f"agent {i}",
                                 "states disagree on the feature set"))

    if not out:
        out.extend(_reachability_violations(m))
    return out


def _reachability_violations(m: TiMmdpInstance) -> list[Violation]:
    out = []
    for i in m.agents:
        per_stage = reachable_local_states(m, i)
        seen = set().union(*per_stage)
        for st in m.locals[i].states:
            if st.id not in seen:
                out.append(Violation("unreachable-state", f"agent {i}",
                                     f"state {st.id} is unreachable within "
                                     f"{m.horizon} steps"))
        # States that can be occupied before the horizon must offer an action.
        for t in range(m.horizon):
            for sid in per_stage[t]:
                if not m.locals[i].available(sid):
                    out.append(Violation("dead-end", f"agent {i}",
                                         f"state {sid} reachable at stage {t} "
                                         "has no available action"))
    return out
