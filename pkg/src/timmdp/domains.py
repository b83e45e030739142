"""Benchmark instance families: maintenance planning and a worked fixture.

The maintenance planning problem (MPP) gives every agent a set of once-only
tasks. Working a task costs a task- and period-dependent amount, finishing
it earns a completion bonus, and a task may stochastically delay - the delay
becomes known on the first step after starting. Concurrent work on certain
cross-agent task pairs incurs a joint hindrance penalty, which is the only
coupling between agents. The compiler turns such a description into a
transition-independent instance whose local states track elapsed time plus
per-task status, so the local dynamics form a layered DAG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .model import (
    LocalAction,
    LocalMdp,
    LocalState,
    RewardFunction,
    TiMmdpInstance,
)
from .rng import SplitMix64, stream

PENDING = "p"
DONE = "d"


def _running(remaining: int) -> str:
    return f"r{remaining}"


@dataclass(frozen=True)
class MaintenanceTask:
    """One once-only task: nominal/delayed durations in periods, the delay
    probability, a per-period cost schedule and the completion bonus."""

    id: int
    duration: int
    delay_prob: float
    delayed_duration: int
    cost: tuple[float, ...]
    bonus: float = 0.0

    def __post_init__(self):
        if self.duration < 1 or self.delayed_duration < self.duration:
            raise ValueError("durations must satisfy 1 <= nominal <= delayed")
        if not 0.0 <= self.delay_prob <= 1.0:
            raise ValueError("delay probability outside [0, 1]")


@dataclass
class MppInstance:
    """Agents with their tasks plus pairwise, period-indexed hindrance.

    ``collision`` picks when a hindrance entry fires: ``"overlap"`` charges
    it whenever both tasks are worked in the same period, ``"start"`` only
    when both are started in that period.
    """

    tasks: tuple[tuple[MaintenanceTask, ...], ...]
    # ((agent_i, task_i), (agent_j, task_j), period) -> penalty <= 0, i < j
    hindrance: dict[tuple[tuple[int, int], tuple[int, int], int], float]
    horizon: int
    collision: str = "overlap"
    metadata: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class GeneratorParams:
    n_agents: int = 2
    tasks_per_agent: int = 2
    horizon: int = 5
    delay_prob_range: tuple[float, float] = (0.1, 0.6)
    duration_max: int = 2
    cost_range: tuple[int, int] = (1, 8)
    hindrance_range: tuple[int, int] = (3, 12)
    density: float = 0.5
    seed: int = 0


def compile_mpp(inst: MppInstance) -> TiMmdpInstance:
    """Translate a maintenance problem into a TI-MMDP.

    Local states are (period, per-task status) with status pending, running
    with k periods left, or done; a task is workable while pending (which
    starts it) or running, and agents otherwise idle. Starting resolves the
    delay stochastically on that first step. Local rewards are negative
    costs plus completion bonuses; hindrance becomes an interaction reward
    keyed on the two work actions and the period feature.

    Tasks that cannot complete even undelayed within the horizon are listed
    in the result's ``metadata["unfinishable"]`` rather than rejected.
    """
    h = inst.horizon
    locals_: list[LocalMdp] = []
    work_action_id: dict[tuple[int, int], int] = {}

    for agent, tasks in enumerate(inst.tasks):
        n_tasks = len(tasks)
        actions = tuple(
            [LocalAction(k, f"work-{tasks[k].id}") for k in range(n_tasks)]
            + [LocalAction(n_tasks, "idle")])
        for k in range(n_tasks):
            work_action_id[(agent, k)] = k
        idle = n_tasks

        ids: dict[tuple, int] = {}
        states: list[LocalState] = []
        transitions: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}

        def intern(t: int, statuses: tuple[str, ...]) -> int:
            key = (t, statuses)
            if key not in ids:
                feats = {"t": t}
                for k, st in enumerate(statuses):
                    feats[f"task{k}"] = st
                ids[key] = len(states)
                states.append(LocalState(len(states), feats))
            return ids[key]

        start = (0, (PENDING,) * n_tasks)
        intern(*start)
        frontier = [start]
        while frontier:
            t, statuses = frontier.pop()
            if t >= h:
                continue
            sid = ids[(t, statuses)]
            running = [k for k, st in enumerate(statuses)
                       if st.startswith("r")]
            moves: list[tuple[int, list[tuple[tuple[str, ...], float]]]] = []
            if running:
                k = running[0]
                remaining = int(statuses[k][1:])
                nxt = DONE if remaining == 1 else _running(remaining - 1)
                moves.append((k, [(_with(statuses, k, nxt), 1.0)]))
            else:
                moves.append((idle, [(statuses, 1.0)]))
                for k, st in enumerate(statuses):
                    if st != PENDING:
                        continue
                    task = tasks[k]
                    outcomes: dict[tuple[str, ...], float] = {}
                    for dur, p in ((task.duration, 1.0 - task.delay_prob),
                                   (task.delayed_duration, task.delay_prob)):
                        if p <= 0.0:
                            continue
                        nxt = DONE if dur == 1 else _running(dur - 1)
                        key = _with(statuses, k, nxt)
                        outcomes[key] = outcomes.get(key, 0.0) + p
                    moves.append((k, sorted(outcomes.items())))
            for action, outcomes in moves:
                outs = []
                for statuses2, p in outcomes:
                    key2 = (t + 1, statuses2)
                    fresh = key2 not in ids
                    outs.append((intern(*key2), p))
                    if fresh:
                        frontier.append(key2)
                transitions[(sid, action)] = tuple(outs)

        locals_.append(LocalMdp(states=tuple(states), actions=actions,
                                transitions=transitions))

    rewards: list[RewardFunction] = []
    for agent, tasks in enumerate(inst.tasks):
        table: dict[tuple, float] = {}
        local = locals_[agent]
        for (sid, action), outs in local.transitions.items():
            if action >= len(tasks):
                continue
            task = tasks[action]
            t = local.states[sid].features["t"]
            cost = task.cost[t] if t < len(task.cost) else task.cost[-1]
            for dst, _ in outs:
                value = -float(cost)
                was = local.states[sid].features[f"task{action}"]
                now = local.states[dst].features[f"task{action}"]
                if was != DONE and now == DONE:
                    value += task.bonus
                if value != 0.0:
                    table[((sid,), (action,), (dst,))] = value
        rewards.append(RewardFunction(scope=(agent,), table=table))

    if inst.collision not in ("overlap", "start"):
        raise ValueError(f"unknown collision mode {inst.collision!r}")
    by_pair: dict[tuple[tuple[int, int], tuple[int, int]],
                  dict[int, float]] = {}
    for ((i, ti), (j, tj), period), value in sorted(inst.hindrance.items()):
        if not (0 <= i < j < inst.n_agents):
            raise ValueError(f"hindrance pair ({i},{j}) must satisfy i < j")
        by_pair.setdefault(((i, ti), (j, tj)), {})[period] = value

    def statuses_after_start(agent: int, k: int) -> list[str]:
        task = inst.tasks[agent][k]
        out = set()
        for dur, p in ((task.duration, 1.0 - task.delay_prob),
                       (task.delayed_duration, task.delay_prob)):
            if p > 0.0:
                out.add(DONE if dur == 1 else _running(dur - 1))
        return sorted(out)

    for ((i, ti), (j, tj)), per_period in sorted(by_pair.items()):
        table = {}
        for period, value in sorted(per_period.items()):
            if value == 0.0:
                continue
            a_pair = (work_action_id[(i, ti)], work_action_id[(j, tj)])
            if inst.collision == "overlap":
                table[(((period,), ()), a_pair, ((period + 1,), ()))] = \
                    float(value)
            else:
                for ni in statuses_after_start(i, ti):
                    for nj in statuses_after_start(j, tj):
                        key = (((period, PENDING), (PENDING,)), a_pair,
                               ((period + 1, ni), (nj,)))
                        table[key] = float(value)
        feature_scope = ({i: ("t",), j: ()} if inst.collision == "overlap"
                         else {i: ("t", f"task{ti}"), j: (f"task{tj}",)})
        rewards.append(RewardFunction(
            scope=(i, j), table=table, feature_scope=feature_scope))

    unfinishable = [(agent, task.id)
                    for agent, tasks in enumerate(inst.tasks)
                    for task in tasks if task.duration > h]
    meta = dict(inst.metadata)
    meta["unfinishable"] = unfinishable
    return TiMmdpInstance(
        locals=tuple(locals_), rewards=rewards, horizon=h,
        initial=tuple(0 for _ in inst.tasks), metadata=meta)


def _with(statuses: tuple[str, ...], k: int, value: str) -> tuple[str, ...]:
    return statuses[:k] + (value,) + statuses[k + 1:]


def gen_random_mpp(params: GeneratorParams) -> MppInstance:
    """Seeded random maintenance problem; the seed fully determines it."""
    rng = SplitMix64(params.seed)
    lo_c, hi_c = params.cost_range
    tasks = []
    next_id = 0
    bonus = float(hi_c * params.horizon * 2)
    for _ in range(params.n_agents):
        agent_tasks = []
        for _ in range(params.tasks_per_agent):
            duration = rng.randint(1, params.duration_max)
            delayed = rng.randint(duration, params.duration_max)
            p_lo, p_hi = params.delay_prob_range
            delay = round(rng.uniform(p_lo, p_hi), 4)
            if delayed == duration:
                delay = 0.0
            cost = tuple(float(rng.randint(lo_c, hi_c))
                         for _ in range(params.horizon))
            agent_tasks.append(MaintenanceTask(
                id=next_id, duration=duration, delay_prob=delay,
                delayed_duration=delayed, cost=cost, bonus=bonus))
            next_id += 1
        tasks.append(tuple(agent_tasks))

    lo_h, hi_h = params.hindrance_range
    hindrance: dict = {}
    for i in range(params.n_agents):
        for j in range(i + 1, params.n_agents):
            for ti in range(params.tasks_per_agent):
                for tj in range(params.tasks_per_agent):
                    if rng.uniform() >= params.density:
                        continue
                    value = -float(rng.randint(lo_h, hi_h))
                    for period in range(params.horizon):
                        hindrance[((i, ti), (j, tj), period)] = value
    meta = {"generator": "mpp", "rng": SplitMix64.name,
            "params": {
                "n_agents": params.n_agents,
                "tasks_per_agent": params.tasks_per_agent,
                "horizon": params.horizon,
                "delay_prob_range": list(params.delay_prob_range),
                "duration_max": params.duration_max,
                "cost_range": list(params.cost_range),
                "hindrance_range": list(params.hindrance_range),
                "density": params.density,
                "seed": params.seed,
            }}
    return MppInstance(tasks=tuple(tasks), hindrance=hindrance,
                       horizon=params.horizon, metadata=meta)


def gen_pyra(n: int, h: int, seed: int) -> MppInstance:
    """Pyramid-coupled instance: agent k's task interacts with the tasks of
    agents 2k and 2k+1 (1-indexed), forming a binary interaction tree.

    Tasks are single-period with a possible one-period delay, and the
    hindrance penalizes starting linked tasks in the same period, so the
    coupling dissolves as soon as an agent's task leaves pending.
    """
    if n < 1:
        raise ValueError("need at least one agent")
    rng = SplitMix64(seed)
    tasks = []
    for agent in range(n):
        delay = round(rng.uniform(0.2, 0.8), 4)
        cost = tuple(float(rng.randint(1, 4) + t) for t in range(h))
        tasks.append((MaintenanceTask(id=agent, duration=1, delay_prob=delay,
                                      delayed_duration=2, cost=cost,
                                      bonus=float(8 * h)),))
    hindrance: dict = {}
    for k in range(1, n + 1):
        for child in (2 * k, 2 * k + 1):
            if child <= n:
                value = -float(rng.randint(4, 10))
                for period in range(h):
                    hindrance[((k - 1, 0), (child - 1, 0), period)] = value
    meta = {"generator": "pyra", "rng": SplitMix64.name,
            "params": {"n": n, "horizon": h, "seed": seed}}
    return MppInstance(tasks=tuple(tasks), hindrance=hindrance, horizon=h,
                       collision="start", metadata=meta)


def gen_coordint(seed: int, delay_prob: float | None = None) -> MppInstance:
    """Coordination-intensive two-agent instance.

    Agent 0's task may delay; agent 1's may not, and its cost rises over
    time while hindrance punishes overlap. The jointly optimal plan waits
    for the delay outcome before scheduling agent 1, so any plan that cannot
    observe agent 0's realization pays either the hindrance risk or the
    late-start premium - the optimal value strictly exceeds the best such
    plan whenever the delay probability is interior.
    """
    rng = SplitMix64(seed)
    p = rng.choice((0.25, 0.5, 0.75)) if delay_prob is None else delay_prob
    b0 = float(rng.randint(1, 3))
    b1 = b0 + float(rng.randint(1, 3))
    b2 = b1 + float(rng.randint(1, 3))
    hind = -float(rng.randint(10, 20))
    task_a = MaintenanceTask(id=0, duration=1, delay_prob=p,
                             delayed_duration=2, cost=(1.0, 40.0, 80.0),
                             bonus=200.0)
    task_b = MaintenanceTask(id=1, duration=1, delay_prob=0.0,
                             delayed_duration=1, cost=(b0, b1, b2),
                             bonus=200.0)
    hindrance = {((0, 0), (1, 0), period): hind for period in range(3)}
    meta = {"generator": "coordint", "rng": SplitMix64.name,
            "params": {"seed": seed, "delay_prob": p}}
    return MppInstance(tasks=((task_a,), (task_b,)), hindrance=hindrance,
                       horizon=3, metadata=meta)


def gen_batch(family: str, count: int, seed: int, **kwargs) -> list[MppInstance]:
    """Derive one instance per index with an independent seed stream."""
    out = []
    for k in range(count):
        item_seed = stream(seed, k).next_u64()
        if family == "mpp":
            params = GeneratorParams(seed=item_seed, **kwargs)
            out.append(gen_random_mpp(params))
        elif family == "pyra":
            out.append(gen_pyra(kwargs.get("n", 7), kwargs.get("h", 3),
                                item_seed))
        elif family == "coordint":
            out.append(gen_coordint(item_seed))
        else:
            raise ValueError(f"unknown family {family!r}")
    return out


# ---------------------------------------------------------------------------
# Worked two-agent fixture


F_UNSET, F_TRUE, F_FALSE = "unset", "true", "false"

# Reward numbers for the fixture are our choice; the scenario fixes only the
# structure (three once-only actions per agent, one stochastic action with
# outcomes at 0.75/0.25, and a single interaction on simultaneous a-actions
# whose value depends on how agent 0's feature gets set).
EXAMPLE_LOCAL_0 = {
    (0, 0, 1): 3.0, (0, 1, 2): 2.0, (0, 2, 3): 1.0,
    (1, 1, 4): 1.0, (1, 2, 5): 4.0,
    (2, 0, 4): 2.0, (2, 2, 7): 1.0,
    (3, 0, 6): 1.0, (3, 1, 7): 2.0,
}
EXAMPLE_LOCAL_1 = {
    (0, 0, 1): 2.0, (0, 1, 2): 1.0, (0, 2, 3): 1.0, (0, 2, 4): 5.0,
    (1, 1, 5): 2.0, (1, 2, 6): 1.0, (1, 2, 7): 3.0,
    (2, 0, 5): 3.0, (2, 2, 8): 2.0, (2, 2, 9): 2.0,
    (3, 0, 6): 1.0, (3, 1, 8): 1.0,
    (4, 0, 7): 6.0, (4, 1, 9): 1.0,
}
EXAMPLE_INTERACTION = ((F_TRUE, 8.0), (F_FALSE, -4.0))


def example_two_agent() -> TiMmdpInstance:
    """Two agents, actions a/b/c each usable once over a 2-step horizon.

    Agent 1's c is the only stochastic action (outcomes at 0.75 and 0.25).
    The single interaction fires when both agents play a simultaneously and
    its value depends on what agent 0's feature f1 is set to, which in turn
    depends on where agent 0 plays a from.
    """
    a, b, c = 0, 1, 2

    def st0(i, done, f1):
        return LocalState(i, {"done": done, "f1": f1})

    states0 = (
        st0(0, "", F_UNSET),
        st0(1, "a", F_TRUE), st0(2, "b", F_UNSET), st0(3, "c", F_UNSET),
        st0(4, "ab", F_TRUE), st0(5, "ac", F_TRUE), st0(6, "ac", F_FALSE),
        st0(7, "bc", F_UNSET),
    )
    trans0 = {
        (0, a): ((1, 1.0),), (0, b): ((2, 1.0),), (0, c): ((3, 1.0),),
        (1, b): ((4, 1.0),), (1, c): ((5, 1.0),),
        (2, a): ((4, 1.0),), (2, c): ((7, 1.0),),
        (3, a): ((6, 1.0),), (3, b): ((7, 1.0),),
    }

    def st1(i, done, c_out):
        return LocalState(i, {"done": done, "c": c_out})

    states1 = (
        st1(0, "", "-"),
        st1(1, "a", "-"), st1(2, "b", "-"), st1(3, "c", "c"), st1(4, "c", "c'"),
        st1(5, "ab", "-"), st1(6, "ac", "c"), st1(7, "ac", "c'"),
        st1(8, "bc", "c"), st1(9, "bc", "c'"),
    )
    trans1 = {
        (0, a): ((1, 1.0),), (0, b): ((2, 1.0),),
        (0, c): ((3, 0.75), (4, 0.25)),
        (1, b): ((5, 1.0),), (1, c): ((6, 0.75), (7, 0.25)),
        (2, a): ((5, 1.0),), (2, c): ((8, 0.75), (9, 0.25)),
        (3, a): ((6, 1.0),), (3, b): ((8, 1.0),),
        (4, a): ((7, 1.0),), (4, b): ((9, 1.0),),
    }

    actions = tuple(LocalAction(i, lab) for i, lab in enumerate("abc"))
    local0 = LocalMdp(states=states0, actions=actions, transitions=trans0)
    local1 = LocalMdp(states=states1, actions=actions, transitions=trans1)

    r0 = RewardFunction(scope=(0,), table={
        ((s,), (act,), (n,)): v for (s, act, n), v in EXAMPLE_LOCAL_0.items()})
    r1 = RewardFunction(scope=(1,), table={
        ((s,), (act,), (n,)): v for (s, act, n), v in EXAMPLE_LOCAL_1.items()})
    r01 = RewardFunction(
        scope=(0, 1),
        table={(((F_UNSET,), ()), (a, a), ((outcome,), ())): v
               for outcome, v in EXAMPLE_INTERACTION},
        feature_scope={0: ("f1",), 1: ()})

    return TiMmdpInstance(
        locals=(local0, local1), rewards=[r0, r1, r01], horizon=2,
        initial=(0, 0),
        metadata={"generator": "example", "rng": "none", "params": {}})


def example_partition() -> Mapping[int, list[int]]:
    """Fixed assignment used in the worked example: the interaction function
    lives in agent 1's graph next to its local reward."""
    return {0: [0], 1: [1, 2]}
