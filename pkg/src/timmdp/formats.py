"""Stable text formats: instance JSON, result CSV and DOT graph export.

Instances serialize to a canonical JSON form - sorted keys, LF line
endings, ASCII-only escapes, numbers with up to 17 significant digits - so
identical instances produce identical bytes. Reading is strict: unknown
fields and version majors above ours are rejected with the path of the
offending field.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .crg import NO_INFLUENCE, WILDCARD, ConditionalReturnGraph
from .model import (
    LocalAction,
    LocalMdp,
    LocalState,
    RewardFunction,
    TiMmdpInstance,
)

SCHEMA_VERSION = "1"


class FormatError(Exception):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message}" + (f" (at {path})" if path else ""))


# ---------------------------------------------------------------------------
# Canonical JSON emission


def _emit(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise FormatError(f"cannot serialize non-finite number {obj!r}")
        out.append(format(obj, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for idx, item in enumerate(obj):
            if idx:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for idx, key in enumerate(sorted(obj)):
            if idx:
                out.append(",")
            if not isinstance(key, str):
                raise FormatError(f"object key {key!r} is not a string")
            _emit(key, out)
            out.append(":")
            _emit(obj[key], out)
        out.append("}")
    else:
        raise FormatError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    out: list[str] = []
    _emit(obj, out)
    return "".join(out) + "\n"


# ---------------------------------------------------------------------------
# Instance documents


def instance_to_document(m: TiMmdpInstance) -> dict:
    agents = []
    for local in m.locals:
        transitions = []
        for (s, a), outs in sorted(local.transitions.items()):
            transitions.append({
                "state": s, "action": a,
                "outcomes": [[dst, float(p)] for dst, p in sorted(outs)]})
        agents.append({
            "states": [{"id": st.id, "features": dict(st.features)}
                       for st in local.states],
            "actions": [{"id": ac.id, "label": ac.label}
                        for ac in local.actions],
            "transitions": transitions,
        })
    rewards = []
    for rf in m.rewards:
        entries = []
        for key in sorted(rf.table, key=repr):
            states, actions, nexts = key
            entries.append({
                "states": [_part_to_json(p) for p in states],
                "actions": list(actions),
                "next_states": [_part_to_json(p) for p in nexts],
                "value": float(rf.table[key]),
            })
        rewards.append({
            "scope": list(rf.scope),
            "default": float(rf.default),
            "feature_scope": (None if rf.feature_scope is None else
                              {str(j): list(f)
                               for j, f in rf.feature_scope.items()}),
            "entries": entries,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": m.metadata,
        "horizon": m.horizon,
        "initial": list(m.initial),
        "agents": agents,
        "rewards": rewards,
    }


def _part_to_json(part):
    if isinstance(part, tuple):
        return {"features": list(part)}
    return part


def _part_from_json(part, path: str):
    if isinstance(part, dict):
        _expect_fields(part, {"features"}, path)
        return tuple(part["features"])
    if isinstance(part, int) and not isinstance(part, bool):
        return part
    raise FormatError("state component must be an id or a feature object",
                      path)


def write_instance(m: TiMmdpInstance) -> str:
    """Canonical text for an instance; write then read is the identity."""
    return canonical_json(instance_to_document(m))


def _expect_fields(obj: dict, allowed: set[str], path: str,
                   required: set[str] | None = None) -> None:
    if not isinstance(obj, dict):
        raise FormatError("expected an object", path)
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"unknown field {sorted(unknown)[0]!r}", path)
    for name in (required if required is not None else allowed):
        if name not in obj:
            raise FormatError(f"missing field {name!r}", path)


def document_to_instance(doc: dict) -> TiMmdpInstance:
    _expect_fields(doc, {"schema_version", "metadata", "horizon", "initial",
                         "agents", "rewards"}, "$")
    version = str(doc["schema_version"])
    major = version.split(".")[0]
    if not major.isdigit() or int(major) > int(SCHEMA_VERSION):
        raise FormatError(f"unsupported schema version {version!r}",
                          "$.schema_version")
    locals_ = []
    for i, block in enumerate(doc["agents"]):
        path = f"$.agents[{i}]"
        _expect_fields(block, {"states", "actions", "transitions"}, path)
        states = tuple(
            LocalState(s["id"], dict(s["features"]))
            for s in (_checked(s, {"id", "features"}, f"{path}.states[{k}]")
                      for k, s in enumerate(block["states"])))
        actions = tuple(
            LocalAction(a["id"], a.get("label", ""))
            for a in (_checked(a, {"id", "label"}, f"{path}.actions[{k}]",
                               required={"id"})
                      for k, a in enumerate(block["actions"])))
        transitions = {}
        for k, tr in enumerate(block["transitions"]):
            tpath = f"{path}.transitions[{k}]"
            _expect_fields(tr, {"state", "action", "outcomes"}, tpath)
            outs = tuple((dst, float(p)) for dst, p in tr["outcomes"])
            transitions[(tr["state"], tr["action"])] = outs
        locals_.append(LocalMdp(states=states, actions=actions,
                                transitions=transitions))
    rewards = []
    for k, block in enumerate(doc["rewards"]):
        path = f"$.rewards[{k}]"
        _expect_fields(block, {"scope", "default", "feature_scope", "entries"},
                       path, required={"scope", "entries"})
        scope = tuple(block["scope"])
        feature_scope = None
        if block.get("feature_scope") is not None:
            feature_scope = {int(j): tuple(f)
                             for j, f in block["feature_scope"].items()}
        table = {}
        for e_idx, entry in enumerate(block["entries"]):
            epath = f"{path}.entries[{e_idx}]"
            _expect_fields(entry, {"states", "actions", "next_states",
                                   "value"}, epath)
            key = (tuple(_part_from_json(p, epath) for p in entry["states"]),
                   tuple(entry["actions"]),
                   tuple(_part_from_json(p, epath)
                         for p in entry["next_states"]))
            table[key] = entry["value"]
        rewards.append(RewardFunction(scope=scope, table=table,
                                      default=block.get("default", 0.0),
                                      feature_scope=feature_scope))
    return TiMmdpInstance(
        locals=tuple(locals_), rewards=rewards, horizon=doc["horizon"],
        initial=tuple(doc["initial"]), metadata=dict(doc.get("metadata", {})))


def _checked(obj: dict, allowed: set[str], path: str,
             required: set[str] | None = None) -> dict:
    _expect_fields(obj, allowed, path, required)
    return obj


def read_instance(text: str) -> TiMmdpInstance:
    """Parse an instance document; schema errors carry the field path.

    Parsing and validation are separate: a document can parse fine and
    still fail ``validate_instance``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"parse error at line {exc.lineno} "
                          f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", "$")
    return document_to_instance(doc)


# ---------------------------------------------------------------------------
# Result rows


RESULT_HEADER = ("instance", "algorithm", "status", "value",
                 "joint_actions_evaluated", "nodes_pruned",
                 "decouple_events", "wall_time_ms")


@dataclass
class ResultRow:
    instance: str
    algorithm: str                 # core | crg-ps | dp
    status: str                    # solved | timeout | resource
    value: float | None = None
    joint_actions_evaluated: int = 0
    nodes_pruned: int = 0
    decouple_events: int = 0
    wall_time_ms: int = 0


def write_results(rows: list[ResultRow]) -> str:
    """RFC-4180 CSV, fixed header, rows ordered by (instance, algorithm)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_HEADER)
    for row in sorted(rows, key=lambda r: (r.instance, r.algorithm)):
        value = "" if row.value is None else format(row.value, ".17g")
        writer.writerow([row.instance, row.algorithm, row.status, value,
                         row.joint_actions_evaluated, row.nodes_pruned,
                         row.decouple_events, row.wall_time_ms])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# DOT export


def _q(name: str) -> str:
    escaped = (name.replace("\\", "\\\\").replace('"', '\\"')
               .replace("\n", "\\n"))
    return '"' + escaped + '"'


def _pair_text(pair) -> str:
    before, after = pair
    return f"{before}→{after}"


def export_dot(g: ConditionalReturnGraph, bounds: bool = False) -> str:
    """Render the represented graph: circles for local states, points for
    action-tree internals, triangles for influence-tree roots; arcs carry
    action ids, wildcards, state pairs, no-influence marks and leaf rewards.
    """
    m = g.instance
    lines = [f"digraph crg_agent{g.owner} {{", "  rankdir=LR;"]
    for (t, s), node in sorted(g.nodes.items()):
        if not node.represented:
            continue
        label = f"s{s}@t{t}"
        if bounds:
            label += f"\n[{node.lower:.6g}, {node.upper:.6g}]"
        lines.append(f"  {_q(f'n_{t}_{s}')} [shape=circle, "
                     f"label={_q(label)}];")
    for (t, s), node in sorted(g.nodes.items()):
        if not node.represented or t >= g.horizon:
            continue
        for a in node.kept_actions:
            act_label = m.locals[g.owner].actions[a].label or str(a)
            for dst, _ in g.outcomes(s, a):
                tree = g.trees[(s, a, dst)]
                src = f"n_{t}_{s}"
                dst_name = f"n_{t + 1}_{dst}"
                if tree.degenerate:
                    for arc in tree.arcs.values():
                        lab = f"{act_label} : {arc.reward:.6g}"
                        lines.append(f"  {_q(src)} -> {_q(dst_name)} "
                                     f"[label={_q(lab)}];")
                    continue
                base = f"i_{t}_{s}_{a}_{dst}"
                n_act = sum(1 for kind, _ in tree.skeleton if kind == "act")
                internal = sorted(tree.internal_nodes(), key=repr)
                names = {prefix: f"{base}_{idx}"
                         for idx, prefix in enumerate(internal)}
                for prefix in internal:
                    shape = "triangle" if len(prefix) == n_act else "point"
                    lines.append(f"  {_q(names[prefix])} [shape={shape}, "
                                 f"label=\"\"];")
                lines.append(f"  {_q(src)} -> {_q(names[()])} "
                             f"[label={_q(act_label)}];")
                seen_edges = set()
                for labels, arc in sorted(tree.arcs.items(), key=repr):
                    for depth in range(len(labels)):
                        frm = labels[:depth]
                        to = labels[:depth + 1]
                        kind, agent = tree.skeleton[depth]
                        if to in names:
                            edge = (names[frm], names[to])
                            if edge in seen_edges:
                                continue
                            seen_edges.add(edge)
                            lab = _arc_label(m, kind, agent, labels[depth])
                            lines.append(f"  {_q(edge[0])} -> {_q(edge[1])} "
                                         f"[label={_q(lab)}];")
                        else:
                            lab = _arc_label(m, kind, agent, labels[depth])
                            lab += f" : {arc.reward:.6g}"
                            lines.append(f"  {_q(names[frm])} -> "
                                         f"{_q(dst_name)} [label={_q(lab)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _arc_label(m: TiMmdpInstance, kind: str, agent: int, label) -> str:
    if kind == "act":
        if label == WILDCARD:
            return f"*^{agent}"
        text = m.locals[agent].actions[label].label or str(label)
        return f"{text}^{agent}"
    if label == NO_INFLUENCE:
        return f"⊥^{agent}"
    return _pair_text(label)
