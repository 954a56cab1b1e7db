"""Scenario documents: the on-disk format for models, agents and runs.

A scenario is a versioned YAML document bundling everything one run needs:
the layered graphs, subgraph transitions, entanglement links, the agent
roster, the work items with their configured inspection outcomes, the
gesture vocabulary, and simulation parameters. ``load``/``loads`` fully
validate the document and every error carries a document location.

Schema (version 1)::

    version: 1
    name: <scenario name>
    agents:                       # at least one
      - id: operator
        class: human-operator     # free-form class tag
        group: Human              # reporting group (defaults to id)
        gesture_miss_probability: 0.0   # human agents only
    work_items:                   # optional; drives multi-round runs
      - id: obj_a
        outcome: faulty           # faulty | non-faulty | na
        duration_factor: 1.0      # scales scaled graphs' action means
    graphs:                       # document order is the Gamma order
      - id: G1
        layer: 0
        root: <node id>
        repeat: per-work-item     # or omit for a single round
        select_target: true       # rounds pick their item by rehearsal
        scale_with_item: true     # apply the item's duration factor
        auto_met_leaves: [..]     # met by perception at round start
        nodes:
          - {id: n, label: "...", processes: [{name: p, mean: 0, std: 0}]}
        hyper_arcs:
          - id: h
            children: [..]
            parent: n
            cost: 12.0
            actions:              # order = execution precedence
              - {id: a, label: approach, agents: [youbot_base],
                 mean: 12.0, std: 1.0, failure: 0.0, category: action}
    transitions:                  # back an upper arc with a subgraph
      - {graph: T, hyper_arc: h, subgraph: G1,
         child_map: {upper: lower-leaf}, parent_map: {upper: lower-root}}
    entanglements:
      - source: {graph: G1, node: r}
        dependent: {graph: G2, node: leaf}
    termination_graph: T          # optional when a single graph
    gestures:                     # gesture kind -> action label to resolve
      pick-up: {action_label: "pick up"}
    outcome_guards:               # arc only executable for this outcome
      - {graph: G2, hyper_arc: h_store_faulty, outcome: faulty}
    sim:
      seed: 7
      max_time: 20000.0
      retry_delay: 2.0
      gesture_repeat_delay: 3.0
      rehearsal_samples: 20
      rehearsal_seed: 1234
      overheads: {representation: 0.1, planning: 0.005, rehearsal: 0.5}
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ModelError, ScenarioError, ScenarioParseError, UnknownEntityError
from .graph import (
    Action,
    AgentId,
    GraphId,
    GraphStructure,
    HyperArc,
    Node,
    NodeId,
    ProcessSpec,
    validate_structure,
)
from .hierarchy import ConcurrentModel

SCHEMA_VERSION = 1
OUTCOMES = ("faulty", "non-faulty", "na")


@dataclass(frozen=True)
class AgentSpec:
    id: AgentId
    class_tag: str
    group: str
    gesture_miss_probability: float = 0.0


@dataclass(frozen=True)
class WorkItem:
    id: str
    outcome: str
    duration_factor: float = 1.0


@dataclass(frozen=True)
class GraphConfig:
    repeat_per_item: bool = False
    select_target: bool = False
    scale_with_item: bool = False
    auto_met_leaves: frozenset[NodeId] = frozenset()


@dataclass(frozen=True)
class OutcomeGuard:
    graph: GraphId
    hyper_arc: str
    outcome: str


@dataclass(frozen=True)
class SimParams:
    seed: int = 0
    max_time: float = 100000.0
    retry_delay: float = 2.0
    gesture_repeat_delay: float = 3.0
    rehearsal_samples: int = 20
    rehearsal_seed: int = 1234
    representation_overhead: float = 0.0
    planning_overhead: float = 0.0
    rehearsal_overhead: float = 0.0


@dataclass
class Scenario:
    """A fully validated scenario, ready to run."""

    name: str
    model: ConcurrentModel
    agents: dict[AgentId, AgentSpec]
    work_items: list[WorkItem]
    graph_config: dict[GraphId, GraphConfig]
    gestures: dict[str, str]  # gesture kind -> action label
    guards: dict[tuple[GraphId, str], str]  # (graph, arc) -> required outcome
    sim: SimParams

    def agent_classes(self) -> dict[AgentId, str]:
        return {a.id: a.class_tag for a in self.agents.values()}

    def guard_for(self, graph: GraphId, arc: str) -> str | None:
        return self.guards.get((graph, arc))


# -- parsing helpers -----------------------------------------------------


def _expect(value, kind, loc: str):
    if not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ScenarioError(f"expected {names}, got {type(value).__name__}", loc)
    return value


def _get(mapping: dict, key: str, kind, loc: str, default=None, required: bool = False):
    if key not in mapping:
        if required:
            raise ScenarioError(f"missing required field '{key}'", loc)
        return default
    return _expect(mapping[key], kind, f"{loc}.{key}")


def _number(mapping: dict, key: str, loc: str, default: float = 0.0, required: bool = False) -> float:
    v = _get(mapping, key, (int, float), loc, default, required)
    return float(v)


def _parse_action(raw: dict, loc: str) -> Action:
    _expect(raw, dict, loc)
    return Action(
        id=_get(raw, "id", str, loc, required=True),
        label=_get(raw, "label", str, loc, default=_get(raw, "id", str, loc, required=True)),
        eligible_agents=frozenset(_get(raw, "agents", list, loc, required=True)),
        duration_mean=_number(raw, "mean", loc),
        duration_std=_number(raw, "std", loc),
        failure_probability=_number(raw, "failure", loc),
        category=_get(raw, "category", str, loc, default="action"),
    )


def _parse_graph(raw: dict, loc: str) -> tuple[GraphStructure, GraphConfig]:
    _expect(raw, dict, loc)
    gid = _get(raw, "id", str, loc, required=True)
    nodes = []
    for i, nraw in enumerate(_get(raw, "nodes", list, loc, required=True)):
        nloc = f"{loc}.nodes[{i}]"
        _expect(nraw, dict, nloc)
        processes = tuple(
            ProcessSpec(
                name=_get(p, "name", str, f"{nloc}.processes[{j}]", required=True),
                duration_mean=_number(p, "mean", f"{nloc}.processes[{j}]"),
                duration_std=_number(p, "std", f"{nloc}.processes[{j}]"),
            )
            for j, p in enumerate(_get(nraw, "processes", list, nloc, default=[]))
        )
        nodes.append(
            Node(
                id=_get(nraw, "id", str, nloc, required=True),
                label=_get(nraw, "label", str, nloc, default=""),
                processes=processes,
            )
        )
    arcs = []
    for i, hraw in enumerate(_get(raw, "hyper_arcs", list, loc, default=[])):
        hloc = f"{loc}.hyper_arcs[{i}]"
        _expect(hraw, dict, hloc)
        actions = tuple(
            _parse_action(a, f"{hloc}.actions[{j}]")
            for j, a in enumerate(_get(hraw, "actions", list, hloc, default=[]))
        )
        arcs.append(
            HyperArc(
                id=_get(hraw, "id", str, hloc, required=True),
                children=frozenset(_get(hraw, "children", list, hloc, required=True)),
                parent=_get(hraw, "parent", str, hloc, required=True),
                actions=actions,
                cost=_number(hraw, "cost", hloc, default=sum(a.duration_mean for a in actions)),
            )
        )
    graph = GraphStructure(
        id=gid,
        nodes=tuple(sorted(nodes, key=lambda n: n.id)),
        hyper_arcs=tuple(sorted(arcs, key=lambda h: h.id)),
        root=_get(raw, "root", str, loc, required=True),
        layer=int(_number(raw, "layer", loc, default=0.0)),
    )
    repeat = _get(raw, "repeat", str, loc, default="once")
    if repeat not in ("once", "per-work-item"):
        raise ScenarioError(f"unknown repeat mode '{repeat}'", f"{loc}.repeat")
    cfg = GraphConfig(
        repeat_per_item=repeat == "per-work-item",
        select_target=bool(_get(raw, "select_target", bool, loc, default=False)),
        scale_with_item=bool(_get(raw, "scale_with_item", bool, loc, default=False)),
        auto_met_leaves=frozenset(_get(raw, "auto_met_leaves", list, loc, default=[])),
    )
    return graph, cfg


def loads(text: str, name_hint: str = "<scenario>") -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}" if mark is not None else name_hint
        raise ScenarioParseError(f"not valid YAML: {exc}", loc) from exc
    _expect(doc, dict, "document")

    version = _get(doc, "version", int, "document", required=True)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {version}", "document.version")
    name = _get(doc, "name", str, "document", default=name_hint)

    agents: dict[AgentId, AgentSpec] = {}
    for i, raw in enumerate(_get(doc, "agents", list, "document", required=True)):
        loc = f"agents[{i}]"
        _expect(raw, dict, loc)
        spec = AgentSpec(
            id=_get(raw, "id", str, loc, required=True),
            class_tag=_get(raw, "class", str, loc, required=True),
            group=_get(raw, "group", str, loc, default=_get(raw, "id", str, loc, required=True)),
            gesture_miss_probability=_number(raw, "gesture_miss_probability", loc),
        )
        if spec.id in agents:
            raise ScenarioError(f"duplicate agent id '{spec.id}'", loc)
        if not 0.0 <= spec.gesture_miss_probability <= 1.0:
            raise ScenarioError("gesture_miss_probability outside [0,1]", loc)
        if spec.gesture_miss_probability > 0 and spec.class_tag != "human-operator":
            raise ScenarioError("gesture_miss_probability is for human agents only", loc)
        agents[spec.id] = spec
    if not agents:
        raise ScenarioError("at least one agent is required", "agents")

    work_items: list[WorkItem] = []
    for i, raw in enumerate(_get(doc, "work_items", list, "document", default=[])):
        loc = f"work_items[{i}]"
        _expect(raw, dict, loc)
        item = WorkItem(
            id=_get(raw, "id", str, loc, required=True),
            outcome=_get(raw, "outcome", str, loc, default="non-faulty"),
            duration_factor=_number(raw, "duration_factor", loc, default=1.0),
        )
        if item.outcome not in OUTCOMES:
            raise ScenarioError(f"unknown outcome '{item.outcome}'", loc)
        if item.duration_factor <= 0:
            raise ScenarioError("duration_factor must be > 0", loc)
        if any(w.id == item.id for w in work_items):
            raise ScenarioError(f"duplicate work item id '{item.id}'", loc)
        work_items.append(item)

    graphs: list[GraphStructure] = []
    graph_cfg: dict[GraphId, GraphConfig] = {}
    for i, raw in enumerate(_get(doc, "graphs", list, "document", required=True)):
        loc = f"graphs[{i}]"
        graph, cfg = _parse_graph(raw, loc)
        violations = validate_structure(graph)
        if violations:
            raise ScenarioError(
                f"graph '{graph.id}' is not a valid AND/OR graph: "
                + "; ".join(violations),
                loc,
            )
        for leaf in sorted(cfg.auto_met_leaves):
            if leaf not in graph.leaves:
                raise ScenarioError(
                    f"auto_met leaf '{leaf}' is not a leaf of '{graph.id}'", loc
                )
        graphs.append(graph)
        graph_cfg[graph.id] = cfg

    try:
        model = ConcurrentModel(
            graphs, _get(doc, "termination_graph", str, "document", default=None)
        )
    except (ModelError, UnknownEntityError) as exc:
        raise ScenarioError(str(exc), "graphs") from exc

    for i, raw in enumerate(_get(doc, "transitions", list, "document", default=[])):
        loc = f"transitions[{i}]"
        _expect(raw, dict, loc)
        try:
            model.attach_subgraph(
                graph=_get(raw, "graph", str, loc, required=True),
                hyper_arc=_get(raw, "hyper_arc", str, loc, required=True),
                subgraph=_get(raw, "subgraph", str, loc, required=True),
                child_map=dict(_get(raw, "child_map", dict, loc, required=True)),
                parent_map=dict(_get(raw, "parent_map", dict, loc, required=True)),
            )
        except (ModelError, UnknownEntityError) as exc:
            raise ScenarioError(str(exc), loc) from exc

    for i, raw in enumerate(_get(doc, "entanglements", list, "document", default=[])):
        loc = f"entanglements[{i}]"
        _expect(raw, dict, loc)
        src = _get(raw, "source", dict, loc, required=True)
        dep = _get(raw, "dependent", dict, loc, required=True)
        try:
            model.link_entangled(
                (
                    _get(src, "graph", str, f"{loc}.source", required=True),
                    _get(src, "node", str, f"{loc}.source", required=True),
                ),
                (
                    _get(dep, "graph", str, f"{loc}.dependent", required=True),
                    _get(dep, "node", str, f"{loc}.dependent", required=True),
                ),
            )
        except (ModelError, UnknownEntityError) as exc:
            raise ScenarioError(str(exc), loc) from exc

    problems = model.validate()
    if problems:
        raise ScenarioError("; ".join(problems), "document")

    # Every action's eligibility set must resolve to at least one agent.
    classes = {a.id for a in agents.values()} | {a.class_tag for a in agents.values()}
    for g in graphs:
        for h in g.hyper_arcs:
            for a in h.actions:
                if not a.eligible_agents & classes:
                    raise ScenarioError(
                        f"action '{a.id}' of '{g.id}:{h.id}' matches no agent",
                        f"graphs[{g.id}]",
                    )

    gestures: dict[str, str] = {}
    for kind, raw in sorted(
        (_get(doc, "gestures", dict, "document", default={}) or {}).items()
    ):
        loc = f"gestures.{kind}"
        _expect(raw, dict, loc)
        gestures[kind] = _get(raw, "action_label", str, loc, required=True)

    guards: dict[tuple[GraphId, str], str] = {}
    for i, raw in enumerate(_get(doc, "outcome_guards", list, "document", default=[])):
        loc = f"outcome_guards[{i}]"
        _expect(raw, dict, loc)
        gid = _get(raw, "graph", str, loc, required=True)
        arc = _get(raw, "hyper_arc", str, loc, required=True)
        outcome = _get(raw, "outcome", str, loc, required=True)
        if outcome not in OUTCOMES:
            raise ScenarioError(f"unknown outcome '{outcome}'", loc)
        try:
            model.graph(gid).arc(arc)
        except UnknownEntityError as exc:
            raise ScenarioError(str(exc), loc) from exc
        guards[(gid, arc)] = outcome

    sim_raw = _get(doc, "sim", dict, "document", default={}) or {}
    overheads = _get(sim_raw, "overheads", dict, "sim", default={}) or {}
    sim = SimParams(
        seed=int(_number(sim_raw, "seed", "sim", default=0.0)),
        max_time=_number(sim_raw, "max_time", "sim", default=100000.0),
        retry_delay=_number(sim_raw, "retry_delay", "sim", default=2.0),
        gesture_repeat_delay=_number(sim_raw, "gesture_repeat_delay", "sim", default=3.0),
        rehearsal_samples=int(_number(sim_raw, "rehearsal_samples", "sim", default=20.0)),
        rehearsal_seed=int(_number(sim_raw, "rehearsal_seed", "sim", default=1234.0)),
        representation_overhead=_number(overheads, "representation", "sim.overheads"),
        planning_overhead=_number(overheads, "planning", "sim.overheads"),
        rehearsal_overhead=_number(overheads, "rehearsal", "sim.overheads"),
    )

    return Scenario(
        name=name,
        model=model,
        agents=agents,
        work_items=work_items,
        graph_config=graph_cfg,
        gestures=gestures,
        guards=guards,
        sim=sim,
    )


def load(path: str | Path) -> Scenario:
    p = Path(path)
    return loads(p.read_text(encoding="utf-8"), name_hint=p.stem)


# -- serialization -------------------------------------------------------


def to_document(s: Scenario) -> dict:
    """Canonical plain-data form of a scenario (stable ordering)."""
    doc: dict = {"version": SCHEMA_VERSION, "name": s.name}
    doc["agents"] = [
        {
            "id": a.id,
            "class": a.class_tag,
            "group": a.group,
            "gesture_miss_probability": a.gesture_miss_probability,
        }
        for a in sorted(s.agents.values(), key=lambda a: a.id)
    ]
    doc["work_items"] = [
        {"id": w.id, "outcome": w.outcome, "duration_factor": w.duration_factor}
        for w in s.work_items
    ]
    doc["graphs"] = []
    for g in s.model.gamma_order():
        cfg = s.graph_config[g.id]
        doc["graphs"].append(
            {
                "id": g.id,
                "layer": g.layer,
                "root": g.root,
                "repeat": "per-work-item" if cfg.repeat_per_item else "once",
                "select_target": cfg.select_target,
                "scale_with_item": cfg.scale_with_item,
                "auto_met_leaves": sorted(cfg.auto_met_leaves),
                "nodes": [
                    {
                        "id": n.id,
                        "label": n.label,
                        "processes": [
                            {"name": p.name, "mean": p.duration_mean, "std": p.duration_std}
                            for p in n.processes
                        ],
                    }
                    for n in g.nodes
                ],
                "hyper_arcs": [
                    {
                        "id": h.id,
                        "children": sorted(h.children),
                        "parent": h.parent,
                        "cost": h.cost,
                        "actions": [
                            {
                                "id": a.id,
                                "label": a.label,
                                "agents": sorted(a.eligible_agents),
                                "mean": a.duration_mean,
                                "std": a.duration_std,
                                "failure": a.failure_probability,
                                "category": a.category,
                            }
                            for a in h.actions
                        ],
                    }
                    for h in g.hyper_arcs
                ],
            }
        )
    doc["transitions"] = [
        {
            "graph": t.graph,
            "hyper_arc": t.hyper_arc,
            "subgraph": t.subgraph,
            "child_map": dict(t.child_map),
            "parent_map": {t.parent_map[0]: t.parent_map[1]},
        }
        for t in (s.model.transitions[k] for k in sorted(s.model.transitions))
    ]
    doc["entanglements"] = [
        {
            "source": {"graph": l.source_graph, "node": l.source_node},
            "dependent": {"graph": l.dependent_graph, "node": l.dependent_node},
        }
        for l in sorted(s.model.entanglements, key=lambda l: (l.source, l.dependent))
    ]
    doc["termination_graph"] = s.model.termination_graph
    doc["gestures"] = {
        kind: {"action_label": label} for kind, label in sorted(s.gestures.items())
    }
    doc["outcome_guards"] = [
        {"graph": g, "hyper_arc": h, "outcome": o}
        for (g, h), o in sorted(s.guards.items())
    ]
    doc["sim"] = {
        "seed": s.sim.seed,
        "max_time": s.sim.max_time,
        "retry_delay": s.sim.retry_delay,
        "gesture_repeat_delay": s.sim.gesture_repeat_delay,
        "rehearsal_samples": s.sim.rehearsal_samples,
        "rehearsal_seed": s.sim.rehearsal_seed,
        "overheads": {
            "representation": s.sim.representation_overhead,
            "planning": s.sim.planning_overhead,
            "rehearsal": s.sim.rehearsal_overhead,
        },
    }
    return doc


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(to_document(s), sort_keys=False, width=100)


# -- bundled scenarios ---------------------------------------------------


def bundled_names() -> list[str]:
    data = importlib.resources.files("andorplan") / "data"
    return sorted(p.name[: -len(".yaml")] for p in data.iterdir() if p.name.endswith(".yaml"))


def bundled_text(name: str) -> str:
    data = importlib.resources.files("andorplan") / "data" / f"{name}.yaml"
    try:
        return data.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UnknownEntityError(
            f"no bundled scenario '{name}' (have: {', '.join(bundled_names())})"
        ) from None


def load_bundled(name: str) -> Scenario:
    return loads(bundled_text(name), name_hint=name)


# -- graph export --------------------------------------------------------


def export_dot(model: ConcurrentModel, graph_id: GraphId) -> str:
    """Deterministic Graphviz description of one graph.

    State nodes render as ellipses, hyper-arcs as point-shaped fan-in
    junctions; nodes that take part in an entanglement link are drawn red.
    """
    g = model.graph(graph_id)
    entangled = {
        l.source_node for l in model.entanglements if l.source_graph == graph_id
    } | {
        l.dependent_node for l in model.entanglements if l.dependent_graph == graph_id
    }
    lines = [f'digraph "{graph_id}" {{', "  rankdir=BT;", '  node [shape=ellipse];']
    for n in g.nodes:
        attrs = [f'label="{n.display}"']
        if n.id in entangled:
            attrs.append("color=red")
            attrs.append("fontcolor=red")
        lines.append(f'  "{n.id}" [{", ".join(attrs)}];')
    for h in g.hyper_arcs:
        junction = f"{h.id}__junction"
        label = h.id if not h.actions else f"{h.id}\\n" + "; ".join(
            a.label for a in h.actions
        )
        lines.append(f'  "{junction}" [shape=point, width=0.08, xlabel="{h.id}"];')
        for c in sorted(h.children):
            lines.append(f'  "{c}" -> "{junction}" [dir=none];')
        lines.append(f'  "{junction}" -> "{h.parent}" [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
