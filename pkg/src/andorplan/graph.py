"""Single-layer AND/OR graph data model.

A graph is a set of cooperation-state nodes plus many-to-one hyper-arcs.
A hyper-arc's children are jointly required (logical AND); several arcs
sharing one parent are alternatives (logical OR). Each arc carries an
ordered action list whose list order is the execution precedence.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .errors import UnknownEntityError

NodeId = str
HyperArcId = str
ActionId = str
GraphId = str
AgentId = str


@dataclass(frozen=True)
class ProcessSpec:
    """A behavior active in a state; runs there but causes no transition."""

    name: str
    duration_mean: float = 0.0
    duration_std: float = 0.0


@dataclass(frozen=True)
class Node:
    id: NodeId
    label: str = ""
    processes: tuple[ProcessSpec, ...] = ()

    @property
    def display(self) -> str:
        return self.label or self.id


@dataclass(frozen=True)
class Action:
    """One agent-executable step inside a hyper-arc.

    ``eligible_agents`` may hold agent ids or agent-class tags; the scenario
    loader resolves class tags to concrete ids. ``category`` is a reporting
    bucket only (representation / planning / rehearsal / action).
    """

    id: ActionId
    label: str
    eligible_agents: frozenset[str]
    duration_mean: float = 0.0
    duration_std: float = 0.0
    failure_probability: float = 0.0
    category: str = "action"

    def check(self) -> list[str]:
        problems = []
        if not self.eligible_agents:
            problems.append(f"action '{self.id}': eligible agent set is empty")
        if self.duration_mean < 0:
            problems.append(f"action '{self.id}': duration mean < 0")
        if self.duration_std < 0:
            problems.append(f"action '{self.id}': duration std-dev < 0")
        if not 0.0 <= self.failure_probability <= 1.0:
            problems.append(f"action '{self.id}': failure probability outside [0,1]")
        return problems


@dataclass(frozen=True)
class HyperArc:
    """Many-to-one transition: all children met -> parent reachable.

    The action tuple order is the total precedence order; actions must be
    completed front to back.
    """

    id: HyperArcId
    children: frozenset[NodeId]
    parent: NodeId
    actions: tuple[Action, ...] = ()
    cost: float = 0.0

    def action_ids(self) -> tuple[ActionId, ...]:
        return tuple(a.id for a in self.actions)


@dataclass(frozen=True)
class GraphStructure:
    """Immutable 1-layer AND/OR graph: nodes, hyper-arcs and a root."""

    id: GraphId
    nodes: tuple[Node, ...]
    hyper_arcs: tuple[HyperArc, ...]
    root: NodeId
    layer: int = 0

    @cached_property
    def node_by_id(self) -> dict[NodeId, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def arc_by_id(self) -> dict[HyperArcId, HyperArc]:
        return {h.id: h for h in self.hyper_arcs}

    @cached_property
    def arcs_into(self) -> dict[NodeId, tuple[HyperArc, ...]]:
        """Arcs whose parent is the given node, sorted by arc id."""
        out: dict[NodeId, list[HyperArc]] = {n.id: [] for n in self.nodes}
        for h in self.hyper_arcs:
            out.setdefault(h.parent, []).append(h)
        return {n: tuple(sorted(v, key=lambda h: h.id)) for n, v in out.items()}

    @cached_property
    def arcs_using(self) -> dict[NodeId, tuple[HyperArc, ...]]:
        """Arcs having the given node among their children, sorted by arc id."""
        out: dict[NodeId, list[HyperArc]] = {n.id: [] for n in self.nodes}
        for h in self.hyper_arcs:
            for c in h.children:
                out.setdefault(c, []).append(h)
        return {n: tuple(sorted(v, key=lambda h: h.id)) for n, v in out.items()}

    @cached_property
    def leaves(self) -> frozenset[NodeId]:
        """Nodes that are not the parent of any hyper-arc."""
        parents = {h.parent for h in self.hyper_arcs}
        return frozenset(n.id for n in self.nodes if n.id not in parents)

    def is_leaf(self, node: NodeId) -> bool:
        return node in self.leaves

    def node(self, node_id: NodeId) -> Node:
        try:
            return self.node_by_id[node_id]
        except KeyError:
            raise UnknownEntityError(
                f"graph '{self.id}' has no node '{node_id}'"
            ) from None

    def arc(self, arc_id: HyperArcId) -> HyperArc:
        try:
            return self.arc_by_id[arc_id]
        except KeyError:
            raise UnknownEntityError(
                f"graph '{self.id}' has no hyper-arc '{arc_id}'"
            ) from None


def validate_structure(g: GraphStructure) -> list[str]:
    """Check every structural invariant; return violations (empty == valid).

    Violations are data, not faults: callers decide whether to raise.
    """
    report: list[str] = []

    seen_nodes: set[NodeId] = set()
    for n in g.nodes:
        if not n.id:
            report.append("node with empty id")
        if n.id in seen_nodes:
            report.append(f"duplicate node id '{n.id}'")
        seen_nodes.add(n.id)

    seen_arcs: set[HyperArcId] = set()
    for h in g.hyper_arcs:
        if not h.id:
            report.append("hyper-arc with empty id")
        if h.id in seen_arcs:
            report.append(f"duplicate hyper-arc id '{h.id}'")
        seen_arcs.add(h.id)

        if not h.children:
            report.append(f"hyper-arc '{h.id}': children set is empty")
        if h.parent in h.children:
            report.append(f"hyper-arc '{h.id}': parent ∈ children")
        if h.cost < 0:
            report.append(f"hyper-arc '{h.id}': cost < 0")
        for ref in sorted(h.children) + [h.parent]:
            if ref not in seen_nodes and ref not in {n.id for n in g.nodes}:
                report.append(f"hyper-arc '{h.id}': unknown node '{ref}'")
        action_ids = set()
        for a in h.actions:
            if a.id in action_ids:
                report.append(f"hyper-arc '{h.id}': duplicate action id '{a.id}'")
            action_ids.add(a.id)
            report.extend(a.check())

    node_ids = {n.id for n in g.nodes}
    if g.root not in node_ids:
        report.append(f"root '{g.root}' is not a node")
        return report  # nothing below is meaningful without a root

    for h in g.hyper_arcs:
        if g.root in h.children:
            report.append(f"hyper-arc '{h.id}': root among children")

    # Connectivity: walk from the root down through children.
    reachable: set[NodeId] = set()
    stack = [g.root]
    while stack:
        n = stack.pop()
        if n in reachable:
            continue
        reachable.add(n)
        for h in g.arcs_into.get(n, ()):
            stack.extend(h.children)
    for n in sorted(node_ids - reachable):
        report.append(f"node '{n}' unreachable from root")

    # Acyclicity: no node may be its own ancestor through any arc chain.
    state: dict[NodeId, int] = {}  # 0 visiting, 1 done

    def visit(node: NodeId, trail: tuple[NodeId, ...]) -> None:
        if state.get(node) == 1:
            return
        if state.get(node) == 0:
            report.append(f"cycle through node '{node}'")
            return
        state[node] = 0
        for h in g.arcs_into.get(node, ()):
            for c in sorted(h.children):
                visit(c, trail + (node,))
        state[node] = 1

    visit(g.root, ())

    if g.layer < 0:
        report.append("layer < 0")

    return report
