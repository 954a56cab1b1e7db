"""Layered AND/OR graphs: subgraph transitions and entangled nodes.

A multi-layer model is an ordered family of graphs plus two connection
mechanisms:

* a *transition* backs a hyper-arc of an upper graph with a whole lower
  graph; the arc's feasible/solved flags mirror the subgraph's (a graph is
  feasible while it has at least one feasible node or arc, and solved when
  its root is met);
* an *entanglement link* mirrors the met flag of a source node onto a leaf
  of another graph, so a dependent graph can wait on external progress.

The top layer of a concurrent model encodes the termination condition for
everything below it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .episode import Episode, EpisodeStatus
from .errors import ModelError, UnknownEntityError
from .graph import GraphId, GraphStructure, HyperArcId, NodeId


@dataclass(frozen=True)
class LayerTransition:
    """Backs one hyper-arc with a lower-layer subgraph.

    ``child_map`` sends the arc's children to leaves of the subgraph (total
    and injective); ``parent_map`` sends the arc's parent to the subgraph
    root. Both express that the two layers describe the same thing at
    different granularity.
    """

    graph: GraphId
    hyper_arc: HyperArcId
    subgraph: GraphId
    child_map: tuple[tuple[NodeId, NodeId], ...]
    parent_map: tuple[NodeId, NodeId]

    @property
    def key(self) -> tuple[GraphId, HyperArcId]:
        return (self.graph, self.hyper_arc)


@dataclass(frozen=True)
class EntanglementLink:
    """met(dependent) must always mirror met(source); dependent is a leaf."""

    source_graph: GraphId
    source_node: NodeId
    dependent_graph: GraphId
    dependent_node: NodeId

    @property
    def source(self) -> tuple[GraphId, NodeId]:
        return (self.source_graph, self.source_node)

    @property
    def dependent(self) -> tuple[GraphId, NodeId]:
        return (self.dependent_graph, self.dependent_node)


class ConcurrentModel:
    """An ordered set of graphs plus transitions and entanglement links.

    Built once by the scenario loader (or by hand in tests) and treated as
    immutable afterwards; all run-time state lives in per-graph episodes.
    """

    def __init__(self, graphs: list[GraphStructure], termination_graph: GraphId | None = None):
        self.graphs: dict[GraphId, GraphStructure] = {}
        for g in graphs:
            if g.id in self.graphs:
                raise ModelError(f"duplicate graph id '{g.id}'")
            self.graphs[g.id] = g
        if not self.graphs:
            raise ModelError("model has no graphs")
        if termination_graph is None:
            top = max(g.layer for g in graphs)
            candidates = [g.id for g in graphs if g.layer == top]
            if len(candidates) != 1:
                raise ModelError(
                    "termination graph is ambiguous; pass it explicitly"
                )
            termination_graph = candidates[0]
        if termination_graph not in self.graphs:
            raise UnknownEntityError(f"unknown termination graph '{termination_graph}'")
        self.termination_graph = termination_graph
        self.transitions: dict[tuple[GraphId, HyperArcId], LayerTransition] = {}
        self.transition_into: dict[GraphId, LayerTransition] = {}
        self.entanglements: list[EntanglementLink] = []

    # -- construction ----------------------------------------------------

    def graph(self, graph_id: GraphId) -> GraphStructure:
        try:
            return self.graphs[graph_id]
        except KeyError:
            raise UnknownEntityError(f"unknown graph '{graph_id}'") from None

    def gamma_order(self) -> list[GraphStructure]:
        """Graphs in registration order (lowest layers first)."""
        return list(self.graphs.values())

    def attach_subgraph(
        self,
        graph: GraphId,
        hyper_arc: HyperArcId,
        subgraph: GraphId,
        child_map: dict[NodeId, NodeId],
        parent_map: dict[NodeId, NodeId],
    ) -> LayerTransition:
        """Record a transition backing ``hyper_arc`` with ``subgraph``."""
        owner = self.graph(graph)
        sub = self.graph(subgraph)
        arc = owner.arc(hyper_arc)

        if sub.layer >= owner.layer:
            raise ModelError(
                f"subgraph '{subgraph}' (layer {sub.layer}) must sit below "
                f"'{graph}' (layer {owner.layer})"
            )
        if (graph, hyper_arc) in self.transitions:
            raise ModelError(f"hyper-arc '{hyper_arc}' of '{graph}' already backed")
        if subgraph in self.transition_into:
            raise ModelError(f"graph '{subgraph}' already targeted by a transition")
        if set(child_map) != set(arc.children):
            raise ModelError(
                f"child map must cover exactly the children of '{hyper_arc}'"
            )
        if len(set(child_map.values())) != len(child_map):
            raise ModelError("child map is not injective")
        for upper, lower in sorted(child_map.items()):
            if lower not in sub.leaves:
                raise ModelError(
                    f"child map target '{lower}' is not a leaf of '{subgraph}'"
                )
        if set(parent_map) != {arc.parent}:
            raise ModelError(f"parent map must map exactly the parent of '{hyper_arc}'")
        if parent_map[arc.parent] != sub.root:
            raise ModelError(
                f"parent map must target the root '{sub.root}' of '{subgraph}'"
            )

        t = LayerTransition(
            graph=graph,
            hyper_arc=hyper_arc,
            subgraph=subgraph,
            child_map=tuple(sorted(child_map.items())),
            parent_map=(arc.parent, sub.root),
        )
        self.transitions[t.key] = t
        self.transition_into[subgraph] = t
        return t

    def link_entangled(
        self, source: tuple[GraphId, NodeId], dependent: tuple[GraphId, NodeId]
    ) -> EntanglementLink:
        """Record a met-mirror link; the dependent node must be a leaf."""
        sg, sn = source
        dg, dn = dependent
        if sg == dg:
            raise ModelError("source and dependent graphs must differ")
        self.graph(sg).node(sn)
        dep_graph = self.graph(dg)
        dep_graph.node(dn)
        if dn not in dep_graph.leaves:
            raise ModelError(f"dependent node '{dn}' is not a leaf of '{dg}'")
        link = EntanglementLink(sg, sn, dg, dn)
        if self._dependency_cycle(link):
            raise ModelError(
                f"link {sg}:{sn} -> {dg}:{dn} would create a dependency cycle"
            )
        self.entanglements.append(link)
        return link

    def _dependency_cycle(self, new: EntanglementLink) -> bool:
        edges: dict[GraphId, set[GraphId]] = {}
        for l in self.entanglements + [new]:
            edges.setdefault(l.source_graph, set()).add(l.dependent_graph)
        seen: set[GraphId] = set()

        def reaches(node: GraphId, target: GraphId) -> bool:
            if node == target:
                return True
            if node in seen:
                return False
            seen.add(node)
            return any(reaches(n, target) for n in sorted(edges.get(node, ())))

        return reaches(new.dependent_graph, new.source_graph)

    def links_from(self, source: tuple[GraphId, NodeId]) -> list[EntanglementLink]:
        return sorted(
            (l for l in self.entanglements if l.source == source),
            key=lambda l: l.dependent,
        )

    def gated_leaves(self, graph_id: GraphId) -> frozenset[NodeId]:
        """Leaves of a graph whose met flag mirrors another graph's node."""
        return frozenset(
            l.dependent_node for l in self.entanglements if l.dependent_graph == graph_id
        )

    def backed_arcs(self, graph_id: GraphId) -> frozenset[HyperArcId]:
        return frozenset(
            t.hyper_arc for t in self.transitions.values() if t.graph == graph_id
        )

    # -- validation ------------------------------------------------------

    def validate(self) -> list[str]:
        """Structural violations of the layered model (empty == valid)."""
        report: list[str] = []
        order = self.gamma_order()
        for earlier, later in zip(order, order[1:]):
            if earlier.layer > later.layer:
                report.append(
                    f"graph order violates layering: '{earlier.id}' (layer "
                    f"{earlier.layer}) precedes '{later.id}' (layer {later.layer})"
                )
        top = max(g.layer for g in order)
        tops = [g.id for g in order if g.layer == top]
        if tops != [self.termination_graph]:
            report.append(
                f"termination graph must be the unique highest layer; found {tops}"
            )
        for t in self.transitions.values():
            if self.graph(t.subgraph).layer >= self.graph(t.graph).layer:
                report.append(f"transition into '{t.subgraph}' does not descend a layer")
        # Tree shape over the transition relation.
        children: dict[GraphId, list[GraphId]] = {}
        for t in self.transitions.values():
            children.setdefault(t.graph, []).append(t.subgraph)
        seen: set[GraphId] = set()
        stack = [self.termination_graph]
        while stack:
            g = stack.pop()
            if g in seen:
                report.append(f"transition structure revisits graph '{g}'")
                continue
            seen.add(g)
            stack.extend(children.get(g, ()))
        return report


# -- episode orchestration over a model ---------------------------------


def initialize_episodes(
    model: ConcurrentModel,
    initially_met: dict[GraphId, set[NodeId]] | None = None,
) -> dict[GraphId, Episode]:
    """Fresh episodes for every graph, settled to the first fixed point.

    Entangled leaves start gated (neither met nor feasible) and backed arcs
    start slaved, so a freshly initialized model is already consistent.
    """
    initially_met = initially_met or {}
    states = {
        g.id: Episode(
            g,
            initially_met_leaves=initially_met.get(g.id, set()),
            gated_leaves=model.gated_leaves(g.id),
            backed_arcs=model.backed_arcs(g.id),
        )
        for g in model.gamma_order()
    }
    for g_id, ep in sorted(states.items()):
        for n in sorted(ep.met):
            propagate_entanglement(model, states, (g_id, n))
    sync_hierarchy(model, states)
    return states


def propagate_entanglement(
    model: ConcurrentModel,
    states: dict[GraphId, Episode],
    changed: tuple[GraphId, NodeId],
    skip_links: set[tuple[tuple[GraphId, NodeId], tuple[GraphId, NodeId]]] | None = None,
) -> list[tuple[GraphId, NodeId]]:
    """Mirror a freshly met node onto every entangled dependent, cascading.

    Returns the (graph, node) pairs met by the cascade, in dependency
    order. Already-met dependents are recorded as idempotent no-ops and do
    not cascade further.
    """
    skip = skip_links or set()
    cascade: list[tuple[GraphId, NodeId]] = []
    frontier = [changed]
    while frontier:
        src = frontier.pop(0)
        for link in model.links_from(src):
            if (link.source, link.dependent) in skip:
                continue
            dep_state = states[link.dependent_graph]
            if dep_state.is_met(link.dependent_node):
                continue
            dep_state.mirror_met(link.dependent_node)
            cascade.append(link.dependent)
            frontier.append(link.dependent)
    return cascade


def graph_feasible(ep: Episode) -> bool:
    """A graph is feasible while anything in it is feasible."""
    nodes, arcs = ep.feasible_sets()
    return bool(nodes or arcs)


def sync_hierarchy(
    model: ConcurrentModel,
    states: dict[GraphId, Episode],
    status_override: dict[GraphId, tuple[bool, bool]] | None = None,
) -> list[tuple]:
    """Slave every backed arc to its subgraph and run to a fixed point.

    Each pass mirrors subgraph feasibility onto the backing arc, solves
    arcs whose subgraph is solved, and propagates the entanglement of
    nodes met along the way. ``status_override`` may substitute a
    (feasible, solved) pair for a subgraph, which multi-round drivers use
    to aggregate repeated episodes.

    Returns the list of propagated changes.
    """
    for g in model.gamma_order():
        if g.id not in states:
            raise ModelError(f"missing episode state for graph '{g.id}'")
    overrides = status_override or {}
    changes: list[tuple] = []
    # Flags are monotone, so this terminates well inside the bound below.
    bound = len(model.graphs) * (
        sum(len(g.nodes) + len(g.hyper_arcs) for g in model.gamma_order()) + 1
    )
    for _ in range(bound):
        changed = False
        for key in sorted(model.transitions):
            t = model.transitions[key]
            upper = states[t.graph]
            sub = states[t.subgraph]
            if upper.is_suppressed(t.hyper_arc):
                continue  # an alternative won; the subgraph is abandoned
            if t.subgraph in overrides:
                sub_feasible, sub_solved = overrides[t.subgraph]
            else:
                sub_feasible = graph_feasible(sub)
                sub_solved = sub.status is EpisodeStatus.SOLVED
            if sub_solved and not upper.is_solved(t.hyper_arc):
                parent_feasible, suppressed = upper.solve_hyper_arc(
                    t.hyper_arc, external=True
                )
                changes.append(("solved", t.graph, t.hyper_arc, suppressed))
                changed = True
            if not upper.is_solved(t.hyper_arc):
                if upper.is_arc_feasible(t.hyper_arc) != sub_feasible:
                    upper.set_backed_feasible(t.hyper_arc, sub_feasible)
                    changes.append(("feasible", t.graph, t.hyper_arc, sub_feasible))
                    changed = True
                if (
                    not sub_feasible
                    and not sub_solved
                    and t.hyper_arc not in upper.dead_backed
                ):
                    upper.mark_backed_dead(t.hyper_arc)
                    changes.append(("dead", t.graph, t.hyper_arc))
                    changed = True
        if not changed:
            break
    else:
        raise ModelError("hierarchy propagation did not reach a fixed point")
    return changes


def check_invariants(
    model: ConcurrentModel,
    states: dict[GraphId, Episode],
    skip_links: set[tuple[tuple[GraphId, NodeId], tuple[GraphId, NodeId]]] | None = None,
    skip_transitions: set[tuple[GraphId, HyperArcId]] | None = None,
) -> list[str]:
    """Re-derive every flag from first principles and report mismatches.

    Used by the simulator's validator mode and by tests; the rules here are
    evaluated directly from the definitions rather than incrementally.
    """
    problems: list[str] = []
    skip = skip_links or set()
    skip_t = skip_transitions or set()

    for g_id, ep in sorted(states.items()):
        g = ep.graph
        for n in g.nodes:
            met = ep.is_met(n.id)
            feasible = ep.is_node_feasible(n.id)
            if met and feasible:
                problems.append(f"{g_id}:{n.id} both met and feasible")
            if n.id in ep.gated and not met:
                if feasible:
                    problems.append(f"{g_id}:{n.id} gated leaf feasible before mirror")
                continue
            expect = not met and (g.is_leaf(n.id) or any(
                ep.is_solved(h.id) for h in g.arcs_into.get(n.id, ())
            ))
            if feasible != expect:
                problems.append(
                    f"{g_id}:{n.id} feasible={feasible}, derivation says {expect}"
                )
        for h in g.hyper_arcs:
            if h.id in ep.backed:
                continue
            expect = (
                not ep.is_solved(h.id)
                and not ep.is_suppressed(h.id)
                and all(ep.is_met(c) for c in h.children)
            )
            if ep.is_arc_feasible(h.id) != expect:
                problems.append(
                    f"{g_id}:{h.id} feasible={ep.is_arc_feasible(h.id)}, "
                    f"derivation says {expect}"
                )
            if ep.is_solved(h.id) and ep.done_actions(h.id) != len(h.actions):
                if ("solve", h.id, True) not in ep.log:
                    problems.append(f"{g_id}:{h.id} solved with undone actions")
            if ep.is_suppressed(h.id) and ep.is_arc_feasible(h.id):
                problems.append(f"{g_id}:{h.id} suppressed yet feasible")

        if (ep.status is EpisodeStatus.SOLVED) != ep.is_met(g.root):
            problems.append(f"{g_id} status/root mismatch")
        nodes_f, arcs_f = ep.feasible_sets()
        dead_end = (
            not nodes_f
            and not arcs_f
            and not ep.is_met(g.root)
            and all(n in ep.met for n in ep.gated)
            and not (ep.backed - ep.solved - ep.suppressed - ep.dead_backed)
        )
        if dead_end != (ep.status is EpisodeStatus.FAILED):
            problems.append(f"{g_id} failure detection out of sync")

    for link in model.entanglements:
        if (link.source, link.dependent) in skip:
            continue
        if states[link.source_graph].is_met(link.source_node) != states[
            link.dependent_graph
        ].is_met(link.dependent_node):
            problems.append(
                f"entanglement broken: {link.source_graph}:{link.source_node} vs "
                f"{link.dependent_graph}:{link.dependent_node}"
            )

    for key, t in sorted(model.transitions.items()):
        if key in skip_t:
            continue
        upper = states[t.graph]
        if upper.is_suppressed(t.hyper_arc):
            continue
        sub = states[t.subgraph]
        if upper.is_solved(t.hyper_arc) != (sub.status is EpisodeStatus.SOLVED):
            problems.append(f"{t.graph}:{t.hyper_arc} solved out of sync with '{t.subgraph}'")
        if not upper.is_solved(t.hyper_arc) and upper.is_arc_feasible(
            t.hyper_arc
        ) != graph_feasible(sub):
            problems.append(
                f"{t.graph}:{t.hyper_arc} feasibility out of sync with '{t.subgraph}'"
            )
    return problems
