"""Per-run episode state and the feasibility/solved calculus.

The structure (:class:`~andorplan.graph.GraphStructure`) never changes
during a run; all run-time truth lives here. The rules:

* a node is feasible iff it is not met and either it is a leaf, or some
  solved arc has it as parent;
* an arc is feasible iff all its children are met and it is neither solved
  nor suppressed;
* solving an arc suppresses every other arc that shares at least one child
  with it, permanently for the episode;
* ``met`` and ``solved`` only ever go false -> true;
* the episode is solved iff the root is met, and failed iff nothing is
  feasible anymore while the root is unmet.

Leaves listed as *gated* start neither met nor feasible: they wait for an
external mirror event (an entangled source node in another graph). Arcs
listed as *backed* have their feasible/solved flags slaved to a whole
subgraph by the hierarchy layer and are skipped by the local rules.
"""

from __future__ import annotations

import enum
from typing import Iterable

from .errors import ProtocolViolation, UnknownEntityError
from .graph import ActionId, GraphStructure, HyperArc, HyperArcId, NodeId


class EpisodeStatus(str, enum.Enum):
    IN_PROGRESS = "in-progress"
    SOLVED = "solved"
    FAILED = "failed"


class Episode:
    """Mutable run state for one graph.

    All mutations must come through one writer; queries are read-only.
    Every mutation is appended to ``log`` so the whole episode can be
    replayed or re-derived from scratch.
    """

    def __init__(
        self,
        graph: GraphStructure,
        initially_met_leaves: Iterable[NodeId] = (),
        gated_leaves: Iterable[NodeId] = (),
        backed_arcs: Iterable[HyperArcId] = (),
    ) -> None:
        initially_met = frozenset(initially_met_leaves)
        gated = frozenset(gated_leaves)
        for n in sorted(initially_met | gated):
            if n not in graph.node_by_id:
                raise UnknownEntityError(f"graph '{graph.id}' has no node '{n}'")
            if not graph.is_leaf(n):
                raise ProtocolViolation(
                    f"node '{n}' is not a leaf of graph '{graph.id}'"
                )
        for h in backed_arcs:
            graph.arc(h)

        self.graph = graph
        self.gated = gated
        self.backed = frozenset(backed_arcs)
        self.met: set[NodeId] = set(initially_met)
        self.feasible_nodes: set[NodeId] = {
            n for n in graph.leaves if n not in initially_met and n not in gated
        }
        self.solved: set[HyperArcId] = set()
        self.suppressed: set[HyperArcId] = set()
        self.dead_backed: set[HyperArcId] = set()
        self.done: dict[HyperArcId, int] = {h.id: 0 for h in graph.hyper_arcs}
        self.feasible_arcs: set[HyperArcId] = set()
        self.status = EpisodeStatus.IN_PROGRESS
        self.log: list[tuple] = [
            ("init", tuple(sorted(initially_met)), tuple(sorted(gated)))
        ]

        for h in graph.hyper_arcs:
            self._refresh_arc(h)
        self._refresh_status()

    # -- queries ---------------------------------------------------------

    def is_met(self, node: NodeId) -> bool:
        return node in self.met

    def is_node_feasible(self, node: NodeId) -> bool:
        return node in self.feasible_nodes

    def is_arc_feasible(self, arc: HyperArcId) -> bool:
        return arc in self.feasible_arcs

    def is_solved(self, arc: HyperArcId) -> bool:
        return arc in self.solved

    def is_suppressed(self, arc: HyperArcId) -> bool:
        return arc in self.suppressed

    def done_actions(self, arc: HyperArcId) -> int:
        return self.done[arc]

    def next_action(self, arc: HyperArcId) -> ActionId | None:
        """The next undone action id of the arc, in precedence order."""
        h = self.graph.arc(arc)
        i = self.done[arc]
        return h.actions[i].id if i < len(h.actions) else None

    def feasible_sets(self) -> tuple[frozenset[NodeId], frozenset[HyperArcId]]:
        """Currently feasible nodes and hyper-arcs. Pure query."""
        return frozenset(self.feasible_nodes), frozenset(self.feasible_arcs)

    def flags(self) -> dict:
        """A plain-data snapshot of every flag, for comparison and export."""
        return {
            "met": sorted(self.met),
            "feasible_nodes": sorted(self.feasible_nodes),
            "solved": sorted(self.solved),
            "suppressed": sorted(self.suppressed),
            "feasible_arcs": sorted(self.feasible_arcs),
            "done": {k: v for k, v in sorted(self.done.items()) if v},
            "status": self.status.value,
        }

    # -- mutations -------------------------------------------------------

    def meet_node(self, node: NodeId) -> list[HyperArcId]:
        """Confirm that a feasible state has been reached.

        Returns the arcs that became feasible because of this. Meeting a
        non-feasible node is a protocol violation: the execution layer
        reported a state the calculus says is unreachable.
        """
        if node not in self.graph.node_by_id:
            raise UnknownEntityError(f"graph '{self.graph.id}' has no node '{node}'")
        if node not in self.feasible_nodes:
            raise ProtocolViolation(
                f"node '{node}' of graph '{self.graph.id}' is not feasible"
            )
        self.log.append(("meet", node))
        return self._meet(node)

    def mirror_met(self, node: NodeId) -> list[HyperArcId]:
        """Meet an entangled leaf because its source node was met.

        Idempotent; unlike :meth:`meet_node` this does not require prior
        feasibility (a gated leaf goes feasible-then-met in one step).
        """
        if node not in self.graph.node_by_id:
            raise UnknownEntityError(f"graph '{self.graph.id}' has no node '{node}'")
        if node in self.met:
            return []
        self.log.append(("mirror", node))
        self.feasible_nodes.add(node)
        return self._meet(node)

    def record_action_done(self, arc: HyperArcId, action: ActionId) -> bool:
        """Mark the next action of a feasible arc as done.

        Returns True when this completed the arc (the solve side effects
        have then already been applied).
        """
        h = self.graph.arc(arc)
        if arc not in self.feasible_arcs:
            raise ProtocolViolation(
                f"hyper-arc '{arc}' of graph '{self.graph.id}' is not feasible"
            )
        expected = self.next_action(arc)
        if action not in {a.id for a in h.actions}:
            raise UnknownEntityError(f"hyper-arc '{arc}' has no action '{action}'")
        if action != expected:
            raise ProtocolViolation(
                f"action '{action}' out of order on '{arc}' (expected '{expected}')"
            )
        self.log.append(("action", arc, action))
        self.done[arc] += 1
        if self.done[arc] == len(h.actions):
            self._solve(h, external=False)
            return True
        return False

    def solve_hyper_arc(
        self, arc: HyperArcId, external: bool = False
    ) -> tuple[bool, list[HyperArcId]]:
        """Mark an arc solved and apply the consequences.

        Only legal once all its actions are done, unless ``external`` marks
        a solve delegated to a backing subgraph. Returns whether the parent
        became feasible, plus the siblings suppressed by this solve.
        """
        h = self.graph.arc(arc)
        if arc in self.solved:
            raise ProtocolViolation(f"hyper-arc '{arc}' already solved")
        if not external and self.done[arc] != len(h.actions):
            raise ProtocolViolation(
                f"hyper-arc '{arc}' has undone actions "
                f"({self.done[arc]}/{len(h.actions)})"
            )
        self.log.append(("solve", arc, external))
        return self._solve(h, external)

    def set_backed_feasible(self, arc: HyperArcId, value: bool) -> None:
        """Slave a backed arc's feasibility to its subgraph (hierarchy only)."""
        if arc not in self.backed:
            raise ProtocolViolation(f"hyper-arc '{arc}' is not subgraph-backed")
        if arc in self.solved or arc in self.suppressed:
            return
        before = arc in self.feasible_arcs
        if value and not before:
            self.feasible_arcs.add(arc)
            self.log.append(("backed-feasible", arc, True))
        elif not value and before:
            self.feasible_arcs.discard(arc)
            self.log.append(("backed-feasible", arc, False))
        self._refresh_status()

    def mark_backed_dead(self, arc: HyperArcId) -> None:
        """Record that a backed arc's subgraph can no longer succeed."""
        if arc not in self.backed:
            raise ProtocolViolation(f"hyper-arc '{arc}' is not subgraph-backed")
        self.dead_backed.add(arc)
        self._refresh_status()

    # -- internals -------------------------------------------------------

    def _meet(self, node: NodeId) -> list[HyperArcId]:
        self.met.add(node)
        self.feasible_nodes.discard(node)
        newly = []
        for h in self.graph.arcs_using.get(node, ()):
            if self._refresh_arc(h):
                newly.append(h.id)
        self._refresh_status()
        return newly

    def _solve(self, h: HyperArc, external: bool) -> tuple[bool, list[HyperArcId]]:
        if h.id in self.suppressed:
            raise ProtocolViolation(f"hyper-arc '{h.id}' is suppressed")
        self.solved.add(h.id)
        self.feasible_arcs.discard(h.id)

        if h.parent not in self.met:
            self.feasible_nodes.add(h.parent)
        parent_now_feasible = h.parent in self.feasible_nodes

        suppressed_now: list[HyperArcId] = []
        for child in sorted(h.children):
            for sibling in self.graph.arcs_using.get(child, ()):
                if sibling.id == h.id:
                    continue
                if sibling.id in self.solved or sibling.id in self.suppressed:
                    continue
                self.suppressed.add(sibling.id)
                self.feasible_arcs.discard(sibling.id)
                suppressed_now.append(sibling.id)
        self._refresh_status()
        return parent_now_feasible, sorted(suppressed_now)

    def _refresh_arc(self, h: HyperArc) -> bool:
        """Re-derive one arc's feasibility; returns True if it became feasible."""
        if h.id in self.backed:
            return False  # slaved to the subgraph, never derived locally
        feasible = (
            h.id not in self.solved
            and h.id not in self.suppressed
            and all(c in self.met for c in h.children)
        )
        if feasible and h.id not in self.feasible_arcs:
            self.feasible_arcs.add(h.id)
            return True
        if not feasible:
            self.feasible_arcs.discard(h.id)
        return False

    def _refresh_status(self) -> None:
        if self.status is not EpisodeStatus.IN_PROGRESS:
            return
        if self.graph.root in self.met:
            self.status = EpisodeStatus.SOLVED
        elif not self.feasible_nodes and not self.feasible_arcs:
            # A gated leaf awaiting its mirror, or a backed arc whose
            # subgraph may yet solve, keeps the episode alive.
            waiting_gate = any(n not in self.met for n in self.gated)
            waiting_sub = bool(
                self.backed - self.solved - self.suppressed - self.dead_backed
            )
            if not waiting_gate and not waiting_sub:
                self.status = EpisodeStatus.FAILED


def init_episode(
    graph: GraphStructure,
    initially_met_leaves: Iterable[NodeId] = (),
    gated_leaves: Iterable[NodeId] = (),
    backed_arcs: Iterable[HyperArcId] = (),
) -> Episode:
    """Start a fresh episode; leaves are feasible unless met or gated."""
    return Episode(graph, initially_met_leaves, gated_leaves, backed_arcs)
