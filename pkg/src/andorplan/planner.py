"""Traversal planning over episode states.

The planner enumerates cooperation paths (alternative-free sub-hypergraphs
from usable leaves up to the root), follows the cheapest one, turns its
feasible arcs into per-agent action suggestions, and absorbs operator
overrides by replanning from whatever state the episode actually reached.

Search is exhaustive with per-call memoization; graphs at this scale have
at most a few hundred paths, which keeps the optimum exact and testable.
Swap :func:`enumerate_paths` for an incremental search if that stops being
true.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .episode import Episode, EpisodeStatus
from .errors import NoEligibleAgentError, NoPathError, ProtocolViolation, UnknownEntityError
from .graph import Action, ActionId, AgentId, GraphId, GraphStructure, HyperArcId, NodeId
from .hierarchy import ConcurrentModel, propagate_entanglement, sync_hierarchy

ArcCost = Callable[[GraphId, HyperArcId], float]


@dataclass(frozen=True)
class CooperationPath:
    """An alternative-free route to the root; cost counts unsolved arcs."""

    graph: GraphId
    arcs: tuple[HyperArcId, ...]
    total_cost: float

    @property
    def key(self) -> str:
        return "+".join(self.arcs)


@dataclass(frozen=True)
class Suggestion:
    """The next action one agent should take, and why."""

    agent: AgentId
    graph: GraphId
    hyper_arc: HyperArcId
    action: ActionId
    rationale: str
    estimated_duration: float

    def ref(self) -> tuple[GraphId, HyperArcId, ActionId]:
        return (self.graph, self.hyper_arc, self.action)


def enumerate_paths(
    graph: GraphStructure,
    episode: Episode,
    arc_cost: ArcCost | None = None,
) -> list[CooperationPath]:
    """All maximal alternative-free sub-hypergraphs reaching the root.

    Suppressed arcs and backed arcs whose subgraph is dead are never part
    of a path; solved arcs may be (they contribute no cost). The result is
    sorted by (cost, arc-id sequence) so ties are deterministic.
    """
    if episode.status is not EpisodeStatus.IN_PROGRESS:
        return []

    cost_of = arc_cost or (lambda g, h: graph.arc(h).cost)
    results: set[tuple[HyperArcId, ...]] = set()

    def viable(arc_id: HyperArcId) -> bool:
        if episode.is_suppressed(arc_id):
            return False
        if arc_id in episode.dead_backed:
            return False
        return True

    def expand(pending: list[NodeId], chosen: dict[NodeId, HyperArcId]) -> None:
        while pending:
            node = pending[0]
            if episode.is_met(node) or node in chosen or graph.is_leaf(node):
                pending = pending[1:]
                continue
            options = [h for h in graph.arcs_into.get(node, ()) if viable(h.id)]
            if not options:
                return  # dead end: no way to reach this node
            for h in options:
                expand(
                    sorted(set(pending[1:]) | set(h.children)),
                    {**chosen, node: h.id},
                )
            return
        results.add(tuple(sorted(chosen.values())))

    expand([graph.root], {})

    paths = [
        CooperationPath(
            graph=graph.id,
            arcs=arcs,
            total_cost=sum(
                cost_of(graph.id, a) for a in arcs if not episode.is_solved(a)
            ),
        )
        for arcs in results
    ]
    paths.sort(key=lambda p: (p.total_cost, p.arcs))
    return paths


def best_path(
    graph: GraphStructure,
    episode: Episode,
    arc_cost: ArcCost | None = None,
) -> CooperationPath:
    """The lowest-cost cooperation path; ties break on the arc-id sequence."""
    paths = enumerate_paths(graph, episode, arc_cost)
    if not paths:
        raise NoPathError(
            f"graph '{graph.id}' has no cooperation path (status {episode.status.value})"
        )
    return paths[0]


def model_arc_cost(model: ConcurrentModel, states: Mapping[GraphId, Episode]) -> ArcCost:
    """Arc costs where a backed arc costs its subgraph's remaining best path."""

    def cost(graph_id: GraphId, arc_id: HyperArcId) -> float:
        t = model.transitions.get((graph_id, arc_id))
        if t is None:
            return model.graph(graph_id).arc(arc_id).cost
        sub_state = states[t.subgraph]
        if sub_state.status is EpisodeStatus.SOLVED:
            return 0.0
        try:
            return best_path(model.graph(t.subgraph), sub_state, cost).total_cost
        except NoPathError:
            return model.graph(graph_id).arc(arc_id).cost

    return cost


def eligible_agents(
    action: Action, agent_classes: Mapping[AgentId, str]
) -> frozenset[AgentId]:
    """Resolve an action's eligibility set (ids and class tags) to ids."""
    out = set()
    for agent, cls in agent_classes.items():
        if agent in action.eligible_agents or cls in action.eligible_agents:
            out.add(agent)
    return frozenset(out)


def allocate_action(
    action: Action,
    idle_agents: Iterable[AgentId],
    estimates: Mapping[AgentId, float] | None = None,
    agent_classes: Mapping[AgentId, str] | None = None,
) -> AgentId:
    """Pick the eligible idle agent with the smallest estimated duration.

    ``estimates`` usually comes from simulation rehearsals; missing entries
    fall back to the action's duration-model mean. Ties go to the smaller
    agent id. Raises :class:`NoEligibleAgentError` when nobody can take the
    action, in which case the caller queues it.
    """
    classes = agent_classes or {a: "" for a in idle_agents}
    idle = [a for a in idle_agents if a in classes]
    pool = [
        a
        for a in idle
        if a in action.eligible_agents or classes.get(a) in action.eligible_agents
    ]
    if not pool:
        raise NoEligibleAgentError(
            f"no idle agent can execute action '{action.id}'"
        )
    estimates = estimates or {}
    return min(pool, key=lambda a: (estimates.get(a, action.duration_mean), a))


def select_target(
    candidates: Iterable, rehearse: Callable[[object], float]
) -> object:
    """Pick the work item whose rehearsed end-to-end duration is smallest.

    ``rehearse`` must be deterministic (fixed rehearsal seed); ties break on
    the item id.
    """
    items = list(candidates)
    if not items:
        raise ValueError("no candidate work items")
    return min(items, key=lambda it: (rehearse(it), getattr(it, "id", str(it))))


@dataclass(frozen=True)
class Event:
    """One externally observable episode event."""

    kind: str  # node-met | action-done | action-failed | override
    graph: GraphId
    node: NodeId | None = None
    hyper_arc: HyperArcId | None = None
    action: ActionId | None = None
    agent: AgentId | None = None

    KINDS = ("node-met", "action-done", "action-failed", "override")


@dataclass
class EventResult:
    accepted: bool
    reason: str = ""
    newly_feasible: list[HyperArcId] = field(default_factory=list)
    solved_arc: bool = False
    cascades: list[tuple[GraphId, NodeId]] = field(default_factory=list)
    suggestions: list[Suggestion] = field(default_factory=list)


def settle(
    model: ConcurrentModel,
    states: dict[GraphId, Episode],
    new_mets: Iterable[tuple[GraphId, NodeId]] = (),
    skip_links=None,
    status_override=None,
) -> list[tuple[GraphId, NodeId]]:
    """Propagate entanglement for fresh mets, then sync the hierarchy."""
    cascades: list[tuple[GraphId, NodeId]] = []
    for met in new_mets:
        cascades.extend(propagate_entanglement(model, states, met, skip_links))
    sync_hierarchy(model, states, status_override)
    return cascades


def handle_event(
    model: ConcurrentModel,
    states: dict[GraphId, Episode],
    event: Event,
    agent_classes: Mapping[AgentId, str] | None = None,
    busy_agents: Iterable[AgentId] = (),
    estimates: Mapping[tuple[AgentId, tuple[GraphId, HyperArcId, ActionId]], float] | None = None,
    skip_links=None,
    status_override=None,
    active_graphs: Iterable[GraphId] | None = None,
) -> EventResult:
    """Apply one event transactionally and replan.

    Rejected events (protocol violations, unknown entities) leave every
    episode untouched and come back as ``accepted=False`` with the reason.
    A failed action changes no flags; the same suggestion will simply be
    issued again. Overrides are ordinary action completions on arcs the
    planner did not suggest; once applied, the best path is recomputed from
    the state the operator actually produced.
    """
    if event.kind not in Event.KINDS:
        return EventResult(False, f"unknown event kind '{event.kind}'")
    if event.graph not in states:
        return EventResult(False, f"unknown graph '{event.graph}'")
    if agent_classes is not None and event.agent is not None:
        if event.agent not in agent_classes:
            return EventResult(False, f"unknown agent '{event.agent}'")
    ep = states[event.graph]

    result = EventResult(True)
    try:
        if event.kind == "node-met":
            if event.node is None:
                return EventResult(False, "node-met event without node")
            result.newly_feasible = ep.meet_node(event.node)
            result.cascades = settle(
                model, states, [(event.graph, event.node)], skip_links, status_override
            )
        elif event.kind in ("action-done", "override"):
            if event.hyper_arc is None or event.action is None:
                return EventResult(False, f"{event.kind} event without arc/action")
            result.solved_arc = ep.record_action_done(event.hyper_arc, event.action)
            settle(model, states, [], skip_links, status_override)
        elif event.kind == "action-failed":
            # Flags stay untouched; recovery is the operator's problem and
            # the planner will re-issue the same suggestion.
            if event.hyper_arc is not None:
                ep.graph.arc(event.hyper_arc)
    except (ProtocolViolation, UnknownEntityError) as exc:
        return EventResult(False, str(exc))

    if agent_classes is not None:
        result.suggestions = next_suggestions(
            model,
            states,
            agent_classes,
            busy_agents=busy_agents,
            estimates=estimates,
            active_graphs=active_graphs,
        )
    return result


def next_suggestions(
    model: ConcurrentModel,
    states: Mapping[GraphId, Episode],
    agent_classes: Mapping[AgentId, str],
    busy_agents: Iterable[AgentId] = (),
    estimates: Mapping[tuple[AgentId, tuple[GraphId, HyperArcId, ActionId]], float] | None = None,
    active_graphs: Iterable[GraphId] | None = None,
    arc_cost: ArcCost | None = None,
) -> list[Suggestion]:
    """One suggestion per idle agent, following each graph's best path.

    Every suggested action is the next undone action of a feasible arc on
    its graph's current lowest-cost path. Agents already executing receive
    nothing; an action with no idle eligible agent is silently queued.
    """
    idle = {a for a in agent_classes if a not in set(busy_agents)}
    active = set(active_graphs) if active_graphs is not None else None
    cost = arc_cost or model_arc_cost(model, states)
    estimates = estimates or {}
    out: list[Suggestion] = []

    for g in model.gamma_order():
        ep = states[g.id]
        if ep.status is not EpisodeStatus.IN_PROGRESS:
            continue
        if active is not None and g.id not in active:
            continue
        try:
            path = best_path(g, ep, cost)
        except NoPathError:
            continue
        for position, arc_id in enumerate(path.arcs):
            if not ep.is_arc_feasible(arc_id) or ep.is_solved(arc_id):
                continue
            if (g.id, arc_id) in model.transitions:
                continue  # backed arcs progress through their subgraph
            next_id = ep.next_action(arc_id)
            if next_id is None:
                continue
            action = next(
                a for a in g.arc(arc_id).actions if a.id == next_id
            )
            ref = (g.id, arc_id, next_id)
            per_agent = {
                a: estimates.get((a, ref), action.duration_mean)
                for a in idle
            }
            try:
                agent = allocate_action(action, sorted(idle), per_agent, agent_classes)
            except NoEligibleAgentError:
                continue
            idle.discard(agent)
            out.append(
                Suggestion(
                    agent=agent,
                    graph=g.id,
                    hyper_arc=arc_id,
                    action=next_id,
                    rationale=f"path {path.key} step {position}",
                    estimated_duration=per_agent[agent],
                )
            )
    return out
