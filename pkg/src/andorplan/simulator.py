"""Deterministic discrete-event execution of a scenario.

The engine drives simulated agents off planner suggestions: it samples
action durations as max(0, Normal(mean, std)), injects action failures and
missed operator gestures, applies every completion through the episode
calculus (with entanglement and hierarchy propagation), and timestamps
everything into a trace. All randomness is drawn from counter-style
streams keyed by (seed, purpose, graph, round, arc, action, attempt), so a
given (model, config, seed) always produces a bit-identical trace and the
same action samples the same duration whether the run is concurrent or
sequentialized.

Multi-round scenarios (one episode per work item) are an engine-level
extension: each round is a fresh episode of the same graph, deliveries
between repeating graphs queue on their entanglement link, and a backed
arc in the termination layer is reported solved only once its subgraph has
completed every round.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
import statistics
from dataclasses import dataclass, replace
from typing import Callable, Iterable

from .episode import Episode, EpisodeStatus
from .errors import AndOrPlanError, ProtocolViolation, UnknownEntityError
from .graph import Action, ActionId, AgentId, GraphId, HyperArcId, NodeId
from .hierarchy import check_invariants, propagate_entanglement, sync_hierarchy
from .planner import Suggestion, best_path, next_suggestions, select_target
from .scenario import Scenario, SimParams, WorkItem


def _stream(seed: int, *parts) -> random.Random:
    """An independent RNG for one sampling decision, stable across runs."""
    digest = hashlib.sha256(repr((seed,) + parts).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class SimAgent:
    """A simulated executor; humans additionally miss gestures sometimes."""

    id: AgentId
    class_tag: str
    group: str
    gesture_miss_probability: float = 0.0

    @property
    def is_human(self) -> bool:
        return self.class_tag == "human-operator"


@dataclass(frozen=True)
class ForcedFailure:
    """Deterministically fail the n-th execution attempt of one action."""

    graph: GraphId
    hyper_arc: HyperArcId
    action: ActionId
    occurrence: int  # 1-based attempt counter across the whole run


@dataclass(frozen=True)
class TraceEvent:
    t: float
    kind: str
    data: dict

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "kind": self.kind, **self.data}, sort_keys=True)


class ExecutionTrace:
    """Time-ordered record of one run."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.final_status: dict[GraphId, str] = {}
        self.aborted = False

    def add(self, t: float, kind: str, **data) -> None:
        if self.events and t < self.events[-1].t - 1e-9:
            raise AndOrPlanError("trace timestamps must be non-decreasing")
        self.events.append(TraceEvent(t, kind, data))

    @property
    def makespan(self) -> float:
        return self.events[-1].t if self.events else 0.0

    def busy_intervals(self, agent: AgentId) -> list[tuple[float, float]]:
        out = []
        open_at: float | None = None
        for ev in self.events:
            if ev.data.get("agent") != agent:
                continue
            if ev.kind == "action-started":
                open_at = ev.t
            elif ev.kind in ("action-done", "action-failed", "gesture-missed"):
                if open_at is not None:
                    out.append((open_at, ev.t))
                    open_at = None
        return out

    def to_jsonl(self) -> str:
        return "\n".join(ev.to_json() for ev in self.events) + "\n"


@dataclass
class SimConfig:
    """Per-run knobs layered on top of the scenario's sim parameters."""

    seed: int | None = None            # None: use the scenario's seed
    no_noise: bool = False             # zero std-devs and sampled failures
    sequential: bool = False           # one non-termination graph at a time
    max_time: float | None = None
    interactive_operator: bool = False # surface, don't auto-run, human actions
    validate_invariants: bool = False
    forced_failures: tuple[ForcedFailure, ...] = ()
    suggestion_hook: Callable[[float, list[Suggestion]], None] | None = None


@dataclass
class _AgentState:
    spec: SimAgent
    busy_until: float = 0.0
    current: tuple[GraphId, HyperArcId, ActionId] | None = None

    def idle(self, now: float) -> bool:
        return self.current is None and self.busy_until <= now + 1e-12


class Simulation:
    """One run (or interactive session) over a loaded scenario."""

    def __init__(self, scenario: Scenario, config: SimConfig | None = None) -> None:
        self.scenario = scenario
        self.model = scenario.model
        self.config = config or SimConfig()
        self.params: SimParams = scenario.sim
        self.seed = self.params.seed if self.config.seed is None else self.config.seed
        self.max_time = (
            self.params.max_time if self.config.max_time is None else self.config.max_time
        )
        self.time = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, str, tuple]] = []
        self.trace = ExecutionTrace()
        self.done = False

        self.agents: dict[AgentId, _AgentState] = {
            a.id: _AgentState(SimAgent(a.id, a.class_tag, a.group, a.gesture_miss_probability))
            for a in scenario.agents.values()
        }
        self._classes = scenario.agent_classes()

        items = list(scenario.work_items)
        self.total_rounds: dict[GraphId, int] = {}
        for g in self.model.gamma_order():
            cfg = scenario.graph_config[g.id]
            self.total_rounds[g.id] = len(items) if cfg.repeat_per_item and items else 1
        self.rounds_done: dict[GraphId, int] = {g.id: 0 for g in self.model.gamma_order()}
        self.round_idx: dict[GraphId, int] = {g.id: 0 for g in self.model.gamma_order()}
        self.current_item: dict[GraphId, WorkItem | None] = {}
        self.unfetched: list[WorkItem] = items

        # Entanglement links between repeating graphs carry one delivery per
        # round; they are taken out of the instantaneous mirror rule.
        self.managed_links = {
            (l.source, l.dependent)
            for l in self.model.entanglements
            if scenario.graph_config[l.dependent_graph].repeat_per_item
            or scenario.graph_config[l.source_graph].repeat_per_item
        }
        self.deliveries: dict[tuple, list[str]] = {k: [] for k in self.managed_links}
        self._repeat_backed = {
            (t.graph, t.hyper_arc)
            for t in self.model.transitions.values()
            if scenario.graph_config[t.subgraph].repeat_per_item
        }

        self.states: dict[GraphId, Episode] = {}
        self._attempts: dict[tuple[GraphId, HyperArcId, ActionId], int] = {}
        self._scheduled_mets: set[tuple[GraphId, NodeId]] = set()
        self._delivery_taken: dict[GraphId, bool] = {}
        self._forced = {
            (f.graph, f.hyper_arc, f.action, f.occurrence)
            for f in self.config.forced_failures
        }
        self._estimate_cache: dict[tuple, float] = {}

        # Create every episode before firing any met, so links can cross
        # graphs in either direction from the very first event.
        for g in self.model.gamma_order():
            self._create_episode(g.id)
        for g in self.model.gamma_order():
            self._auto_met(g.id)
        self._settle()
        self._schedule_work()

    # -- round management --------------------------------------------------

    def _start_round(self, graph_id: GraphId) -> None:
        self._create_episode(graph_id)
        self._auto_met(graph_id)

    def _create_episode(self, graph_id: GraphId) -> None:
        g = self.model.graph(graph_id)
        cfg = self.scenario.graph_config[graph_id]
        self.round_idx[graph_id] = self.rounds_done[graph_id]
        item: WorkItem | None = None
        if cfg.repeat_per_item and self.scenario.work_items:
            if cfg.select_target and self.unfetched:
                item = self._select_item(graph_id)
                self.unfetched.remove(item)
        self.current_item[graph_id] = item
        self._delivery_taken[graph_id] = False
        self.states[graph_id] = Episode(
            g,
            gated_leaves=self.model.gated_leaves(graph_id),
            backed_arcs=self.model.backed_arcs(graph_id),
        )
        if self.params.representation_overhead:
            self.trace.add(
                self.time,
                "overhead",
                graph=graph_id,
                category="representation",
                seconds=self.params.representation_overhead,
            )
        self.trace.add(
            self.time,
            "round-started",
            graph=graph_id,
            round=self.round_idx[graph_id],
            item=item.id if item else None,
        )

    def _auto_met(self, graph_id: GraphId) -> None:
        cfg = self.scenario.graph_config[graph_id]
        for leaf in sorted(cfg.auto_met_leaves):
            self._apply_met(graph_id, leaf)

    def _select_item(self, graph_id: GraphId) -> WorkItem:
        """Pick the next work item by rehearsed end-to-end duration."""
        g = self.model.graph(graph_id)
        pristine = Episode(
            g,
            gated_leaves=self.model.gated_leaves(graph_id),
            backed_arcs=self.model.backed_arcs(graph_id),
        )
        path = best_path(g, pristine)
        actions = [a for arc in path.arcs for a in g.arc(arc).actions]

        def rehearsed(item: WorkItem) -> float:
            if self.params.rehearsal_overhead:
                self.trace.add(
                    self.time,
                    "overhead",
                    graph=graph_id,
                    category="rehearsal",
                    seconds=self.params.rehearsal_overhead,
                )
            est = rehearse(
                actions,
                seed=self.params.rehearsal_seed,
                samples=self.params.rehearsal_samples,
                retry_delay=self.params.retry_delay,
                duration_factor=item.duration_factor,
                no_noise=self.config.no_noise,
                salt=item.id,
            )
            self._estimate_cache[(graph_id, item.id)] = est
            return est

        chosen = select_target(sorted(self.unfetched, key=lambda w: w.id), rehearsed)
        self.trace.add(
            self.time,
            "target-selected",
            graph=graph_id,
            item=chosen.id,
            estimate=self._estimate_cache[(graph_id, chosen.id)],
        )
        return chosen

    def _round_complete(self, graph_id: GraphId) -> None:
        self.rounds_done[graph_id] += 1
        self.trace.add(
            self.time,
            "graph-solved",
            graph=graph_id,
            round=self.round_idx[graph_id],
        )
        if self.rounds_done[graph_id] < self.total_rounds[graph_id]:
            self._start_round(graph_id)

    # -- virtual status for multi-round subgraphs ---------------------------

    def _status_override(self) -> dict[GraphId, tuple[bool, bool]]:
        out = {}
        for g in self.model.gamma_order():
            if self.total_rounds[g.id] <= 1:
                continue
            solved = self.rounds_done[g.id] >= self.total_rounds[g.id]
            failed = self.states[g.id].status is EpisodeStatus.FAILED
            out[g.id] = (not solved and not failed, solved)
        return out

    # -- transaction settling -----------------------------------------------

    def _settle(self) -> None:
        """Run all instantaneous consequences of the current flags."""
        for _ in range(10000):
            changed = False
            sync_hierarchy(self.model, self.states, self._status_override())

            for g in self.model.gamma_order():
                ep = self.states[g.id]

                # Zero-action feasible arcs complete instantly.
                for arc_id in sorted(ep.feasible_arcs):
                    h = g.arc_by_id.get(arc_id)
                    if h is not None and not h.actions and arc_id not in ep.backed:
                        ep.solve_hyper_arc(arc_id)
                        self.trace.add(
                            self.time, "arc-solved", graph=g.id, arc=arc_id, external=False
                        )
                        changed = True

                # The execution layer confirms reached states: feasible
                # non-leaf nodes are met once their processes have run.
                nodes_f, _ = ep.feasible_sets()
                for node_id in sorted(nodes_f):
                    if g.is_leaf(node_id):
                        continue
                    key = (g.id, node_id)
                    if key in self._scheduled_mets:
                        continue
                    delay = self._process_delay(g.id, node_id)
                    if delay <= 0:
                        self._apply_met(g.id, node_id)
                        changed = True
                    else:
                        self._scheduled_mets.add(key)
                        self._push(
                            self.time + delay,
                            "node-met",
                            (g.id, node_id, self.round_idx[g.id]),
                        )

                # Consume one queued delivery per fresh round.
                for link_key, queue in sorted(self.deliveries.items()):
                    (sg, sn), (dg, dn) = link_key
                    if dg != g.id or not queue:
                        continue
                    if ep.is_met(dn) or self._delivery_taken[g.id]:
                        continue
                    item_id = queue.pop(0)
                    self._delivery_taken[g.id] = True
                    self.current_item[g.id] = next(
                        (w for w in self.scenario.work_items if w.id == item_id), None
                    )
                    ep.mirror_met(dn)
                    self.trace.add(
                        self.time, "delivery-consumed", graph=g.id, item=item_id, node=dn
                    )
                    changed = True

                if ep.status is EpisodeStatus.SOLVED and self.round_idx[
                    g.id
                ] == self.rounds_done[g.id]:
                    self._round_complete(g.id)
                    changed = True

            if not changed:
                break
        else:  # pragma: no cover - guarded by monotone flags
            raise AndOrPlanError("settling did not converge")

        if self.config.validate_invariants:
            problems = check_invariants(
                self.model,
                self.states,
                skip_links=self.managed_links,
                skip_transitions=self._repeat_backed,
            )
            if problems:
                raise AndOrPlanError("invariant violation: " + "; ".join(problems))

        self._check_done()

    def _process_delay(self, graph_id: GraphId, node_id: NodeId) -> float:
        node = self.model.graph(graph_id).node(node_id)
        total = 0.0
        for i, p in enumerate(node.processes):
            if self.config.no_noise or p.duration_std == 0:
                total += p.duration_mean
            else:
                rng = _stream(
                    self.seed, "proc", graph_id, self.round_idx[graph_id], node_id, i
                )
                total += max(0.0, rng.gauss(p.duration_mean, p.duration_std))
        return total

    def _apply_met(self, graph_id: GraphId, node_id: NodeId, kind: str = "node-met") -> None:
        ep = self.states[graph_id]
        if ep.is_met(node_id):
            return
        ep.meet_node(node_id)
        self.trace.add(self.time, kind, graph=graph_id, node=node_id)
        self._after_met(graph_id, node_id)

    def _after_met(self, graph_id: GraphId, node_id: NodeId) -> None:
        # Deliveries queue on managed links; plain links mirror immediately.
        for link in self.model.links_from((graph_id, node_id)):
            key = (link.source, link.dependent)
            if key in self.managed_links:
                item = self.current_item.get(graph_id)
                self.deliveries[key].append(item.id if item else "")
                self.trace.add(
                    self.time,
                    "delivery-queued",
                    graph=link.dependent_graph,
                    item=item.id if item else None,
                )
        cascades = propagate_entanglement(
            self.model, self.states, (graph_id, node_id), self.managed_links
        )
        for dg, dn in cascades:
            self.trace.add(self.time, "mirror-met", graph=dg, node=dn, source=node_id)

    def _check_done(self) -> None:
        if self.done:
            return
        term = self.states[self.model.termination_graph]
        if term.status is EpisodeStatus.SOLVED:
            self._finish("model-solved")
        elif any(ep.status is EpisodeStatus.FAILED for ep in self.states.values()):
            self._finish("model-failed")

    def _finish(self, kind: str) -> None:
        self.done = True
        for g in self.model.gamma_order():
            if self.total_rounds[g.id] > 1:
                solved = self.rounds_done[g.id] >= self.total_rounds[g.id]
                status = "solved" if solved else self.states[g.id].status.value
            else:
                status = self.states[g.id].status.value
            self.trace.final_status[g.id] = status
        self.trace.add(self.time, kind, statuses=dict(sorted(self.trace.final_status.items())))

    # -- scheduling ----------------------------------------------------------

    def _active_graphs(self) -> list[GraphId]:
        order = [g.id for g in self.model.gamma_order()]
        if not self.config.sequential:
            return order
        term = self.model.termination_graph
        for g_id in order:
            if g_id == term:
                continue
            if self.rounds_done[g_id] < self.total_rounds[g_id] and self.states[
                g_id
            ].status is not EpisodeStatus.FAILED:
                return [g_id, term]
        return [term]

    def _schedule_work(self) -> None:
        if self.done:
            return
        busy = [a for a, st in self.agents.items() if not st.idle(self.time)]
        suggestions = next_suggestions(
            self.model,
            self.states,
            self._classes,
            busy_agents=busy,
            active_graphs=self._active_graphs(),
        )
        if self.config.suggestion_hook is not None:
            self.config.suggestion_hook(self.time, suggestions)
        for sug in suggestions:
            resolved = self._apply_guard(sug)
            if resolved is None:
                continue
            if self.config.interactive_operator and self.agents[
                resolved.agent
            ].spec.is_human:
                continue  # the console drives the operator
            self._start_action(resolved, override=resolved is not sug)

    def _apply_guard(self, sug: Suggestion) -> Suggestion | None:
        """Swap a suggestion on an outcome-guarded arc for the real branch.

        The planner is outcome-blind: it follows the cheapest branch. The
        execution layer knows what the inspection actually reported and
        overrides the suggestion onto the branch matching the work item.
        """
        required = self.scenario.guard_for(sug.graph, sug.hyper_arc)
        if required is None:
            return sug
        ep = self.states[sug.graph]
        if ep.done_actions(sug.hyper_arc) > 0:
            return sug  # committed: finish what was started
        item = self.current_item.get(sug.graph)
        if item is None:
            return None  # no outcome known, guarded work cannot start
        outcome = item.outcome
        if outcome == required:
            return sug
        g = self.model.graph(sug.graph)
        for arc in sorted(ep.feasible_arcs):
            if self.scenario.guard_for(sug.graph, arc) == outcome:
                next_id = ep.next_action(arc)
                if next_id is None:
                    continue
                action = next(a for a in g.arc(arc).actions if a.id == next_id)
                if sug.agent not in eligible(action, self._classes):
                    agents = [
                        a
                        for a, st in self.agents.items()
                        if st.idle(self.time) and a in eligible(action, self._classes)
                    ]
                    if not agents:
                        return None
                    agent = sorted(agents)[0]
                else:
                    agent = sug.agent
                return Suggestion(
                    agent=agent,
                    graph=sug.graph,
                    hyper_arc=arc,
                    action=next_id,
                    rationale=f"override for outcome {outcome}",
                    estimated_duration=action.duration_mean,
                )
        return None  # outcome branch not reachable yet

    def _start_action(self, sug: Suggestion, override: bool = False) -> None:
        g = self.model.graph(sug.graph)
        action = next(a for a in g.arc(sug.hyper_arc).actions if a.id == sug.action)
        key = (sug.graph, sug.hyper_arc, sug.action)
        self._attempts[key] = self._attempts.get(key, 0) + 1
        attempt = self._attempts[key]
        rnd = self.round_idx[sug.graph]

        factor = 1.0
        cfg = self.scenario.graph_config[sug.graph]
        item = self.current_item.get(sug.graph)
        if cfg.scale_with_item and item is not None:
            factor = item.duration_factor

        if self.config.no_noise or action.duration_std == 0:
            duration = action.duration_mean * factor
        else:
            rng = _stream(self.seed, "dur", sug.graph, rnd, sug.hyper_arc, sug.action, attempt)
            duration = max(0.0, rng.gauss(action.duration_mean * factor, action.duration_std))

        failed = (sug.graph, sug.hyper_arc, sug.action, attempt) in self._forced
        if not failed and not self.config.no_noise and action.failure_probability > 0:
            rng = _stream(self.seed, "fail", sug.graph, rnd, sug.hyper_arc, sug.action, attempt)
            failed = rng.random() < action.failure_probability

        spec = self.agents[sug.agent].spec
        missed = False
        if not failed and spec.is_human and spec.gesture_miss_probability > 0:
            if not self.config.no_noise:
                rng = _stream(self.seed, "miss", sug.graph, rnd, sug.hyper_arc, sug.action, attempt)
                missed = rng.random() < spec.gesture_miss_probability

        if self.params.planning_overhead:
            self.trace.add(
                self.time,
                "overhead",
                graph=sug.graph,
                category="planning",
                seconds=self.params.planning_overhead,
            )
        self.trace.add(
            self.time,
            "action-started",
            graph=sug.graph,
            arc=sug.hyper_arc,
            action=sug.action,
            agent=sug.agent,
            attempt=attempt,
            duration=duration,
            override=override,
        )
        st = self.agents[sug.agent]
        st.current = key
        st.busy_until = self.time + duration
        outcome = "failed" if failed else ("missed" if missed else "done")
        self._push(
            self.time + duration,
            "finish",
            (sug.graph, sug.hyper_arc, sug.action, sug.agent, attempt, duration, outcome, rnd),
        )

    # -- event loop ------------------------------------------------------------

    def _push(self, t: float, kind: str, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def step(self) -> bool:
        """Process the next timed event; returns False when nothing is due."""
        if self.done or not self._heap:
            return False
        t, _, kind, payload = heapq.heappop(self._heap)
        if t > self.max_time:
            self.time = self.max_time
            self.trace.aborted = True
            self._finish("aborted")
            return False
        self.time = max(self.time, t)
        if kind == "finish":
            self._finish_action(payload)
        elif kind == "node-met":
            g_id, node_id, rnd = payload
            self._scheduled_mets.discard((g_id, node_id))
            ep = self.states[g_id]
            if rnd == self.round_idx[g_id] and not ep.is_met(node_id) and ep.is_node_feasible(node_id):
                self._apply_met(g_id, node_id)
            self._settle()
        self._schedule_work()
        return True

    def _finish_action(self, payload: tuple) -> None:
        graph_id, arc_id, action_id, agent_id, attempt, duration, outcome, rnd = payload
        st = self.agents[agent_id]
        st.current = None
        ep = self.states[graph_id]
        base = dict(
            graph=graph_id,
            arc=arc_id,
            action=action_id,
            agent=agent_id,
            attempt=attempt,
            duration=duration,
        )
        if rnd != self.round_idx[graph_id]:
            # The round ended (the root was met through another route) while
            # this action was still running; the work no longer applies.
            self.trace.add(self.time, "action-discarded", reason="round ended", **base)
            self._settle()
            return
        if outcome == "failed":
            # Duration was spent; flags stay put and the suggestion will be
            # re-issued after the recovery delay.
            self.trace.add(self.time, "action-failed", **base)
            st.busy_until = self.time + self.params.retry_delay
            self._push(st.busy_until, "wake", (agent_id,))
            return
        if outcome == "missed":
            # The gesture happened but was not recognised: the event is
            # dropped and the operator repeats it after a delay.
            self.trace.add(self.time, "gesture-missed", **base)
            st.busy_until = self.time + self.params.gesture_repeat_delay
            self._push(st.busy_until, "wake", (agent_id,))
            return
        try:
            solved = ep.record_action_done(arc_id, action_id)
        except ProtocolViolation as exc:
            # The arc was suppressed or superseded while the action ran
            # (an operator finished an alternative first); the work is lost.
            self.trace.add(self.time, "action-discarded", reason=str(exc), **base)
            self._settle()
            return
        self.trace.add(self.time, "action-done", **base)
        if solved:
            self.trace.add(self.time, "arc-solved", graph=graph_id, arc=arc_id, external=False)
        self._settle()

    def run(self) -> ExecutionTrace:
        """Execute until the model is solved, failed, aborted or stalled."""
        self._settle()
        self._schedule_work()
        while not self.done:
            if not self.step():
                if not self.done:
                    self.trace.aborted = True
                    self._finish("aborted")
                break
        return self.trace

    # -- interactive/session surface -------------------------------------------

    def advance(self, seconds: float) -> list[TraceEvent]:
        """Stepped mode: fire everything due within the window."""
        if seconds < 0:
            raise ValueError("cannot advance by a negative duration")
        target = self.time + seconds
        mark = len(self.trace.events)
        while not self.done and self._heap and self._heap[0][0] <= target + 1e-12:
            self.step()
        self.time = max(self.time, min(target, self.max_time))
        return self.trace.events[mark:]

    def current_suggestions(self) -> list[Suggestion]:
        """Guard-resolved suggestions for the current state (all agents)."""
        busy = [a for a, st in self.agents.items() if not st.idle(self.time)]
        raw = next_suggestions(
            self.model,
            self.states,
            self._classes,
            busy_agents=busy,
            active_graphs=self._active_graphs(),
        )
        out = []
        for s in raw:
            resolved = self._apply_guard(s)
            if resolved is not None:
                out.append(resolved)
        return out

    def pending_operator_suggestions(self) -> list[Suggestion]:
        """Suggestions aimed at human agents (interactive mode surfaces these)."""
        return [
            s for s in self.current_suggestions() if self.agents[s.agent].spec.is_human
        ]

    def resolve_gesture(self, kind: str) -> tuple[GraphId, HyperArcId, ActionId, AgentId]:
        """Map a gesture kind to the matching next-in-order feasible action."""
        label = self.scenario.gestures.get(kind)
        if label is None:
            raise UnknownEntityError(f"unknown gesture '{kind}'")
        for g in self.model.gamma_order():
            if g.id not in self._active_graphs():
                continue
            ep = self.states[g.id]
            for arc_id in sorted(ep.feasible_arcs):
                next_id = ep.next_action(arc_id)
                if next_id is None:
                    continue
                action = next(a for a in g.arc(arc_id).actions if a.id == next_id)
                if action.label != label:
                    continue
                agents = sorted(
                    a
                    for a in eligible(action, self._classes)
                    if self.agents[a].spec.is_human
                )
                if agents:
                    return (g.id, arc_id, next_id, agents[0])
        raise ProtocolViolation(
            f"gesture '{kind}' does not match any feasible next action"
        )

    def apply_external_action(
        self,
        graph_id: GraphId,
        arc_id: HyperArcId,
        action_id: ActionId,
        agent_id: AgentId,
        override: bool = False,
    ) -> None:
        """Apply an operator-performed action instantly at the current time."""
        ep = self.states[graph_id]
        solved = ep.record_action_done(arc_id, action_id)  # raises on violations
        self.trace.add(
            self.time,
            "action-done",
            graph=graph_id,
            arc=arc_id,
            action=action_id,
            agent=agent_id,
            attempt=1,
            duration=0.0,
            override=override,
        )
        if solved:
            self.trace.add(self.time, "arc-solved", graph=graph_id, arc=arc_id, external=False)
        self._settle()
        self._schedule_work()


def eligible(action: Action, classes: dict[AgentId, str]) -> frozenset[AgentId]:
    return frozenset(
        a
        for a, cls in classes.items()
        if a in action.eligible_agents or cls in action.eligible_agents
    )


# -- rehearsal ---------------------------------------------------------------


def rehearse(
    fragment: Iterable[Action],
    seed: int,
    samples: int,
    retry_delay: float = 0.0,
    duration_factor: float = 1.0,
    no_noise: bool = False,
    salt: str = "",
    agent: AgentId | None = None,
) -> float:
    """Mean end-to-end duration of a plan fragment over seeded dry runs.

    Failures are included as retries: a failed attempt costs its sampled
    duration plus the retry delay, then the action is attempted again.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    actions = list(fragment)
    totals = []
    for s in range(samples):
        rng = _stream(seed, "rehearse", salt, agent, s)
        total = 0.0
        for a in actions:
            while True:
                if no_noise or a.duration_std == 0:
                    d = a.duration_mean * duration_factor
                else:
                    d = max(0.0, rng.gauss(a.duration_mean * duration_factor, a.duration_std))
                total += d
                if no_noise or a.failure_probability <= 0:
                    break
                if rng.random() >= a.failure_probability:
                    break
                total += retry_delay
        totals.append(total)
    return sum(totals) / len(totals)


# -- entry points --------------------------------------------------------------


def run(scenario: Scenario, config: SimConfig | None = None) -> tuple[ExecutionTrace, "TimingReport"]:
    sim = Simulation(scenario, config)
    trace = sim.run()
    return trace, report([trace], scenario)


def compare_concurrent_sequential(
    scenario: Scenario, config: SimConfig | None = None
) -> tuple[float, float, float]:
    """Makespans of the concurrent run and the graph-at-a-time rerun.

    The sequential rerun forces non-termination graphs to execute one at a
    time in Gamma order over the same shared agent pool; with zero noise
    and independent branches this reduces to max-of-totals vs
    sum-of-totals. Returns (concurrent, sequential, concurrent/sequential).
    """
    base = config or SimConfig()
    conc = Simulation(scenario, replace(base, sequential=False)).run()
    seq = Simulation(scenario, replace(base, sequential=True)).run()
    ratio = conc.makespan / seq.makespan if seq.makespan else 1.0
    return conc.makespan, seq.makespan, ratio


# -- timing reports --------------------------------------------------------------

_CATEGORY_ROWS = (
    ("representation", "Task Representation"),
    ("planning", "Task Planner"),
    ("rehearsal", "Simulator"),
)


@dataclass(frozen=True)
class ReportRow:
    name: str
    avg: float
    share: float  # percent of the branch total
    std: float


@dataclass
class TimingReport:
    """Per-branch execution-time breakdown plus makespan and idle times."""

    branches: dict[GraphId, list[ReportRow]]
    totals: dict[GraphId, ReportRow]
    makespan_avg: float
    makespan_std: float
    idle: dict[AgentId, float]

    def branch_share(self, categories: Iterable[str]) -> float:
        """Percent of overall time spent in the given row names."""
        wanted = set(categories)
        num = sum(
            r.avg for rows in self.branches.values() for r in rows if r.name in wanted
        )
        den = sum(t.avg for t in self.totals.values())
        return 100.0 * num / den if den else 0.0

    def to_text(self) -> str:
        lines = []
        for graph_id, rows in sorted(self.branches.items()):
            lines.append(f"[{graph_id}]")
            lines.append(
                f"{'Module':<24}{'Avg. time [s]':>14}{'Avg. time [%]':>15}"
                f"{'Std. dev. [s]':>15}"
            )
            for r in rows + [self.totals[graph_id]]:
                lines.append(
                    f"{r.name:<24}{r.avg:>14.2f}{r.share:>15.2f}{r.std:>15.3f}"
                )
            lines.append("")
        lines.append(f"{'Makespan [s]':<24}{self.makespan_avg:>14.2f}"
                     f"{'':>15}{self.makespan_std:>15.3f}")
        for agent, idle in sorted(self.idle.items()):
            lines.append(f"{'Idle ' + agent + ' [s]':<24}{idle:>14.2f}")
        return "\n".join(lines) + "\n"


def report(traces: list[ExecutionTrace], scenario: Scenario) -> TimingReport:
    """Aggregate one or more traces into a per-branch timing breakdown."""
    if not traces or any(not t.events for t in traces):
        raise ValueError("cannot report on an empty trace")

    groups = {a.id: a.group for a in scenario.agents.values()}
    graph_ids = [g.id for g in scenario.model.gamma_order()]
    per_trace: list[dict[GraphId, dict[str, float]]] = []
    for trace in traces:
        acc: dict[GraphId, dict[str, float]] = {g: {} for g in graph_ids}
        for ev in trace.events:
            g = ev.data.get("graph")
            if g not in acc:
                continue
            if ev.kind == "overhead":
                row = dict(_CATEGORY_ROWS).get(ev.data["category"], ev.data["category"])
                acc[g][row] = acc[g].get(row, 0.0) + ev.data["seconds"]
            elif ev.kind in ("action-done", "action-failed", "gesture-missed"):
                category = _action_category(scenario, g, ev.data["arc"], ev.data["action"])
                if category == "action":
                    row = f"{groups[ev.data['agent']]} actions"
                else:
                    row = dict(_CATEGORY_ROWS).get(category, category)
                acc[g][row] = acc[g].get(row, 0.0) + ev.data["duration"]
        per_trace.append(acc)

    branches: dict[GraphId, list[ReportRow]] = {}
    totals: dict[GraphId, ReportRow] = {}
    for g in graph_ids:
        rows = sorted({name for acc in per_trace for name in acc[g]})
        # Stable Table-style order: representation, planner, simulator, actions.
        order = [label for _, label in _CATEGORY_ROWS]
        rows.sort(key=lambda r: (order.index(r) if r in order else len(order), r))
        branch_rows = []
        trace_totals = [sum(acc[g].values()) for acc in per_trace]
        avg_total = statistics.mean(trace_totals)
        for name in rows:
            values = [acc[g].get(name, 0.0) for acc in per_trace]
            avg = statistics.mean(values)
            std = statistics.stdev(values) if len(values) > 1 else 0.0
            share = 100.0 * avg / avg_total if avg_total else 0.0
            branch_rows.append(ReportRow(name, avg, share, std))
        branches[g] = branch_rows
        totals[g] = ReportRow(
            "Total",
            avg_total,
            100.0 if avg_total else 0.0,
            statistics.stdev(trace_totals) if len(trace_totals) > 1 else 0.0,
        )

    makespans = [t.makespan for t in traces]
    idle: dict[AgentId, float] = {}
    for agent in sorted(scenario.agents):
        per_run = []
        for t in traces:
            busy = sum(b - a for a, b in t.busy_intervals(agent))
            per_run.append(t.makespan - busy)
        idle[agent] = statistics.mean(per_run)

    return TimingReport(
        branches=branches,
        totals=totals,
        makespan_avg=statistics.mean(makespans),
        makespan_std=statistics.stdev(makespans) if len(makespans) > 1 else 0.0,
        idle=idle,
    )


def _action_category(scenario: Scenario, graph_id, arc_id, action_id) -> str:
    g = scenario.model.graph(graph_id)
    for a in g.arc(arc_id).actions:
        if a.id == action_id:
            return a.category
    return "action"
