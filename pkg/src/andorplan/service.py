"""Session service: the transactional command stream over a live scenario.

A session owns one simulation in stepped or wall-clock-scaled mode, applies
externally submitted events (gestures, explicit actions, overrides) through
the planner transactionally, and hands out committed snapshots. Every
accepted or rejected submission lands in an append-only log; replaying the
log against a fresh session reproduces the state bit for bit.

Wire protocol: JSON envelopes ``{session, seq, kind, payload}`` over HTTP,
plus server push of the same envelopes over a WebSocket.
"""

from __future__ import annotations

import asyncio
import hashlib
import itertools
import json
import threading
import time as wall_clock
from dataclasses import asdict, dataclass

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .errors import ProtocolViolation, ScenarioError, UnknownEntityError
from .planner import NoPathError, best_path, model_arc_cost
from .scenario import Scenario, bundled_names, bundled_text, loads
from .simulator import SimConfig, Simulation


@dataclass
class LogEntry:
    seq: int
    sim_time: float
    source: str  # external | internal
    kind: str
    payload: dict
    accepted: bool
    reason: str = ""


class Session:
    """One client-visible run; all mutations pass through a single lock."""

    _ids = itertools.count(1)

    def __init__(
        self,
        scenario: Scenario,
        mode: str = "stepped",
        speed: float = 1.0,
        seed: int | None = None,
        session_id: str | None = None,
    ) -> None:
        if mode not in ("stepped", "live"):
            raise ValueError(f"unknown session mode '{mode}'")
        self.id = session_id or f"s{next(self._ids):04d}"
        self.scenario = scenario
        self.mode = mode
        self.speed = speed
        self.seed = scenario.sim.seed if seed is None else seed
        self.sim = Simulation(
            scenario, SimConfig(seed=self.seed, interactive_operator=True)
        )
        self.seq = 0
        self.log: list[LogEntry] = []
        self._lock = threading.Lock()
        self._seen_event_ids: set[str] = set()
        self._last_wall = wall_clock.monotonic()
        self._commit()

    # -- internals ---------------------------------------------------------

    def _commit(self) -> None:
        self.seq += 1

    def _log(self, source: str, kind: str, payload: dict, accepted: bool, reason: str = "") -> LogEntry:
        entry = LogEntry(
            seq=self.seq,
            sim_time=self.sim.time,
            source=source,
            kind=kind,
            payload=payload,
            accepted=accepted,
            reason=reason,
        )
        self.log.append(entry)
        return entry

    def _catch_up_wall_clock(self) -> None:
        """Live mode: pull the simulation up to scaled wall time. Lock held."""
        if self.mode != "live":
            return
        now = wall_clock.monotonic()
        elapsed = (now - self._last_wall) * self.speed
        self._last_wall = now
        if elapsed > 0:
            self.sim.advance(elapsed)
            self._commit()

    def touch(self) -> None:
        """Bring a live session up to date before serving a read."""
        with self._lock:
            self._catch_up_wall_clock()

    # -- public surface ------------------------------------------------------

    def snapshot(self) -> dict:
        """The committed state, as one JSON-ready envelope payload."""
        with self._lock:
            return self._snapshot_locked()

    def _snapshot_locked(self) -> dict:
        sim = self.sim
        model = sim.model
        entangled: dict[str, set[str]] = {}
        for link in model.entanglements:
            entangled.setdefault(link.source_graph, set()).add(link.source_node)
            entangled.setdefault(link.dependent_graph, set()).add(link.dependent_node)
        graphs = {}
        for g in model.gamma_order():
            ep = sim.states[g.id]
            graphs[g.id] = {
                "status": ep.status.value,
                "round": sim.round_idx[g.id],
                "rounds_done": sim.rounds_done[g.id],
                "rounds_total": sim.total_rounds[g.id],
                "item": sim.current_item[g.id].id if sim.current_item[g.id] else None,
                "root": g.root,
                "nodes": [
                    {
                        "id": n.id,
                        "label": n.display,
                        "met": ep.is_met(n.id),
                        "feasible": ep.is_node_feasible(n.id),
                        "entangled": n.id in entangled.get(g.id, ()),
                    }
                    for n in g.nodes
                ],
                "hyper_arcs": [
                    {
                        "id": h.id,
                        "parent": h.parent,
                        "children": sorted(h.children),
                        "feasible": ep.is_arc_feasible(h.id),
                        "solved": ep.is_solved(h.id),
                        "suppressed": ep.is_suppressed(h.id),
                        "done_actions": ep.done_actions(h.id),
                        "actions": [
                            {"id": a.id, "label": a.label, "agents": sorted(a.eligible_agents)}
                            for a in h.actions
                        ],
                        "backed_by": next(
                            (
                                t.subgraph
                                for t in model.transitions.values()
                                if t.graph == g.id and t.hyper_arc == h.id
                            ),
                            None,
                        ),
                    }
                    for h in g.hyper_arcs
                ],
            }
        suggestions = [
            {
                "agent": s.agent,
                "graph": s.graph,
                "hyper_arc": s.hyper_arc,
                "action": s.action,
                "rationale": s.rationale,
                "estimated_duration": s.estimated_duration,
            }
            for s in sim.current_suggestions()
        ]
        agents = {
            a_id: {
                "class": st.spec.class_tag,
                "group": st.spec.group,
                "busy_until": st.busy_until,
                "executing": list(st.current) if st.current else None,
                "idle": st.idle(sim.time),
            }
            for a_id, st in sorted(sim.agents.items())
        }
        cost = model_arc_cost(model, sim.states)
        best_paths = {}
        for g in model.gamma_order():
            try:
                best_paths[g.id] = list(best_path(g, sim.states[g.id], cost).arcs)
            except NoPathError:
                best_paths[g.id] = None
        return {
            "scenario": self.scenario.name,
            "mode": self.mode,
            "time": sim.time,
            "done": sim.done,
            "graphs": graphs,
            "agents": agents,
            "best_paths": best_paths,
            "suggestions": suggestions,
            "gestures": sorted(self.scenario.gestures),
            "work_items": [
                {"id": w.id, "outcome": w.outcome} for w in self.scenario.work_items
            ],
            "events_tail": [
                {"t": ev.t, "kind": ev.kind, **ev.data}
                for ev in sim.trace.events[-25:]
            ],
        }

    def state_hash(self) -> str:
        """Digest of the committed snapshot, ignoring the session identity."""
        snap = self.snapshot()
        return hashlib.sha256(
            json.dumps(snap, sort_keys=True).encode()
        ).hexdigest()

    def submit(self, kind: str, payload: dict, event_id: str | None = None) -> LogEntry:
        """Apply one external event transactionally; rejections mutate nothing."""
        with self._lock:
            self._catch_up_wall_clock()
            if event_id is not None and event_id in self._seen_event_ids:
                return self._log(
                    "external", kind, payload, False, "duplicate event id"
                )
            try:
                self._apply_locked(kind, payload)
            except (ProtocolViolation, UnknownEntityError, ValueError) as exc:
                return self._log("external", kind, payload, False, str(exc))
            if event_id is not None:
                self._seen_event_ids.add(event_id)
            self._commit()
            return self._log("external", kind, payload, True)

    def _apply_locked(self, kind: str, payload: dict) -> None:
        sim = self.sim
        if kind == "gesture":
            gesture = payload.get("gesture", "")
            ref = sim.resolve_gesture(gesture)
            if payload.get("miss"):
                # The gesture happened but recognition dropped it: no state
                # change, the operator will have to repeat it.
                sim.trace.add(
                    sim.time,
                    "gesture-missed",
                    graph=ref[0],
                    arc=ref[1],
                    action=ref[2],
                    agent=ref[3],
                    attempt=0,
                    duration=0.0,
                )
                return
            sim.apply_external_action(*ref)
        elif kind in ("action-done", "override"):
            sim.apply_external_action(
                payload["graph"],
                payload["hyper_arc"],
                payload["action"],
                payload.get("agent", ""),
                override=kind == "override",
            )
        elif kind == "node-met":
            sim.states[payload["graph"]].meet_node(payload["node"])
            sim.trace.add(sim.time, "node-met", graph=payload["graph"], node=payload["node"])
            sim._after_met(payload["graph"], payload["node"])
            sim._settle()
            sim._schedule_work()
        elif kind == "action-failed":
            sim.trace.add(
                sim.time,
                "action-failed",
                graph=payload["graph"],
                arc=payload["hyper_arc"],
                action=payload["action"],
                agent=payload.get("agent", ""),
                attempt=0,
                duration=0.0,
            )
        else:
            raise ValueError(f"unknown event kind '{kind}'")

    def advance(self, seconds: float) -> list[dict]:
        """Stepped mode only: move the simulated clock, firing due events."""
        with self._lock:
            if self.mode != "stepped":
                raise ProtocolViolation("advance is only available in stepped mode")
            if seconds < 0:
                raise ValueError("cannot advance by a negative duration")
            fired = self.sim.advance(seconds)
            self._commit()
            self._log("external", "advance", {"seconds": seconds}, True)
            return [{"t": ev.t, "kind": ev.kind, **ev.data} for ev in fired]

    def export_log(self) -> list[dict]:
        with self._lock:
            return [asdict(e) for e in self.log]

    @classmethod
    def replay(cls, scenario: Scenario, log: list[dict], seed: int) -> "Session":
        """Rebuild a session by folding the external event log over a fresh one."""
        fresh = cls(scenario, mode="stepped", seed=seed)
        for entry in log:
            if entry["source"] != "external" or not entry["accepted"]:
                continue
            if entry["kind"] == "advance":
                fresh.advance(entry["payload"]["seconds"])
            else:
                fresh.submit(entry["kind"], entry["payload"])
        return fresh


class SessionManager:
    """All live sessions, independent and individually locked."""

    def __init__(self) -> None:
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(
        self,
        scenario_text: str | None = None,
        bundled: str | None = None,
        mode: str = "stepped",
        speed: float = 1.0,
        seed: int | None = None,
    ) -> Session:
        if scenario_text is None and bundled is None:
            raise ValueError("either a scenario document or a bundled name is required")
        text = scenario_text if scenario_text is not None else bundled_text(bundled)
        scenario = loads(text, name_hint=bundled or "<inline>")
        session = Session(scenario, mode=mode, speed=speed, seed=seed)
        with self._lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self.sessions:
                raise UnknownEntityError(f"unknown session '{session_id}'")
            return self.sessions[session_id]


def envelope(session: Session, kind: str, payload: dict) -> dict:
    return {"session": session.id, "seq": session.seq, "kind": kind, "payload": payload}


def create_app(manager: SessionManager | None = None) -> FastAPI:
    """The FastAPI application exposing the wire protocol."""
    manager = manager or SessionManager()
    app = FastAPI(title="andorplan session service")
    app.state.manager = manager

    def _session(session_id: str) -> Session:
        try:
            return manager.get(session_id)
        except UnknownEntityError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/scenarios")
    def scenarios() -> dict:
        return {"scenarios": bundled_names()}

    @app.post("/sessions")
    def create_session(body: dict) -> dict:
        try:
            session = manager.create(
                scenario_text=body.get("document"),
                bundled=body.get("scenario"),
                mode=body.get("mode", "stepped"),
                speed=float(body.get("speed", 1.0)),
                seed=body.get("seed"),
            )
        except (ScenarioError, UnknownEntityError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return envelope(session, "snapshot", session.snapshot())

    @app.get("/sessions/{session_id}")
    def snapshot(session_id: str) -> dict:
        session = _session(session_id)
        session.touch()
        return envelope(session, "snapshot", session.snapshot())

    @app.post("/sessions/{session_id}/events")
    def submit(session_id: str, body: dict) -> dict:
        session = _session(session_id)
        kind = body.get("kind", "")
        entry = session.submit(kind, body.get("payload", {}), body.get("event_id"))
        payload = {
            "accepted": entry.accepted,
            "reason": entry.reason,
            "event": {"kind": entry.kind, "payload": entry.payload},
            "snapshot": session.snapshot(),
        }
        return envelope(session, "event-result", payload)

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str, body: dict) -> dict:
        session = _session(session_id)
        try:
            fired = session.advance(float(body.get("seconds", 0.0)))
        except (ProtocolViolation, ValueError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return envelope(
            session, "advanced", {"fired": fired, "snapshot": session.snapshot()}
        )

    @app.get("/sessions/{session_id}/log")
    def log(session_id: str) -> dict:
        session = _session(session_id)
        return envelope(session, "log", {"entries": session.export_log()})

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str) -> None:
        await ws.accept()
        try:
            session = manager.get(session_id)
        except UnknownEntityError:
            await ws.close(code=4404)
            return
        last_seq = -1
        try:
            while True:
                if session.seq != last_seq:
                    last_seq = session.seq
                    await ws.send_json(
                        envelope(session, "snapshot", session.snapshot())
                    )
                await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            return

    return app
