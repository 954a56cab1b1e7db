/**
 * The operator console view: pure rendering of committed snapshots.
 *
 * Nothing here mutates collaboration state locally. The view keeps the
 * last committed snapshot and repaints from it; snapshots arriving out of
 * order (seq not strictly increasing) are dropped, so every rendered
 * status is backed by a snapshot the service actually sent, in order.
 */

import type { ArcState, Envelope, Snapshot, TraceEventView } from "./protocol.js";

export interface ViewHandlers {
  onGesture(kind: string, miss: boolean): void;
  onSuggestionDone(graph: string, arc: string, action: string, agent: string): void;
  onOverride(graph: string, arc: string, action: string): void;
  onAdvance(seconds: number): void;
}

interface BusySegment {
  start: number;
  end: number | null;
  action: string;
}

export class ConsoleView {
  readonly root: HTMLElement;
  lastSeq = -1;
  renderedSeqs: number[] = [];
  snapshot: Snapshot | null = null;

  private handlers: ViewHandlers;
  private timelines = new Map<string, BusySegment[]>();
  private seenEvents = new Set<string>();

  constructor(root: HTMLElement, handlers: ViewHandlers) {
    this.root = root;
    this.handlers = handlers;
    root.innerHTML = `
      <div id="connection" class="idle">idle</div>
      <div id="rejection" hidden></div>
      <div id="clock"></div>
      <div id="controls">
        <span id="gesture-buttons"></span>
        <label><input type="checkbox" id="miss-toggle"> miss this gesture</label>
        <input type="number" id="advance-seconds" value="5" min="0" step="1">
        <button id="advance">advance</button>
      </div>
      <div id="suggestions"></div>
      <div id="graphs"></div>
      <div id="agents"></div>
      <ul id="log"></ul>
    `;
    this.el("#advance").addEventListener("click", () => {
      const secs = Number((this.el("#advance-seconds") as HTMLInputElement).value);
      this.handlers.onAdvance(secs);
    });
  }

  el<T extends HTMLElement = HTMLElement>(selector: string): T {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found as T;
  }

  missToggle(): boolean {
    return (this.el("#miss-toggle") as HTMLInputElement).checked;
  }

  setConnection(state: string, detail = ""): void {
    const box = this.el("#connection");
    box.className = state;
    box.textContent = detail ? `${state}: ${detail}` : state;
  }

  showRejection(reason: string): void {
    const box = this.el("#rejection");
    box.hidden = false;
    box.textContent = `rejected: ${reason}`;
  }

  clearRejection(): void {
    const box = this.el("#rejection");
    box.hidden = true;
    box.textContent = "";
  }

  /** Apply a committed snapshot envelope; stale deliveries are dropped. */
  apply(env: Envelope<Snapshot>): boolean {
    if (env.kind !== "snapshot" || env.seq <= this.lastSeq) return false;
    this.lastSeq = env.seq;
    this.snapshot = env.payload;
    this.absorbEvents(env.payload.events_tail);
    this.render();
    this.renderedSeqs.push(env.seq);
    return true;
  }

  private absorbEvents(tail: TraceEventView[]): void {
    for (const ev of tail) {
      const key = JSON.stringify(ev);
      if (this.seenEvents.has(key)) continue;
      this.seenEvents.add(key);
      const agent = ev["agent"] as string | undefined;
      if (!agent) continue;
      const segs = this.timelines.get(agent) ?? [];
      if (ev.kind === "action-started") {
        segs.push({ start: ev.t, end: null, action: String(ev["action"]) });
      } else if (
        ev.kind === "action-done" ||
        ev.kind === "action-failed" ||
        ev.kind === "gesture-missed"
      ) {
        const open = segs.find((s) => s.end === null && s.action === String(ev["action"]));
        if (open) open.end = ev.t;
      }
      this.timelines.set(agent, segs);
    }
  }

  private render(): void {
    const snap = this.snapshot;
    if (!snap) return;
    this.el("#clock").textContent = snap.done
      ? `t=${snap.time.toFixed(1)} s — cooperation complete`
      : `t=${snap.time.toFixed(1)} s`;
    this.renderGestures(snap);
    this.renderSuggestions(snap);
    this.renderGraphs(snap);
    this.renderAgents(snap);
    this.renderLog(snap);
  }

  private renderGestures(snap: Snapshot): void {
    const box = this.el("#gesture-buttons");
    box.innerHTML = "";
    for (const kind of snap.gestures) {
      const btn = document.createElement("button");
      btn.id = `gesture-${kind}`;
      btn.textContent = kind;
      btn.addEventListener("click", () => this.handlers.onGesture(kind, this.missToggle()));
      box.appendChild(btn);
    }
  }

  private renderSuggestions(snap: Snapshot): void {
    const box = this.el("#suggestions");
    box.innerHTML = "<h3>suggestions</h3>";
    const list = document.createElement("ul");
    for (const s of snap.suggestions) {
      const li = document.createElement("li");
      li.className = "suggestion";
      li.dataset.action = s.action;
      li.dataset.agent = s.agent;
      li.textContent = `${s.agent}: ${s.action} (${s.graph}:${s.hyper_arc}, ~${s.estimated_duration.toFixed(1)} s) `;
      if (snap.agents[s.agent]?.class === "human-operator") {
        const btn = document.createElement("button");
        btn.className = "do-suggestion";
        btn.textContent = "done";
        btn.addEventListener("click", () =>
          this.handlers.onSuggestionDone(s.graph, s.hyper_arc, s.action, s.agent),
        );
        li.appendChild(btn);
      } else {
        li.append(" [auto]");
      }
      list.appendChild(li);
    }
    box.appendChild(list);
  }

  private arcClasses(arc: ArcState, onPath: boolean): string {
    const classes = ["arc"];
    if (arc.solved) classes.push("solved");
    if (arc.suppressed) classes.push("suppressed");
    if (arc.feasible) classes.push("feasible");
    if (onPath) classes.push("onpath");
    return classes.join(" ");
  }

  private renderGraphs(snap: Snapshot): void {
    const box = this.el("#graphs");
    box.innerHTML = "";
    for (const [graphId, g] of Object.entries(snap.graphs)) {
      const section = document.createElement("section");
      section.className = "graph";
      section.id = `graph-${graphId}`;
      const head = document.createElement("h3");
      const item = g.item ? ` item=${g.item}` : "";
      head.textContent = `${graphId} [${g.status}] round ${g.rounds_done}/${g.rounds_total}${item}`;
      section.appendChild(head);

      const nodes = document.createElement("div");
      nodes.className = "nodes";
      for (const n of g.nodes) {
        const chip = document.createElement("span");
        chip.className =
          "node" +
          (n.met ? " met" : "") +
          (n.feasible ? " feasible" : "") +
          (n.entangled ? " entangled" : "");
        chip.dataset.node = n.id;
        chip.textContent = n.label;
        chip.title = n.id;
        nodes.appendChild(chip);
      }
      section.appendChild(nodes);

      const best = new Set(snap.best_paths[graphId] ?? []);
      const arcs = document.createElement("div");
      arcs.className = "arcs";
      for (const arc of g.hyper_arcs) {
        const row = document.createElement("div");
        row.className = this.arcClasses(arc, best.has(arc.id));
        row.dataset.arc = arc.id;
        const progress =
          arc.actions.length > 0 ? ` ${arc.done_actions}/${arc.actions.length}` : "";
        const backing = arc.backed_by ? ` <= ${arc.backed_by}` : "";
        const text = document.createElement("span");
        text.textContent = `${arc.id}${progress}${backing}`;
        row.appendChild(text);

        const next = arc.actions[arc.done_actions];
        if (next && !arc.backed_by) {
          const btn = document.createElement("button");
          btn.className = "override";
          btn.textContent = `override: ${next.id}`;
          // Suppressed (and non-feasible) arcs are not clickable.
          btn.disabled = arc.suppressed || !arc.feasible;
          btn.addEventListener("click", () =>
            this.handlers.onOverride(graphId, arc.id, next.id),
          );
          row.appendChild(btn);
        }
        arcs.appendChild(row);
      }
      section.appendChild(arcs);
      box.appendChild(section);
    }
  }

  private renderAgents(snap: Snapshot): void {
    const box = this.el("#agents");
    box.innerHTML = "<h3>agents</h3>";
    for (const [agentId, a] of Object.entries(snap.agents)) {
      const row = document.createElement("div");
      row.className = "agent" + (a.idle ? " idle" : " busy");
      row.dataset.agent = agentId;
      const doing = a.executing
        ? `executing ${a.executing[2]} until t=${a.busy_until.toFixed(1)}`
        : "idle";
      const segments = (this.timelines.get(agentId) ?? [])
        .map((s) => `[${s.start.toFixed(1)}-${s.end === null ? "…" : s.end.toFixed(1)} ${s.action}]`)
        .join(" ");
      row.textContent = `${agentId} (${a.group}): ${doing} ${segments}`;
      box.appendChild(row);
    }
  }

  private renderLog(snap: Snapshot): void {
    const box = this.el("#log");
    box.innerHTML = "";
    for (const ev of snap.events_tail.slice(-12)) {
      const li = document.createElement("li");
      const extras = Object.entries(ev)
        .filter(([k]) => k !== "t" && k !== "kind")
        .map(([k, v]) => `${k}=${v}`)
        .join(" ");
      li.textContent = `${ev.t.toFixed(1)} ${ev.kind} ${extras}`;
      box.appendChild(li);
    }
  }
}
