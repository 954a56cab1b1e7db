/**
 * Glue between the session client and the view: user input becomes wire
 * events, received envelopes become renders, rejections surface inline.
 */

import { SessionClient, type ClientOptions } from "./client.js";
import { ConsoleView } from "./view.js";
import type { EventResult, Snapshot } from "./protocol.js";

export class OperatorConsole {
  readonly client: SessionClient;
  readonly view: ConsoleView;
  private lastOp: Promise<unknown> = Promise.resolve();

  constructor(root: HTMLElement, options: ClientOptions) {
    this.client = new SessionClient(options);
    this.view = new ConsoleView(root, {
      onGesture: (kind, miss) => this.track(this.gesture(kind, miss)),
      onSuggestionDone: (graph, arc, action, agent) =>
        this.track(this.actionDone(graph, arc, action, agent)),
      onOverride: (graph, arc, action) => this.track(this.override(graph, arc, action)),
      onAdvance: (seconds) => this.track(this.advance(seconds)),
    });
    this.client.onEnvelope((env) => this.view.apply(env));
    this.client.onConnectionState((state, detail) => this.view.setConnection(state, detail));
  }

  private track(op: Promise<unknown>): void {
    this.lastOp = op.catch((err) => {
      this.view.setConnection("failed", String(err));
    });
  }

  /** Resolves once the most recent button-initiated request finished. */
  async settled(): Promise<void> {
    await this.lastOp;
  }

  async create(scenario: string, seed?: number): Promise<void> {
    try {
      await this.client.createSession(scenario, seed);
    } catch (err) {
      this.view.setConnection("failed", String(err));
      throw err;
    }
  }

  async attach(sessionId: string): Promise<void> {
    try {
      await this.client.attach(sessionId);
    } catch (err) {
      // Bad session id: surface the error, keep the console alive.
      this.view.setConnection("failed", String(err));
    }
  }

  private absorb(result: EventResult): EventResult {
    if (result.accepted) {
      this.view.clearRejection();
    } else {
      this.view.showRejection(result.reason);
    }
    return result;
  }

  async gesture(kind: string, miss = false): Promise<EventResult> {
    return this.absorb(await this.client.submit("gesture", { gesture: kind, miss }));
  }

  async actionDone(graph: string, arc: string, action: string, agent: string): Promise<EventResult> {
    return this.absorb(
      await this.client.submit("action-done", {
        graph,
        hyper_arc: arc,
        action,
        agent,
      }),
    );
  }

  /** Perform a non-suggested action of a feasible arc (operator override). */
  async override(graph: string, arc: string, action: string): Promise<EventResult> {
    const agent = this.resolveAgent(graph, arc, action);
    return this.absorb(
      await this.client.submit("override", {
        graph,
        hyper_arc: arc,
        action,
        agent,
      }),
    );
  }

  async advance(seconds: number): Promise<void> {
    await this.client.advance(seconds);
  }

  snapshot(): Snapshot | null {
    return this.view.snapshot;
  }

  /** Map an action's eligibility entries (ids or class tags) to an agent id. */
  private resolveAgent(graph: string, arc: string, action: string): string {
    const snap = this.view.snapshot;
    if (!snap) return "";
    const arcState = snap.graphs[graph]?.hyper_arcs.find((h) => h.id === arc);
    const ref = arcState?.actions.find((a) => a.id === action);
    if (!ref) return "";
    for (const entry of ref.agents) {
      if (entry in snap.agents) return entry;
    }
    for (const [agentId, a] of Object.entries(snap.agents)) {
      if (ref.agents.includes(a.class)) return agentId;
    }
    return ref.agents[0] ?? "";
  }
}
