/**
 * Session client: creates or attaches to a session, receives committed
 * snapshot envelopes (WebSocket push, with polling as fallback or for
 * environments without WebSocket), and submits operator events.
 *
 * Every state the rest of the console sees flows through `onEnvelope`
 * subscribers; the client itself never interprets snapshots.
 */

import type { AdvanceResult, Envelope, EventKind, EventResult, Snapshot } from "./protocol.js";

export type ConnectionState = "idle" | "connecting" | "connected" | "reconnecting" | "failed";

export interface ClientOptions {
  base: string; // e.g. http://127.0.0.1:8787
  transport?: "ws" | "poll";
  pollMs?: number; // 0 disables the timer; call refresh() manually
  maxBackoffMs?: number;
}

type EnvelopeHandler = (env: Envelope<Snapshot>) => void;
type StateHandler = (state: ConnectionState, detail?: string) => void;

export class SessionClient {
  readonly base: string;
  sessionId: string | null = null;
  receivedSeqs: number[] = [];

  private transport: "ws" | "poll";
  private pollMs: number;
  private maxBackoffMs: number;
  private envelopeHandlers: EnvelopeHandler[] = [];
  private stateHandlers: StateHandler[] = [];
  private ws: WebSocket | null = null;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private backoffMs = 250;
  private stopped = false;
  private nextEventId = 1;

  constructor(options: ClientOptions) {
    this.base = options.base.replace(/\/$/, "");
    this.transport = options.transport ?? (typeof WebSocket === "undefined" ? "poll" : "ws");
    this.pollMs = options.pollMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
  }

  onEnvelope(handler: EnvelopeHandler): void {
    this.envelopeHandlers.push(handler);
  }

  onConnectionState(handler: StateHandler): void {
    this.stateHandlers.push(handler);
  }

  private emitState(state: ConnectionState, detail?: string): void {
    for (const h of this.stateHandlers) h(state, detail);
  }

  private deliver(env: Envelope<Snapshot>): void {
    this.receivedSeqs.push(env.seq);
    for (const h of this.envelopeHandlers) h(env);
  }

  async createSession(scenario: string, seed?: number, mode = "stepped"): Promise<Envelope<Snapshot>> {
    const env = await this.post<Envelope<Snapshot>>("/sessions", { scenario, seed, mode });
    this.sessionId = env.session;
    this.deliver(env);
    this.start();
    return env;
  }

  async attach(sessionId: string): Promise<Envelope<Snapshot>> {
    this.sessionId = sessionId;
    const env = await this.get<Envelope<Snapshot>>(`/sessions/${sessionId}`);
    this.deliver(env);
    this.start();
    return env;
  }

  /** Fetch the latest committed snapshot once (the polling tick). */
  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const env = await this.get<Envelope<Snapshot>>(`/sessions/${this.sessionId}`);
    this.deliver(env);
  }

  async submit(
    kind: EventKind,
    payload: Record<string, unknown>,
  ): Promise<EventResult> {
    if (!this.sessionId) throw new Error("no session");
    const env = await this.post<Envelope<EventResult>>(
      `/sessions/${this.sessionId}/events`,
      { kind, payload, event_id: `ui-${this.nextEventId++}` },
    );
    this.deliver({ ...env, kind: "snapshot", payload: env.payload.snapshot });
    return env.payload;
  }

  async advance(seconds: number): Promise<AdvanceResult> {
    if (!this.sessionId) throw new Error("no session");
    const env = await this.post<Envelope<AdvanceResult>>(
      `/sessions/${this.sessionId}/advance`,
      { seconds },
    );
    this.deliver({ ...env, kind: "snapshot", payload: env.payload.snapshot });
    return env.payload;
  }

  start(): void {
    this.stopped = false;
    if (this.transport === "ws") {
      this.openSocket();
    } else if (this.pollMs > 0) {
      this.schedulePoll();
    } else {
      this.emitState("connected");
    }
  }

  stop(): void {
    this.stopped = true;
    if (this.ws) this.ws.close();
    if (this.pollTimer) clearTimeout(this.pollTimer);
    this.emitState("idle");
  }

  private openSocket(): void {
    if (!this.sessionId || this.stopped) return;
    this.emitState(this.backoffMs > 250 ? "reconnecting" : "connecting");
    const url = `${this.base.replace(/^http/, "ws")}/sessions/${this.sessionId}/stream`;
    const ws = new WebSocket(url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 250;
      this.emitState("connected");
    };
    ws.onmessage = (msg) => {
      this.deliver(JSON.parse(String(msg.data)) as Envelope<Snapshot>);
    };
    ws.onclose = () => {
      if (this.stopped) return;
      // Re-sync through a fresh socket; the first push carries the latest
      // committed snapshot, so dropped updates are recovered wholesale.
      this.emitState("reconnecting", `retry in ${this.backoffMs} ms`);
      setTimeout(() => this.openSocket(), this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  private schedulePoll(): void {
    if (this.stopped) return;
    this.pollTimer = setTimeout(async () => {
      try {
        await this.refresh();
        this.emitState("connected");
      } catch (err) {
        this.emitState("reconnecting", String(err));
      }
      this.schedulePoll();
    }, this.pollMs);
    this.emitState("connected");
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) {
      throw new Error(`${res.status}: ${await res.text()}`);
    }
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new Error(`${res.status}: ${await res.text()}`);
    }
    return (await res.json()) as T;
  }
}
