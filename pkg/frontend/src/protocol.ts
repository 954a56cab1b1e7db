/** Wire protocol types, mirroring the session service's JSON envelopes. */

export interface Envelope<P = unknown> {
  session: string;
  seq: number;
  kind: string;
  payload: P;
}

export interface NodeState {
  id: string;
  label: string;
  met: boolean;
  feasible: boolean;
  entangled: boolean;
}

export interface ActionRef {
  id: string;
  label: string;
  agents: string[];
}

export interface ArcState {
  id: string;
  parent: string;
  children: string[];
  feasible: boolean;
  solved: boolean;
  suppressed: boolean;
  done_actions: number;
  actions: ActionRef[];
  backed_by: string | null;
}

export interface GraphState {
  status: string;
  round: number;
  rounds_done: number;
  rounds_total: number;
  item: string | null;
  root: string;
  nodes: NodeState[];
  hyper_arcs: ArcState[];
}

export interface AgentState {
  class: string;
  group: string;
  busy_until: number;
  executing: [string, string, string] | null;
  idle: boolean;
}

export interface SuggestionView {
  agent: string;
  graph: string;
  hyper_arc: string;
  action: string;
  rationale: string;
  estimated_duration: number;
}

export interface TraceEventView {
  t: number;
  kind: string;
  [key: string]: unknown;
}

export interface Snapshot {
  scenario: string;
  mode: string;
  time: number;
  done: boolean;
  graphs: Record<string, GraphState>;
  agents: Record<string, AgentState>;
  best_paths: Record<string, string[] | null>;
  suggestions: SuggestionView[];
  gestures: string[];
  work_items: { id: string; outcome: string }[];
  events_tail: TraceEventView[];
}

export interface EventResult {
  accepted: boolean;
  reason: string;
  event: { kind: string; payload: Record<string, unknown> };
  snapshot: Snapshot;
}

export interface AdvanceResult {
  fired: TraceEventView[];
  snapshot: Snapshot;
}

export type EventKind =
  | "gesture"
  | "action-done"
  | "override"
  | "node-met"
  | "action-failed";
