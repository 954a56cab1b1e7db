/**
 * Scripted round-trip against the real session service: the test plays the
 * operator entirely through the rendered controls, and every status it
 * checks must come from a committed snapshot the service pushed.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { OperatorConsole } from "../src/console.js";
import { ConsoleView } from "../src/view.js";
import type { Envelope, Snapshot } from "../src/protocol.js";

const BASE = `http://127.0.0.1:${process.env.ANDORPLAN_PORT ?? 8931}`;

function mount(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById("app")!;
}

function makeConsole(): OperatorConsole {
  return new OperatorConsole(mount(), { base: BASE, transport: "poll", pollMs: 0 });
}

function arcRow(view: ConsoleView, graph: string, arc: string): HTMLElement {
  const rows = view.root.querySelectorAll<HTMLElement>(`#graph-${graph} .arc`);
  for (const row of rows) {
    if (row.dataset.arc === arc) return row;
  }
  throw new Error(`no rendered row for ${graph}:${arc}`);
}

describe("operator console round-trip", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("drives the bundled scenario to completion via the rendered controls", async () => {
    const app = makeConsole();
    await app.create("defect_inspection", 7);
    const view = app.view;

    // Initial committed snapshot: supply line underway, inspection waiting.
    let snap = app.snapshot()!;
    expect(view.renderedSeqs).toHaveLength(1);
    expect(snap.graphs.G1.nodes.some((n) => n.met || n.feasible)).toBe(true);
    expect(snap.graphs.G2.nodes.some((n) => n.met || n.feasible)).toBe(false);
    const entangled = view.el("#graph-G2 .node.entangled");
    expect(entangled.dataset.node).toBe("new_object");

    // Premature put-down: the service rejects it, the reason shows inline,
    // and nothing changes.
    view.el<HTMLButtonElement>("#gesture-put-down").click();
    await app.settled();
    const rejection = view.el("#rejection");
    expect(rejection.hidden).toBe(false);
    expect(rejection.textContent).toContain("does not match any feasible next action");
    expect(app.snapshot()!.graphs).toEqual(snap.graphs);

    let missedOnce = false;
    let overrideDone = false;

    for (let i = 0; i < 900 && !app.snapshot()!.done; i++) {
      snap = app.snapshot()!;

      // Off-path override: while the second delivered object sits checked
      // and the planner's best path runs through the faulty branch, the
      // operator takes over and completes the hand-back branch instead.
      if (!overrideDone && snap.graphs.G2.item === "obj_a") {
        const checked = snap.graphs.G2.nodes.find((n) => n.id === "obj_checked")!;
        const na = snap.graphs.G2.hyper_arcs.find((h) => h.id === "h_handback_na")!;
        if (checked.met && na.feasible && na.done_actions === 0) {
          expect(snap.best_paths.G2).toContain("h_store_faulty");
          for (let k = 0; k < 3; k++) {
            const btn = arcRow(view, "G2", "h_handback_na").querySelector<HTMLButtonElement>(
              "button.override",
            )!;
            expect(btn.disabled).toBe(false);
            btn.click();
            await app.settled();
          }
          snap = app.snapshot()!;
          // The planner switched paths and the losing branches are
          // suppressed: visually distinct and no longer clickable.
          expect(snap.best_paths.G2).toContain("h_confirm_na");
          expect(snap.best_paths.G2).not.toContain("h_store_faulty");
          const faultyRow = arcRow(view, "G2", "h_store_faulty");
          expect(faultyRow.classList.contains("suppressed")).toBe(true);
          expect(faultyRow.querySelector<HTMLButtonElement>("button.override")!.disabled).toBe(true);
          overrideDone = true;
          continue;
        }
      }

      // Play whatever the planner asks of the operator, one control per
      // iteration (each click repaints the DOM).
      const suggestions = view.root.querySelectorAll<HTMLElement>("#suggestions .suggestion");
      let clicked = false;
      for (const li of suggestions) {
        const action = li.dataset.action!;
        if (action === "announce_pickup") {
          if (!missedOnce) {
            // Exercise the drop-and-repeat path once: the gesture happens
            // but recognition misses it, so the state must not move.
            const before = app.snapshot()!.graphs;
            view.el<HTMLInputElement>("#miss-toggle").checked = true;
            view.el<HTMLButtonElement>("#gesture-pick-up").click();
            await app.settled();
            view.el<HTMLInputElement>("#miss-toggle").checked = false;
            expect(app.snapshot()!.graphs).toEqual(before);
            missedOnce = true;
          }
          view.el<HTMLButtonElement>("#gesture-pick-up").click();
          await app.settled();
          clicked = true;
        } else if (action === "place_announce") {
          view.el<HTMLButtonElement>("#gesture-put-down").click();
          await app.settled();
          clicked = true;
        } else {
          const btn = li.querySelector<HTMLButtonElement>("button.do-suggestion");
          if (btn) {
            btn.click();
            await app.settled();
            clicked = true;
          }
        }
        if (clicked) break;
      }
      if (!clicked) {
        view.el<HTMLButtonElement>("#advance").click();
        await app.settled();
      }
    }

    snap = app.snapshot()!;
    expect(snap.done).toBe(true);
    for (const g of Object.values(snap.graphs)) {
      expect(g.status).toBe("solved");
    }
    expect(snap.graphs.G1.rounds_done).toBe(4);
    expect(snap.graphs.G2.rounds_done).toBe(4);
    expect(overrideDone).toBe(true);
    expect(missedOnce).toBe(true);

    // Every rendered status was backed by a received snapshot, in strictly
    // increasing seq order.
    const rendered = view.renderedSeqs;
    expect(rendered.length).toBeGreaterThan(10);
    for (let i = 1; i < rendered.length; i++) {
      expect(rendered[i]).toBeGreaterThan(rendered[i - 1]);
    }
    const received = new Set(app.client.receivedSeqs);
    expect(rendered.every((s) => received.has(s))).toBe(true);

    // The completion banner reflects the final snapshot.
    expect(view.el("#clock").textContent).toContain("cooperation complete");
  });

  it("shows an error banner on a bad session id without crashing", async () => {
    const app = makeConsole();
    await app.attach("not-a-session");
    const conn = app.view.el("#connection");
    expect(conn.className).toBe("failed");
    expect(conn.textContent).toContain("404");
    expect(app.snapshot()).toBeNull();
  });

  it("re-syncs to the latest state when refreshed after a gap", async () => {
    const app = makeConsole();
    await app.create("defect_inspection", 3);
    // A second client advances the same session while we are "offline".
    const other = makeConsole();
    await other.client.attach(app.client.sessionId!);
    await other.advance(30);
    expect(app.snapshot()!.time).toBe(0);
    await app.client.refresh();
    expect(app.snapshot()!.time).toBeCloseTo(30, 5);
  });
});

describe("view snapshot discipline", () => {
  const dummySnapshot = (time: number): Snapshot => ({
    scenario: "x",
    mode: "stepped",
    time,
    done: false,
    graphs: {},
    agents: {},
    best_paths: {},
    suggestions: [],
    gestures: [],
    work_items: [],
    events_tail: [],
  });

  const noop = {
    onGesture: () => {},
    onSuggestionDone: () => {},
    onOverride: () => {},
    onAdvance: () => {},
  };

  it("drops stale or non-snapshot envelopes", () => {
    document.body.innerHTML = '<div id="app"></div>';
    const view = new ConsoleView(document.getElementById("app")!, noop);
    const fresh: Envelope<Snapshot> = {
      session: "s",
      seq: 5,
      kind: "snapshot",
      payload: dummySnapshot(5),
    };
    expect(view.apply(fresh)).toBe(true);
    const stale: Envelope<Snapshot> = { ...fresh, seq: 4, payload: dummySnapshot(4) };
    expect(view.apply(stale)).toBe(false);
    const wrongKind: Envelope<Snapshot> = { ...fresh, seq: 6, kind: "log" };
    expect(view.apply(wrongKind)).toBe(false);
    expect(view.renderedSeqs).toEqual([5]);
    expect(view.snapshot!.time).toBe(5);
  });
});
