/**
 * Browser entry point.
 *
 * Query parameters:
 *   service  base URL of the session service (default: same origin)
 *   session  attach to an existing session instead of creating one
 *   scenario bundled scenario name for a fresh session (default
 *            defect_inspection)
 *   seed     seed for a fresh session
 */

import { OperatorConsole } from "./console.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? window.location.origin;

const app = new OperatorConsole(document.getElementById("app")!, { base });

const existing = params.get("session");
if (existing) {
  void app.attach(existing);
} else {
  const seedParam = params.get("seed");
  void app.create(
    params.get("scenario") ?? "defect_inspection",
    seedParam === null ? undefined : Number(seedParam),
  );
}

declare global {
  interface Window {
    operatorConsole: OperatorConsole;
  }
}
window.operatorConsole = app;
