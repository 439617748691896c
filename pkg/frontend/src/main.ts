// Page wiring: one push connection for state, request/response for
// commands, all UI updates serialized through a single redraw.

import { ControlClient, ServerError } from "./api.js";
import { ViewState } from "./state.js";
import { renderAlarms, renderPage } from "./render.js";

const params = new URLSearchParams(location.search);
const baseUrl = params.get("server") ?? "http://127.0.0.1:8000";

const client = new ControlClient(baseUrl);
const view = new ViewState();
const root = document.getElementById("app")!;
const alarmLogRoot = document.getElementById("alarmlog")!;

function redraw(): void {
  root.innerHTML = renderPage(view);
}

async function refreshAlarmLog(): Promise<void> {
  try {
    const alarms = await client.getAlarms();
    alarmLogRoot.innerHTML = renderAlarms(alarms.open, alarms.log);
  } catch {
    // stale banner already covers connectivity loss
  }
}

async function command(kind: string, cmdParams: Record<string, unknown>):
    Promise<void> {
  const pending = view.beginCommand(kind);
  redraw();
  try {
    await client.sendCommand(kind, cmdParams);
    view.resolveCommand(pending, true);
  } catch (err) {
    const detail = err instanceof ServerError ? err.message : String(err);
    view.resolveCommand(pending, false, detail);
  }
  redraw();
}

function wireControls(): void {
  const form = document.getElementById("cmdform") as HTMLFormElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const kind = (document.getElementById("cmdkind") as HTMLSelectElement).value;
    const linkId = (document.getElementById("cmdlink") as HTMLInputElement).value;
    const extra = (document.getElementById("cmdparams") as HTMLInputElement).value;
    let cmdParams: Record<string, unknown> = {};
    if (extra.trim()) {
      try {
        cmdParams = JSON.parse(extra);
      } catch {
        const pending = view.beginCommand(kind);
        view.resolveCommand(pending, false, "params must be valid JSON");
        redraw();
        return;
      }
    }
    if (linkId && cmdParams["link_id"] === undefined) cmdParams["link_id"] = linkId;
    void command(kind, cmdParams);
  });
  document.getElementById("stepbtn")!.addEventListener("click", () => {
    void command("step", { ticks: 1 });
  });
}

async function boot(): Promise<void> {
  wireControls();
  try {
    view.applyState(await client.getState());
    // backfill charts so every point is a retrievable history row
    for (const link of view.doc!.links) {
      view.applyHistory(link.link_id, await client.getHistory(link.link_id));
    }
  } catch {
    view.markStale();
  }
  redraw();
  void refreshAlarmLog();
  client.subscribe(
    (doc) => {
      view.applyState(doc);
      redraw();
      void refreshAlarmLog();
    },
    () => {
      view.markStale();
      redraw();
    },
  );
}

void boot();
