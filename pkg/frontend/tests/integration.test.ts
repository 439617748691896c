// End-to-end round trip against a live control endpoint: inject an
// attack from the client, watch the alarm and route switch arrive
// through /state within five ticks, and verify a reload (fresh fetch of
// /state plus per-link history) reconstructs the identical view.

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ControlClient, ServerError } from "../src/api.js";
import { ViewState } from "../src/state.js";
import { renderPage } from "../src/render.js";

let server: ChildProcess;
let client: ControlClient;

async function startServer(): Promise<string> {
  server = spawn("qkdnet", ["serve", "--port", "0", "--pace", "0"], {
    env: { ...process.env, PYTHONUNBUFFERED: "1" },
    stdio: ["ignore", "pipe", "pipe"],
  });
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`server did not start: ${out}`)), 20000);
    server.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/control endpoint on (http:\/\/[\d.]+:\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    server.stderr!.on("data", (chunk: Buffer) => { out += chunk.toString(); });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}): ${out}`));
    });
  });
}

async function loadView(): Promise<ViewState> {
  const view = new ViewState();
  view.applyState(await client.getState());
  for (const link of view.doc!.links) {
    view.applyHistory(link.link_id, await client.getHistory(link.link_id));
  }
  return view;
}

beforeAll(async () => {
  client = new ControlClient(await startServer());
}, 30000);

afterAll(() => {
  server?.kill();
});

describe("control endpoint round trip", () => {
  it("serves the full network snapshot", async () => {
    const doc = await client.getState();
    expect(doc.links.length).toBe(6);
    expect(doc.links.map((l) => l.link_id).sort()).toContain("ntt");
    expect(doc.alarms_open).toEqual([]);
  });

  it("rejects malformed commands with a structured error", async () => {
    await expect(client.sendCommand("bogus")).rejects.toBeInstanceOf(ServerError);
    await expect(client.sendCommand("step", { ticks: 0 }))
      .rejects.toThrow(/ticks/);
  });

  it("attack from the UI raises an alarm and switches the route within 5 ticks",
     async () => {
    await client.sendCommand("session_start",
      { id: "s1", src: "Koganei-1", dst: "Otemachi-2", rate_bps: 128000 });
    // quiet baseline so the monitor has statistics to compare against
    await client.sendCommand("step", { ticks: 15 });
    let doc = await client.getState();
    const before = doc.routes["Koganei-1->Otemachi-2"];
    expect(before.nodes).toEqual(["Koganei-1", "Koganei-2", "Otemachi-2"]);
    expect(doc.alarms_open).toEqual([]);

    await client.sendCommand("attack_on", { link_id: "ntt" });
    let alarmTick = -1;
    for (let i = 1; i <= 5; i++) {
      await client.sendCommand("step", { ticks: 1 });
      doc = await client.getState();
      if (doc.alarms_open.some((a) => a.link_id === "ntt")) {
        alarmTick = i;
        break;
      }
    }
    expect(alarmTick).toBeGreaterThan(0);
    expect(alarmTick).toBeLessThanOrEqual(5);
    const after = doc.routes["Koganei-1->Otemachi-2"];
    expect(after.nodes).toEqual(["Koganei-1", "Otemachi-1", "Otemachi-2"]);
    expect(after.link_ids).not.toContain("ntt");
    expect(after.total_distance_km).toBe(69);
    const ntt = doc.links.find((l) => l.link_id === "ntt")!;
    expect(ntt.status).toBe("alarm");
  }, 120000);

  it("alarm log retains the raised alarm", async () => {
    const alarms = await client.getAlarms();
    expect(alarms.open.some((a) => a.link_id === "ntt")).toBe(true);
    expect(alarms.log.some((a) => a.link_id === "ntt")).toBe(true);
  });

  it("reload reconstructs the identical view from server state",
     async () => {
    const first = await loadView();
    const second = await loadView();
    expect(renderPage(second)).toBe(renderPage(first));
    // chart points come from /links/{id}/history rows only
    for (const [linkId, rows] of first.history) {
      const served = await client.getHistory(linkId);
      expect(rows.length).toBeLessThanOrEqual(served.length);
      if (rows.length) {
        expect(served).toContainEqual(rows[rows.length - 1]);
      }
    }
  }, 60000);

  it("clear_alarm restores the link and the view follows", async () => {
    await client.sendCommand("attack_off", { link_id: "ntt" });
    // flush attacked samples out of the monitor window before clearing,
    // otherwise the still-elevated trailing stats re-raise the alarm
    await client.sendCommand("step", { ticks: 12 });
    await client.sendCommand("clear_alarm", { link_id: "ntt" });
    await client.sendCommand("step", { ticks: 2 });
    const view = await loadView();
    expect(view.linkStatus("ntt")).toBe("up");
    expect(view.doc!.alarms_open).toEqual([]);
  }, 60000);
});
