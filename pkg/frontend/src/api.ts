// Thin client for the harness control endpoint. Commands are
// fire-and-acknowledge: the server response (or its structured error)
// is returned verbatim, never anticipated.

import type { AlarmsDoc, CommandAck, StateDoc, TelemetryRow } from "./types.js";

export class ServerError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) {
    const body = await resp.json().catch(() => ({ error: resp.statusText }));
    throw new ServerError(resp.status, String(body.error ?? resp.statusText));
  }
  return (await resp.json()) as T;
}

export class ControlClient {
  constructor(readonly baseUrl: string) {}

  getState(): Promise<StateDoc> {
    return getJson(`${this.baseUrl}/state`);
  }

  getAlarms(): Promise<AlarmsDoc> {
    return getJson(`${this.baseUrl}/alarms`);
  }

  getHistory(linkId: string): Promise<TelemetryRow[]> {
    return getJson(`${this.baseUrl}/links/${linkId}/history`);
  }

  async sendCommand(kind: string, params: Record<string, unknown> = {}):
      Promise<CommandAck> {
    const resp = await fetch(`${this.baseUrl}/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ kind, params }),
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ServerError(resp.status, String(body.error ?? "rejected"));
    }
    return body as CommandAck;
  }

  // One push connection; falls back to polling when EventSource is
  // unavailable (tests, older browsers).
  subscribe(onState: (doc: StateDoc) => void,
            onError: () => void,
            pollMs = 1000): () => void {
    if (typeof EventSource !== "undefined") {
      const source = new EventSource(`${this.baseUrl}/stream`);
      source.addEventListener("state", (ev) => {
        onState(JSON.parse((ev as MessageEvent).data) as StateDoc);
      });
      source.onerror = onError;
      return () => source.close();
    }
    const timer = setInterval(() => {
      this.getState().then(onState).catch(onError);
    }, pollMs);
    return () => clearInterval(timer);
  }
}
