// Client view state: a mirror of the latest server /state document plus
// per-link history series and pending command acknowledgments. The
// client performs no simulation of its own; everything rendered is
// server-acknowledged state.

import type { StateDoc, TelemetryRow } from "./types.js";

export const HISTORY_WINDOW_S = 600; // 10 minutes of 1 Hz samples

export interface PendingCommand {
  id: number;
  kind: string;
  sentAt: number;
  status: "pending" | "acknowledged" | "rejected";
  detail?: string;
}

export class ViewState {
  doc: StateDoc | null = null;
  history = new Map<string, TelemetryRow[]>();
  pending: PendingCommand[] = [];
  stale = false;
  lastTick = -1;
  private nextCommandId = 1;

  applyState(doc: StateDoc): void {
    this.doc = doc;
    this.stale = false;
    this.lastTick = doc.tick;
    for (const link of doc.links) {
      if (!link.latest) continue;
      const series = this.history.get(link.link_id) ?? [];
      const last = series[series.length - 1];
      if (!last || link.latest.timestamp_s > last.timestamp_s) {
        series.push(link.latest);
      }
      const cutoff = link.latest.timestamp_s - HISTORY_WINDOW_S;
      while (series.length && series[0].timestamp_s < cutoff) series.shift();
      this.history.set(link.link_id, series);
    }
  }

  // Bulk backfill from /links/{id}/history; every chart point must be a
  // row the server can return, so the series is replaced, not merged.
  applyHistory(linkId: string, rows: TelemetryRow[]): void {
    this.history.set(linkId, rows.slice(-HISTORY_WINDOW_S));
  }

  markStale(): void {
    this.stale = true;
  }

  beginCommand(kind: string): PendingCommand {
    const cmd: PendingCommand = {
      id: this.nextCommandId++,
      kind,
      sentAt: Date.now(),
      status: "pending",
    };
    this.pending.push(cmd);
    if (this.pending.length > 20) this.pending.shift();
    return cmd;
  }

  resolveCommand(cmd: PendingCommand, ok: boolean, detail?: string): void {
    cmd.status = ok ? "acknowledged" : "rejected";
    cmd.detail = detail;
  }

  linkStatus(linkId: string): string {
    const link = this.doc?.links.find((l) => l.link_id === linkId);
    return link ? link.status : "unknown";
  }
}
