// Pure renderers: server documents in, HTML/SVG strings out. Rendering
// the same documents twice yields identical markup, so a page reload
// reconstructs the exact view from /state.

import type { AlarmDoc, LinkDoc, StateDoc, TelemetryRow } from "./types.js";
import type { PendingCommand, ViewState } from "./state.js";

const STATUS_COLOR: Record<string, string> = {
  up: "#2e9e4f",
  alarm: "#d03a2b",
  down: "#8a8a8a",
  unknown: "#c9a227",
};

// Fixed layout for the bundled metropolitan topology; other nodes fall
// back to a deterministic circle.
const NODE_POS: Record<string, [number, number]> = {
  "Koganei-1": [80, 220],
  "Koganei-2": [80, 100],
  "Koganei-3": [180, 40],
  "Otemachi-1": [360, 220],
  "Otemachi-2": [360, 100],
  "Hongo": [520, 160],
};

export function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

function nodePositions(doc: StateDoc): Map<string, [number, number]> {
  const names = [...new Set(doc.links.flatMap((l) => l.nodes))].sort();
  const pos = new Map<string, [number, number]>();
  names.forEach((name, i) => {
    if (NODE_POS[name]) {
      pos.set(name, NODE_POS[name]);
    } else {
      const angle = (2 * Math.PI * i) / names.length;
      pos.set(name, [300 + 200 * Math.cos(angle), 140 + 110 * Math.sin(angle)]);
    }
  });
  return pos;
}

function routedLinks(doc: StateDoc): Set<string> {
  const ids = new Set<string>();
  for (const route of Object.values(doc.routes)) {
    for (const id of route.link_ids) ids.add(id);
  }
  return ids;
}

function bufferLabel(link: LinkDoc): string {
  const bits = link.latest?.buffer_bits ?? 0;
  if (bits >= 8e6) return `${(bits / 8e6).toFixed(1)} MB`;
  if (bits >= 8e3) return `${(bits / 8e3).toFixed(1)} kB`;
  return `${Math.floor(bits / 8)} B`;
}

export function renderNetwork(doc: StateDoc): string {
  const pos = nodePositions(doc);
  const active = routedLinks(doc);
  const parts: string[] = [
    `<svg viewBox="0 0 600 280" class="network" role="img">`,
  ];
  for (const link of doc.links) {
    const [a, b] = link.nodes;
    const [x1, y1] = pos.get(a)!;
    const [x2, y2] = pos.get(b)!;
    const color = STATUS_COLOR[link.status] ?? STATUS_COLOR.unknown;
    const width = active.has(link.link_id) ? 5 : 2;
    parts.push(
      `<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" ` +
      `stroke="${color}" stroke-width="${width}" ` +
      `data-link="${escapeHtml(link.link_id)}" data-status="${link.status}"/>`,
      `<text x="${(x1 + x2) / 2}" y="${(y1 + y2) / 2 - 6}" class="linklabel">` +
      `${escapeHtml(link.link_id)} ${bufferLabel(link)}</text>`,
    );
  }
  for (const [name, [x, y]] of pos) {
    parts.push(
      `<circle cx="${x}" cy="${y}" r="14" class="node"/>`,
      `<text x="${x}" y="${y + 28}" class="nodelabel">${escapeHtml(name)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

export function renderLinkTable(doc: StateDoc): string {
  const rows = doc.links.map((link) => {
    const t = link.latest;
    return `<tr data-link="${escapeHtml(link.link_id)}">` +
      `<td>${escapeHtml(link.link_id)}</td>` +
      `<td class="status-${link.status}">${link.status}</td>` +
      `<td>${t ? (100 * t.qber).toFixed(2) + "%" : "–"}</td>` +
      `<td>${t ? t.sifted_bps.toFixed(0) : "–"}</td>` +
      `<td>${t ? t.secure_bps.toFixed(0) : "–"}</td>` +
      `<td>${t ? t.buffer_bits : "–"}</td></tr>`;
  });
  return `<table class="links"><thead><tr><th>link</th><th>status</th>` +
    `<th>QBER</th><th>sifted b/s</th><th>secure b/s</th><th>buffer bits</th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`;
}

export function renderRoutes(doc: StateDoc): string {
  const entries = Object.entries(doc.routes).sort();
  if (!entries.length) return `<p class="empty">no active routes</p>`;
  const items = entries.map(([demand, route]) =>
    `<li><b>${escapeHtml(demand)}</b>: ${route.nodes.map(escapeHtml).join(" → ")}` +
    ` (${route.total_distance_km} km)</li>`);
  return `<ul class="routes">${items.join("")}</ul>`;
}

export function renderAlarms(open: AlarmDoc[], log: AlarmDoc[]): string {
  const row = (a: AlarmDoc, cls: string) =>
    `<tr class="${cls}"><td>${a.raised_at_s}</td>` +
    `<td>${escapeHtml(a.link_id)}</td><td>${escapeHtml(a.cause)}</td>` +
    `<td>${a.triggering_value.toFixed(4)}</td></tr>`;
  const openRows = open.map((a) => row(a, "alarm-open"));
  const logRows = log.filter((a) => !open.some(
    (o) => o.link_id === a.link_id && o.raised_at_s === a.raised_at_s))
    .map((a) => row(a, "alarm-cleared"));
  if (!openRows.length && !logRows.length) {
    return `<p class="empty">no alarms</p>`;
  }
  return `<table class="alarms"><thead><tr><th>t</th><th>link</th>` +
    `<th>cause</th><th>value</th></tr></thead>` +
    `<tbody>${openRows.join("")}${logRows.join("")}</tbody></table>`;
}

// QBER sparkline over the history window; every point is a server row.
export function renderChart(linkId: string, rows: TelemetryRow[],
                            width = 280, height = 80): string {
  if (!rows.length) {
    return `<svg viewBox="0 0 ${width} ${height}" class="chart" ` +
      `data-link="${escapeHtml(linkId)}"><text x="4" y="16">no data</text></svg>`;
  }
  const t0 = rows[0].timestamp_s;
  const t1 = rows[rows.length - 1].timestamp_s;
  const span = Math.max(1, t1 - t0);
  const maxQ = Math.max(0.05, ...rows.map((r) => r.qber));
  const points = rows.map((r) => {
    const x = ((r.timestamp_s - t0) / span) * (width - 8) + 4;
    const y = height - 4 - (r.qber / maxQ) * (height - 20);
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  return `<svg viewBox="0 0 ${width} ${height}" class="chart" ` +
    `data-link="${escapeHtml(linkId)}">` +
    `<text x="4" y="12">${escapeHtml(linkId)} QBER (max ${(100 * maxQ).toFixed(1)}%)</text>` +
    `<polyline fill="none" stroke="#23547a" stroke-width="1.5" ` +
    `points="${points.join(" ")}"/></svg>`;
}

export function renderSessions(doc: StateDoc): string {
  const entries = Object.entries(doc.sessions).sort();
  if (!entries.length) return `<p class="empty">no sessions</p>`;
  const rows = entries.map(([sid, s]) =>
    `<tr><td>${escapeHtml(sid)}</td><td>${escapeHtml(s.src)} → ${escapeHtml(s.dst)}</td>` +
    `<td>${escapeHtml(s.state)}</td><td>${s.rate_bps}</td>` +
    `<td>${s.bytes_enciphered}</td><td>${s.stall_s}</td><td>${s.buffer_bytes}</td></tr>`);
  return `<table class="sessions"><thead><tr><th>id</th><th>demand</th>` +
    `<th>state</th><th>rate b/s</th><th>bytes</th><th>stall s</th>` +
    `<th>buffer B</th></tr></thead><tbody>${rows.join("")}</tbody></table>`;
}

export function renderPending(pending: PendingCommand[]): string {
  if (!pending.length) return "";
  const items = pending.slice(-8).map((c) =>
    `<li class="cmd-${c.status}">#${c.id} ${escapeHtml(c.kind)}: ${c.status}` +
    `${c.detail ? ": " + escapeHtml(c.detail) : ""}</li>`);
  return `<ul class="pending">${items.join("")}</ul>`;
}

export function renderStaleBanner(stale: boolean): string {
  return stale
    ? `<div class="stale">connection lost, view may be stale</div>`
    : "";
}

export function renderPage(view: ViewState): string {
  if (!view.doc) {
    return `${renderStaleBanner(view.stale)}<p class="empty">waiting for server…</p>`;
  }
  const doc = view.doc;
  const charts = doc.links.map((l) =>
    renderChart(l.link_id, view.history.get(l.link_id) ?? []));
  return [
    renderStaleBanner(view.stale),
    `<div class="meta">t = ${doc.t_s}s · tick ${doc.tick} · policy ${escapeHtml(doc.policy)}</div>`,
    `<section id="map"><h2>Network</h2>${renderNetwork(doc)}</section>`,
    `<section id="links"><h2>Links</h2>${renderLinkTable(doc)}</section>`,
    `<section id="routes"><h2>Routes</h2>${renderRoutes(doc)}</section>`,
    `<section id="charts"><h2>QBER</h2><div class="chartgrid">${charts.join("")}</div></section>`,
    `<section id="alarms"><h2>Alarms</h2>${renderAlarms(doc.alarms_open, [])}</section>`,
    `<section id="sessions"><h2>Sessions</h2>${renderSessions(doc)}</section>`,
    renderPending(view.pending),
  ].join("");
}
