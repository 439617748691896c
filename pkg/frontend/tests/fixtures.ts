import type { StateDoc, TelemetryRow } from "../src/types.js";

export function row(linkId: string, t: number, qber = 0.02): TelemetryRow {
  return {
    link_id: linkId,
    timestamp_s: t,
    qber,
    sifted_bps: 500,
    secure_bps: 60,
    buffer_bits: 1_000_000,
  };
}

export function stateDoc(overrides: Partial<StateDoc> = {}): StateDoc {
  return {
    t_s: 5,
    tick: 5,
    policy: "static_priority",
    links: [
      { link_id: "ab", nodes: ["A", "B"], distance_km: 45, status: "up",
        latest: row("ab", 5) },
      { link_id: "bc", nodes: ["B", "C"], distance_km: 90, status: "up",
        latest: row("bc", 5, 0.023) },
      { link_id: "ac", nodes: ["A", "C"], distance_km: 24, status: "down",
        latest: null },
    ],
    routes: {
      "A->C": { nodes: ["A", "B", "C"], link_ids: ["ab", "bc"],
                total_distance_km: 135 },
    },
    alarms_open: [],
    sessions: {},
    ...overrides,
  };
}
