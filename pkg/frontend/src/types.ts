// Mirrors of the harness control endpoint JSON documents.

export interface TelemetryRow {
  link_id: string;
  timestamp_s: number;
  qber: number;
  sifted_bps: number;
  secure_bps: number;
  buffer_bits: number;
}

export interface AlarmDoc {
  link_id: string;
  raised_at_s: number;
  cause: string;
  triggering_value: number;
}

export interface RouteDoc {
  nodes: string[];
  link_ids: string[];
  total_distance_km: number;
}

export interface LinkDoc {
  link_id: string;
  nodes: [string, string];
  distance_km: number;
  status: "up" | "alarm" | "down";
  latest: TelemetryRow | null;
}

export interface SessionDoc {
  src: string;
  dst: string;
  state: string;
  rate_bps: number;
  bytes_enciphered: number;
  stall_s: number;
  buffer_bytes: number;
}

export interface StateDoc {
  t_s: number;
  tick: number;
  policy: string;
  links: LinkDoc[];
  routes: Record<string, RouteDoc>;
  alarms_open: AlarmDoc[];
  sessions: Record<string, SessionDoc>;
}

export interface AlarmsDoc {
  open: AlarmDoc[];
  log: AlarmDoc[];
}

export interface CommandAck {
  ok: boolean;
  kind: string;
  t_s: number;
}
