"""HTTP control endpoint for paced runs.

A thin JSON facade over a running :class:`~qkdnet.harness.sim.Simulation`,
served with the standard-library threading HTTP server. All simulation
mutations are serialized under one lock, so handler threads never race
the tick thread.

Endpoints:

* ``GET /state`` — network snapshot (links, routes, alarms, sessions);
* ``GET /links/{id}/history`` — recent telemetry rows for one link;
* ``GET /alarms`` — open alarms and the alarm log;
* ``GET /stream`` — server-sent events; one ``state`` event per tick;
* ``POST /command`` — ``{"kind": ..., "params": {...}}`` with kinds
  attack_on, attack_off, link_down, link_up, session_start,
  session_stop, clear_alarm, set_policy, force_route, step.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import InvalidArgumentError, QkdNetError
from .sim import Simulation

COMMAND_KINDS = ("attack_on", "attack_off", "link_down", "link_up",
                 "session_start", "session_stop", "clear_alarm",
                 "set_policy", "force_route", "step")


class ControlServer:
    """Owns the simulation, the tick thread and the HTTP server."""

    def __init__(self, sim: Simulation, port: int = 8000, host: str = "127.0.0.1",
                 pace_s: float = 0.0):
        self.sim = sim
        self.lock = threading.RLock()
        self.tick_event = threading.Condition(self.lock)
        self.tick_count = 0
        self.pace_s = pace_s
        self._stop = threading.Event()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.port = self.httpd.server_address[1]
        self._threads: list[threading.Thread] = []

    # --- lifecycle ------------------------------------------------------

    def start(self) -> None:
        serve = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        serve.start()
        self._threads.append(serve)
        if self.pace_s > 0:
            ticker = threading.Thread(target=self._tick_loop, daemon=True)
            ticker.start()
            self._threads.append(ticker)

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        with self.tick_event:
            self.tick_event.notify_all()

    def _tick_loop(self) -> None:
        while not self._stop.wait(self.pace_s):
            self.step(1)

    # --- operations -----------------------------------------------------

    def step(self, ticks: int = 1) -> None:
        with self.tick_event:
            for _ in range(ticks):
                self.sim.step()
                self.tick_count += 1
            self.tick_event.notify_all()

    def state_document(self) -> dict:
        sim = self.sim
        doc = sim.network.kms.state_document(sim.t)
        doc["tick"] = self.tick_count
        doc["sessions"] = {
            sid: {
                "src": st.src,
                "dst": st.dst,
                "state": st.session.state,
                "rate_bps": st.session.rate_bps,
                "bytes_enciphered": st.session.bytes_enciphered,
                "stall_s": st.session.stall_s,
                "buffer_bytes": st.session.pool.available_bytes,
            }
            for sid, st in sorted(sim.sessions.items())
        }
        return doc

    def apply_command(self, kind: str, params: dict) -> dict:
        if kind not in COMMAND_KINDS:
            raise InvalidArgumentError(f"unknown command kind {kind!r}")
        sim = self.sim
        if kind == "step":
            ticks = int(params.get("ticks", 1))
            if ticks < 1:
                raise InvalidArgumentError("ticks must be >= 1")
            self.step(ticks)
        elif kind == "set_policy":
            policy = params.get("policy")
            if policy not in ("static_priority", "max_min_buffer"):
                raise InvalidArgumentError(f"unknown policy {policy!r}")
            sim.network.kms.policy = policy
            sim.network.kms._recompute_routes(sim.t)
        elif kind == "force_route":
            kms = sim.network.kms
            nodes = params.get("nodes", [])
            route = kms._route_from_nodes(list(nodes))
            if route is None:
                raise InvalidArgumentError(f"route {nodes} is not usable")
            kms.route_table[(route.nodes[0], route.nodes[-1])] = route
        else:
            sim._apply_event(kind, params, sim.t)
        return {"ok": True, "kind": kind, "t_s": sim.t}


def _make_handler(server: ControlServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):   # silence request logging
            pass

        def _send_json(self, obj, status: int = 200) -> None:
            body = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            try:
                with server.lock:
                    if self.path == "/state":
                        return self._send_json(server.state_document())
                    if self.path == "/alarms":
                        kms = server.sim.network.kms
                        return self._send_json({
                            "open": [a.to_json() for a in kms.open_alarms.values()],
                            "log": [a.to_json() for a in kms.alarm_log],
                        })
                    if self.path.startswith("/links/") and self.path.endswith("/history"):
                        link_id = self.path[len("/links/"):-len("/history")]
                        kms = server.sim.network.kms
                        return self._send_json(kms.history_document(link_id))
                if self.path == "/stream":
                    return self._stream()
                self._send_json({"error": f"unknown path {self.path}"}, 404)
            except QkdNetError as exc:
                self._send_json({"error": str(exc)}, 400)

        def _stream(self) -> None:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            last = -1
            try:
                with server.tick_event:
                    payload = json.dumps(server.state_document())
                    last = server.tick_count
                self.wfile.write(f"event: state\ndata: {payload}\n\n".encode())
                self.wfile.flush()
                while not server._stop.is_set():
                    with server.tick_event:
                        if server.tick_count == last:
                            server.tick_event.wait(timeout=1.0)
                        if server.tick_count == last:
                            continue
                        last = server.tick_count
                        payload = json.dumps(server.state_document())
                    self.wfile.write(f"event: state\ndata: {payload}\n\n".encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return

        def do_POST(self) -> None:
            if self.path != "/command":
                return self._send_json({"error": f"unknown path {self.path}"}, 404)
            try:
                length = int(self.headers.get("Content-Length", 0))
                doc = json.loads(self.rfile.read(length) or b"{}")
                kind = doc.get("kind")
                params = doc.get("params", {})
                if not isinstance(kind, str) or not isinstance(params, dict):
                    raise InvalidArgumentError("command needs a kind and params object")
                with server.lock:
                    result = server.apply_command(kind, params)
                self._send_json(result)
            except json.JSONDecodeError:
                self._send_json({"error": "malformed JSON"}, 400)
            except QkdNetError as exc:
                self._send_json({"error": str(exc)}, 400)

    return Handler
