"""Central key management server: telemetry aggregation, eavesdropping
alarms, link lifecycle and relay route selection.

The server is a single logical actor. It keeps a bounded history ring
per link, evaluates the attack rules on every ingested report, and owns
the route table. Route policies:

* ``static_priority``: first all-up route of the configured priority
  list for the demand;
* ``max_min_buffer``: the route maximizing the minimum per-hop available
  key, ties broken by total distance then lexicographic node order.

Alarmed links stay out of service until explicitly cleared.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import InvalidArgumentError, NoRouteError
from .keymgmt import StatsReport

LINK_UP = "up"
LINK_ALARM = "alarm"
LINK_DOWN = "down"

DEFAULT_HISTORY_CAPACITY = 3600
DEFAULT_ABS_THRESHOLD = 0.12
DEFAULT_JUMP_THRESHOLD = 0.05
DEFAULT_JUMP_WINDOW = 10


@dataclass(frozen=True)
class DetectionRules:
    """QBER alarm rules; thresholds are per-link configurable."""

    absolute_threshold: float = DEFAULT_ABS_THRESHOLD
    jump_threshold: float = DEFAULT_JUMP_THRESHOLD
    jump_window: int = DEFAULT_JUMP_WINDOW
    min_sifted_bps: float = 0.0   # ignore reports with too little statistics

    def __post_init__(self):
        if self.jump_window < 1:
            raise InvalidArgumentError("jump_window must be >= 1")


@dataclass(frozen=True)
class Alarm:
    link_id: str
    raised_at_s: float
    cause: str              # qber_jump | qber_absolute | link_loss
    triggering_value: float

    def to_json(self) -> dict:
        return {
            "link_id": self.link_id,
            "raised_at_s": self.raised_at_s,
            "cause": self.cause,
            "triggering_value": self.triggering_value,
        }


@dataclass(frozen=True)
class Route:
    nodes: tuple[str, ...]
    link_ids: tuple[str, ...]
    total_distance_km: float

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise InvalidArgumentError("route repeats a node")
        if len(self.link_ids) != len(self.nodes) - 1:
            raise InvalidArgumentError("route needs one link per hop")

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "link_ids": list(self.link_ids),
            "total_distance_km": self.total_distance_km,
        }


@dataclass(frozen=True)
class LinkDescriptor:
    """Static link facts the server needs for routing."""

    link_id: str
    node_a: str
    node_b: str
    distance_km: float


def detect_attack(history: list[StatsReport], rules: DetectionRules,
                  ) -> Alarm | None:
    """Evaluate the newest report of ``history`` against the rules.

    The jump rule compares the newest QBER with the trailing mean of the
    ``jump_window`` reports preceding it.
    """
    if len(history) < 2:
        return None
    newest = history[-1]
    if newest.sifted_bps < rules.min_sifted_bps:
        return None
    if newest.qber > rules.absolute_threshold:
        return Alarm(newest.link_id, newest.timestamp_s, "qber_absolute", newest.qber)
    trailing = [r for r in history[-(rules.jump_window + 1):-1]
                if r.sifted_bps >= rules.min_sifted_bps]
    if not trailing:
        return None
    mean = sum(r.qber for r in trailing) / len(trailing)
    if newest.qber - mean > rules.jump_threshold:
        return Alarm(newest.link_id, newest.timestamp_s, "qber_jump",
                     newest.qber - mean)
    return None


@dataclass
class RouteAction:
    """One route-table mutation issued by alarm handling."""

    demand: tuple[str, str]
    old_route: Route | None
    new_route: Route | None   # None: demand degraded, no route available


class KeyManagementServer:
    """Network-wide monitor and route authority."""

    def __init__(self, links: list[LinkDescriptor],
                 priority_routes: dict[tuple[str, str], list[list[str]]] | None = None,
                 policy: str = "static_priority",
                 rules: DetectionRules = DetectionRules(),
                 link_rules: dict[str, DetectionRules] | None = None,
                 history_capacity: int = DEFAULT_HISTORY_CAPACITY,
                 buffer_probe=None):
        if policy not in ("static_priority", "max_min_buffer"):
            raise InvalidArgumentError(f"unknown policy {policy!r}")
        self.links = {l.link_id: l for l in links}
        if len(self.links) != len(links):
            raise InvalidArgumentError("duplicate link ids")
        self.policy = policy
        self.rules = rules
        self.link_rules = dict(link_rules or {})
        self.priority_routes = {tuple(k): [list(r) for r in v]
                                for k, v in (priority_routes or {}).items()}
        self.history: dict[str, deque] = {
            l: deque(maxlen=history_capacity) for l in self.links}
        self.status: dict[str, str] = {l: LINK_UP for l in self.links}
        self.open_alarms: dict[str, Alarm] = {}
        self.alarm_log: list[Alarm] = []
        self.route_table: dict[tuple[str, str], Route] = {}
        self.event_log: list[dict] = []
        # buffer_probe(node_u, node_v) -> available pad bits of the hop
        self.buffer_probe = buffer_probe or (lambda u, v: 0)
        self._adjacency: dict[frozenset, LinkDescriptor] = {}
        for l in links:
            key = frozenset((l.node_a, l.node_b))
            if key in self._adjacency:
                raise InvalidArgumentError(
                    f"parallel links between {l.node_a} and {l.node_b} not supported")
            self._adjacency[key] = l

    # --- telemetry ----------------------------------------------------

    def rules_for(self, link_id: str) -> DetectionRules:
        return self.link_rules.get(link_id, self.rules)

    def ingest_stats(self, report: StatsReport) -> Alarm | None:
        """Append a report, run detection, and raise at most one open
        alarm per link."""
        if report.link_id not in self.links:
            raise InvalidArgumentError(f"unknown link {report.link_id!r}")
        hist = self.history[report.link_id]
        hist.append(report)
        if self.status[report.link_id] != LINK_UP:
            return None
        alarm = detect_attack(list(hist), self.rules_for(report.link_id))
        if alarm is None or report.link_id in self.open_alarms:
            return None
        self.open_alarms[report.link_id] = alarm
        self.alarm_log.append(alarm)
        self.event_log.append({"t_s": alarm.raised_at_s, "event": "alarm",
                               **alarm.to_json()})
        return alarm

    # --- link lifecycle -----------------------------------------------

    def set_link_status(self, link_id: str, status: str, now_s: float = 0.0) -> None:
        if link_id not in self.links:
            raise InvalidArgumentError(f"unknown link {link_id!r}")
        if status not in (LINK_UP, LINK_ALARM, LINK_DOWN):
            raise InvalidArgumentError(f"unknown status {status!r}")
        if self.status[link_id] != status:
            self.event_log.append({"t_s": now_s, "event": "status",
                                   "link_id": link_id, "from": self.status[link_id],
                                   "to": status})
        self.status[link_id] = status

    def clear_alarm(self, link_id: str, now_s: float = 0.0) -> list[RouteAction]:
        """Operator clearance: link returns to service, routes recompute."""
        if link_id not in self.open_alarms:
            raise InvalidArgumentError(f"no open alarm on link {link_id!r}")
        del self.open_alarms[link_id]
        self.set_link_status(link_id, LINK_UP, now_s)
        return self._recompute_routes(now_s)

    # --- routing ------------------------------------------------------

    def _link_usable(self, link_id: str) -> bool:
        return self.status[link_id] == LINK_UP

    def _route_from_nodes(self, nodes: list[str]) -> Route | None:
        link_ids = []
        dist = 0.0
        for u, v in zip(nodes[:-1], nodes[1:]):
            desc = self._adjacency.get(frozenset((u, v)))
            if desc is None or not self._link_usable(desc.link_id):
                return None
            link_ids.append(desc.link_id)
            dist += desc.distance_km
        return Route(tuple(nodes), tuple(link_ids), dist)

    def _all_routes(self, src: str, dst: str) -> list[Route]:
        """Every simple path over usable links, depth-first deterministic."""
        graph: dict[str, list[str]] = {}
        for key, desc in self._adjacency.items():
            if not self._link_usable(desc.link_id):
                continue
            u, v = desc.node_a, desc.node_b
            graph.setdefault(u, []).append(v)
            graph.setdefault(v, []).append(u)
        for neigh in graph.values():
            neigh.sort()
        routes = []

        def walk(node, path):
            if node == dst:
                r = self._route_from_nodes(path)
                if r is not None:
                    routes.append(r)
                return
            for nxt in graph.get(node, []):
                if nxt not in path:
                    walk(nxt, path + [nxt])

        walk(src, [src])
        return routes

    def select_route(self, src: str, dst: str, policy: str | None = None) -> Route:
        policy = policy or self.policy
        if policy == "static_priority":
            for nodes in self.priority_routes.get((src, dst), []):
                route = self._route_from_nodes(nodes)
                if route is not None:
                    return route
            # fall through to exhaustive search when no configured route is up
        candidates = self._all_routes(src, dst)
        if not candidates:
            raise NoRouteError(f"no all-up route from {src} to {dst}")
        if policy == "max_min_buffer":
            def score(r: Route):
                min_buf = min(self.buffer_probe(u, v)
                              for u, v in zip(r.nodes[:-1], r.nodes[1:]))
                return (-min_buf, r.total_distance_km, r.nodes)
            return min(candidates, key=score)
        return min(candidates, key=lambda r: (r.total_distance_km, r.nodes))

    def establish_demand(self, src: str, dst: str) -> Route:
        route = self.select_route(src, dst)
        self.route_table[(src, dst)] = route
        return route

    def _recompute_routes(self, now_s: float) -> list[RouteAction]:
        actions = []
        for demand, old in list(self.route_table.items()):
            try:
                new = self.select_route(*demand)
            except NoRouteError:
                new = None
            if new != old:
                actions.append(RouteAction(demand, old, new))
                if new is None:
                    del self.route_table[demand]
                    self.event_log.append({"t_s": now_s, "event": "demand_degraded",
                                           "demand": list(demand)})
                else:
                    self.route_table[demand] = new
                    self.event_log.append({"t_s": now_s, "event": "route_switch",
                                           "demand": list(demand),
                                           "route": new.to_json()})
        return actions

    def handle_alarm(self, alarm: Alarm, now_s: float | None = None) -> list[RouteAction]:
        """Stop the link and recompute every demand routed over it."""
        now = alarm.raised_at_s if now_s is None else now_s
        self.set_link_status(alarm.link_id, LINK_ALARM, now)
        return self._recompute_routes(now)

    # --- state documents ------------------------------------------------

    def state_document(self, now_s: float) -> dict:
        links = []
        for link_id, desc in sorted(self.links.items()):
            hist = self.history[link_id]
            latest = hist[-1].to_json() if hist else None
            links.append({
                "link_id": link_id,
                "nodes": [desc.node_a, desc.node_b],
                "distance_km": desc.distance_km,
                "status": self.status[link_id],
                "latest": latest,
            })
        return {
            "t_s": now_s,
            "policy": self.policy,
            "links": links,
            "routes": {f"{s}->{d}": r.to_json()
                       for (s, d), r in sorted(self.route_table.items())},
            "alarms_open": [a.to_json() for a in self.open_alarms.values()],
        }

    def history_document(self, link_id: str, limit: int = 600) -> list[dict]:
        if link_id not in self.links:
            raise InvalidArgumentError(f"unknown link {link_id!r}")
        rows = list(self.history[link_id])[-limit:]
        return [r.to_json() for r in rows]
