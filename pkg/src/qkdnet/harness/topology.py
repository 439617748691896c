"""Topology files: parsing, validation and network instantiation.

A topology JSON lists nodes, links (with per-link hardware preset,
distance/loss and desk-scale knobs), detection rules and route policy.
Validation collects every violation before failing so a bad file is
diagnosed in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..channel import (
    ChannelConfig,
    DetectorConfig,
    IntensityClass,
    LinkConfig,
    SourceConfig,
)
from ..errors import TopologyError
from ..keymgmt import KeyManagementAgent
from ..kms import DetectionRules, KeyManagementServer, LinkDescriptor

BUILTIN_TOPOLOGY = "tokyo"


def _data_root():
    return resources.files("qkdnet") / "data"


def load_preset(name: str) -> dict:
    """Load a hardware preset bundled with the package."""
    path = _data_root() / "presets" / f"{name}.json"
    if not path.is_file():
        raise TopologyError([f"unknown hardware preset {name!r}"])
    return json.loads(path.read_text())


def _source_from_preset(preset: dict) -> SourceConfig:
    classes = tuple(IntensityClass(c["label"], c["mean_photons"], c["send_prob"])
                    for c in preset["classes"])
    return SourceConfig(
        protocol=preset["protocol"],
        clock_hz=preset["clock_hz"],
        classes=classes,
        e_opt=preset.get("e_opt", 0.0),
        duty_factor=preset.get("duty_factor", 1.0),
    )


def _detector_from_preset(preset: dict) -> DetectorConfig:
    d = preset["detector"]
    return DetectorConfig(
        efficiency=d["efficiency"],
        dark_prob_per_gate=d.get("dark_prob_per_gate", 0.0),
        afterpulse_prob=d.get("afterpulse_prob", 0.0),
        insertion_loss_db=d.get("insertion_loss_db", 0.0),
        num_detectors=d.get("num_detectors", 1),
    )


@dataclass
class LinkRuntime:
    """One instantiated quantum link plus its desk-scale knobs."""

    link: LinkConfig
    node_a: str
    node_b: str
    preset_name: str
    pulse_divisor: int
    monitor_fraction: float
    bound_spec: dict

    @property
    def link_id(self) -> str:
        return self.link.link_id

    def pulses_per_tick(self, tick_s: float) -> int:
        return max(1, int(self.link.source.clock_hz * tick_s / self.pulse_divisor))


@dataclass
class Network:
    """Instantiated network: links, per-node agents and the central server."""

    name: str
    nodes: list[str]
    links: dict[str, LinkRuntime]
    kmas: dict[str, KeyManagementAgent]
    kms: KeyManagementServer

    def link_endpoints(self, link_id: str) -> tuple[str, str]:
        rt = self.links[link_id]
        return rt.node_a, rt.node_b


def _rules_from_json(obj: dict, base: DetectionRules = DetectionRules()) -> DetectionRules:
    return DetectionRules(
        absolute_threshold=obj.get("absolute_threshold", base.absolute_threshold),
        jump_threshold=obj.get("jump_threshold", base.jump_threshold),
        jump_window=obj.get("jump_window", base.jump_window),
        min_sifted_bps=obj.get("min_sifted_bps", base.min_sifted_bps),
    )


def validate_topology(doc: dict) -> list[str]:
    """Return every invariant violation in the document (empty = valid)."""
    violations = []
    nodes = doc.get("nodes", [])
    node_ids = [n.get("id") for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        violations.append("duplicate node ids")
    if not nodes:
        violations.append("topology has no nodes")
    links = doc.get("links", [])
    if not links:
        violations.append("topology has no links")
    seen = set()
    for l in links:
        lid = l.get("id", "<missing>")
        if lid in seen:
            violations.append(f"duplicate link id {lid!r}")
        seen.add(lid)
        ends = l.get("nodes", [])
        if len(ends) != 2 or ends[0] == ends[1]:
            violations.append(f"link {lid!r} must join two distinct nodes")
        for n in ends:
            if n not in node_ids:
                violations.append(f"link {lid!r} references unknown node {n!r}")
        if l.get("distance_km", 0) <= 0:
            violations.append(f"link {lid!r} needs a positive distance_km")
        if l.get("loss_db", -1) < 0:
            violations.append(f"link {lid!r} needs a non-negative loss_db")
        preset = l.get("preset")
        if not preset:
            violations.append(f"link {lid!r} has no hardware preset")
        else:
            try:
                load_preset(preset)
            except TopologyError as exc:
                violations.extend(exc.violations)
        if not 0.0 < l.get("monitor_fraction", 0.1) < 1.0:
            violations.append(f"link {lid!r} monitor_fraction must be in (0,1)")
        if l.get("pulse_divisor", 1) < 1:
            violations.append(f"link {lid!r} pulse_divisor must be >= 1")
    for key, routes in doc.get("priority_routes", {}).items():
        if "|" not in key:
            violations.append(f"priority route key {key!r} must be 'src|dst'")
        for route in routes:
            for n in route:
                if n not in node_ids:
                    violations.append(
                        f"priority route {key!r} references unknown node {n!r}")
    if doc.get("policy", "static_priority") not in ("static_priority",
                                                    "max_min_buffer"):
        violations.append(f"unknown policy {doc.get('policy')!r}")
    return violations


def load_topology(path: str | Path | None = None) -> Network:
    """Instantiate a network from a topology file (default: the bundled
    six-link metropolitan topology)."""
    if path is None:
        doc = json.loads((_data_root() / f"{BUILTIN_TOPOLOGY}.json").read_text())
    else:
        doc = json.loads(Path(path).read_text())

    violations = validate_topology(doc)
    if violations:
        raise TopologyError(violations)

    node_ids = [n["id"] for n in doc["nodes"]]
    kmas = {n: KeyManagementAgent(n) for n in node_ids}

    runtimes: dict[str, LinkRuntime] = {}
    descriptors = []
    for l in doc["links"]:
        preset = load_preset(l["preset"])
        link = LinkConfig(
            link_id=l["id"],
            source=_source_from_preset(preset),
            channel=ChannelConfig(l["distance_km"], l["loss_db"],
                                  background_cps=preset.get("background_cps", 0.0)),
            detector=_detector_from_preset(preset),
        )
        a, b = l["nodes"]
        runtimes[l["id"]] = LinkRuntime(
            link=link, node_a=a, node_b=b, preset_name=l["preset"],
            pulse_divisor=l.get("pulse_divisor", 1000),
            monitor_fraction=l.get("monitor_fraction", 0.1),
            bound_spec=preset["bound"],
        )
        kmas[a].bind_link(l["id"], b)
        kmas[b].bind_link(l["id"], a)
        descriptors.append(LinkDescriptor(l["id"], a, b, l["distance_km"]))

    base_rules = _rules_from_json(doc.get("rules", {}))
    link_rules = {l["id"]: _rules_from_json(l["rules"], base_rules)
                  for l in doc["links"] if "rules" in l}
    priority = {}
    for key, routes in doc.get("priority_routes", {}).items():
        src, dst = key.split("|", 1)
        priority[(src, dst)] = routes
        priority[(dst, src)] = [list(reversed(r)) for r in routes]

    def buffer_probe(u: str, v: str) -> int:
        pool = kmas[u].pools.get(v)
        return pool.available_bits if pool else 0

    server = KeyManagementServer(
        descriptors,
        priority_routes=priority,
        policy=doc.get("policy", "static_priority"),
        rules=base_rules,
        link_rules=link_rules,
        buffer_probe=buffer_probe,
    )
    return Network(doc.get("name", "network"), node_ids, runtimes, kmas, server)
