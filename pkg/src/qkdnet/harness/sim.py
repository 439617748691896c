"""Deterministic batch scenario runner.

One event loop advances simulated time in fixed ticks (default 1 s).
Per tick, every in-service link simulates a pulse train (scaled by its
desk-scale divisor), sifts, discloses a monitoring sample, distills key
and pushes it to both endpoint agents; the central server ingests one
telemetry report per link per tick and reacts to alarms; sessions top up
their delivered-key pools over the active route and encipher their
streams. Everything is seeded, single-threaded and reproducible:
identical (topology, scenario, seed) inputs yield byte-identical
metrics and audit files.
"""

from __future__ import annotations

import dataclasses
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..applayer import EndToEndPool, Session
from ..channel import EVE_OFF, EveConfig, click_model, simulate_pulses
from ..distillation import DecoyStats, DistillationConfig, Distiller
from ..errors import (
    InvalidArgumentError,
    KeyExhaustedError,
    NoRouteError,
    RelayAbortedError,
)
from ..keymgmt import (
    KeyMaterialPush,
    StatsReport,
    find_double_serving,
    relay_key,
)
from ..kms import LINK_UP
from ..protocols import estimate_qber, sift
from .scenario import Scenario
from .topology import LinkRuntime, Network

METRICS_COLUMNS = ("t_s", "link_id", "qber", "sifted_bps", "secure_bps",
                   "buffer_bits", "status", "alarms_open")

QBER_WINDOW_TICKS = 5
MIN_MONITOR_SAMPLE_BITS = 10
RELAY_TOPUP_CAP_BYTES = 262144

DESK_DISTILLATION = DistillationConfig(
    sifted_block_bits=4096,
    min_pa_block_bits=1024,
)


def _bound_for(rt: LinkRuntime) -> tuple:
    spec = rt.bound_spec
    kind = spec["kind"]
    if kind == "decoy":
        rates = click_model(rt.link.source, rt.link.channel, rt.link.detector)
        sig = rates[spec["signal_class"]]
        dec = rates[spec["decoy_class"]]
        mu = next(c.mean_photons for c in rt.link.source.classes
                  if c.label == spec["signal_class"])
        nu = next(c.mean_photons for c in rt.link.source.classes
                  if c.label == spec["decoy_class"])
        stats = DecoyStats(q_mu=sig.gain, q_nu=dec.gain, e_mu=sig.error_rate,
                           e_nu=dec.error_rate, mu=mu, nu=nu, y0=sig.p_noise)
        return ("decoy", stats)
    if kind == "dps":
        return ("dps", None)
    if kind == "fixed":
        return ("fixed", spec["fraction"])
    raise InvalidArgumentError(f"unknown bound kind {kind!r}")


class _LinkDriver:
    """Per-link pipeline state: Monte Carlo stream, monitor window and
    distiller, pushing identical key blocks to both endpoint agents."""

    def __init__(self, rt: LinkRuntime, seed_seq: np.random.SeedSequence,
                 dist_cfg: DistillationConfig):
        self.rt = rt
        self.rng = np.random.default_rng(seed_seq)
        self.eve: EveConfig = EVE_OFF
        self.monitor: deque = deque(maxlen=QBER_WINDOW_TICKS)  # (samples, errors)
        self.last_qber = 0.0
        self.distiller = Distiller(rt.link_id, dist_cfg, _bound_for(rt),
                                   seed=int(np.random.default_rng(seed_seq).integers(2**62)))
        self.seq = 0
        self.block_seq = 0

    def windowed_qber(self) -> tuple[float, int]:
        samples = sum(s for s, _ in self.monitor)
        errors = sum(e for _, e in self.monitor)
        if samples >= MIN_MONITOR_SAMPLE_BITS:
            self.last_qber = errors / samples
        return self.last_qber, samples

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq


@dataclass
class RelayRecord:
    t_s: float
    purpose: str
    route_nodes: tuple
    n_bytes: int
    hops: int
    wire_masked_ok: bool


@dataclass
class SessionState:
    session: Session
    src: str
    dst: str
    buffer_target_s: float


@dataclass
class SimResult:
    metrics: list[dict]
    audit: dict
    event_log: list[dict]
    network: Network
    sessions: dict[str, SessionState]
    relays: list[RelayRecord] = field(default_factory=list)

    def metrics_csv(self) -> str:
        lines = [",".join(METRICS_COLUMNS)]
        for row in self.metrics:
            lines.append(",".join(_format_cell(row[c]) for c in METRICS_COLUMNS))
        return "\n".join(lines) + "\n"

    def audit_jsonl(self) -> str:
        lines = [json.dumps({"kind": "summary", **self.audit}, sort_keys=True)]
        for node in sorted(self.network.kmas):
            for e in self.network.kmas[node].audit_log:
                lines.append(json.dumps(
                    {"kind": "draw", **dataclasses.asdict(e)}, sort_keys=True))
        for r in self.relays:
            lines.append(json.dumps(
                {"kind": "relay", **dataclasses.asdict(r)}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write_outputs(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(self.metrics_csv())
        (out / "audit.jsonl").write_text(self.audit_jsonl())
        (out / "events.jsonl").write_text(
            "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.event_log))


def _format_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


class Simulation:
    """Tick-stepped simulation; usable in batch or paced mode."""

    def __init__(self, network: Network, scenario: Scenario, seed: int,
                 duration_s: float | None = None, tick_s: float | None = None,
                 dist_cfg: DistillationConfig = DESK_DISTILLATION):
        self.network = network
        self.scenario = scenario
        self.duration_s = scenario.duration_s if duration_s is None else duration_s
        self.tick_s = scenario.tick_s if tick_s is None else tick_s
        self.t = 0.0
        root = np.random.SeedSequence(seed)
        link_ids = sorted(network.links)
        seqs = root.spawn(len(link_ids) + 3)
        self.drivers = {lid: _LinkDriver(network.links[lid], seqs[i], dist_cfg)
                        for i, lid in enumerate(link_ids)}
        self._relay_rng = np.random.default_rng(seqs[-3])
        self._monitor_rng = np.random.default_rng(seqs[-2])
        self._prefill_rng = np.random.default_rng(seqs[-1])
        self.sessions: dict[str, SessionState] = {}
        self.metrics: list[dict] = []
        self.event_log: list[dict] = []
        self.relays: list[RelayRecord] = []
        self._pending = list(scenario.events)
        self._prefill()

    # --- setup ----------------------------------------------------------

    def _prefill(self) -> None:
        """Seed link pools with previously generated key material so the
        scenario starts with realistic buffers."""
        for link_id in sorted(self.scenario.prefill_bytes):
            n_bytes = self.scenario.prefill_bytes[link_id]
            if link_id not in self.network.links:
                raise InvalidArgumentError(f"prefill references unknown link {link_id!r}")
            data = self._prefill_rng.integers(0, 256, n_bytes, dtype=np.uint8).tobytes()
            push = KeyMaterialPush(link_id, seq=0, data=data, bit_length=n_bytes * 8,
                                   timestamp_s=0.0)
            a, b = self.network.link_endpoints(link_id)
            self.network.kmas[a].ingest_key_material(push)
            self.network.kmas[b].ingest_key_material(push)

    # --- event handling --------------------------------------------------

    def _fire_events(self, now: float) -> None:
        while self._pending and self._pending[0].t_s <= now:
            event = self._pending.pop(0)
            self._apply_event(event.kind, event.params, now)

    def _apply_event(self, kind: str, params: dict, now: float) -> None:
        kms = self.network.kms
        self.event_log.append({"t_s": now, "event": kind, "params": params})
        if kind == "attack_on":
            link_id = params["link_id"]
            self.drivers[link_id].eve = EveConfig(
                mode=params.get("mode", "intercept_resend"),
                start_s=now,
                tap_fraction=params.get("tap_fraction", 0.0),
                inject_click_rate=params.get("inject_click_rate", 0.0))
        elif kind == "attack_off":
            self.drivers[params["link_id"]].eve = EVE_OFF
        elif kind == "link_down":
            kms.set_link_status(params["link_id"], "down", now)
            kms._recompute_routes(now)
        elif kind == "link_up":
            kms.set_link_status(params["link_id"], "up", now)
            kms._recompute_routes(now)
        elif kind == "clear_alarm":
            kms.clear_alarm(params["link_id"], now)
        elif kind == "session_start":
            sid = params["id"]
            if sid in self.sessions:
                raise InvalidArgumentError(f"session {sid!r} already running")
            src, dst = params["src"], params["dst"]
            kms.establish_demand(src, dst)
            session = Session(sid, src, dst, EndToEndPool(),
                              rate_bps=params.get("rate_bps", 128000),
                              seed=params.get("seed", 0))
            self.sessions[sid] = SessionState(
                session, src, dst, params.get("buffer_target_s", 30.0))
        elif kind == "session_stop":
            state = self.sessions.pop(params["id"], None)
            if state is not None:
                state.session.end()
        else:
            raise InvalidArgumentError(f"unknown event kind {kind!r}")

    # --- per-tick work ----------------------------------------------------

    def _tick_link(self, driver: _LinkDriver, now: float) -> tuple[int, int]:
        """Simulate one epoch; returns (sifted_bits, pushed_bits)."""
        rt = driver.rt
        n_pulses = rt.pulses_per_tick(self.tick_s)
        log = simulate_pulses(rt.link, n_pulses, eve=driver.eve,
                              seed=int(driver.rng.integers(2**62)), start_s=now)
        driver.block_seq += 1
        pair = sift(rt.link.source.protocol, log, rt.link_id, driver.block_seq)
        sifted_bits = len(pair)
        if sifted_bits == 0:
            driver.monitor.append((0, 0))
            return 0, 0

        est, reduced = estimate_qber(pair, rt.monitor_fraction,
                                     seed=int(driver.rng.integers(2**62)),
                                     timestamp_s=now)
        driver.monitor.append((est.sample_size, est.error_count))

        pushed_bits = 0
        a, b = self.network.link_endpoints(rt.link_id)
        for result in driver.distiller.feed(reduced, now_s=now):
            if result.aborted:
                self.event_log.append({"t_s": now, "event": "block_abort",
                                       "link_id": rt.link_id,
                                       "qber": result.qber})
                continue
            whole_bytes = result.secure_bits // 8
            if whole_bytes == 0:
                continue
            seq = driver.next_seq()
            push = KeyMaterialPush(
                rt.link_id, seq,
                bytes(result.alice_block.bits[:whole_bytes]),
                whole_bytes * 8,
                qber=result.qber,
                secure_fraction=result.secure_fraction,
                timestamp_s=now)
            self.network.kmas[a].ingest_key_material(push)
            self.network.kmas[b].ingest_key_material(push)
            pushed_bits += whole_bytes * 8
        return sifted_bits, pushed_bits

    def _topup_session(self, state: SessionState, now: float) -> None:
        kms = self.network.kms
        demand = (state.src, state.dst)
        route = kms.route_table.get(demand)
        if route is None:
            try:
                route = kms.establish_demand(*demand)
            except NoRouteError:
                return
        pool = state.session.pool
        target = int(state.session.rate_bps / 8 * state.buffer_target_s * 2)
        deficit = target - pool.available_bytes
        if deficit <= 0:
            return
        n = min(deficit, RELAY_TOPUP_CAP_BYTES)
        key = self._relay_rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        try:
            res = relay_key(self.network.kmas, list(route.nodes), n,
                            purpose=f"session:{state.session.id}", key=key, now_s=now)
        except (RelayAbortedError, KeyExhaustedError) as exc:
            self.event_log.append({"t_s": now, "event": "relay_failed",
                                   "demand": list(demand), "error": str(exc)})
            return
        pool.add(res.key)
        self.relays.append(RelayRecord(
            now, f"session:{state.session.id}", res.route_nodes, n,
            hops=len(res.wire_messages),
            wire_masked_ok=all(w != res.key for w in res.wire_messages)))

    def step(self) -> None:
        """Advance one tick."""
        now = round(self.t + self.tick_s, 9)
        self.t = now
        kms = self.network.kms
        self._fire_events(now)

        for link_id in sorted(self.drivers):
            driver = self.drivers[link_id]
            status = kms.status[link_id]
            if status == LINK_UP:
                sifted_bits, pushed_bits = self._tick_link(driver, now)
            else:
                sifted_bits, pushed_bits = 0, 0
                driver.monitor.append((0, 0))
            qber, _samples = driver.windowed_qber()
            a, _b = self.network.link_endpoints(link_id)
            peer = driver.rt.node_b if a == driver.rt.node_a else driver.rt.node_a
            report = StatsReport(
                link_id=link_id,
                timestamp_s=now,
                qber=qber,
                sifted_bps=sifted_bits / self.tick_s,
                secure_bps=pushed_bits / self.tick_s,
                buffer_bits=self.network.kmas[a].buffer_bits(peer),
            )
            alarm = kms.ingest_stats(report)
            if alarm is not None:
                kms.handle_alarm(alarm)
            self.metrics.append({
                "t_s": now,
                "link_id": link_id,
                "qber": report.qber,
                "sifted_bps": report.sifted_bps,
                "secure_bps": report.secure_bps,
                "buffer_bits": report.buffer_bits,
                "status": kms.status[link_id],
                "alarms_open": len(kms.open_alarms),
            })

        for sid in sorted(self.sessions):
            state = self.sessions[sid]
            self._topup_session(state, now)
            state.session.tick(now, self.tick_s)

    def run(self) -> SimResult:
        n_ticks = int(round(self.duration_s / self.tick_s))
        for _ in range(n_ticks):
            self.step()
        return self.finalize()

    def finalize(self) -> SimResult:
        audit = self.audit_summary()
        return SimResult(self.metrics, audit, self.event_log, self.network,
                         self.sessions, self.relays)

    def audit_summary(self) -> dict:
        kmas = self.network.kmas
        double = []
        for node in sorted(kmas):
            double += find_double_serving(kmas[node].audit_log)
        sessions_ok = all(s.session.round_trip_ok() for s in self.sessions.values())
        return {
            "conservation_ok": all(k.check_conservation() for k in kmas.values()),
            "zeroization_ok": all(k.check_zeroized() for k in kmas.values()),
            "double_serving_count": len(double),
            "relay_wire_masked_ok": all(r.wire_masked_ok for r in self.relays),
            "sessions_round_trip_ok": sessions_ok,
            "total_session_stall_s": sum(s.session.stall_s
                                         for s in self.sessions.values()),
        }


def run_scenario(network: Network, scenario: Scenario, seed: int,
                 duration_s: float | None = None, tick_s: float | None = None,
                 out_dir: str | Path | None = None,
                 dist_cfg: DistillationConfig = DESK_DISTILLATION) -> SimResult:
    """Run a scenario to completion in batch mode."""
    sim = Simulation(network, scenario, seed, duration_s, tick_s, dist_cfg)
    result = sim.run()
    if out_dir is not None:
        result.write_outputs(out_dir)
    return result
