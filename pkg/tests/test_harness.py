import json
import urllib.error
import urllib.request

import pytest

from qkdnet.channel import predicted_sifted_qber
from qkdnet.errors import TopologyError
from qkdnet.harness import (
    METRICS_COLUMNS,
    Network,
    Scenario,
    ScenarioEvent,
    Simulation,
    load_preset,
    load_scenario,
    load_topology,
    run_scenario,
)
from qkdnet.harness.cli import main as cli_main
from qkdnet.harness.control import ControlServer
from qkdnet.harness.topology import validate_topology

PRESET_OPERATING_POINTS = {
    "nec": 0.027,
    "trel": 0.038,
    "ntt": 0.0225,
    "mitsubishi": 0.045,
    "idq": 0.020,
    "vienna": 0.060,
}


class TestPresets:
    @pytest.mark.parametrize("name,point", sorted(PRESET_OPERATING_POINTS.items()))
    def test_preset_hits_operating_point(self, name, point):
        preset = load_preset(name)
        assert preset["protocol"] in ("bb84", "sarg04", "dps", "bbm92")
        assert preset["bound"]["kind"] in ("decoy", "dps", "fixed")

    def test_unknown_preset(self):
        with pytest.raises(TopologyError):
            load_preset("nokia")


class TestTopology:
    def test_bundled_topology_loads(self):
        net = load_topology()
        assert len(net.nodes) == 6
        assert len(net.links) == 6
        assert isinstance(net, Network)
        # every link is bound at both endpoint agents
        for lid, rt in net.links.items():
            assert rt.node_b in net.kmas[rt.node_a].pools
            assert rt.node_a in net.kmas[rt.node_b].pools

    def test_link_qber_matches_operating_point(self):
        net = load_topology()
        for lid, rt in net.links.items():
            point = PRESET_OPERATING_POINTS[rt.preset_name]
            pred = predicted_sifted_qber(rt.link)
            assert pred == pytest.approx(point, abs=0.004), (lid, pred)

    def test_priority_routes_bidirectional(self):
        net = load_topology()
        fwd = net.kms.priority_routes[("Koganei-1", "Otemachi-2")]
        rev = net.kms.priority_routes[("Otemachi-2", "Koganei-1")]
        assert rev == [list(reversed(r)) for r in fwd]

    def test_validation_collects_all_violations(self):
        doc = {
            "nodes": [{"id": "A"}, {"id": "A"}],
            "links": [
                {"id": "l1", "nodes": ["A", "A"], "distance_km": 0,
                 "loss_db": -1, "preset": "nokia", "monitor_fraction": 2.0},
                {"id": "l1", "nodes": ["A", "B"], "distance_km": 5,
                 "loss_db": 2, "preset": "nec"},
            ],
            "priority_routes": {"AB": [["A", "C"]]},
            "policy": "fastest",
        }
        violations = validate_topology(doc)
        joined = "\n".join(violations)
        for fragment in ("duplicate node ids", "distinct nodes",
                         "positive distance_km", "non-negative loss_db",
                         "unknown hardware preset", "monitor_fraction",
                         "duplicate link id", "unknown node", "'src|dst'",
                         "unknown policy"):
            assert fragment in joined, fragment

    def test_invalid_file_raises_with_violations(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nodes": [], "links": []}))
        with pytest.raises(TopologyError) as exc:
            load_topology(bad)
        assert len(exc.value.violations) >= 2


class TestScenario:
    def test_builtin_replay_scenario(self):
        sc = load_scenario(builtin="attack_reroute")
        assert sc.duration_s == 300.0
        kinds = [e.kind for e in sc.events]
        assert "session_start" in kinds and "attack_on" in kinds
        assert sc.prefill_bytes  # backbone pools start non-empty

    def test_default_is_empty(self):
        sc = load_scenario()
        assert sc.events == [] and sc.duration_s == 10.0

    def test_events_sorted_with_stable_ties(self):
        sc = Scenario("s", 10.0, 1.0, [
            ScenarioEvent(5.0, "link_up", {}, order=1),
            ScenarioEvent(2.0, "link_down", {}, order=2),
            ScenarioEvent(5.0, "attack_off", {}, order=0),
        ])
        assert [(e.t_s, e.kind) for e in sc.events] == [
            (2.0, "link_down"), (5.0, "attack_off"), (5.0, "link_up")]

    def test_unknown_kind_rejected(self):
        from qkdnet.errors import InvalidArgumentError
        with pytest.raises(InvalidArgumentError):
            ScenarioEvent(0.0, "meltdown", {})


class TestSimulation:
    def test_empty_run_shape(self):
        net = load_topology()
        result = run_scenario(net, load_scenario(), seed=0)
        assert len(result.metrics) == 10 * 6
        csv = result.metrics_csv()
        header, *rows = csv.strip().splitlines()
        assert header == ",".join(METRICS_COLUMNS)
        assert len(rows) == 60
        assert all(r.split(",")[6] == "up" for r in rows)

    def test_determinism(self):
        outs = []
        for _ in range(2):
            net = load_topology()
            result = run_scenario(net, load_scenario(), seed=7)
            outs.append((result.metrics_csv(), result.audit_jsonl()))
        assert outs[0] == outs[1]

    def test_seed_changes_output(self):
        csvs = []
        for seed in (0, 1):
            net = load_topology()
            csvs.append(run_scenario(net, load_scenario(), seed=seed).metrics_csv())
        assert csvs[0] != csvs[1]

    def test_link_down_event(self):
        net = load_topology()
        sc = Scenario("s", 6.0, 1.0, [
            ScenarioEvent(3.0, "link_down", {"link_id": "idq"})])
        result = run_scenario(net, sc, seed=0)
        rows = [m for m in result.metrics if m["link_id"] == "idq"]
        assert [r["status"] for r in rows] == ["up", "up", "down",
                                               "down", "down", "down"]
        assert all(r["sifted_bps"] == 0 for r in rows if r["status"] == "down")

    def test_write_outputs(self, tmp_path):
        net = load_topology()
        run_scenario(net, load_scenario(), seed=0, duration_s=3.0,
                     out_dir=tmp_path)
        for name in ("metrics.csv", "audit.jsonl", "events.jsonl"):
            assert (tmp_path / name).is_file()
        summary = json.loads((tmp_path / "audit.jsonl").read_text()
                             .splitlines()[0])
        assert summary["kind"] == "summary"
        assert summary["conservation_ok"] is True

    def test_attack_detection_and_reroute(self):
        net = load_topology()
        sc = load_scenario(builtin="attack_reroute")
        result = run_scenario(net, sc, seed=0, duration_s=80.0)
        alarms = [e for e in net.kms.event_log if e["event"] == "alarm"]
        assert len(alarms) == 1
        assert alarms[0]["link_id"] == "ntt"
        assert 60.0 <= alarms[0]["t_s"] <= 65.0   # within 5 s of onset
        switches = [e for e in net.kms.event_log if e["event"] == "route_switch"]
        assert switches
        assert switches[0]["route"]["nodes"] == ["Koganei-1", "Otemachi-1",
                                                 "Otemachi-2"]
        assert result.audit["total_session_stall_s"] == 0.0
        assert result.audit["sessions_round_trip_ok"] is True

    def test_no_false_alarms_quiet_network(self):
        net = load_topology()
        result = run_scenario(net, load_scenario(), seed=3, duration_s=40.0)
        assert not net.kms.alarm_log
        assert result.audit["double_serving_count"] == 0


class TestCli:
    def test_run_and_status(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert cli_main(["run", "--out", str(out), "--duration", "3",
                         "--seed", "1"]) == 0
        captured = capsys.readouterr().out
        assert "conservation_ok: True" in captured
        assert cli_main(["status", "--out", str(out)]) == 0
        status = capsys.readouterr().out
        assert "nec" in status and "up" in status

    def test_inject_appends_sorted(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps({
            "name": "s", "duration_s": 20.0, "tick_s": 1.0,
            "events": [{"t_s": 10.0, "kind": "link_up",
                        "params": {"link_id": "idq"}}]}))
        assert cli_main(["inject", "--scenario", str(path), "--kind",
                         "link_down", "--at", "5", "--link", "idq"]) == 0
        doc = json.loads(path.read_text())
        assert [e["kind"] for e in doc["events"]] == ["link_down", "link_up"]
        assert doc["events"][0]["params"] == {"link_id": "idq"}

    def test_run_rejects_bad_topology(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nodes": [], "links": []}))
        assert cli_main(["run", "--topology", str(bad),
                         "--out", str(tmp_path / "o")]) == 1
        assert "error:" in capsys.readouterr().err


@pytest.fixture()
def control():
    net = load_topology()
    sc = load_scenario(builtin="attack_reroute")
    sim = Simulation(net, sc, seed=0, duration_s=float("inf"))
    server = ControlServer(sim, port=0)
    server.start()
    yield server
    server.stop()


def _get(server, path):
    with urllib.request.urlopen(f"http://127.0.0.1:{server.port}{path}") as r:
        return json.loads(r.read())


def _post(server, payload):
    req = urllib.request.Request(
        f"http://127.0.0.1:{server.port}/command",
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as r:
        return json.loads(r.read())


class TestControlEndpoint:
    def test_state_and_step(self, control):
        doc = _get(control, "/state")
        assert doc["tick"] == 0 and doc["t_s"] == 0.0
        assert _post(control, {"kind": "step", "params": {"ticks": 3}})["ok"]
        doc = _get(control, "/state")
        assert doc["tick"] == 3 and doc["t_s"] == 3.0
        assert len(doc["links"]) == 6

    def test_attack_command_raises_alarm(self, control):
        _post(control, {"kind": "step", "params": {"ticks": 12}})
        _post(control, {"kind": "attack_on",
                        "params": {"link_id": "idq", "mode": "intercept_resend"}})
        _post(control, {"kind": "step", "params": {"ticks": 5}})
        alarms = _get(control, "/alarms")
        assert any(a["link_id"] == "idq" for a in alarms["open"])
        _post(control, {"kind": "clear_alarm", "params": {"link_id": "idq"}})
        assert _get(control, "/alarms")["open"] == []

    def test_history_rows(self, control):
        _post(control, {"kind": "step", "params": {"ticks": 4}})
        rows = _get(control, "/links/nec/history")
        assert len(rows) == 4
        assert rows[-1]["timestamp_s"] == 4.0

    def test_bad_command_is_structured_400(self, control):
        with pytest.raises(urllib.error.HTTPError) as exc:
            _post(control, {"kind": "explode", "params": {}})
        assert exc.value.code == 400
        assert "unknown command kind" in json.loads(exc.value.read())["error"]

    def test_unknown_path_404(self, control):
        with pytest.raises(urllib.error.HTTPError) as exc:
            _get(control, "/nope")
        assert exc.value.code == 404
