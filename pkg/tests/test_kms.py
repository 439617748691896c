import pytest

from qkdnet.errors import InvalidArgumentError, NoRouteError
from qkdnet.keymgmt import StatsReport
from qkdnet.kms import (
    LINK_ALARM,
    LINK_DOWN,
    LINK_UP,
    Alarm,
    DetectionRules,
    KeyManagementServer,
    LinkDescriptor,
    Route,
    detect_attack,
)


def report(link, t, qber, sifted=1000.0, secure=100.0, buffer_bits=10**6):
    return StatsReport(link, t, qber, sifted, secure, buffer_bits)


def steady(link, n, qber=0.022, start=0.0):
    return [report(link, start + i, qber) for i in range(n)]


RULES = DetectionRules(absolute_threshold=0.12, jump_threshold=0.05,
                       jump_window=10)


class TestDetectAttack:
    def test_steady_traffic_quiet(self):
        assert detect_attack(steady("l", 30), RULES) is None

    def test_jump_detected(self):
        hist = steady("l", 20) + [report("l", 20.0, 0.25)]
        alarm = detect_attack(hist, RULES)
        assert alarm is not None
        assert alarm.cause == "qber_absolute"

    def test_jump_below_absolute_detected_as_jump(self):
        hist = steady("l", 20) + [report("l", 20.0, 0.09)]
        alarm = detect_attack(hist, RULES)
        assert alarm is not None
        assert alarm.cause == "qber_jump"
        assert alarm.triggering_value == pytest.approx(0.09 - 0.022)

    def test_slow_drift_stays_quiet(self):
        # per-step drift below the jump threshold never alarms even when
        # the level doubles over time
        hist = [report("l", i, 0.03 + 0.002 * i) for i in range(30)]
        assert detect_attack(hist, RULES) is None

    def test_single_report_never_alarms(self):
        assert detect_attack([report("l", 0, 0.4)], RULES) is None

    def test_low_statistics_ignored(self):
        rules = DetectionRules(jump_threshold=0.05, min_sifted_bps=500)
        hist = steady("l", 10) + [report("l", 10.0, 0.3, sifted=100.0)]
        assert detect_attack(hist, rules) is None

    def test_vienna_style_thresholds(self):
        # a noisier link with a 6% baseline needs wider thresholds
        rules = DetectionRules(absolute_threshold=0.2, jump_threshold=0.12)
        hist = steady("l", 20, qber=0.06) + [report("l", 20.0, 0.10)]
        assert detect_attack(hist, rules) is None
        hist = steady("l", 20, qber=0.06) + [report("l", 20.0, 0.25)]
        assert detect_attack(hist, rules) is not None


def diamond_kms(**kwargs):
    """Two routes from A to D: A-B-D (short) and A-C-D (long)."""
    links = [
        LinkDescriptor("ab", "A", "B", 10.0),
        LinkDescriptor("bd", "B", "D", 10.0),
        LinkDescriptor("ac", "A", "C", 30.0),
        LinkDescriptor("cd", "C", "D", 30.0),
    ]
    kwargs.setdefault("priority_routes",
                      {("A", "D"): [["A", "B", "D"], ["A", "C", "D"]]})
    return KeyManagementServer(links, rules=RULES, **kwargs)


class TestRouting:
    def test_static_priority_prefers_first_route(self):
        kms = diamond_kms()
        route = kms.establish_demand("A", "D")
        assert route.nodes == ("A", "B", "D")
        assert route.link_ids == ("ab", "bd")
        assert route.total_distance_km == 20.0

    def test_alarm_triggers_reroute(self):
        kms = diamond_kms()
        kms.establish_demand("A", "D")
        alarm = Alarm("bd", 5.0, "qber_jump", 0.2)
        actions = kms.handle_alarm(alarm)
        assert kms.status["bd"] == LINK_ALARM
        assert len(actions) == 1
        assert actions[0].new_route.nodes == ("A", "C", "D")
        assert kms.route_table[("A", "D")].nodes == ("A", "C", "D")
        assert any(e["event"] == "route_switch" for e in kms.event_log)

    def test_no_route_degrades_demand(self):
        kms = diamond_kms()
        kms.establish_demand("A", "D")
        kms.handle_alarm(Alarm("bd", 5.0, "qber_jump", 0.2))
        actions = kms.handle_alarm(Alarm("cd", 6.0, "qber_jump", 0.2))
        assert actions[0].new_route is None
        assert ("A", "D") not in kms.route_table
        assert any(e["event"] == "demand_degraded" for e in kms.event_log)

    def test_clear_alarm_restores_priority_route(self):
        kms = diamond_kms()
        kms.establish_demand("A", "D")
        alarm = Alarm("bd", 5.0, "qber_jump", 0.2)
        kms.ingest_stats(report("bd", 4.0, 0.02))
        kms.open_alarms["bd"] = alarm
        kms.handle_alarm(alarm)
        actions = kms.clear_alarm("bd", now_s=9.0)
        assert kms.status["bd"] == LINK_UP
        assert actions[0].new_route.nodes == ("A", "B", "D")

    def test_clear_without_alarm_rejected(self):
        kms = diamond_kms()
        with pytest.raises(InvalidArgumentError):
            kms.clear_alarm("ab")

    def test_max_min_buffer_policy(self):
        buffers = {frozenset(("A", "B")): 100, frozenset(("B", "D")): 100,
                   frozenset(("A", "C")): 5000, frozenset(("C", "D")): 5000}
        kms = diamond_kms(policy="max_min_buffer",
                          buffer_probe=lambda u, v: buffers[frozenset((u, v))])
        route = kms.select_route("A", "D")
        assert route.nodes == ("A", "C", "D")

    def test_no_route_raises(self):
        kms = diamond_kms()
        kms.set_link_status("ab", LINK_DOWN)
        kms.set_link_status("ac", LINK_DOWN)
        with pytest.raises(NoRouteError):
            kms.select_route("A", "D")

    def test_fallback_to_search_without_priority_list(self):
        kms = diamond_kms(priority_routes={})
        route = kms.select_route("A", "D")
        assert route.nodes == ("A", "B", "D")   # shortest distance wins


class TestAlarmLifecycle:
    def test_ingest_raises_once(self):
        kms = diamond_kms()
        for r in steady("ab", 20):
            assert kms.ingest_stats(r) is None
        first = kms.ingest_stats(report("ab", 20.0, 0.3))
        assert first is not None
        kms.handle_alarm(first)
        # alarmed link no longer evaluates detection
        assert kms.ingest_stats(report("ab", 21.0, 0.3)) is None
        assert len(kms.alarm_log) == 1

    def test_down_link_skips_detection(self):
        kms = diamond_kms()
        kms.set_link_status("ab", LINK_DOWN)
        for r in steady("ab", 5):
            kms.ingest_stats(r)
        assert kms.ingest_stats(report("ab", 5.0, 0.4)) is None

    def test_history_ring_eviction(self):
        kms = diamond_kms(history_capacity=50)
        for r in steady("ab", 80):
            kms.ingest_stats(r)
        assert len(kms.history["ab"]) == 50
        doc = kms.history_document("ab", limit=10)
        assert len(doc) == 10
        assert doc[-1]["timestamp_s"] == 79.0

    def test_unknown_link_report_rejected(self):
        kms = diamond_kms()
        with pytest.raises(InvalidArgumentError):
            kms.ingest_stats(report("nope", 0.0, 0.02))


class TestStateDocument:
    def test_snapshot_shape(self):
        kms = diamond_kms()
        kms.establish_demand("A", "D")
        kms.ingest_stats(report("ab", 1.0, 0.021))
        doc = kms.state_document(now_s=1.0)
        assert doc["t_s"] == 1.0
        assert doc["policy"] == "static_priority"
        assert len(doc["links"]) == 4
        by_id = {l["link_id"]: l for l in doc["links"]}
        assert by_id["ab"]["latest"]["qber"] == 0.021
        assert by_id["bd"]["latest"] is None
        assert doc["routes"]["A->D"]["nodes"] == ["A", "B", "D"]
        assert doc["alarms_open"] == []


class TestValidation:
    def test_route_rejects_repeated_node(self):
        with pytest.raises(InvalidArgumentError):
            Route(("A", "B", "A"), ("ab", "ab"), 2.0)

    def test_route_rejects_wrong_hop_count(self):
        with pytest.raises(InvalidArgumentError):
            Route(("A", "B"), (), 1.0)

    def test_duplicate_link_ids_rejected(self):
        links = [LinkDescriptor("x", "A", "B", 1.0),
                 LinkDescriptor("x", "B", "C", 1.0)]
        with pytest.raises(InvalidArgumentError):
            KeyManagementServer(links)

    def test_parallel_links_rejected(self):
        links = [LinkDescriptor("x", "A", "B", 1.0),
                 LinkDescriptor("y", "A", "B", 1.0)]
        with pytest.raises(InvalidArgumentError):
            KeyManagementServer(links)

    def test_unknown_policy_rejected(self):
        with pytest.raises(InvalidArgumentError):
            KeyManagementServer([], policy="fastest")
