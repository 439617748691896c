"""Acceptance suite: one printed pass/fail line per criterion.

Criteria (numbered to match the release checklist):

* P1 hashing paths agree and the field parameters hold;
* P2 Cascade corrects planted errors within the leakage budget;
* P3 the error-correction rate table and its block arithmetic;
* P4 end-to-end secure/sifted ratios near the published operating points;
* P5 Monte Carlo channel statistics match the closed-form model;
* P6 attack replay: detection, reroute and unbroken session;
* P7 key hygiene audits over the full replay;
* P8 byte-identical reruns;
* P9 stored-key consumption arithmetic.
"""

import math
import time

import numpy as np
import pytest

from qkdnet.applayer import sustained_duration_s, voice_consumption_bytes
from qkdnet.channel import EveConfig, predicted_sifted_qber, simulate_pulses
from qkdnet.distillation import (
    DistillationConfig,
    Distiller,
    binary_entropy,
    cascade_reconcile,
    select_ec_rate,
)
from qkdnet.distillation.ntt import MAX_TRANSFORM, NTT_PRIME, assert_field_parameters
from qkdnet.distillation.toeplitz import expand_toeplitz_seed, toeplitz_hash, \
    toeplitz_hash_with_diagonals
from qkdnet.errors import BlockAbortError
from qkdnet.harness import load_scenario, load_topology, run_scenario
from qkdnet.harness.sim import DESK_DISTILLATION, _bound_for
from qkdnet.protocols import SiftedPair, sift


def _report(name: str, checks) -> None:
    """Run the checks; print exactly one pass/fail line for the criterion."""
    try:
        checks()
    except BaseException:
        print(f"{name}: FAIL")
        raise
    print(f"{name}: PASS")


# --- P1 ---------------------------------------------------------------------

def test_p1_toeplitz_paths_and_field():
    def checks():
        assert NTT_PRIME == 13631489
        assert (NTT_PRIME - 1) % (1 << 20) == 0
        assert_field_parameters()

        # n <= 64, all inputs: both paths are GF(2)-linear in the input,
        # so agreement on every basis vector plus a linearity spot check
        # covers all 2**n inputs exactly
        for n in range(1, 65):
            for m in {1, max(1, n // 2), n}:
                for seed in range(2):
                    diag = expand_toeplitz_seed(seed, n, m)
                    basis = np.eye(n, dtype=np.uint8)
                    for j in range(n):
                        a = toeplitz_hash_with_diagonals(basis[j], diag, m, "naive")
                        b = toeplitz_hash_with_diagonals(basis[j], diag, m, "ntt")
                        assert np.array_equal(a, b), (n, m, seed, j)
                    rng = np.random.default_rng(seed)
                    x = rng.integers(0, 2, n, dtype=np.uint8)
                    y = rng.integers(0, 2, n, dtype=np.uint8)
                    hx = toeplitz_hash_with_diagonals(x, diag, m, "ntt")
                    hy = toeplitz_hash_with_diagonals(y, diag, m, "ntt")
                    hxy = toeplitz_hash_with_diagonals(x ^ y, diag, m, "ntt")
                    assert np.array_equal(hxy, hx ^ hy)

        # 100 random mid-size cases, exact equality of both paths
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = 4096
            m = int(rng.integers(1, n + 1))
            x = rng.integers(0, 2, n, dtype=np.uint8)
            seed = int(rng.integers(2**32))
            assert np.array_equal(toeplitz_hash(x, seed, m, "naive"),
                                  toeplitz_hash(x, seed, m, "ntt"))

        # one full-size case: n = 2**20 in under 10 s, exact vs naive
        n = MAX_TRANSFORM
        m = 1024
        x = np.random.default_rng(11).integers(0, 2, n, dtype=np.uint8)
        t0 = time.monotonic()
        fast = toeplitz_hash(x, 99, m, "ntt")
        elapsed = time.monotonic() - t0
        assert elapsed < 10.0, f"full-size hash took {elapsed:.1f}s"
        slow = toeplitz_hash(x, 99, m, "naive")
        assert np.array_equal(fast, slow)

    _report("P1", checks)


# --- P2 ---------------------------------------------------------------------

def test_p2_cascade_budget():
    def checks():
        n = 100_000
        failures = 0
        runs = 0
        for e in (0.01, 0.03, 0.05, 0.07):
            budget = 1.35 * n * binary_entropy(e)
            for seed in range(50):
                rng = np.random.default_rng(1000 * int(e * 100) + seed)
                alice = rng.integers(0, 2, n, dtype=np.uint8)
                bob = alice ^ (rng.random(n) < e).astype(np.uint8)
                corrected, leak, _ = cascade_reconcile(alice, bob, e, seed=seed)
                runs += 1
                if not np.array_equal(corrected, alice):
                    failures += 1
                assert leak <= budget, (e, seed, leak, budget)
        assert runs == 200
        assert runs - failures >= 199, f"{failures} residual-error runs"

    _report("P2", checks)


# --- P3 ---------------------------------------------------------------------

def test_p3_rate_table():
    def checks():
        assert select_ec_rate(0.027) == 0.75
        assert select_ec_rate(0.050) == 0.65
        assert select_ec_rate(0.070) == 0.55
        with pytest.raises(BlockAbortError):
            select_ec_rate(0.08)
        # 1 Mbit sifted block leaves 750/650/550 kbit for amplification
        for qber, kbits in ((0.027, 750), (0.050, 650), (0.070, 550)):
            assert int(select_ec_rate(qber) * 1_000_000) == kbits * 1000

    _report("P3", checks)


# --- P4 ---------------------------------------------------------------------

def _pipeline_ratio(link_id: str, seed: int) -> float:
    """Secure/sifted ratio of the full distillation pipeline fed with
    sifted strings at the link's modeled error rate."""
    net = load_topology()
    rt = net.links[link_id]
    qber = predicted_sifted_qber(rt.link)
    cfg = DistillationConfig(sifted_block_bits=DESK_DISTILLATION.sifted_block_bits,
                             min_pa_block_bits=DESK_DISTILLATION.min_pa_block_bits)
    distiller = Distiller(link_id, cfg, _bound_for(rt), seed=seed)
    rng = np.random.default_rng(seed)
    sifted = 0
    secure = 0
    for _ in range(60):
        n = cfg.sifted_block_bits
        alice = rng.integers(0, 2, n, dtype=np.uint8)
        bob = alice ^ (rng.random(n) < qber).astype(np.uint8)
        pair = SiftedPair(link_id, 0, alice, bob, n, 1.0)
        for result in distiller.feed(pair):
            assert not result.aborted
            sifted += result.sifted_bits
            secure += result.secure_bits
    return secure / sifted


def test_p4_rate_ratios():
    def checks():
        targets = {"nec": 81.7 / 268.9, "ntt": 2.1 / 15.0}
        for link_id, target in sorted(targets.items()):
            ratio = _pipeline_ratio(link_id, seed=4)
            assert target / 2 <= ratio <= target * 2, (link_id, ratio, target)

    _report("P4", checks)


# --- P5 ---------------------------------------------------------------------

def test_p5_channel_consistency():
    def checks():
        net = load_topology()
        for link_id in sorted(net.links):
            rt = net.links[link_id]
            pred = predicted_sifted_qber(rt.link)
            log = simulate_pulses(rt.link, 10_000_000, seed=17)
            pair = sift(rt.link.source.protocol, log)
            assert len(pair) > 0, link_id
            qber = float(np.mean(pair.alice_bits != pair.bob_bits))
            sigma = math.sqrt(pred * (1 - pred) / len(pair))
            assert abs(qber - pred) <= 3 * sigma, (link_id, qber, pred, sigma)

        # measure-resend drives the BB84 error rate to the analytic 25%
        # on a channel without intrinsic error or noise clicks; links with
        # nonzero e_opt sit above it by e_opt/2 plus the noise term
        from qkdnet.channel import (ChannelConfig, DetectorConfig,
                                    IntensityClass, LinkConfig, SourceConfig)
        clean = LinkConfig(
            "clean",
            SourceConfig("bb84", 1e9, (IntensityClass("signal", 0.5, 1.0),)),
            ChannelConfig(10.0, 3.0),
            DetectorConfig(efficiency=0.5))
        eve = EveConfig("intercept_resend")
        log = simulate_pulses(clean, 4_000_000, eve=eve, seed=23)
        pair = sift("bb84", log)
        qber = float(np.mean(pair.alice_bits != pair.bob_bits))
        assert abs(qber - 0.25) <= 0.01, qber

        # and the attacked prediction stays consistent with Monte Carlo
        # on a real link
        rt = net.links["nec"]
        pred = predicted_sifted_qber(rt.link, eve, attacked=True)
        log = simulate_pulses(rt.link, 10_000_000, eve=eve, seed=29)
        pair = sift("bb84", log)
        qber = float(np.mean(pair.alice_bits != pair.bob_bits))
        sigma = math.sqrt(pred * (1 - pred) / len(pair))
        assert abs(qber - pred) <= 3 * sigma, (qber, pred, sigma)

    _report("P5", checks)


# --- P6/P7/P8 share two full replay runs --------------------------------------


@pytest.fixture(scope="module")
def replay_runs():
    runs = []
    for _ in range(2):
        net = load_topology()
        scenario = load_scenario(builtin="attack_reroute")
        result = run_scenario(net, scenario, seed=0)
        runs.append((net, result))
    return runs


def test_p6_replay_detection_and_session(replay_runs):
    def checks():
        net, result = replay_runs[0]
        onset = next(e.t_s for e in load_scenario(builtin="attack_reroute").events
                     if e.kind == "attack_on")
        alarms = [e for e in net.kms.event_log if e["event"] == "alarm"]
        assert alarms and alarms[0]["link_id"] == "ntt"
        assert onset <= alarms[0]["t_s"] <= onset + 5.0

        switches = [e for e in net.kms.event_log if e["event"] == "route_switch"]
        assert switches
        new_route = switches[0]["route"]
        assert new_route["nodes"] == ["Koganei-1", "Otemachi-1", "Otemachi-2"]
        assert new_route["total_distance_km"] == pytest.approx(69.0)

        state = result.sessions["conference"]
        target = int(state.session.rate_bps / 8 * 30.0 * 2)
        assert state.session.stall_s == 0.0
        assert state.session.round_trip_ok()
        assert state.session.pool.available_bytes >= target - \
            2 * int(state.session.rate_bps / 8)

    _report("P6", checks)


def test_p7_key_hygiene(replay_runs):
    def checks():
        _, result = replay_runs[0]
        audit = result.audit
        assert audit["double_serving_count"] == 0
        assert audit["conservation_ok"] is True
        assert audit["zeroization_ok"] is True
        assert audit["relay_wire_masked_ok"] is True
        assert result.relays, "replay produced no relays to audit"

    _report("P7", checks)


def test_p8_determinism(replay_runs):
    def checks():
        (_, r1), (_, r2) = replay_runs
        assert r1.metrics_csv() == r2.metrics_csv()
        assert r1.audit_jsonl() == r2.audit_jsonl()

    _report("P8", checks)


# --- P9 ---------------------------------------------------------------------

def test_p9_keyfile_arithmetic():
    def checks():
        ten_min = voice_consumption_bytes(600.0)
        assert ten_min == pytest.approx(1.2e6, rel=0.01)
        days = sustained_duration_s(2e9) / 86400.0
        assert days >= 10.0, days

    _report("P9", checks)
