"""Quantum-layer link model.

Generates per-pulse events (sender choices, receiver detections) from
parametric models of weak-coherent / pair sources, lossy fiber channels,
gated detectors and eavesdroppers, together with a closed-form gain/error
model that the Monte Carlo path converges to.

Click aggregation model (used identically by :func:`click_model` and
:func:`simulate_pulses`):

* a pulse of mean photon number ``mu`` produces a signal click with
  probability ``p_sig = 1 - exp(-mu * eta_tot)`` where
  ``eta_tot = transmittance(loss_db + insertion_loss_db) * efficiency``;
* independently, a noise click occurs with probability
  ``p_noise = 1 - (1 - p_dark_total) * (1 - p_bg) * (1 - p_ap)``:
  ``p_dark_total`` combines the per-detector dark probability over
  ``num_detectors``, ``p_bg`` converts the background rate to a per-gate
  probability through the gate window ``duty_factor / clock_hz``, and
  ``p_ap`` is the steady-state afterpulse term (any detection arms an
  afterpulse that fires in the next gate with ``afterpulse_prob``);
* a slot clicks if either fires; signal takes priority for the decoded
  bit, a noise-only click decodes to a uniformly random bit.

Per intensity class::

    Q = p_sig + (1 - p_sig) * p_noise
    E = (e_opt * p_sig + 0.5 * (1 - p_sig) * p_noise) / Q

All randomness flows through explicit seeds; the module holds no mutable
state and is safe to drive many links in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

PROTOCOLS = ("bb84", "sarg04", "dps", "bbm92")

EVE_MODES = ("none", "intercept_resend", "tap_inject")


def transmittance(loss_db: float) -> float:
    """Channel transmittance for a loss given in dB: ``10 ** (-loss_db / 10)``."""
    if loss_db < 0:
        raise InvalidArgumentError(f"loss_db must be >= 0, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class IntensityClass:
    """One pulse-intensity class of a decoy-capable source."""

    label: str
    mean_photons: float
    send_prob: float

    def __post_init__(self):
        if self.mean_photons < 0:
            raise InvalidArgumentError(f"mean_photons must be >= 0, got {self.mean_photons}")
        if not 0.0 <= self.send_prob <= 1.0:
            raise InvalidArgumentError(f"send_prob must be in [0,1], got {self.send_prob}")


@dataclass(frozen=True)
class SourceConfig:
    """Transmitter model: protocol, clock and intensity classes.

    ``e_opt`` is the intrinsic optical (misalignment/visibility) error of
    the link. ``duty_factor`` scales the detector gate window used to
    convert cps noise rates to per-gate probabilities.
    """

    protocol: str
    clock_hz: float
    classes: tuple[IntensityClass, ...]
    e_opt: float = 0.0
    duty_factor: float = 1.0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvalidArgumentError(f"unknown protocol {self.protocol!r}")
        if self.clock_hz <= 0:
            raise InvalidArgumentError("clock_hz must be positive")
        if not self.classes:
            raise InvalidArgumentError("source needs at least one intensity class")
        total = sum(c.send_prob for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise InvalidArgumentError(f"class send_prob sum to {total}, expected 1")
        if not 0.0 <= self.e_opt <= 0.5:
            raise InvalidArgumentError("e_opt must be in [0, 0.5]")


@dataclass(frozen=True)
class ChannelConfig:
    """Fiber channel: total loss and stray-light/crosstalk click rate."""

    distance_km: float
    loss_db: float
    background_cps: float = 0.0

    def __post_init__(self):
        if self.distance_km < 0 or self.loss_db < 0 or self.background_cps < 0:
            raise InvalidArgumentError("channel parameters must be non-negative")

    @classmethod
    def from_rate(cls, distance_km: float, rate_db_per_km: float,
                  background_cps: float = 0.0) -> "ChannelConfig":
        return cls(distance_km, distance_km * rate_db_per_km, background_cps)


@dataclass(frozen=True)
class DetectorConfig:
    """Receiver model: efficiency, gated-noise and optics loss."""

    efficiency: float
    dark_prob_per_gate: float = 0.0
    afterpulse_prob: float = 0.0
    insertion_loss_db: float = 0.0
    num_detectors: int = 1

    def __post_init__(self):
        for name in ("efficiency", "dark_prob_per_gate", "afterpulse_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must be in [0,1], got {v}")
        if self.insertion_loss_db < 0:
            raise InvalidArgumentError("insertion_loss_db must be >= 0")
        if self.num_detectors < 1:
            raise InvalidArgumentError("num_detectors must be >= 1")


@dataclass(frozen=True)
class EveConfig:
    """Eavesdropper hook applied to a simulated window of link time."""

    mode: str = "none"
    start_s: float = 0.0
    stop_s: float = math.inf
    tap_fraction: float = 0.0
    inject_click_rate: float = 0.0

    def __post_init__(self):
        if self.mode not in EVE_MODES:
            raise InvalidArgumentError(f"unknown eve mode {self.mode!r}")
        if self.start_s > self.stop_s:
            raise InvalidArgumentError("start_s must be <= stop_s")
        if not 0.0 <= self.tap_fraction <= 1.0:
            raise InvalidArgumentError("tap_fraction must be in [0,1]")
        if self.inject_click_rate < 0:
            raise InvalidArgumentError("inject_click_rate must be >= 0")


EVE_OFF = EveConfig()


@dataclass(frozen=True)
class LinkConfig:
    """Complete physical description of one quantum link."""

    link_id: str
    source: SourceConfig
    channel: ChannelConfig
    detector: DetectorConfig


@dataclass
class RawEventLog:
    """Per-pulse record of one simulated epoch.

    The sender record covers every slot; for DPS ``alice_bits`` holds the
    per-slot phase bit (the key bit of slot ``k`` is
    ``phase[k] ^ phase[k-1]``). Receiver arrays are aligned with each
    other and indexed by ``det_slots``.
    """

    protocol: str
    clock_hz: float
    n_pulses: int
    elapsed_s: float
    alice_bits: np.ndarray        # uint8, length n_pulses
    alice_bases: np.ndarray       # uint8, length n_pulses (0 for dps)
    alice_classes: np.ndarray     # uint8 class index, length n_pulses
    class_labels: tuple[str, ...]
    det_slots: np.ndarray         # int64, strictly increasing
    det_index: np.ndarray         # uint8 detector number
    det_bits: np.ndarray          # uint8 decoded bit
    det_bases: np.ndarray         # uint8 measurement basis (0 for dps)
    start_s: float = 0.0

    def validate(self) -> None:
        if self.det_slots.size:
            if not np.all(np.diff(self.det_slots) > 0):
                raise InvalidArgumentError("detection slots must be strictly increasing")
            if self.det_slots[0] < 0 or self.det_slots[-1] >= self.n_pulses:
                raise InvalidArgumentError("detection references an invalid slot")
        if self.det_slots.size > self.n_pulses:
            raise InvalidArgumentError("more detections than slots")


@dataclass(frozen=True)
class ClassRates:
    """Analytic per-class gain and error rate."""

    gain: float
    error_rate: float
    p_signal: float
    p_noise: float
    undefined: bool = False   # gain is zero, error rate meaningless


def _noise_probs(source: SourceConfig, channel: ChannelConfig,
                 detector: DetectorConfig,
                 extra_click_rate: float = 0.0) -> tuple[float, float]:
    """(static per-gate noise prob, eta_tot)."""
    gate_s = source.duty_factor / source.clock_hz
    p_dark_total = 1.0 - (1.0 - detector.dark_prob_per_gate) ** detector.num_detectors
    p_bg = 1.0 - math.exp(-(channel.background_cps + extra_click_rate) * gate_s)
    p_static = 1.0 - (1.0 - p_dark_total) * (1.0 - p_bg)
    eta_tot = transmittance(channel.loss_db + detector.insertion_loss_db) * detector.efficiency
    return p_static, eta_tot


def click_model(source: SourceConfig, channel: ChannelConfig,
                detector: DetectorConfig,
                extra_click_rate: float = 0.0,
                mu_scale: float = 1.0) -> dict[str, ClassRates]:
    """Closed-form per-class gain Q and error rate E.

    ``extra_click_rate`` and ``mu_scale`` let callers evaluate the model
    under a tap/inject attack (removed signal, injected random clicks).
    The afterpulse term is solved self-consistently: the steady-state
    afterpulse probability is ``afterpulse_prob`` times the class-averaged
    gain of the previous gate.
    """
    p_static, eta_tot = _noise_probs(source, channel, detector, extra_click_rate)
    ap = detector.afterpulse_prob
    p_sig = {c.label: 1.0 - math.exp(-c.mean_photons * mu_scale * eta_tot)
             for c in source.classes}

    # fixed point for the class-averaged gain feeding the afterpulse term
    q_avg = 0.0
    for _ in range(50):
        p_noise = 1.0 - (1.0 - p_static) * (1.0 - ap * q_avg)
        q_new = sum(c.send_prob * (p_sig[c.label] + (1.0 - p_sig[c.label]) * p_noise)
                    for c in source.classes)
        if abs(q_new - q_avg) < 1e-15:
            q_avg = q_new
            break
        q_avg = q_new
    p_noise = 1.0 - (1.0 - p_static) * (1.0 - ap * q_avg)

    out: dict[str, ClassRates] = {}
    for c in source.classes:
        ps = p_sig[c.label]
        q = ps + (1.0 - ps) * p_noise
        if q <= 0.0:
            out[c.label] = ClassRates(0.0, 0.0, ps, p_noise, undefined=True)
            continue
        e = (source.e_opt * ps + 0.5 * (1.0 - ps) * p_noise) / q
        out[c.label] = ClassRates(q, e, ps, p_noise)
    return out


def predicted_sifted_qber(link: LinkConfig, eve: EveConfig = EVE_OFF,
                          attacked: bool = False) -> float:
    """Detection-weighted sifted QBER the protocol's sifting will observe.

    For bb84/bbm92/dps the sifted QBER equals the detection-weighted E.
    SARG04 sifting doubles the optical error contribution; the exact
    post-selection arithmetic is reproduced here so Monte Carlo runs can
    be checked against it.
    """
    mu_scale = 1.0
    extra = 0.0
    if attacked and eve.mode == "tap_inject":
        mu_scale = 1.0 - eve.tap_fraction
        extra = eve.inject_click_rate
    rates = click_model(link.source, link.channel, link.detector,
                        extra_click_rate=extra, mu_scale=mu_scale)
    probs = {c.label: c.send_prob for c in link.source.classes}
    q_tot = sum(probs[l] * r.gain for l, r in rates.items())
    if q_tot == 0:
        raise InvalidArgumentError("zero total gain, QBER undefined")
    psig_tot = sum(probs[l] * r.p_signal for l, r in rates.items())
    pnoise_only = q_tot - psig_tot
    s = psig_tot / q_tot        # fraction of clicks carrying signal
    e = link.source.e_opt

    if attacked and eve.mode == "intercept_resend":
        # measure-resend in a random basis: half the detections are
        # faithful (up to e_opt), half decode to a random bit
        sig_err = 0.5 * e + 0.25
    else:
        sig_err = e

    if link.source.protocol == "sarg04":
        # per-detection keep/error probabilities under pair-announcement
        # sifting (bit = sender basis): a signal click is kept with
        # probability 1/4 + err/2 (err of which is erroneous), a noise
        # click is kept with probability 1/2 (half erroneous)
        keep = s * (0.25 + sig_err / 2.0) + (1.0 - s) * 0.5
        errs = s * (sig_err / 2.0) + (1.0 - s) * 0.25
        return errs / keep

    return (sig_err * psig_tot + 0.5 * pnoise_only) / q_tot


def _apply_afterpulse(base_clicks: np.ndarray, ap_draw: np.ndarray) -> np.ndarray:
    """Propagate afterpulses: a click in gate i arms gate i+1, which fires
    when its pre-drawn uniform is below afterpulse_prob (encoded in
    ap_draw as a boolean). Iterates until no new clicks appear."""
    clicks = base_clicks.copy()
    while True:
        armed = np.zeros_like(clicks)
        armed[1:] = clicks[:-1]
        new = armed & ap_draw & ~clicks
        if not new.any():
            return clicks
        clicks |= new


def simulate_pulses(link: LinkConfig, n_pulses: int, eve: EveConfig = EVE_OFF,
                    seed: int = 0, start_s: float = 0.0) -> RawEventLog:
    """Monte Carlo realization of one epoch of ``n_pulses`` slots.

    Deterministic for fixed ``(link, n_pulses, eve, seed, start_s)``.
    The eavesdropper window ``[start_s, stop_s)`` is mapped onto slots via
    the source clock relative to ``start_s``.
    """
    if n_pulses < 1:
        raise InvalidArgumentError("n_pulses must be >= 1")
    src = link.source
    det = link.detector
    rng = np.random.default_rng(seed)
    n = int(n_pulses)

    # sender choices
    send_probs = np.array([c.send_prob for c in src.classes])
    mus = np.array([c.mean_photons for c in src.classes])
    cls = rng.choice(len(src.classes), size=n, p=send_probs).astype(np.uint8)
    alice_bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    if src.protocol == "dps":
        alice_bases = np.zeros(n, dtype=np.uint8)
    else:
        alice_bases = rng.integers(0, 2, size=n, dtype=np.uint8)

    # eavesdropper window in slot space
    if eve.mode != "none":
        t = start_s + np.arange(n, dtype=np.float64) / src.clock_hz
        in_window = (t >= eve.start_s) & (t < eve.stop_s)
        del t
    else:
        in_window = np.zeros(n, dtype=bool)

    p_static, eta_tot = _noise_probs(src, link.channel, det)
    psig_table = 1.0 - np.exp(-mus * eta_tot)
    p_sig = psig_table[cls]
    p_noise_static = p_static
    if eve.mode == "tap_inject":
        tapped = 1.0 - np.exp(-mus * (1.0 - eve.tap_fraction) * eta_tot)
        p_sig = np.where(in_window, tapped[cls], p_sig)
        gate_s = src.duty_factor / src.clock_hz
        p_inj = 1.0 - math.exp(-eve.inject_click_rate * gate_s)
        p_noise_static = np.where(
            in_window, 1.0 - (1.0 - p_static) * (1.0 - p_inj), p_static)

    sig = rng.random(n) < p_sig
    del p_sig
    noise = rng.random(n) < p_noise_static
    ap_draw = rng.random(n) < det.afterpulse_prob
    base = sig | noise
    if det.afterpulse_prob > 0:
        clicks = _apply_afterpulse(base, ap_draw)
    else:
        clicks = base

    # receiver decoding
    if src.protocol == "dps":
        bob_bases = np.zeros(n, dtype=np.uint8)
        key_bits = np.zeros(n, dtype=np.uint8)
        key_bits[1:] = alice_bits[1:] ^ alice_bits[:-1]
        faithful = key_bits
    else:
        bob_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
        faithful = alice_bits

    err = rng.random(n) < src.e_opt
    rnd_bits = rng.integers(0, 2, size=n, dtype=np.uint8)

    if eve.mode == "intercept_resend":
        if src.protocol == "dps":
            # the interceptor resolves only half of the adjacent-pulse
            # phase differences; unresolved ones resend a random phase
            eve_known = rng.random(n) < 0.5
            sig_bits = np.where(eve_known, faithful ^ err, rnd_bits)
            sig_bits = np.where(in_window, sig_bits,
                                faithful ^ err).astype(np.uint8)
        else:
            eve_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
            eve_bits = np.where(eve_bases == alice_bases, alice_bits, rnd_bits)
            resent_match = bob_bases == eve_bases
            attacked_bits = np.where(resent_match, eve_bits ^ err, rnd_bits)
            clean_match = bob_bases == alice_bases
            clean_bits = np.where(clean_match, alice_bits ^ err, rnd_bits)
            sig_bits = np.where(in_window, attacked_bits, clean_bits).astype(np.uint8)
    else:
        if src.protocol == "dps":
            sig_bits = (faithful ^ err).astype(np.uint8)
        else:
            match = bob_bases == alice_bases
            sig_bits = np.where(match, alice_bits ^ err, rnd_bits).astype(np.uint8)

    noise_bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    det_bits_all = np.where(sig, sig_bits, noise_bits).astype(np.uint8)
    det_index_all = rng.integers(0, det.num_detectors, size=n, dtype=np.uint8)

    slots = np.nonzero(clicks)[0].astype(np.int64)
    log = RawEventLog(
        protocol=src.protocol,
        clock_hz=src.clock_hz,
        n_pulses=n,
        elapsed_s=n / src.clock_hz,
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        alice_classes=cls,
        class_labels=tuple(c.label for c in src.classes),
        det_slots=slots,
        det_index=det_index_all[slots],
        det_bits=det_bits_all[slots],
        det_bases=bob_bases[slots],
        start_s=start_s,
    )
    log.validate()
    return log


def scaled_link(link: LinkConfig, loss_db: float | None = None) -> LinkConfig:
    """Copy of ``link`` with the channel loss overridden."""
    if loss_db is None:
        return link
    return replace(link, channel=replace(link.channel, loss_db=loss_db))
