"""Secure-fraction bounds for decoy-state BB84 and DPS links.

Decoy bound (two-intensity, asymptotic). From the photon-number
expansion ``Q_x * e^x = sum_n Y_n x^n / n!`` and the usual tail
comparison between the two intensities:

    Y1 >= Y1L = mu / (mu*nu - nu^2) *
         (Q_nu e^nu - (nu/mu)^2 Q_mu e^mu - (mu^2 - nu^2)/mu^2 * Y0)

with the vacuum yield Y0 taken from the stats when the caller knows it
(the simulator does) and otherwise bounded from above by the error
counts (every vacuum click is a half-error): Y0 <= 2 E_nu Q_nu e^nu.
The single-photon error rate is bounded by

    e1 <= (E_nu Q_nu e^nu - 0.5 * Y0L) / (nu * Y1L),
    Y0L = max(0, (mu Q_nu e^nu - nu Q_mu e^mu) / (mu - nu)),

and the extractable fraction of the sifted key is

    max(0, (Q1L / Q_mu) * (1 - H2(e1U)) - ec_leak_fraction),
    Q1L = Y1L * mu * e^-mu.

DPS bound (individual attacks). The retained fraction after compressing
out the eavesdropper's collision information under a
beamsplitter-plus-measure-resend individual attack is modeled as

    privacy_fraction(e) = max(0, (1 - 6e)^2 / 2 - e^2)

which retains half the key at zero error (weak-pulse beamsplitting
leaks even without errors), decreases monotonically, and reaches zero
just above e = 1/6 of the way to the intercept floor (cutoff ~4.5% once
error-correction leakage is subtracted at realistic rates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import InvalidArgumentError
from .rates import binary_entropy


@dataclass(frozen=True)
class DecoyStats:
    """Measured (or modeled) per-class gains and error rates."""

    q_mu: float
    q_nu: float
    e_mu: float
    e_nu: float
    mu: float
    nu: float
    y0: float | None = None   # vacuum yield, if independently known

    def __post_init__(self):
        for name in ("e_mu", "e_nu"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise InvalidArgumentError(f"{name} must be in [0, 0.5]")
        if not 0.0 < self.nu:
            raise InvalidArgumentError("nu must be positive")
        if self.q_mu < 0 or self.q_nu < 0:
            raise InvalidArgumentError("gains must be non-negative")


def decoy_secure_fraction(stats: DecoyStats, ec_leak_fraction: float) -> float:
    """Extractable secret fraction of the sifted key for a two-intensity
    decoy link. Returns 0 when the bounds close the rate."""
    mu, nu = stats.mu, stats.nu
    if nu >= mu:
        raise InvalidArgumentError("decoy intensity nu must be below signal mu")
    if stats.q_mu <= 0:
        return 0.0

    q_mu_e = stats.q_mu * math.exp(mu)
    q_nu_e = stats.q_nu * math.exp(nu)

    y0_low = max(0.0, (mu * q_nu_e - nu * q_mu_e) / (mu - nu))
    if stats.y0 is not None:
        y0_for_y1 = stats.y0
        y0_for_e1 = stats.y0
    else:
        y0_for_y1 = min(1.0, 2.0 * stats.e_nu * q_nu_e)  # conservative upper bound
        y0_for_e1 = y0_low

    y1_low = (mu / (mu * nu - nu * nu)) * (
        q_nu_e - (nu / mu) ** 2 * q_mu_e - ((mu * mu - nu * nu) / (mu * mu)) * y0_for_y1)
    if y1_low <= 0:
        return 0.0

    e1_num = stats.e_nu * q_nu_e - 0.5 * y0_for_e1
    e1_up = min(0.5, max(0.0, e1_num / (nu * y1_low)))

    q1_low = y1_low * mu * math.exp(-mu)
    fraction = (q1_low / stats.q_mu) * (1.0 - binary_entropy(e1_up)) - ec_leak_fraction
    return min(1.0, max(0.0, fraction))


def decoy_y1_lower_bound(stats: DecoyStats) -> float:
    """Lower bound on the single-photon yield (exposed for validation)."""
    mu, nu = stats.mu, stats.nu
    if nu >= mu:
        raise InvalidArgumentError("decoy intensity nu must be below signal mu")
    q_mu_e = stats.q_mu * math.exp(mu)
    q_nu_e = stats.q_nu * math.exp(nu)
    y0 = stats.y0 if stats.y0 is not None else min(1.0, 2.0 * stats.e_nu * q_nu_e)
    return (mu / (mu * nu - nu * nu)) * (
        q_nu_e - (nu / mu) ** 2 * q_mu_e - ((mu * mu - nu * nu) / (mu * mu)) * y0)


def dps_privacy_fraction(qber: float) -> float:
    """Retained fraction before subtracting error-correction leakage."""
    if not 0.0 <= qber <= 0.5:
        raise InvalidArgumentError("qber must be in [0, 0.5]")
    if qber >= 1.0 / 6.0:
        return 0.0
    return max(0.0, (1.0 - 6.0 * qber) ** 2 / 2.0 - qber * qber)


def dps_secure_fraction(qber: float, ec_leak_fraction: float) -> float:
    """Extractable secret fraction for a DPS link under the
    individual-attack compression documented in the module docstring."""
    return max(0.0, dps_privacy_fraction(qber) - ec_leak_fraction)
