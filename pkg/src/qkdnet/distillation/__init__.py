"""Key distillation: error-correction rate selection, Cascade
reconciliation, secure-fraction bounds, and Toeplitz privacy
amplification with naive and NTT-accelerated paths."""

from .rates import select_ec_rate, binary_entropy, EC_RATE_TABLE
from .ntt import NTT_PRIME, ntt_forward, ntt_inverse, ntt_convolve, assert_field_parameters
from .toeplitz import toeplitz_hash, expand_toeplitz_seed
from .cascade import cascade_reconcile, CascadeConfig
from .bounds import DecoyStats, decoy_secure_fraction, dps_secure_fraction
from .pipeline import (
    DistillationConfig,
    SecretKeyBlock,
    privacy_amplify,
    Distiller,
)

__all__ = [
    "select_ec_rate", "binary_entropy", "EC_RATE_TABLE",
    "NTT_PRIME", "ntt_forward", "ntt_inverse", "ntt_convolve",
    "assert_field_parameters",
    "toeplitz_hash", "expand_toeplitz_seed",
    "cascade_reconcile", "CascadeConfig",
    "DecoyStats", "decoy_secure_fraction", "dps_secure_fraction",
    "DistillationConfig", "SecretKeyBlock", "privacy_amplify", "Distiller",
]
