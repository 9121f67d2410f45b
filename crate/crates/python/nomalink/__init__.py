"""Link-level simulator for uplink power-domain NOMA.

Blind joint channel estimation and detection via EM-fitted Gaussian
mixtures with successive interference cancellation, closed-form SER
predictors, and a deterministic Monte Carlo experiment harness. All heavy
lifting happens in the Rust extension module; this package just re-exports
its surface.
"""

from ._native import (
    ChannelState,
    Constellation,
    DetectionReport,
    GmmFit,
    demap,
    fit_gaussian_mixture,
    gmm_sic_detect,
    grant_free_detect,
    mld_full_csi,
    mld_pilot_csi,
    modulate,
    phase_mismatch_from_rmax,
    phase_mismatch_from_snr,
    q_function,
    run_experiment_csv,
    ser_noma_reference,
    ser_noma_two_user,
    ser_qpsk_phase_mismatch,
    ser_single_user,
    transmit,
    validate_config,
)

__all__ = [
    "ChannelState",
    "Constellation",
    "DetectionReport",
    "GmmFit",
    "demap",
    "fit_gaussian_mixture",
    "gmm_sic_detect",
    "grant_free_detect",
    "mld_full_csi",
    "mld_pilot_csi",
    "modulate",
    "phase_mismatch_from_rmax",
    "phase_mismatch_from_snr",
    "q_function",
    "run_experiment_csv",
    "ser_noma_reference",
    "ser_noma_two_user",
    "ser_qpsk_phase_mismatch",
    "ser_single_user",
    "transmit",
    "validate_config",
]
