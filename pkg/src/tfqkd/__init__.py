"""Key-rate analysis and Monte Carlo simulation for twin-field-type QKD."""

from .bounds import (
    absolute_plob,
    evaluate_bound,
    plob_bound,
    rci_lower_bound,
    srb_bound,
    tgw_bound,
)
from .core import (
    ChannelParams,
    PhaseSliceIndex,
    binary_entropy,
    channel_transmittance,
    reduce_phase,
    slice_of_phase,
)
from .engine import (
    Outcome,
    TrialRecord,
    charlie_measure,
    run_pmmdi_npp,
    run_sns,
    run_tfqkd,
    sample_trials,
    simulated_rate,
)
from .phase import (
    CompensationResult,
    DriftModel,
    PhasePath,
    PulseTrainSchedule,
    apply_compensation,
    drift_rate_for_length,
    estimate_phase_offset,
    interference_error,
    sample_phase_path,
)
from .rates import (
    DetectionStats,
    IntensityOptimum,
    ProtocolConfig,
    ProtocolVariant,
    RateCurvePoint,
    generate_rate_curve,
    model_detection_stats,
    optimize_intensity,
    pm_rate,
    pmmdi_rate,
    tf_gllp_rate,
    tfstar_rate,
)
from .tallies import TallyTable, sifted_fraction, tallies_to_stats

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "CompensationResult",
    "DetectionStats",
    "DriftModel",
    "IntensityOptimum",
    "Outcome",
    "PhasePath",
    "PhaseSliceIndex",
    "ProtocolConfig",
    "ProtocolVariant",
    "PulseTrainSchedule",
    "RateCurvePoint",
    "TallyTable",
    "TrialRecord",
    "absolute_plob",
    "apply_compensation",
    "binary_entropy",
    "channel_transmittance",
    "charlie_measure",
    "drift_rate_for_length",
    "estimate_phase_offset",
    "evaluate_bound",
    "generate_rate_curve",
    "interference_error",
    "model_detection_stats",
    "optimize_intensity",
    "plob_bound",
    "pm_rate",
    "pmmdi_rate",
    "rci_lower_bound",
    "reduce_phase",
    "run_pmmdi_npp",
    "run_sns",
    "run_tfqkd",
    "sample_phase_path",
    "sample_trials",
    "sifted_fraction",
    "simulated_rate",
    "slice_of_phase",
    "srb_bound",
    "tallies_to_stats",
    "tf_gllp_rate",
    "tfstar_rate",
    "tgw_bound",
]
