"""Measurement-device-independent QKD: relay model, decoy estimation, key rates.

Subpackages:

* optics: transfer matrix of the linear-optics relay and outcome
  probabilities for coherent and photon-number inputs
* protocol: yields, error rates, gains and the sift/bit-flip rules
* decoy: two-stage Poisson inversion recovering per-photon-number yields
* keyrate: asymptotic secret-key-rate bound and distance scans
* hom: two-pulse Hong-Ou-Mandel coincidence model
* cli: command-line front end (`mdiqkd keyrate|decoy|bsm|hom`)
"""

from .optics import (
    BsmOutcome,
    DetectorModel,
    NetworkConfig,
    Polarization,
    SourcePulse,
    build_network,
    coherent_outcome_probs,
    fock_outcome_probs,
)
from .protocol import (
    AggregateStats,
    Basis,
    SiftDecision,
    YieldErrorTable,
    build_yield_error_table,
    fock_yield_error,
    loss_adjusted_table,
    sift,
    wcp_observed_stats,
)
from .decoy import (
    DecoyIntermediates,
    EstimationResult,
    IntensityGrid,
    InversionResult,
    ObservedStats,
    estimate_errors,
    estimate_table,
    estimate_yields,
    invert_poisson,
    observed_from_model,
    observed_from_table,
    poisson_pmf,
    poisson_tail_mass,
    poisson_weights,
    q11,
)
from .keyrate import (
    ChannelModel,
    KeyRateParams,
    ScanPoint,
    SystemModel,
    binary_entropy,
    distance_scan,
    evaluate_point,
    find_cutoff,
    key_rate,
    optimize_intensity,
)
from .hom import HomParams, HomPoint, coincidence_point, hom_scan, mode_overlap

__version__ = "0.1.0"
