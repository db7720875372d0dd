"""swaybench: human-likeness benchmarking of humanoid posture control.

Pipeline: pseudorandom ternary tilt stimulus -> double-inverted-pendulum
simulation under bio-inspired balance controllers -> band-averaged FRF ->
weighted precision-matrix distance to a human reference cohort, with
empirical-CDF placement and bootstrap analysis.
"""

__version__ = "0.1.0"

from .controllers import (
    DecConfig,
    DecModule,
    EmConfig,
    IcConfig,
    TrialResult,
    em_decompose,
    run_trial,
    tune,
)
from .metric import (
    ReferenceModel,
    ScoreReport,
    bootstrap_cdf,
    empirical_cdf,
    expand,
    likeness_score,
    mahalanobis_score,
)
from .plant import DipParams, DipState, linearize, sensors
from .prts import (
    PeakGrid,
    StimulusConfig,
    TiltTrajectory,
    analysis_peaks,
    generate_ternary_sequence,
    ternary_to_tilt,
)
from .reference import (
    CohortManifest,
    SubjectRecord,
    build_reference,
    build_reference_from_cohort,
    load_cohort,
    load_reference,
    save_reference,
    synthesize_cohort,
)
from .spectral import (
    BandSpec,
    Frf11,
    compute_frf,
    estimate_frf,
    make_bands,
    single_bin_dft,
    spectral_weights,
)

__all__ = [
    "__version__",
    "BandSpec",
    "CohortManifest",
    "DecConfig",
    "DecModule",
    "DipParams",
    "DipState",
    "EmConfig",
    "Frf11",
    "IcConfig",
    "PeakGrid",
    "ReferenceModel",
    "ScoreReport",
    "StimulusConfig",
    "SubjectRecord",
    "TiltTrajectory",
    "TrialResult",
    "analysis_peaks",
    "bootstrap_cdf",
    "build_reference",
    "build_reference_from_cohort",
    "compute_frf",
    "em_decompose",
    "empirical_cdf",
    "estimate_frf",
    "expand",
    "generate_ternary_sequence",
    "likeness_score",
    "linearize",
    "load_cohort",
    "load_reference",
    "mahalanobis_score",
    "make_bands",
    "run_trial",
    "save_reference",
    "sensors",
    "single_bin_dft",
    "spectral_weights",
    "synthesize_cohort",
    "ternary_to_tilt",
    "tune",
]
