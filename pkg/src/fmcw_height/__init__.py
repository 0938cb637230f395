"""Target height estimation from ground-multipath amplitude modulation in FMCW radar.

The package simulates chirp-sequence FMCW echoes of point targets above a
reflecting ground, extracts the echo amplitude versus distance, and turns its
periodicity in reciprocal distance into a target height estimate.
"""
from .errors import (
    DegenerateInputError,
    FmcwHeightError,
    InfeasibleSceneError,
    InsufficientObservationError,
    LinearizationError,
    NonMonotonicDistanceError,
    ScenarioError,
)
from .estimation import (
    DC_LIMIT_FACTOR,
    HeightEstimate,
    HeightGrid,
    HeightSpectrum,
    SpectrumMethod,
    estimate_height,
    linearized_fft_psd,
    nedft_psd,
    preprocess,
    required_interval,
    spectral_resolution,
)
from .extraction import (
    AMTrack,
    Detection,
    SamplingMode,
    Track,
    am_track_from_cpi,
    am_track_from_cycles,
    detect_targets,
    update_tracks,
)
from .fmcw import (
    Cpi,
    RadarConfig,
    RangeDopplerMap,
    TargetSpec,
    WindowKind,
    range_doppler_map,
    range_profile,
    synthesize_cpi,
)
from .geometry import (
    SPEED_OF_LIGHT,
    GroundModel,
    PropagationPath,
    ScatteringModel,
    SceneGeometry,
    delay_difference_approx,
    exact_path_delays,
    min_distance_bound,
    propagation_factor,
    propagation_factor_magnitude_approx,
    propagation_paths,
)
from .pipeline import EstimateRecord, ProcessingOptions, RunResult, estimate_track, simulate_and_estimate

__version__ = "0.1.0"
