"""anglespoof: uplink angle-spoofing sandbox.

Narrowband MIMO sounding simulation, grid maximum-likelihood angle
estimation at the base station, and blind adversarial precoder design at
the user that steers the estimate toward a chosen false geometry.
"""

from .channel import (
    DEFAULT_BANDWIDTH,
    DEFAULT_NOISE_PSD,
    SPEED_OF_LIGHT,
    ChannelParams,
    ObservationOperator,
    PrecoderSet,
    ReceivedSignal,
    SoundingCodebook,
    build_observation,
    channel_matrix,
    default_codebook,
    gains_from_scene,
    synthesize_received,
)
from .errors import ConfigError, DegenerateGeometryError, NumericalFailureError
from .estimator import (
    AngleGrid,
    BeamSelection,
    EstimationResult,
    achievable_rate,
    cost_surface,
    estimate_gains,
    grid_ml_estimate,
    projected_cost,
    select_beam,
)
from .geometry import AngleVector, SceneGeometry, scene_to_angles, steering, wrap_angle
from .harness import (
    ExperimentConfig,
    SweepResult,
    TrialRecord,
    dbm_to_watts,
    design_spoof,
    equivalent_spoof_gains,
    generate_heatmap,
    probe_signal,
    run_rate_curves,
    run_sweep,
    spoofing_deviation,
)
from .spoofing import (
    SpoofDiagnostics,
    SpoofState,
    SpoofTarget,
    communication_precoder,
    compute_b_vectors,
    run_spoof_design,
    spoof_objective,
    subspace_residual,
    update_d,
    update_lambda,
    update_precoders,
)

__version__ = "0.1.0"
