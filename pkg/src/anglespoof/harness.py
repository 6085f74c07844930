"""Monte Carlo experiment orchestration: power sweeps, RMSE curves, heatmaps.

A sweep holds the scene fixed, designs the adversarial precoders once
(noise-free, gain-independent), then per power level and trial draws fresh
path gains and noise, runs the estimator, and aggregates the deviation
between estimated and reference angles as RMSE.  Every random quantity is
seeded from (base_seed, indices), so results are a pure function of the
config regardless of execution order.

In ``precoder_spoof`` mode the sounding observation is the design-consistent
signal: the adversarial precoders driven by the equivalent gain vector d the
design converged with, rescaled so its power matches the scene's free-space
gain power.  The design only guarantees subspace membership along that one
gain direction — per-trial gain draws through the same precoders land far
from the targets — so the sweep measures the attack the design actually
delivers.  Per-trial gains still drive the communication-rate column (the
physical link the spoofed beam choice is applied to) and, in ``no_spoof``
mode, the estimates themselves.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    DEFAULT_BANDWIDTH,
    DEFAULT_NOISE_PSD,
    ChannelParams,
    SoundingCodebook,
    default_codebook,
    gains_from_scene,
    synthesize_received,
)
from .errors import NumericalFailureError
from .estimator import (
    AngleGrid,
    EstimationResult,
    achievable_rate,
    grid_ml_estimate,
    select_beam,
)
from .geometry import AngleVector, SceneGeometry, scene_to_angles, wrap_angle
from .spoofing import SpoofState, communication_precoder, run_spoof_design

MODES = ("no_spoof", "precoder_spoof")
VARIATIONS = ("noise+phase", "noise-only")

_NOISE_STREAM = 0
_RATE_SPOOF_STREAM = 1
_PROBE_STREAM = 2


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def _default_scene() -> SceneGeometry:
    return SceneGeometry(
        bs_position=np.array([0.0, 0.0]),
        ue_position=np.array([10.0, 5.0]),
        bs_orientation=0.0,
        ue_orientation=-2.0 * math.pi / 3.0,
        scatterer_positions=np.array([[7.0, -15.0]]),
    )


def _default_target_scene() -> SceneGeometry:
    return SceneGeometry(
        bs_position=np.array([0.0, 0.0]),
        ue_position=np.array([30.0, 20.0]),
        bs_orientation=0.0,
        ue_orientation=-math.pi,
        scatterer_positions=np.array([[20.0, -10.0]]),
    )


@dataclass
class ExperimentConfig:
    """Full description of one experiment; defaults give the reference scenario."""

    scene: SceneGeometry = field(default_factory=_default_scene)
    target_scene: Optional[SceneGeometry] = field(default_factory=_default_target_scene)
    target_angles: Optional[AngleVector] = None
    n_rx_antennas: int = 15
    n_tx_antennas: int = 5
    n_combiners: int = 15
    n_precoders: int = 15
    carrier_freq: float = 27.8e9
    bandwidth: float = DEFAULT_BANDWIDTH
    noise_psd: float = DEFAULT_NOISE_PSD
    power_grid_dbm: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    rate_power_grid_dbm: Optional[tuple] = None
    trials: int = 250
    grid_step_deg: float = 0.5
    base_seed: int = 0
    mode: str = "no_spoof"
    reflection_factor: float = 0.5
    p_max: Optional[float] = None
    spoof_max_iters: int = 200
    spoof_tol: float = 1e-8
    spoof_init_seed: Optional[int] = None
    min_separation: float = 3.0
    variation: str = "noise+phase"
    snr_reference: str = "noise_power"
    use_nominal_comm_precoder: bool = False
    probe_power_dbm: float = 20.0
    probe_noiseless: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.power_grid_dbm) == 0:
            raise ValueError("power_grid_dbm must be nonempty")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.variation not in VARIATIONS:
            raise ValueError(f"variation must be one of {VARIATIONS}, got {self.variation!r}")
        self.power_grid_dbm = tuple(float(p) for p in self.power_grid_dbm)
        if self.rate_power_grid_dbm is not None:
            self.rate_power_grid_dbm = tuple(float(p) for p in self.rate_power_grid_dbm)

    def codebook(self) -> SoundingCodebook:
        return default_codebook(
            self.n_rx_antennas, self.n_tx_antennas, self.n_combiners, self.n_precoders
        )

    def grid(self) -> AngleGrid:
        return AngleGrid.full_range(self.grid_step_deg)

    def true_angles(self) -> AngleVector:
        return scene_to_angles(self.scene)

    def resolved_target_angles(self) -> AngleVector:
        """Explicit target angles win; otherwise they come from the target scene."""
        if self.target_angles is not None:
            return self.target_angles
        if self.target_scene is not None:
            return scene_to_angles(self.target_scene)
        raise ValueError("precoder_spoof mode needs target_angles or a target scene")

    def noise_power(self) -> float:
        return self.bandwidth * self.noise_psd


@dataclass
class TrialRecord:
    power_dbm: float
    trial: int
    eps_aoa_deg: float
    eps_aod_deg: float
    se_bps_hz: float


@dataclass
class SweepResult:
    """Aggregated RMSE/rate per power plus the raw per-trial records."""

    per_power: list
    trials: list
    mode: str
    spoof_state: Optional[SpoofState] = None


def spoofing_deviation(estimated, reference) -> tuple[float, float]:
    """Euclidean norms (radians) of wrapped angle errors under the best pairing.

    Estimated paths carry no labels, so they are assigned to reference
    paths by minimizing the joint squared error over all permutations
    (aoa and aod wrapped differences together); the per-angle-type norms
    under that assignment are returned as (eps_aoa, eps_aod).
    """
    est = estimated.angles if isinstance(estimated, EstimationResult) else estimated
    if est.n_paths != reference.n_paths:
        raise ValueError("estimated and reference angle vectors differ in length")
    best = None
    for perm in itertools.permutations(range(reference.n_paths)):
        idx = list(perm)
        d_aoa = wrap_angle(est.aoa - reference.aoa[idx])
        d_aod = wrap_angle(est.aod - reference.aod[idx])
        cost = float(np.sum(d_aoa**2) + np.sum(d_aod**2))
        if best is None or cost < best[0]:
            best = (cost, float(np.linalg.norm(d_aoa)), float(np.linalg.norm(d_aod)))
    return best[1], best[2]


def design_spoof(config: ExperimentConfig) -> tuple[SpoofState, object]:
    """Run the precoder design once for a config (noise-free, gain-independent)."""
    return run_spoof_design(
        config.true_angles(),
        config.resolved_target_angles(),
        config.codebook(),
        p_max=config.p_max,
        init_seed=config.spoof_init_seed,
        max_iters=config.spoof_max_iters,
        tol=config.spoof_tol,
    )


def equivalent_spoof_gains(config: ExperimentConfig, state: SpoofState) -> np.ndarray:
    """Gain vector the spoofed sounding link transmits with.

    The design pair (d, lambda) is scale-free: scaling both leaves the
    precoders optimal and the received signal inside the target subspace.
    The physical scale is pinned by power parity — the equivalent target
    gains are given the same power as the scene's deterministic free-space
    gains, so noise affects the spoofed and honest links equally.
    """
    reference = gains_from_scene(
        config.scene, config.carrier_freq, reflection_factor=config.reflection_factor
    )
    lam_norm = float(np.linalg.norm(state.lam))
    if lam_norm == 0.0:
        raise NumericalFailureError("spoof design collapsed to zero equivalent gains")
    return state.d * (float(np.linalg.norm(reference)) / lam_norm)


def _trial_gains(config, trial):
    if config.variation == "noise-only":
        trial = 0
    seed = np.random.SeedSequence((config.base_seed, trial))
    return gains_from_scene(
        config.scene, config.carrier_freq, rng_seed=seed, reflection_factor=config.reflection_factor
    )


def _noise_seed(config, power_idx, trial, stream=_NOISE_STREAM):
    return np.random.SeedSequence((config.base_seed, power_idx, trial, stream))


def _comm_beams(config, codebook, y, spoof_state):
    s_hat, m_hat = select_beam(y)
    w = codebook.combiners[:, s_hat]
    if spoof_state is not None and not config.use_nominal_comm_precoder:
        f = communication_precoder(spoof_state, s_hat, m_hat)
    else:
        f = codebook.precoders[:, m_hat]
    return w, f


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Monte Carlo power sweep: RMSE of angle deviations and mean spectral efficiency.

    In ``precoder_spoof`` mode deviations are measured against the target
    angles (how well the attack steers the estimate); in ``no_spoof`` mode
    against the true angles (plain estimator accuracy).
    """
    codebook = config.codebook()
    grid = config.grid()
    true_angles = config.true_angles()
    n_paths = true_angles.n_paths
    sigma2 = config.noise_power()

    spoof_state = None
    precoder_set = None
    sounding_params = None
    if config.mode == "precoder_spoof":
        spoof_state, _ = design_spoof(config)
        precoder_set = spoof_state.precoders
        reference = config.resolved_target_angles()
        sounding_params = ChannelParams(
            angles=true_angles, gains=equivalent_spoof_gains(config, spoof_state)
        )
    else:
        reference = true_angles

    per_power = []
    records = []
    for p_idx, p_dbm in enumerate(config.power_grid_dbm):
        pt = dbm_to_watts(p_dbm)
        sq_aoa = 0.0
        sq_aod = 0.0
        se_sum = 0.0
        for trial in range(config.trials):
            gains = _trial_gains(config, trial)
            params = ChannelParams(angles=true_angles, gains=gains)
            try:
                y = synthesize_received(
                    sounding_params if sounding_params is not None else params,
                    codebook,
                    pt,
                    sigma2,
                    rng_seed=_noise_seed(config, p_idx, trial),
                    precoder_set=precoder_set,
                )
                est = grid_ml_estimate(
                    y, codebook, grid, n_paths, min_separation=config.min_separation
                )
                eps_aoa, eps_aod = spoofing_deviation(est, reference)
                w, f = _comm_beams(config, codebook, y, spoof_state)
                rate, _ = achievable_rate(
                    params, w, f, pt, config.bandwidth, config.noise_psd,
                    snr_reference=config.snr_reference,
                )
            except NumericalFailureError as exc:
                raise NumericalFailureError(
                    f"trial {trial} at {p_dbm} dBm failed: {exc}"
                ) from exc
            se = rate / config.bandwidth
            sq_aoa += eps_aoa**2
            sq_aod += eps_aod**2
            se_sum += se
            records.append(
                TrialRecord(
                    power_dbm=p_dbm,
                    trial=trial,
                    eps_aoa_deg=math.degrees(eps_aoa),
                    eps_aod_deg=math.degrees(eps_aod),
                    se_bps_hz=se,
                )
            )
        per_power.append(
            {
                "power_dbm": p_dbm,
                "rmse_aoa_deg": math.degrees(math.sqrt(sq_aoa / config.trials)),
                "rmse_aod_deg": math.degrees(math.sqrt(sq_aod / config.trials)),
                "mean_spectral_efficiency_bps_hz": se_sum / config.trials,
                "trials_used": config.trials,
            }
        )
    return SweepResult(per_power=per_power, trials=records, mode=config.mode, spoof_state=spoof_state)


def run_rate_curves(config: ExperimentConfig):
    """Mean spectral efficiency vs power for the no-spoof and spoofed links.

    Both curves share the per-trial gains; the spoofed link sounds through
    the designed precoders, lets the BS pick its beam from that sweep, and
    then transmits the precoder column that beam was measured with.
    Returns a list of {power_dbm, se_no_spoof_bps_hz, se_spoof_bps_hz}.
    """
    codebook = config.codebook()
    true_angles = config.true_angles()
    sigma2 = config.noise_power()
    spoof_state, _ = design_spoof(config)
    sounding_params = ChannelParams(
        angles=true_angles, gains=equivalent_spoof_gains(config, spoof_state)
    )
    powers = config.rate_power_grid_dbm or config.power_grid_dbm

    rows = []
    for p_idx, p_dbm in enumerate(powers):
        pt = dbm_to_watts(p_dbm)
        se = {"no_spoof": 0.0, "spoof": 0.0}
        for trial in range(config.trials):
            gains = _trial_gains(config, trial)
            params = ChannelParams(angles=true_angles, gains=gains)
            y_plain = synthesize_received(
                params, codebook, pt, sigma2, rng_seed=_noise_seed(config, p_idx, trial)
            )
            w, f = _comm_beams(config, codebook, y_plain, None)
            rate, _ = achievable_rate(
                params, w, f, pt, config.bandwidth, config.noise_psd,
                snr_reference=config.snr_reference,
            )
            se["no_spoof"] += rate / config.bandwidth
            y_spoof = synthesize_received(
                sounding_params,
                codebook,
                pt,
                sigma2,
                rng_seed=_noise_seed(config, p_idx, trial, _RATE_SPOOF_STREAM),
                precoder_set=spoof_state.precoders,
            )
            w, f = _comm_beams(config, codebook, y_spoof, spoof_state)
            rate, _ = achievable_rate(
                params, w, f, pt, config.bandwidth, config.noise_psd,
                snr_reference=config.snr_reference,
            )
            se["spoof"] += rate / config.bandwidth
        rows.append(
            {
                "power_dbm": p_dbm,
                "se_no_spoof_bps_hz": se["no_spoof"] / config.trials,
                "se_spoof_bps_hz": se["spoof"] / config.trials,
            }
        )
    return rows


def probe_signal(config: ExperimentConfig, mode: Optional[str] = None):
    """One-shot signal for `estimate`/`heatmap`: noiseless or fixed-seed noisy.

    The given mode (default: the config's) decides what is on the air:
    trial-0 gains through the nominal codebook, or the design-consistent
    spoofed sounding signal.  Returns (signal, spoof_state_or_None).
    """
    mode = mode or config.mode
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    codebook = config.codebook()
    spoof_state = None
    precoder_set = None
    if mode == "precoder_spoof":
        spoof_state, _ = design_spoof(config)
        precoder_set = spoof_state.precoders
        gains = equivalent_spoof_gains(config, spoof_state)
    else:
        gains = _trial_gains(config, 0)
    params = ChannelParams(angles=config.true_angles(), gains=gains)
    sigma2 = 0.0 if config.probe_noiseless else config.noise_power()
    y = synthesize_received(
        params,
        codebook,
        dbm_to_watts(config.probe_power_dbm),
        sigma2,
        rng_seed=_noise_seed(config, 0, 0, _PROBE_STREAM),
        precoder_set=precoder_set,
    )
    return y, spoof_state


def generate_heatmap(config: ExperimentConfig, mode: Optional[str] = None) -> EstimationResult:
    """Cost surface for the probe signal under the given mode, with peaks retained.

    The returned result keeps ``cost_surface`` so callers can export it;
    peak locations are the refined estimates.
    """
    mode = mode or config.mode
    y, _ = probe_signal(config, mode)
    n_paths = config.true_angles().n_paths
    return grid_ml_estimate(
        y,
        config.codebook(),
        config.grid(),
        n_paths,
        min_separation=config.min_separation,
        keep_surface=True,
    )


# ---------------------------------------------------------------------------
# CSV export.  All writers use a fixed numeric format so identical runs
# produce byte-identical files.

_FMT = "%.10g"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return _FMT % float(value)


def write_sweep_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["power_dbm", "rmse_aoa_deg", "rmse_aod_deg", "se_bps_hz"])
        for row in result.per_power:
            writer.writerow(
                [
                    _fmt(row["power_dbm"]),
                    _fmt(row["rmse_aoa_deg"]),
                    _fmt(row["rmse_aod_deg"]),
                    _fmt(row["mean_spectral_efficiency_bps_hz"]),
                ]
            )


def write_trials_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["power_dbm", "trial", "eps_aoa_deg", "eps_aod_deg", "se_bps_hz"])
        for rec in result.trials:
            writer.writerow(
                [
                    _fmt(rec.power_dbm),
                    rec.trial,
                    _fmt(rec.eps_aoa_deg),
                    _fmt(rec.eps_aod_deg),
                    _fmt(rec.se_bps_hz),
                ]
            )


def write_rate_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["power_dbm", "se_no_spoof_bps_hz", "se_spoof_bps_hz"])
        for row in rows:
            writer.writerow(
                [_fmt(row["power_dbm"]), _fmt(row["se_no_spoof_bps_hz"]), _fmt(row["se_spoof_bps_hz"])]
            )


def write_heatmap_csv(grid: AngleGrid, surface: np.ndarray, path):
    """Normalized likelihood (1 at the deepest cost minimum, 0 at the shallowest).

    Row-major over the grid: the aoa index varies slowest.
    """
    lo, hi = float(np.min(surface)), float(np.max(surface))
    span = hi - lo
    likelihood = (hi - surface) / span if span > 0 else np.zeros_like(surface)
    aoa_deg = np.degrees(grid.aoa_points)
    aod_deg = np.degrees(grid.aod_points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["aoa_deg", "aod_deg", "normalized_likelihood"])
        for i, a in enumerate(aoa_deg):
            for j, b in enumerate(aod_deg):
                writer.writerow([_fmt(a), _fmt(b), _fmt(likelihood[i, j])])


def write_markers_csv(result: EstimationResult, config: ExperimentConfig, mode: str, path):
    """Peak annotations for a heatmap: estimated peaks, true and target angles."""
    rows = [
        ("estimated", math.degrees(a), math.degrees(b))
        for a, b in zip(result.angles.aoa, result.angles.aod)
    ]
    true_angles = config.true_angles()
    rows += [
        ("true", math.degrees(a), math.degrees(b))
        for a, b in zip(true_angles.aoa, true_angles.aod)
    ]
    if mode == "precoder_spoof":
        target = config.resolved_target_angles()
        rows += [
            ("target", math.degrees(a), math.degrees(b))
            for a, b in zip(target.aoa, target.aod)
        ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "aoa_deg", "aod_deg"])
        for kind, a, b in rows:
            writer.writerow([kind, _fmt(a), _fmt(b)])
