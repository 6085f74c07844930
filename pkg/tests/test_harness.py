"""Experiment harness tests: seeding, sweep semantics, CSV layouts."""

import math

import numpy as np
import pytest

from anglespoof import (
    AngleVector,
    EstimationResult,
    ExperimentConfig,
    NumericalFailureError,
    SpoofState,
    dbm_to_watts,
    design_spoof,
    equivalent_spoof_gains,
    gains_from_scene,
    generate_heatmap,
    probe_signal,
    run_rate_curves,
    run_sweep,
    spoofing_deviation,
)
from anglespoof.harness import (
    _trial_gains,
    write_heatmap_csv,
    write_markers_csv,
    write_rate_csv,
    write_sweep_csv,
    write_trials_csv,
)

DEG = math.pi / 180.0


def _tiny_config(**overrides):
    base = dict(
        n_rx_antennas=6,
        n_tx_antennas=4,
        n_combiners=6,
        n_precoders=4,
        power_grid_dbm=(0.0, 10.0),
        trials=3,
        grid_step_deg=5.0,
        spoof_max_iters=60,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- unit conversions and deviation metric ---------------------------------


def test_dbm_to_watts_frozen():
    assert dbm_to_watts(20.0) == pytest.approx(0.1, rel=1e-12)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-12)
    assert dbm_to_watts(-10.0) == pytest.approx(1e-4, rel=1e-12)


def test_spoofing_deviation_permutation_and_wrap():
    ref = AngleVector(aoa=[0.5, -0.9], aod=[-0.6, 0.8])
    swapped = AngleVector(aoa=[-0.9, 0.5], aod=[0.8, -0.6])
    eps_aoa, eps_aod = spoofing_deviation(swapped, ref)
    assert eps_aoa == pytest.approx(0.0, abs=1e-15)
    assert eps_aod == pytest.approx(0.0, abs=1e-15)
    # wrap-around: -179 deg vs +179 deg is a 2 deg error, not 358
    est = AngleVector(aoa=[-179 * DEG], aod=[0.0])
    ref1 = AngleVector(aoa=[179 * DEG], aod=[0.0])
    eps_aoa, _ = spoofing_deviation(est, ref1)
    assert eps_aoa == pytest.approx(2 * DEG, abs=1e-12)


def test_spoofing_deviation_accepts_estimation_result():
    ref = AngleVector(aoa=[0.1], aod=[0.2])
    est = EstimationResult(
        angles=AngleVector(aoa=[0.1 + 0.01], aod=[0.2 - 0.02]),
        gains=None,
        residual_cost=0.0,
    )
    eps_aoa, eps_aod = spoofing_deviation(est, ref)
    assert eps_aoa == pytest.approx(0.01, abs=1e-12)
    assert eps_aod == pytest.approx(0.02, abs=1e-12)
    with pytest.raises(ValueError):
        spoofing_deviation(AngleVector(aoa=[0.1, 0.2], aod=[0.1, 0.2]), ref)


# --- config validation ------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        _tiny_config(trials=0)
    with pytest.raises(ValueError):
        _tiny_config(mode="jam")
    with pytest.raises(ValueError):
        _tiny_config(variation="gains-only")
    with pytest.raises(ValueError):
        _tiny_config(power_grid_dbm=())
    cfg = _tiny_config(target_scene=None)
    with pytest.raises(ValueError):
        cfg.resolved_target_angles()


def test_explicit_target_angles_override_scene():
    tgt = AngleVector(aoa=[0.3, 0.1], aod=[-0.2, 0.6])
    cfg = _tiny_config(target_angles=tgt)
    got = cfg.resolved_target_angles()
    np.testing.assert_array_equal(got.aoa, tgt.aoa)
    np.testing.assert_array_equal(got.aod, tgt.aod)


# --- gain seeding -----------------------------------------------------------


def test_trial_gains_variation_modes():
    cfg = _tiny_config(variation="noise+phase")
    g0, g5 = _trial_gains(cfg, 0), _trial_gains(cfg, 5)
    assert not np.allclose(g0, g5)  # fresh phases per trial
    np.testing.assert_allclose(np.abs(g0), np.abs(g5))  # magnitudes fixed
    pinned = _tiny_config(variation="noise-only")
    np.testing.assert_array_equal(_trial_gains(pinned, 0), _trial_gains(pinned, 5))
    np.testing.assert_array_equal(_trial_gains(cfg, 3), _trial_gains(cfg, 3))


def test_equivalent_spoof_gains_power_parity():
    cfg = _tiny_config(mode="precoder_spoof")
    state, _ = design_spoof(cfg)
    g = equivalent_spoof_gains(cfg, state)
    reference = gains_from_scene(
        cfg.scene, cfg.carrier_freq, reflection_factor=cfg.reflection_factor
    )
    scale = np.linalg.norm(reference) / np.linalg.norm(state.lam)
    np.testing.assert_allclose(g, state.d * scale, rtol=1e-12)
    # at that scale the BS-side equivalent gains carry the reference power
    assert np.linalg.norm(scale * state.lam) == pytest.approx(
        np.linalg.norm(reference), rel=1e-12
    )


def test_equivalent_spoof_gains_rejects_zero_lambda():
    cfg = _tiny_config(mode="precoder_spoof")
    state, _ = design_spoof(cfg)
    dead = SpoofState(
        precoders=state.precoders,
        d=state.d,
        lam=np.zeros_like(state.lam),
        objective_trace=state.objective_trace,
        iterations=state.iterations,
        converged=state.converged,
    )
    with pytest.raises(NumericalFailureError):
        equivalent_spoof_gains(cfg, dead)


def test_design_init_seed_changes_start():
    cfg_a = _tiny_config(mode="precoder_spoof", spoof_max_iters=1)
    cfg_b = _tiny_config(mode="precoder_spoof", spoof_max_iters=1, spoof_init_seed=7)
    state_a, _ = design_spoof(cfg_a)
    state_b, _ = design_spoof(cfg_b)
    assert not np.allclose(state_a.lam, state_b.lam)


# --- sweeps -----------------------------------------------------------------


def test_sweep_rmse_consistent_with_trial_records():
    cfg = _tiny_config()
    result = run_sweep(cfg)
    assert result.mode == "no_spoof"
    assert result.spoof_state is None
    assert len(result.trials) == len(cfg.power_grid_dbm) * cfg.trials
    for row in result.per_power:
        recs = [r for r in result.trials if r.power_dbm == row["power_dbm"]]
        assert len(recs) == cfg.trials
        rmse_aoa = math.sqrt(np.mean([r.eps_aoa_deg**2 for r in recs]))
        rmse_aod = math.sqrt(np.mean([r.eps_aod_deg**2 for r in recs]))
        mean_se = np.mean([r.se_bps_hz for r in recs])
        assert row["rmse_aoa_deg"] == pytest.approx(rmse_aoa, rel=1e-12)
        assert row["rmse_aod_deg"] == pytest.approx(rmse_aod, rel=1e-12)
        assert row["mean_spectral_efficiency_bps_hz"] == pytest.approx(mean_se, rel=1e-12)


def test_sweep_is_deterministic():
    cfg = _tiny_config()
    a, b = run_sweep(cfg), run_sweep(cfg)
    assert a.per_power == b.per_power
    assert all(x == y for x, y in zip(a.trials, b.trials))


def test_spoof_sweep_sounding_is_trial_independent():
    # the spoofed sounding signal is the fixed design-consistent one, so
    # with negligible noise the deviation is identical for every trial and
    # power while the per-trial rates still move with the drawn gains
    cfg = _tiny_config(mode="precoder_spoof", noise_psd=1e-40, trials=3)
    result = run_sweep(cfg)
    assert result.spoof_state is not None
    eps_aoa = [r.eps_aoa_deg for r in result.trials]
    eps_aod = [r.eps_aod_deg for r in result.trials]
    assert np.ptp(eps_aoa) < 1e-6 and np.ptp(eps_aod) < 1e-6
    rates = {round(r.se_bps_hz, 6) for r in result.trials if r.power_dbm == 0.0}
    assert len(rates) > 1


def test_rate_curves_layout():
    cfg = _tiny_config(mode="precoder_spoof", rate_power_grid_dbm=(0.0, 5.0, 10.0))
    rows = run_rate_curves(cfg)
    assert [r["power_dbm"] for r in rows] == [0.0, 5.0, 10.0]
    for row in rows:
        assert set(row) == {"power_dbm", "se_no_spoof_bps_hz", "se_spoof_bps_hz"}
        assert row["se_no_spoof_bps_hz"] > 0


# --- probes and heatmaps ----------------------------------------------------


def test_probe_signal_reproducible_and_mode_override():
    cfg = _tiny_config()
    y1, st1 = probe_signal(cfg)
    y2, _ = probe_signal(cfg)
    np.testing.assert_array_equal(y1.samples, y2.samples)
    assert st1 is None
    assert y1.noise_power == 0.0
    y3, st3 = probe_signal(cfg, mode="precoder_spoof")
    assert st3 is not None
    assert not np.allclose(y1.samples, y3.samples)
    noisy = _tiny_config(probe_noiseless=False)
    y4, _ = probe_signal(noisy)
    y5, _ = probe_signal(noisy)
    np.testing.assert_array_equal(y4.samples, y5.samples)
    assert y4.noise_power > 0
    with pytest.raises(ValueError):
        probe_signal(cfg, mode="bogus")


def test_generate_heatmap_keeps_surface():
    cfg = _tiny_config()
    est = generate_heatmap(cfg)
    assert est.cost_surface is not None
    assert est.cost_surface.shape == cfg.grid().shape
    assert est.peak_indices.shape == (2, 2)


# --- CSV layouts ------------------------------------------------------------


def test_sweep_and_trials_csv_layout(tmp_path):
    cfg = _tiny_config()
    result = run_sweep(cfg)
    sweep_path = tmp_path / "sweep.csv"
    trials_path = tmp_path / "trials.csv"
    write_sweep_csv(result, sweep_path)
    write_trials_csv(result, trials_path)
    sweep_lines = sweep_path.read_text().splitlines()
    assert sweep_lines[0] == "power_dbm,rmse_aoa_deg,rmse_aod_deg,se_bps_hz"
    assert len(sweep_lines) == 1 + len(cfg.power_grid_dbm)
    trial_lines = trials_path.read_text().splitlines()
    assert trial_lines[0] == "power_dbm,trial,eps_aoa_deg,eps_aod_deg,se_bps_hz"
    assert len(trial_lines) == 1 + len(result.trials)
    # byte-identical on rewrite
    again = tmp_path / "sweep2.csv"
    write_sweep_csv(run_sweep(cfg), again)
    assert again.read_bytes() == sweep_path.read_bytes()


def test_rate_csv_layout(tmp_path):
    rows = [
        {"power_dbm": 0.0, "se_no_spoof_bps_hz": 1.25, "se_spoof_bps_hz": 0.5},
    ]
    path = tmp_path / "rate.csv"
    write_rate_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "power_dbm,se_no_spoof_bps_hz,se_spoof_bps_hz"
    assert lines[1] == "0,1.25,0.5"


def test_heatmap_and_markers_csv_layout(tmp_path):
    cfg = _tiny_config()
    est = generate_heatmap(cfg)
    grid = cfg.grid()
    heat_path = tmp_path / "heatmap.csv"
    write_heatmap_csv(grid, est.cost_surface, heat_path)
    lines = heat_path.read_text().splitlines()
    assert lines[0] == "aoa_deg,aod_deg,normalized_likelihood"
    assert len(lines) == 1 + grid.shape[0] * grid.shape[1]
    values = np.array([float(l.split(",")[2]) for l in lines[1:]])
    assert values.min() == pytest.approx(0.0, abs=1e-12)
    assert values.max() == pytest.approx(1.0, abs=1e-12)

    markers_path = tmp_path / "markers.csv"
    write_markers_csv(est, cfg, "no_spoof", markers_path)
    kinds = {l.split(",")[0] for l in markers_path.read_text().splitlines()[1:]}
    assert kinds == {"estimated", "true"}
    write_markers_csv(est, cfg, "precoder_spoof", markers_path)
    kinds = {l.split(",")[0] for l in markers_path.read_text().splitlines()[1:]}
    assert kinds == {"estimated", "true", "target"}
