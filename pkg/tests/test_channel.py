"""Channel construction, the stacked observation operator, and signal synthesis."""

import math

import numpy as np
import pytest
import scipy.linalg

from anglespoof import (
    AngleVector,
    ChannelParams,
    PrecoderSet,
    SceneGeometry,
    SoundingCodebook,
    build_observation,
    channel_matrix,
    default_codebook,
    gains_from_scene,
    steering,
    synthesize_received,
)

SPEED_OF_LIGHT = 299792458.0


def _random_angles(rng, n_paths):
    return AngleVector(
        aoa=rng.uniform(-1.4, 1.4, n_paths), aod=rng.uniform(-1.4, 1.4, n_paths)
    )


def _random_codebook(rng, n_r, n_t, s, m):
    # both sides are analog: entries stay under their amplitude caps
    w = (1.0 / math.sqrt(n_r)) * rng.uniform(0.2, 1.0, (n_r, s)) * np.exp(
        1j * rng.uniform(0, 2 * math.pi, (n_r, s))
    )
    f = (1.0 / math.sqrt(n_t)) * rng.uniform(0.2, 1.0, (n_t, m)) * np.exp(
        1j * rng.uniform(0, 2 * math.pi, (n_t, m))
    )
    return SoundingCodebook(combiners=w, precoders=f)


def test_channel_matrix_matches_path_sum():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n_r, n_t, n_paths = rng.integers(2, 9), rng.integers(2, 7), rng.integers(1, 4)
        angles = _random_angles(rng, n_paths)
        gains = rng.normal(size=n_paths) + 1j * rng.normal(size=n_paths)
        h = channel_matrix(ChannelParams(angles=angles, gains=gains), n_r, n_t)
        oracle = np.zeros((n_r, n_t), dtype=complex)
        for l in range(n_paths):
            oracle += gains[l] * np.outer(
                steering(n_r, angles.aoa[l]), steering(n_t, angles.aod[l])
            )
        np.testing.assert_allclose(h, oracle, atol=1e-12)


def test_observation_matches_khatri_rao_oracle():
    # column-wise Kronecker of the combiner and precoder responses,
    # computed by an independent library routine
    rng = np.random.default_rng(12)
    for _ in range(10):
        n_r, n_t = rng.integers(2, 9), rng.integers(2, 7)
        s, m, n_paths = rng.integers(2, 7), rng.integers(2, 7), rng.integers(1, 4)
        angles = _random_angles(rng, n_paths)
        cb = _random_codebook(rng, n_r, n_t, s, m)
        z = build_observation(cb.precoders, cb.combiners, angles).matrix
        g = cb.combiners.conj().T @ steering(n_r, angles.aoa)
        h = cb.precoders.T @ steering(n_t, angles.aod)
        np.testing.assert_allclose(z, scipy.linalg.khatri_rao(g, h), atol=1e-12)


def test_observation_matches_elementwise_model():
    rng = np.random.default_rng(13)
    for _ in range(10):
        n_r, n_t = rng.integers(2, 9), rng.integers(2, 7)
        s, m, n_paths = rng.integers(2, 7), rng.integers(2, 7), rng.integers(1, 4)
        angles = _random_angles(rng, n_paths)
        gains = rng.normal(size=n_paths) + 1j * rng.normal(size=n_paths)
        cb = _random_codebook(rng, n_r, n_t, s, m)
        pt = rng.uniform(1e-4, 1.0)
        y = synthesize_received(ChannelParams(angles=angles, gains=gains), cb, pt, 0.0)
        h = channel_matrix(ChannelParams(angles=angles, gains=gains), n_r, n_t)
        for si in range(s):
            for mi in range(m):
                expect = math.sqrt(pt) * (
                    cb.combiners[:, si].conj() @ h @ cb.precoders[:, mi]
                )
                assert y.samples[si * m + mi] == pytest.approx(expect, abs=1e-12)


def test_per_measurement_precoders_enter_blockwise():
    rng = np.random.default_rng(14)
    n_r, n_t, s, m = 6, 4, 5, 4
    angles = _random_angles(rng, 2)
    gains = rng.normal(size=2) + 1j * rng.normal(size=2)
    cb = _random_codebook(rng, n_r, n_t, s, m)
    cap = 1.0 / math.sqrt(n_t)
    tensor = cap * rng.uniform(0.1, 1.0, (s, n_t, m)) * np.exp(
        1j * rng.uniform(0, 2 * math.pi, (s, n_t, m))
    )
    y = synthesize_received(
        ChannelParams(angles=angles, gains=gains),
        cb,
        1.0,
        0.0,
        precoder_set=PrecoderSet(tensor),
    )
    h = channel_matrix(ChannelParams(angles=angles, gains=gains), n_r, n_t)
    for si in range(s):
        for mi in range(m):
            expect = cb.combiners[:, si].conj() @ h @ tensor[si, :, mi]
            assert y.samples[si * m + mi] == pytest.approx(expect, abs=1e-12)


def test_synthesis_linear_in_gains():
    rng = np.random.default_rng(15)
    angles = _random_angles(rng, 3)
    cb = _random_codebook(rng, 8, 4, 6, 5)
    g1 = rng.normal(size=3) + 1j * rng.normal(size=3)
    g2 = rng.normal(size=3) + 1j * rng.normal(size=3)
    y1 = synthesize_received(ChannelParams(angles=angles, gains=g1), cb, 0.25, 0.0)
    y2 = synthesize_received(ChannelParams(angles=angles, gains=g2), cb, 0.25, 0.0)
    y12 = synthesize_received(ChannelParams(angles=angles, gains=g1 + g2), cb, 0.25, 0.0)
    np.testing.assert_allclose(y12.samples, y1.samples + y2.samples, atol=1e-12)


def test_noise_component_statistics():
    # complex noise of total power sigma^2 splits evenly between the
    # real and imaginary parts
    rng = np.random.default_rng(16)
    angles = _random_angles(rng, 1)
    cb = default_codebook(15, 5, 15, 15)
    gains = np.array([1.0 + 0j])
    sigma2 = 0.5
    clean = synthesize_received(ChannelParams(angles=angles, gains=gains), cb, 1.0, 0.0)
    noise = []
    for seed in range(200):
        noisy = synthesize_received(
            ChannelParams(angles=angles, gains=gains), cb, 1.0, sigma2, rng_seed=seed
        )
        noise.append(noisy.samples - clean.samples)
    noise = np.concatenate(noise)
    assert np.var(noise.real) == pytest.approx(sigma2 / 2, rel=0.03)
    assert np.var(noise.imag) == pytest.approx(sigma2 / 2, rel=0.03)
    assert abs(np.mean(noise)) < 0.01
    assert np.var(noise) == pytest.approx(sigma2, rel=0.03)


def test_noise_seed_determinism():
    rng = np.random.default_rng(17)
    angles = _random_angles(rng, 2)
    cb = _random_codebook(rng, 6, 4, 5, 5)
    gains = rng.normal(size=2) + 1j * rng.normal(size=2)
    params = ChannelParams(angles=angles, gains=gains)
    a = synthesize_received(params, cb, 1.0, 1e-3, rng_seed=42)
    b = synthesize_received(params, cb, 1.0, 1e-3, rng_seed=42)
    c = synthesize_received(params, cb, 1.0, 1e-3, rng_seed=43)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.allclose(a.samples, c.samples)


def test_default_codebook_constant_modulus_columns():
    cb = default_codebook(15, 5, 15, 15)
    np.testing.assert_allclose(np.abs(cb.precoders), 1 / math.sqrt(5), atol=1e-12)
    np.testing.assert_allclose(np.abs(cb.combiners), 1 / math.sqrt(15), atol=1e-12)
    assert cb.n_combiners == 15 and cb.n_precoders == 15
    assert cb.n_rx_antennas == 15 and cb.n_tx_antennas == 5


def test_default_codebook_two_element_frozen_beams():
    cb = default_codebook(2, 2, 2, 2)
    root = 1.0 / math.sqrt(2.0)
    np.testing.assert_allclose(
        cb.combiners[:, 0], [root, root * np.exp(-1j * math.pi)], atol=1e-12
    )
    np.testing.assert_allclose(cb.combiners[:, 1], [root, root], atol=1e-12)


def test_default_codebook_square_grid_is_orthogonal():
    # with as many beams as antennas on a uniform sin grid the columns
    # form a unitary (DFT) basis
    cb = default_codebook(15, 5, 15, 5)
    gram_w = cb.combiners.conj().T @ cb.combiners
    gram_f = cb.precoders.conj().T @ cb.precoders
    np.testing.assert_allclose(gram_w, np.eye(15), atol=1e-10)
    np.testing.assert_allclose(gram_f, np.eye(5), atol=1e-10)


def test_precoder_amplitude_cap_enforced():
    cap = 1.0 / math.sqrt(4)
    bad = np.full((4, 3), cap * 1.01, dtype=complex)
    with pytest.raises(ValueError):
        SoundingCodebook(combiners=np.eye(4, dtype=complex), precoders=bad)
    with pytest.raises(ValueError):
        PrecoderSet(np.full((2, 4, 3), cap * 1.01, dtype=complex))


def test_free_space_gains_frozen_magnitudes():
    scene = SceneGeometry(
        bs_position=np.array([0.0, 0.0]),
        ue_position=np.array([10.0, 5.0]),
        bs_orientation=0.0,
        ue_orientation=-2.0 * math.pi / 3.0,
        scatterer_positions=np.array([[7.0, -15.0]]),
    )
    g = gains_from_scene(scene, 27.8e9)
    lam_c = SPEED_OF_LIGHT / 27.8e9
    d0 = math.hypot(10.0, 5.0)
    d1 = math.hypot(-3.0, -20.0) + math.hypot(7.0, -15.0)
    assert abs(g[0]) == pytest.approx(lam_c / (4 * math.pi * d0), rel=1e-12)
    assert abs(g[1]) == pytest.approx(0.5 * lam_c / (4 * math.pi * d1), rel=1e-12)
    assert abs(g[0]) == pytest.approx(7.675577064869325e-05, rel=1e-12)
    # deterministic call carries the free-space propagation phase
    np.testing.assert_allclose(
        g / np.abs(g),
        np.exp(-2j * math.pi * np.array([d0, d1]) / lam_c),
        atol=1e-9,
    )


def test_seeded_gains_randomize_phase_only():
    scene = SceneGeometry(
        bs_position=np.array([0.0, 0.0]),
        ue_position=np.array([10.0, 5.0]),
        bs_orientation=0.0,
        ue_orientation=-2.0 * math.pi / 3.0,
        scatterer_positions=np.array([[7.0, -15.0]]),
    )
    fixed = gains_from_scene(scene, 27.8e9)
    drawn = gains_from_scene(scene, 27.8e9, rng_seed=5)
    again = gains_from_scene(scene, 27.8e9, rng_seed=5)
    np.testing.assert_allclose(np.abs(drawn), np.abs(fixed), rtol=1e-12)
    np.testing.assert_array_equal(drawn, again)
    assert not np.allclose(drawn, fixed)


def test_received_signal_matrix_layout():
    rng = np.random.default_rng(18)
    angles = _random_angles(rng, 2)
    cb = _random_codebook(rng, 6, 4, 3, 5)
    gains = rng.normal(size=2) + 1j * rng.normal(size=2)
    y = synthesize_received(ChannelParams(angles=angles, gains=gains), cb, 1.0, 0.0)
    mat = y.as_matrix()
    assert mat.shape == (3, 5)
    np.testing.assert_array_equal(mat.reshape(-1), y.samples)
