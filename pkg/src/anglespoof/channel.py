"""Multipath channel model, structured observation operator, and signal synthesis.

The uplink sounding sweep transmits M precoded symbols for each of S receive
combiners.  Sample (s, m) obeys

    y[s, m] = sqrt(Pt) * w_s^H H f_{s,m} + n[s, m],
    H = sum_l alpha_l * a_bs(aoa_l) a_ue(aod_l)^T,

and the stacked vector is y = sqrt(Pt) * Z(precoders, angles) alpha + n with
Z of shape (S*M, L).  Rows are combiner-major: row index = s*M + m.  The
elementwise definition of Z is normative; the Khatri-Rao factorization of the
nominal case is a consequence, pinned by the vectorization-equivalence test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AngleVector, SceneGeometry, steering

SPEED_OF_LIGHT = 299792458.0

#: Default single-sided noise power spectral density, W/Hz (-174 dBm/Hz).
DEFAULT_NOISE_PSD = 10.0 ** (-174.0 / 10.0) * 1e-3

#: Default sounding bandwidth, Hz.
DEFAULT_BANDWIDTH = 396e6


@dataclass(frozen=True)
class ChannelParams:
    """Path angles and complex gains defining the narrowband channel."""

    angles: AngleVector
    gains: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        if g.shape != (self.angles.n_paths,):
            raise ValueError(
                f"gains must have one entry per path, got {g.shape} for L={self.angles.n_paths}"
            )
        if not np.any(np.abs(g) > 0):
            raise ValueError("at least one path gain must be nonzero")
        object.__setattr__(self, "gains", g)

    @property
    def n_paths(self) -> int:
        return self.angles.n_paths


@dataclass(frozen=True)
class SoundingCodebook:
    """Receive combiner bank W (N_r x S) and nominal precoder bank F (N_t x M)."""

    combiners: np.ndarray
    precoders: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.combiners, dtype=complex)
        f = np.asarray(self.precoders, dtype=complex)
        if w.ndim != 2 or f.ndim != 2 or w.shape[1] < 1 or f.shape[1] < 1:
            raise ValueError("combiners and precoders must be nonempty 2-D matrices")
        for name, mat in (("combiner", w), ("precoder", f)):
            cap = 1.0 / math.sqrt(mat.shape[0])
            if np.max(np.abs(mat)) > cap + 1e-12:
                raise ValueError(f"{name} entries exceed the analog amplitude cap 1/sqrt(N)")
        object.__setattr__(self, "combiners", w)
        object.__setattr__(self, "precoders", f)

    @property
    def n_rx_antennas(self) -> int:
        return self.combiners.shape[0]

    @property
    def n_tx_antennas(self) -> int:
        return self.precoders.shape[0]

    @property
    def n_combiners(self) -> int:
        return self.combiners.shape[1]

    @property
    def n_precoders(self) -> int:
        return self.precoders.shape[1]


@dataclass(frozen=True)
class PrecoderSet:
    """Per-combiner precoder matrices {F_s}, stacked as an (S, N_t, M) tensor."""

    per_measurement: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.per_measurement, dtype=complex)
        if t.ndim != 3:
            raise ValueError("per_measurement must have shape (S, N_t, M)")
        cap = 1.0 / math.sqrt(t.shape[1])
        if np.max(np.abs(t)) > cap + 1e-9:
            raise ValueError("precoder entries exceed the amplitude cap 1/sqrt(N_t) + 1e-9")
        object.__setattr__(self, "per_measurement", t)

    @classmethod
    def from_nominal(cls, precoders: np.ndarray, n_combiners: int) -> "PrecoderSet":
        """Replicate one nominal N_t x M precoder matrix across all S combiners."""
        f = np.asarray(precoders, dtype=complex)
        return cls(np.broadcast_to(f, (n_combiners,) + f.shape).copy())

    @property
    def n_combiners(self) -> int:
        return self.per_measurement.shape[0]


@dataclass(frozen=True)
class ObservationOperator:
    """Structured (S*M) x L observation matrix Z with combiner-major row layout."""

    matrix: np.ndarray
    n_combiners: int
    n_precoders: int

    def __post_init__(self):
        z = np.asarray(self.matrix, dtype=complex)
        if z.shape[0] != self.n_combiners * self.n_precoders:
            raise ValueError("matrix rows must equal S*M")
        object.__setattr__(self, "matrix", z)

    @property
    def n_paths(self) -> int:
        return self.matrix.shape[1]

    def block(self, s: int) -> np.ndarray:
        """The M x L block Z_s of rows belonging to combiner s."""
        m = self.n_precoders
        return self.matrix[s * m : (s + 1) * m]


@dataclass(frozen=True)
class ReceivedSignal:
    """Stacked sounding samples with the powers used to generate them."""

    samples: np.ndarray
    tx_power: float
    noise_power: float
    n_combiners: int
    n_precoders: int

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=complex).reshape(-1)
        if y.size != self.n_combiners * self.n_precoders:
            raise ValueError("sample count must equal S*M")
        object.__setattr__(self, "samples", y)

    def as_matrix(self) -> np.ndarray:
        """Samples reshaped to (S, M): row s holds combiner s's sweep."""
        return self.samples.reshape(self.n_combiners, self.n_precoders)


def channel_matrix(params: ChannelParams, n_r: int, n_t: int) -> np.ndarray:
    """Narrowband channel H = sum_l alpha_l a_bs(aoa_l) a_ue(aod_l)^T."""
    a_bs = steering(n_r, params.angles.aoa)
    a_ue = steering(n_t, params.angles.aod)
    return (a_bs * params.gains) @ a_ue.T


def _precoder_tensor(precoders, n_combiners):
    """Coerce nominal or per-combiner precoders to an (S, N_t, M) view."""
    if isinstance(precoders, PrecoderSet):
        t = precoders.per_measurement
        if t.shape[0] != n_combiners:
            raise ValueError(
                f"precoder set has {t.shape[0]} blocks but there are {n_combiners} combiners"
            )
        return t
    if isinstance(precoders, SoundingCodebook):
        precoders = precoders.precoders
    f = np.asarray(precoders, dtype=complex)
    if f.ndim != 2:
        raise ValueError("nominal precoders must be an N_t x M matrix")
    return np.broadcast_to(f, (n_combiners,) + f.shape)


def build_observation(precoders, combiners, angles: AngleVector) -> ObservationOperator:
    """Assemble the observation operator Z from precoders, combiners, and angles.

    Parameters
    ----------
    precoders : ndarray, SoundingCodebook, or PrecoderSet
        Nominal N_t x M precoder matrix (used for every combiner) or a
        per-combiner set {F_s}.
    combiners : ndarray
        Receive combiner bank W, shape (N_r, S).
    angles : AngleVector
        Path angles (aoa at the BS array, aod at the UE array).

    Returns
    -------
    ObservationOperator
        Entry at row s*M + m, column l is
        (w_s^H a_bs(aoa_l)) * (a_ue(aod_l)^T f_{s,m}).
    """
    w = np.asarray(combiners, dtype=complex)
    if w.ndim != 2:
        raise ValueError("combiners must be an N_r x S matrix")
    n_combiners = w.shape[1]
    tensor = _precoder_tensor(precoders, n_combiners)
    a_bs = steering(w.shape[0], angles.aoa)           # (N_r, L)
    a_ue = steering(tensor.shape[1], angles.aod)      # (N_t, L)
    g = w.conj().T @ a_bs                             # (S, L): w_s^H a_bs
    h = np.einsum("stm,tl->sml", tensor, a_ue)        # (S, M, L): a_ue^T f_{s,m}
    z = (g[:, None, :] * h).reshape(-1, angles.n_paths)
    return ObservationOperator(matrix=z, n_combiners=n_combiners, n_precoders=tensor.shape[2])


def synthesize_received(
    channel: ChannelParams,
    codebook: SoundingCodebook,
    tx_power: float,
    noise_power: float,
    rng_seed=None,
    precoder_set: PrecoderSet | None = None,
) -> ReceivedSignal:
    """Generate one noisy sounding sweep y = sqrt(Pt) Z alpha + n.

    Noise is i.i.d. circularly-symmetric complex Gaussian with total
    variance ``noise_power`` per sample (real and imaginary parts each
    carry half).  The draw is deterministic given ``rng_seed``.  When
    ``precoder_set`` is given it replaces the codebook's nominal precoders,
    modeling an adversarial UE.
    """
    if tx_power < 0 or noise_power < 0:
        raise ValueError("powers must be nonnegative")
    z = build_observation(
        precoder_set if precoder_set is not None else codebook.precoders,
        codebook.combiners,
        channel.angles,
    )
    y = math.sqrt(tx_power) * (z.matrix @ channel.gains)
    if noise_power > 0:
        rng = np.random.default_rng(rng_seed)
        scale = math.sqrt(noise_power / 2.0)
        n = rng.normal(0.0, scale, size=(y.size, 2))
        y = y + n[:, 0] + 1j * n[:, 1]
    return ReceivedSignal(
        samples=y,
        tx_power=float(tx_power),
        noise_power=float(noise_power),
        n_combiners=z.n_combiners,
        n_precoders=z.n_precoders,
    )


def default_codebook(n_r: int, n_t: int, n_combiners: int, n_precoders: int) -> SoundingCodebook:
    """Exhaustive-sweep codebook: steering beams on uniform sin-domain grids.

    The S combiner beams point at sin(angle) in {-1 + 2k/S, k = 0..S-1}
    (likewise M precoder beams for the UE array), normalized to per-entry
    modulus exactly 1/sqrt(N).  With S = N_r the combiners form an
    orthogonal DFT set; S > N_r gives oversampled beams.
    """
    if min(n_r, n_t, n_combiners, n_precoders) < 1:
        raise ValueError("array and codebook sizes must be positive")

    def bank(n, count):
        sin_grid = -1.0 + 2.0 * np.arange(count) / count
        return steering(n, np.arcsin(sin_grid)) / math.sqrt(n)

    return SoundingCodebook(combiners=bank(n_r, n_combiners), precoders=bank(n_t, n_precoders))


def gains_from_scene(
    scene: SceneGeometry,
    carrier_freq: float,
    rng_seed=None,
    reflection_factor: float = 0.5,
) -> np.ndarray:
    """Path gains: free-space amplitudes with per-path phases.

    The LoS modulus is lambda_c / (4 pi d); each single-bounce path takes
    the total path length and an extra reflection factor (default 0.5).
    With ``rng_seed`` set the phases are i.i.d. uniform on [0, 2 pi),
    deterministic given the seed; without a seed each path carries its
    deterministic propagation phase -2 pi d / lambda_c.
    """
    if carrier_freq <= 0:
        raise ValueError("carrier_freq must be positive")
    wavelength = SPEED_OF_LIGHT / carrier_freq
    bs, ue = scene.bs_position, scene.ue_position
    lengths = [float(np.linalg.norm(ue - bs))]
    moduli = [wavelength / (4.0 * math.pi * lengths[0])]
    for p in scene.scatterer_positions:
        path_len = float(np.linalg.norm(p - ue)) + float(np.linalg.norm(bs - p))
        lengths.append(path_len)
        moduli.append(reflection_factor * wavelength / (4.0 * math.pi * path_len))
    if rng_seed is None:
        phases = -2.0 * math.pi * np.array(lengths) / wavelength
    else:
        rng = np.random.default_rng(rng_seed)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=len(moduli))
    return np.array(moduli) * np.exp(1j * phases)
