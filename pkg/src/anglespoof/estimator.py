"""Grid maximum-likelihood angle estimation and beam selection at the base station.

The estimator scans a 2-D (aoa, aod) grid of the single-path projected cost
C(angle pair) = ||y||^2 - |z^H y|^2 / ||z||^2, where z is the one-column
observation operator at that angle pair under the *nominal* codebook.  Because
z separates into per-combiner and per-symbol factors, the whole surface is
computed with two small matrix products instead of a loop over grid points.
The L deepest well-separated minima are refined off-grid by separable
parabolic interpolation, and the path gains are refit jointly at the refined
angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    ChannelParams,
    ObservationOperator,
    ReceivedSignal,
    SoundingCodebook,
    build_observation,
    channel_matrix,
)
from .geometry import AngleVector, steering

_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class AngleGrid:
    """Uniform search grids for aoa and aod, radians, within [-pi/2, pi/2]."""

    aoa_points: np.ndarray
    aod_points: np.ndarray
    step: float

    def __post_init__(self):
        for name in ("aoa_points", "aod_points"):
            pts = np.asarray(getattr(self, name), dtype=float)
            if pts.ndim != 1 or pts.size < 2:
                raise ValueError(f"{name} must hold at least two grid points")
            d = np.diff(pts)
            if np.any(d <= 0) or np.max(np.abs(d - self.step)) > 1e-12:
                raise ValueError(f"{name} must increase uniformly with the declared step")
            if pts[0] < -_HALF_PI - 1e-9 or pts[-1] > _HALF_PI + 1e-9:
                raise ValueError(f"{name} must lie within [-pi/2, pi/2]")
            object.__setattr__(self, name, pts)

    @classmethod
    def full_range(cls, step_deg: float = 0.5) -> "AngleGrid":
        """The default grid: [-90, 90] degrees inclusive on both axes."""
        n = int(round(180.0 / step_deg))
        pts = np.radians(-90.0 + step_deg * np.arange(n + 1))
        return cls(aoa_points=pts, aod_points=pts, step=math.radians(step_deg))

    @property
    def shape(self):
        return (self.aoa_points.size, self.aod_points.size)


@dataclass(frozen=True)
class EstimationResult:
    """Angle estimates with refit gains and the residual fit cost."""

    angles: AngleVector
    gains: Optional[np.ndarray]
    residual_cost: float
    under_resolved: bool = False
    cost_surface: Optional[np.ndarray] = None
    peak_indices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))


@dataclass(frozen=True)
class BeamSelection:
    """Selected sounding beam pair with its link quality."""

    s_hat: int
    m_hat: int
    snr_gain: float
    rate: float


def _as_vector(y):
    return y.samples if isinstance(y, ReceivedSignal) else np.asarray(y, dtype=complex).reshape(-1)


def _as_matrix(z):
    return z.matrix if isinstance(z, ObservationOperator) else np.asarray(z, dtype=complex)


def _lstsq(z, y):
    rcond = max(z.shape) * np.finfo(float).eps
    coeff, *_ = np.linalg.lstsq(z, y, rcond=rcond)
    return coeff


def projected_cost(y, z) -> float:
    """Residual power ||y - Z Z^+ y||^2 after projecting onto range(Z).

    Accepts either the wrapped types or raw arrays.  The pseudoinverse is
    rank-revealing (tolerance max(dim) * eps * sigma_max), so nearly
    coincident angle columns degrade continuously instead of blowing up.
    """
    yv = _as_vector(y)
    zm = _as_matrix(z)
    r = yv - zm @ _lstsq(zm, yv)
    return float(np.real(np.vdot(r, r)))


def estimate_gains(y, z) -> np.ndarray:
    """Least-squares path gains (1/sqrt(Pt)) Z^+ y at fixed angles.

    ``y`` must be a ReceivedSignal so the transmit power is known; a zero
    transmit power leaves the solution unscaled.
    """
    yv = _as_vector(y)
    zm = _as_matrix(z)
    coeff = _lstsq(zm, yv)
    pt = getattr(y, "tx_power", 1.0)
    return coeff / math.sqrt(pt) if pt > 0 else coeff


def cost_surface(y: ReceivedSignal, codebook: SoundingCodebook, grid: AngleGrid) -> np.ndarray:
    """Single-path projected cost over the whole grid, shape |aoa| x |aod|.

    Uses the separable structure of the one-column operator
    z(aoa, aod)[s*M+m] = (w_s^H a_bs(aoa)) * (a_ue(aod)^T f_m):
    the matched-filter energies |z^H y|^2 / ||z||^2 for every grid pair
    come from two dense products with the S x M sample matrix.
    """
    ym = y.as_matrix()
    g = codebook.combiners.conj().T @ steering(codebook.n_rx_antennas, grid.aoa_points)
    h = codebook.precoders.T @ steering(codebook.n_tx_antennas, grid.aod_points)
    ng = np.maximum(np.sum(np.abs(g) ** 2, axis=0), np.finfo(float).tiny)
    nh = np.maximum(np.sum(np.abs(h) ** 2, axis=0), np.finfo(float).tiny)
    t = g.conj().T @ ym @ h.conj()
    energy = (np.abs(t) ** 2) / np.outer(ng, nh)
    return float(np.real(np.vdot(y.samples, y.samples))) - energy


def _local_maxima(e):
    """Boolean mask of cells that are >= all existing neighbors (8-connected)."""
    padded = np.full((e.shape[0] + 2, e.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = e
    mask = np.ones(e.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= e >= padded[1 + di : 1 + di + e.shape[0], 1 + dj : 1 + dj + e.shape[1]]
    return mask


def _pick_peaks(energy, n_peaks, min_separation):
    """Greedy non-maximum suppression over local maxima of the energy surface.

    Returns (indices, under_resolved).  If fewer than n_peaks separated
    local maxima exist, the remaining slots are filled with the best
    leftover grid cells regardless of separation and the flag is set.
    """
    order = np.argwhere(_local_maxima(energy))
    order = sorted(map(tuple, order), key=lambda ij: (-energy[ij], ij[0], ij[1]))
    chosen = []
    for ij in order:
        if len(chosen) == n_peaks:
            break
        if all(math.hypot(ij[0] - c[0], ij[1] - c[1]) > min_separation for c in chosen):
            chosen.append(ij)
    under_resolved = len(chosen) < n_peaks
    if under_resolved:
        flat = np.dstack(np.unravel_index(np.argsort(-energy, axis=None, kind="stable"), energy.shape))[0]
        for ij in map(tuple, flat):
            if len(chosen) == n_peaks:
                break
            if ij not in chosen:
                chosen.append(ij)
    return np.array(chosen, dtype=int), under_resolved


def _parabolic_offset(e_minus, e_center, e_plus):
    """Vertex offset in [-0.5, 0.5] of the parabola through three samples."""
    denom = 2.0 * (e_plus + e_minus - 2.0 * e_center)
    if abs(denom) < 1e-300 or not np.isfinite(denom):
        return 0.0
    return float(np.clip((e_minus - e_plus) / denom, -0.5, 0.5))


def grid_ml_estimate(
    y: ReceivedSignal,
    codebook: SoundingCodebook,
    grid: AngleGrid,
    n_paths: int,
    min_separation: float = 3.0,
    keep_surface: bool = False,
) -> EstimationResult:
    """Estimate L path angle pairs by scanning the single-path cost surface.

    Picks the ``n_paths`` deepest cost minima separated by more than
    ``min_separation`` grid cells (Euclidean), refines each by parabolic
    interpolation along both axes, and refits all gains jointly at the
    refined angles.  Peaks are returned strongest-first; when not enough
    separated minima exist the result is flagged ``under_resolved``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    surface = cost_surface(y, codebook, grid)
    total = float(np.real(np.vdot(y.samples, y.samples)))
    energy = total - surface
    peaks, under_resolved = _pick_peaks(energy, n_paths, min_separation)
    aoa, aod = [], []
    for i, j in peaks:
        di = dj = 0.0
        if 0 < i < energy.shape[0] - 1:
            di = _parabolic_offset(energy[i - 1, j], energy[i, j], energy[i + 1, j])
        if 0 < j < energy.shape[1] - 1:
            dj = _parabolic_offset(energy[i, j - 1], energy[i, j], energy[i, j + 1])
        aoa.append(grid.aoa_points[i] + di * grid.step)
        aod.append(grid.aod_points[j] + dj * grid.step)
    angles = AngleVector(aoa=np.array(aoa), aod=np.array(aod))
    z = build_observation(codebook.precoders, codebook.combiners, angles)
    return EstimationResult(
        angles=angles,
        gains=estimate_gains(y, z),
        residual_cost=projected_cost(y, z),
        under_resolved=under_resolved,
        cost_surface=surface if keep_surface else None,
        peak_indices=peaks,
    )


def select_beam(y: ReceivedSignal) -> tuple[int, int]:
    """Indices (s_hat, m_hat) of the strongest sample |y[s, m]|^2.

    Ties resolve to the lexicographically smallest pair.
    """
    power = np.abs(y.as_matrix()) ** 2
    s_hat, m_hat = np.unravel_index(np.argmax(power), power.shape)
    return int(s_hat), int(m_hat)


def achievable_rate(
    channel: ChannelParams,
    w_comm: np.ndarray,
    f_comm: np.ndarray,
    tx_power: float,
    bandwidth: float,
    noise_psd: float,
    snr_reference: str = "noise_power",
) -> tuple[float, float]:
    """Rate B log2(1 + SNR) and beamforming gain for a fixed beam pair.

    gamma = |sum_l alpha_l w^H a_bs(aoa_l) a_ue(aod_l)^T f|^2.  The SNR
    denominator is the total noise power B*N0 by default;
    ``snr_reference="noise_psd"`` divides by N0 alone, a convention some
    rate curves use (it only shifts curves by a constant factor in dB).
    """
    w = np.asarray(w_comm, dtype=complex).reshape(-1)
    f = np.asarray(f_comm, dtype=complex).reshape(-1)
    h = channel_matrix(channel, w.size, f.size)
    gamma = float(np.abs(w.conj() @ h @ f) ** 2)
    if snr_reference == "noise_power":
        denom = bandwidth * noise_psd
    elif snr_reference == "noise_psd":
        denom = noise_psd
    else:
        raise ValueError("snr_reference must be 'noise_power' or 'noise_psd'")
    rate = bandwidth * math.log2(1.0 + gamma * tx_power / denom)
    return rate, gamma
