"""Scene geometry, path angles, and ULA steering vectors.

Angles follow a fixed convention: the angle of a path at a terminal is the
bearing of the line of sight from that terminal to the other endpoint
(atan2 of the displacement), minus the terminal's own array orientation,
wrapped to (-pi, pi].  Arrays are half-wavelength-spaced uniform linear
arrays, so steering vectors depend on the angle only through its sine and
the front-back ambiguity a(x) = a(pi - x) is inherent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError

TWO_PI = 2.0 * math.pi


def wrap_angle(x):
    """Wrap an angle (scalar or array, radians) to the interval (-pi, pi].

    The branch point maps -pi to +pi so every angle has a unique
    canonical form.
    """
    wrapped = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    if np.ndim(x) == 0:
        return float(wrapped)
    return wrapped


def steering(n_antennas: int, angle):
    """ULA steering vector(s) for half-wavelength element spacing.

    Parameters
    ----------
    n_antennas : int
        Number of array elements N (>= 1).
    angle : float or array_like
        Angle(s) in radians measured from array broadside.

    Returns
    -------
    ndarray
        Complex array of shape (N,) for a scalar angle, or (N, K) for K
        angles, with entry k equal to exp(j*pi*k*sin(angle)).  Entry 0 is
        exactly 1 and every entry has unit modulus.
    """
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    ang = np.asarray(angle, dtype=float)
    k = np.arange(n_antennas)
    if ang.ndim == 0:
        return np.exp(1j * np.pi * k * math.sin(float(ang)))
    return np.exp(1j * np.pi * np.outer(k, np.sin(ang)))


@dataclass(frozen=True)
class AngleVector:
    """Per-path angles of arrival (aoa) and departure (aod), in radians.

    Index 0 is the line-of-sight path; indices 1..L-1 are scatterer paths
    in input order.  All entries are wrapped to (-pi, pi] on construction.
    """

    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        aoa = wrap_angle(np.atleast_1d(np.asarray(self.aoa, dtype=float)))
        aod = wrap_angle(np.atleast_1d(np.asarray(self.aod, dtype=float)))
        if aoa.shape != aod.shape or aoa.ndim != 1:
            raise ValueError(
                f"aoa and aod must be 1-D with identical length, got {aoa.shape} and {aod.shape}"
            )
        if aoa.size < 1:
            raise ValueError("angle vector must contain at least one path")
        object.__setattr__(self, "aoa", aoa)
        object.__setattr__(self, "aod", aod)

    def __len__(self):
        return self.aoa.size

    @property
    def n_paths(self) -> int:
        return self.aoa.size


@dataclass(frozen=True)
class SceneGeometry:
    """Positions (meters) and array orientations (radians) of a 2-D scene.

    ``scatterer_positions`` holds L-1 single-bounce scatterer locations;
    the line-of-sight path is always present.
    """

    bs_position: np.ndarray
    ue_position: np.ndarray
    bs_orientation: float = 0.0
    ue_orientation: float = 0.0
    scatterer_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        bs = np.asarray(self.bs_position, dtype=float).reshape(-1)
        ue = np.asarray(self.ue_position, dtype=float).reshape(-1)
        if bs.shape != (2,) or ue.shape != (2,):
            raise ValueError("positions must be 2-D points (x, y)")
        sp = np.asarray(self.scatterer_positions, dtype=float)
        if sp.size == 0:
            sp = np.zeros((0, 2))
        sp = np.atleast_2d(sp)
        if sp.shape[1] != 2:
            raise ValueError("scatterer positions must be 2-D points (x, y)")
        if np.allclose(bs, ue):
            raise DegenerateGeometryError("UE position coincides with BS position")
        for i, p in enumerate(sp):
            if np.allclose(p, bs) or np.allclose(p, ue):
                raise DegenerateGeometryError(
                    f"scatterer {i} coincides with a terminal position"
                )
        object.__setattr__(self, "bs_position", bs)
        object.__setattr__(self, "ue_position", ue)
        object.__setattr__(self, "bs_orientation", wrap_angle(float(self.bs_orientation)))
        object.__setattr__(self, "ue_orientation", wrap_angle(float(self.ue_orientation)))
        object.__setattr__(self, "scatterer_positions", sp)

    @property
    def n_paths(self) -> int:
        return 1 + self.scatterer_positions.shape[0]


def _bearing(origin, target):
    d = target - origin
    if np.hypot(d[0], d[1]) == 0.0:
        raise DegenerateGeometryError("coincident points have no bearing")
    return math.atan2(d[1], d[0])


def scene_to_angles(scene: SceneGeometry) -> AngleVector:
    """Map a scene to its path angle vector (aoa at the BS, aod at the UE).

    The LoS aoa is the bearing BS->UE minus the BS orientation; the LoS
    aod is the bearing UE->BS minus the UE orientation.  Scatterer paths
    use the bearing from each terminal to the scatterer.
    """
    bs, ue = scene.bs_position, scene.ue_position
    aoa = [_bearing(bs, ue) - scene.bs_orientation]
    aod = [_bearing(ue, bs) - scene.ue_orientation]
    for p in scene.scatterer_positions:
        aoa.append(_bearing(bs, p) - scene.bs_orientation)
        aod.append(_bearing(ue, p) - scene.ue_orientation)
    return AngleVector(aoa=np.array(aoa), aod=np.array(aod))
