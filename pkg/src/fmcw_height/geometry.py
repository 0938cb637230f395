"""Ground multipath physics for a point target above a flat reflecting plane.

The radar sits at height ``sensor_height`` above the ground, the target at
``target_height``, separated by the horizontal ``distance``. Each of the two
one-way legs travels either directly or via a specular ground bounce, giving
four round-trip paths. All delays here are one-way unless stated otherwise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "SPEED_OF_LIGHT",
    "SceneGeometry",
    "GroundModel",
    "ScatteringModel",
    "PropagationPath",
    "exact_path_delays",
    "delay_difference_approx",
    "propagation_factor",
    "propagation_factor_magnitude_approx",
    "min_distance_bound",
    "propagation_paths",
    "path_lengths",
]


@dataclass(frozen=True)
class SceneGeometry:
    sensor_height: float
    target_height: float
    distance: float

    def __post_init__(self):
        values = (self.sensor_height, self.target_height, self.distance)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"geometry values must be finite, got {values}")
        if self.sensor_height <= 0:
            raise ValueError(f"sensor_height must be > 0, got {self.sensor_height}")
        if self.target_height < 0:
            raise ValueError(f"target_height must be >= 0, got {self.target_height}")
        if self.distance <= 0:
            raise ValueError(f"distance must be > 0, got {self.distance}")


@dataclass(frozen=True)
class GroundModel:
    """Specular ground with a frequency-independent reflection coefficient."""

    reflection_coefficient: complex = -1.0

    def __post_init__(self):
        gamma = complex(self.reflection_coefficient)
        if not (math.isfinite(gamma.real) and math.isfinite(gamma.imag)):
            raise ValueError("reflection_coefficient must be finite")
        if abs(gamma) > 1.0 + 1e-12:
            raise ValueError(f"|reflection_coefficient| must be <= 1, got {abs(gamma)}")
        object.__setattr__(self, "reflection_coefficient", gamma)


class ScatteringModel(enum.Enum):
    """Which round-trip paths a target returns.

    ``ISOTROPIC`` returns all four. ``RETROREFLECTOR`` (trihedral corner)
    has no bistatic response, so the two mixed direct/indirect paths vanish.
    """

    ISOTROPIC = "isotropic"
    RETROREFLECTOR = "retroreflector"


@dataclass(frozen=True)
class PropagationPath:
    """One round-trip path: total length in meters and complex weight."""

    length: float
    weight: complex

    @property
    def delay(self) -> float:
        return self.length / SPEED_OF_LIGHT


def _leg_lengths(geom: SceneGeometry) -> tuple[float, float]:
    direct = math.hypot(geom.distance, geom.sensor_height - geom.target_height)
    indirect = math.hypot(geom.distance, geom.sensor_height + geom.target_height)
    return direct, indirect


def exact_path_delays(geom: SceneGeometry) -> tuple[float, float]:
    """One-way (direct, indirect) delays in seconds from the exact geometry."""
    direct, indirect = _leg_lengths(geom)
    return direct / SPEED_OF_LIGHT, indirect / SPEED_OF_LIGHT


def _exact_delay_difference(geom: SceneGeometry) -> float:
    # (a - b) = (a^2 - b^2) / (a + b) avoids cancellation at large distance
    direct, indirect = _leg_lengths(geom)
    diff = 4.0 * geom.sensor_height * geom.target_height / (direct + indirect)
    return diff / SPEED_OF_LIGHT


def delay_difference_approx(geom: SceneGeometry) -> float:
    """First-order indirect-minus-direct delay, valid for d >> h_S, h_T."""
    return 2.0 * geom.target_height * geom.sensor_height / (SPEED_OF_LIGHT * geom.distance)


def propagation_factor(
    geom: SceneGeometry,
    frequency: float,
    ground: GroundModel = GroundModel(),
    model: ScatteringModel = ScatteringModel.ISOTROPIC,
) -> complex:
    """Complex propagation factor relative to the direct-direct path.

    Uses the exact delay difference; the bulk delay of the direct path is
    factored out.
    """
    gamma = ground.reflection_coefficient
    phase = 2.0 * np.pi * frequency * _exact_delay_difference(geom)
    one = np.exp(-1j * phase)
    if model is ScatteringModel.ISOTROPIC:
        return complex(1.0 + 2.0 * gamma * one + gamma**2 * one**2)
    return complex(1.0 + gamma**2 * one**2)


def propagation_factor_magnitude_approx(geom: SceneGeometry, wavelength: float) -> float:
    """Closed-form |F_p| for a perfectly conducting ground and d >> heights."""
    arg = 2.0 * np.pi * geom.sensor_height / wavelength * geom.target_height / geom.distance
    return float(4.0 * np.sin(arg) ** 2)


def min_distance_bound(geom: SceneGeometry, range_resolution: float) -> float:
    """Smallest distance at which all four echoes fall into one range cell."""
    if range_resolution <= 0:
        raise ValueError(f"range_resolution must be > 0, got {range_resolution}")
    return 4.0 * geom.target_height * geom.sensor_height / range_resolution


def path_lengths(
    sensor_height: float,
    target_height: float,
    distances,
    ground: GroundModel = GroundModel(),
    model: ScatteringModel = ScatteringModel.ISOTROPIC,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised round-trip path lengths for many horizontal distances.

    Returns ``(lengths, weights)`` with ``lengths`` of shape
    ``(n_paths, len(distances))``. The two mixed paths share one length and
    are merged into a single path of weight ``2*gamma``.
    """
    d = np.atleast_1d(np.asarray(distances, dtype=float))
    direct = np.hypot(d, sensor_height - target_height)
    indirect = np.hypot(d, sensor_height + target_height)
    gamma = ground.reflection_coefficient
    lengths = [2.0 * direct]
    weights = [1.0 + 0j]
    if model is ScatteringModel.ISOTROPIC:
        lengths.append(direct + indirect)
        weights.append(2.0 * gamma)
    lengths.append(2.0 * indirect)
    weights.append(gamma**2)
    keep = [i for i, w in enumerate(weights) if w != 0]
    return np.array([lengths[i] for i in keep]), np.array([weights[i] for i in keep])


def propagation_paths(
    geom: SceneGeometry,
    ground: GroundModel = GroundModel(),
    model: ScatteringModel = ScatteringModel.ISOTROPIC,
) -> list[PropagationPath]:
    """Round-trip paths enabled by ``model``, with ground-bounce weights."""
    lengths, weights = path_lengths(
        geom.sensor_height, geom.target_height, geom.distance, ground, model
    )
    return [PropagationPath(float(L[0]), complex(w)) for L, w in zip(lengths, weights)]
