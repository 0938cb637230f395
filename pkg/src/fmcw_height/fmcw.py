"""Chirp-sequence FMCW beat-signal synthesis and range-Doppler processing.

The front end is modelled at beat-signal level under the stop-and-go
approximation: within one ramp the scene is frozen, between ramps every
target advances by ``radial_speed * ramp_repetition_interval``. Each enabled
propagation path contributes one complex tone whose beat frequency follows
from the path length and whose phase is ``2*pi*f_c*tau``. Fast time is
centred on the middle of the ramp, so ``f_c`` is the carrier at mid-sweep.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleSceneError
from .geometry import (
    SPEED_OF_LIGHT,
    GroundModel,
    ScatteringModel,
    path_lengths,
)

__all__ = [
    "WindowKind",
    "RadarConfig",
    "TargetSpec",
    "Cpi",
    "RangeDopplerMap",
    "next_pow2",
    "window_coefficients",
    "synthesize_cpi",
    "range_profile",
    "range_doppler_map",
]


class WindowKind(enum.Enum):
    RECTANGULAR = "rectangular"
    HANN = "hann"


def window_coefficients(kind: WindowKind, length: int) -> np.ndarray:
    """Symmetric window of ``length`` points (real, even about the centre)."""
    kind = WindowKind(kind)
    if kind is WindowKind.RECTANGULAR:
        return np.ones(length)
    if length < 3:
        return np.ones(length)
    # np.hanning has zero end points; the periodic-interior form keeps every
    # sample while staying symmetric
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (n + 1) / (length + 1))


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class RadarConfig:
    center_frequency: float = 76.5e9
    bandwidth: float = 1.0e9
    ramp_duration: float = 80e-6
    ramps_per_cpi: int = 64
    ramp_repetition_interval: float = 100e-6
    measurement_cycle: float = 55.6e-3
    samples_per_ramp: int = 2048
    noise_power: float = 0.0

    def __post_init__(self):
        if self.center_frequency <= 0 or self.bandwidth <= 0:
            raise ValueError("center_frequency and bandwidth must be > 0")
        if self.ramp_duration <= 0:
            raise ValueError("ramp_duration must be > 0")
        if self.ramps_per_cpi < 1:
            raise ValueError("ramps_per_cpi must be >= 1")
        if self.samples_per_ramp < 2:
            raise ValueError("samples_per_ramp must be >= 2")
        if self.ramp_repetition_interval < self.ramp_duration * (1 - 1e-12):
            raise ValueError("ramp_repetition_interval must be >= ramp_duration")
        if self.measurement_cycle < self.cpi_duration * (1 - 1e-12):
            raise ValueError("measurement_cycle must be >= ramps_per_cpi * ramp_repetition_interval")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def slope(self) -> float:
        return self.bandwidth / self.ramp_duration

    @property
    def sample_rate(self) -> float:
        return self.samples_per_ramp / self.ramp_duration

    @property
    def cpi_duration(self) -> float:
        return self.ramps_per_cpi * self.ramp_repetition_interval

    @property
    def max_range(self) -> float:
        """Unambiguous range of complex baseband sampling."""
        return self.samples_per_ramp * self.range_resolution

    @property
    def unambiguous_velocity(self) -> float:
        """Half-width of the unambiguous Doppler velocity interval."""
        return self.wavelength / (4.0 * self.ramp_repetition_interval)


@dataclass(frozen=True)
class TargetSpec:
    height: float
    initial_distance: float
    radial_speed: float = 0.0
    amplitude: float = 1.0
    scattering: ScatteringModel = ScatteringModel.ISOTROPIC

    def __post_init__(self):
        if self.height < 0:
            raise ValueError(f"target height must be >= 0, got {self.height}")
        if self.initial_distance <= 0:
            raise ValueError(f"initial_distance must be > 0, got {self.initial_distance}")
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        object.__setattr__(self, "scattering", ScatteringModel(self.scattering))

    def distance_at(self, t):
        return self.initial_distance + self.radial_speed * np.asarray(t, dtype=float)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Cpi:
    """One coherent processing interval of beat samples.

    ``target_distances`` holds the ground-truth horizontal distance of every
    target at every ramp (shape ``(n_targets, N)``); it is kept for
    validation only and never read by the processing chain.
    """

    config: RadarConfig
    beat_samples: np.ndarray
    timestamp: float
    target_distances: np.ndarray

    def __post_init__(self):
        shape = (self.config.ramps_per_cpi, self.config.samples_per_ramp)
        if self.beat_samples.shape != shape:
            raise ValueError(f"beat_samples shape {self.beat_samples.shape} != {shape}")
        object.__setattr__(self, "beat_samples", _frozen(self.beat_samples))
        object.__setattr__(self, "target_distances", _frozen(self.target_distances))

    @property
    def ramp_times(self) -> np.ndarray:
        n = np.arange(self.config.ramps_per_cpi)
        return self.timestamp + n * self.config.ramp_repetition_interval


def fast_time(config: RadarConfig) -> np.ndarray:
    m = np.arange(config.samples_per_ramp)
    return (m - 0.5 * (config.samples_per_ramp - 1)) / config.sample_rate


def tone_rows(start_phase: np.ndarray, step_phase: np.ndarray, length: int) -> np.ndarray:
    """``exp(1j*(start_phase[:, None] + step_phase[:, None]*m))`` for ``m < length``.

    Built by a running product, which is several times faster than
    evaluating the exponential on the full grid; the phase error grows by
    about one rounding step per sample.
    """
    step = np.exp(1j * np.asarray(step_phase, dtype=float))
    rows = np.empty((step.size, length), dtype=complex)
    rows[:, 0] = np.exp(1j * np.asarray(start_phase, dtype=float))
    rows[:, 1:] = step[:, None]
    return np.cumprod(rows, axis=1)


def synthesize_cpi(
    config: RadarConfig,
    targets: Sequence[TargetSpec],
    ground: GroundModel,
    sensor_height: float,
    start_time: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Cpi:
    """Beat samples of one CPI for point targets over a reflecting ground.

    ``rng`` drives the receiver noise; it is only consulted when
    ``config.noise_power > 0``.
    """
    n_ramps = config.ramps_per_cpi
    ramp_t = start_time + np.arange(n_ramps) * config.ramp_repetition_interval
    t_fast = fast_time(config)
    dt_fast = 1.0 / config.sample_rate
    k_beat = config.slope / SPEED_OF_LIGHT
    k_carrier = 2.0 * np.pi * config.center_frequency / SPEED_OF_LIGHT

    samples = np.zeros((n_ramps, config.samples_per_ramp), dtype=complex)
    distances = np.empty((len(targets), n_ramps))
    for i, target in enumerate(targets):
        d = target.distance_at(ramp_t)
        if np.any(d <= 0):
            raise InfeasibleSceneError(
                f"target {i} reaches distance {d.min():.3f} m <= 0 during the CPI at t={start_time:.4f} s"
            )
        distances[i] = d
        lengths, weights = path_lengths(sensor_height, target.height, d, ground, target.scattering)
        scale = target.amplitude / d**2
        for L, weight in zip(lengths, weights):
            amp = scale * weight * np.exp(1j * k_carrier * L)
            beat = 2.0 * np.pi * k_beat * L
            samples += amp[:, None] * tone_rows(beat * t_fast[0], beat * dt_fast, t_fast.size)

    if config.noise_power > 0:
        if rng is None:
            rng = np.random.default_rng()
        sigma = math.sqrt(config.noise_power / 2.0)
        samples += sigma * (rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape))

    return Cpi(config, samples, float(start_time), distances)


def range_profile(
    ramp_samples: np.ndarray,
    window: WindowKind = WindowKind.RECTANGULAR,
    fft_size: int | None = None,
) -> np.ndarray:
    """Windowed, zero-padded DFT of one ramp.

    Normalised by the window sum so an on-bin tone of amplitude ``a`` peaks
    at ``a``.
    """
    x = np.asarray(ramp_samples)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("ramp_samples must be a vector of length >= 2")
    w = window_coefficients(window, x.size)
    n = fft_size or next_pow2(x.size)
    if n < x.size:
        raise ValueError("fft_size must be >= number of samples")
    return np.fft.fft(x * w, n) / w.sum()


@dataclass(frozen=True)
class RangeDopplerMap:
    """Range-Doppler spectrum of one CPI.

    ``data`` has shape ``(doppler_fft_size, range_fft_size)``; the Doppler
    axis is fft-shifted so row ``doppler_fft_size // 2`` is zero velocity.
    ``weighted`` keeps the windowed, normalised time samples so peaks can be
    evaluated between bins without the scalloping of the sampled spectrum.
    """

    data: np.ndarray
    range_per_bin: float
    velocity_per_bin: float
    weighted: np.ndarray
    config: RadarConfig
    timestamp: float
    window: WindowKind = WindowKind.RECTANGULAR
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def zero_doppler_row(self) -> int:
        return self.data.shape[0] // 2

    @property
    def magnitude(self) -> np.ndarray:
        if "mag" not in self._cache:
            self._cache["mag"] = np.abs(self.data)
        return self._cache["mag"]

    @property
    def range_axis(self) -> np.ndarray:
        return np.arange(self.data.shape[1]) * self.range_per_bin

    @property
    def velocity_axis(self) -> np.ndarray:
        return (np.arange(self.data.shape[0]) - self.zero_doppler_row) * self.velocity_per_bin

    def bin_to_range(self, range_bin: float) -> float:
        return float(range_bin) * self.range_per_bin

    def bin_to_velocity(self, doppler_bin: float) -> float:
        return (float(doppler_bin) - self.zero_doppler_row) * self.velocity_per_bin

    def range_to_bin(self, rng: float) -> float:
        return float(rng) / self.range_per_bin

    def _range_kernel(self, range_bin: float) -> np.ndarray:
        m = np.arange(self.weighted.shape[1])
        return np.exp(-2j * np.pi * range_bin / self.data.shape[1] * m)

    def _doppler_kernel(self, doppler_bin: float) -> np.ndarray:
        n = np.arange(self.weighted.shape[0])
        nu = (doppler_bin - self.zero_doppler_row) / self.data.shape[0]
        return np.exp(-2j * np.pi * nu * n)

    def evaluate(self, range_bin: float, doppler_bin: float) -> complex:
        """Spectrum value at fractional bin coordinates."""
        return complex(self._doppler_kernel(doppler_bin) @ self.weighted @ self._range_kernel(range_bin))

    def refine_peak(self, range_bin: int, doppler_bin: int) -> tuple[float, float, float]:
        """Locate the continuous spectral maximum next to an integer peak cell.

        Maximises the exact transform first along range (at the coarse
        Doppler bin), then along Doppler (at the refined range). Returns
        ``(range_bin, doppler_bin, magnitude)`` with fractional bins.
        """
        row = self._doppler_kernel(doppler_bin) @ self.weighted
        m = np.arange(row.size)
        n_r = self.data.shape[1]

        def neg_range(b):
            return -abs(row @ np.exp(-2j * np.pi * b / n_r * m))

        r = minimize_scalar(neg_range, bounds=(range_bin - 1.0, range_bin + 1.0),
                            method="bounded", options={"xatol": 1e-5})
        r_bin = float(r.x)
        if self.weighted.shape[0] == 1:
            return r_bin, float(doppler_bin), float(-r.fun)

        col = self.weighted @ self._range_kernel(r_bin)
        n = np.arange(col.size)
        n_d = self.data.shape[0]
        center = self.zero_doppler_row

        def neg_doppler(b):
            return -abs(col @ np.exp(-2j * np.pi * (b - center) / n_d * n))

        d = minimize_scalar(neg_doppler, bounds=(doppler_bin - 1.0, doppler_bin + 1.0),
                            method="bounded", options={"xatol": 1e-5})
        return r_bin, float(d.x), float(-d.fun)


def range_doppler_map(
    cpi: Cpi,
    window: WindowKind = WindowKind.RECTANGULAR,
    range_fft_size: int | None = None,
    doppler_fft_size: int | None = None,
) -> RangeDopplerMap:
    """2-D DFT of a CPI: range along fast time, Doppler across ramps.

    The same window kind is applied on both axes. Output is normalised by
    the product of the window sums.
    """
    config = cpi.config
    n_ramps, n_samp = cpi.beat_samples.shape
    window = WindowKind(window)
    w_r = window_coefficients(window, n_samp)
    w_d = window_coefficients(window, n_ramps)
    n_r = range_fft_size or next_pow2(n_samp)
    n_d = doppler_fft_size or next_pow2(n_ramps)
    if n_r < n_samp or n_d < n_ramps:
        raise ValueError("FFT sizes must be >= the data dimensions")
    weighted = cpi.beat_samples * (w_d[:, None] * w_r[None, :]) / (w_r.sum() * w_d.sum())
    spectrum = np.fft.fft(np.fft.fft(weighted, n_r, axis=1), n_d, axis=0)
    spectrum = np.fft.fftshift(spectrum, axes=0)
    range_per_bin = config.sample_rate * SPEED_OF_LIGHT / (2.0 * config.slope * n_r)
    velocity_per_bin = config.wavelength / (2.0 * config.ramp_repetition_interval * n_d)
    return RangeDopplerMap(
        data=_frozen(spectrum),
        range_per_bin=range_per_bin,
        velocity_per_bin=velocity_per_bin,
        weighted=_frozen(weighted),
        config=config,
        timestamp=cpi.timestamp,
        window=window,
    )
