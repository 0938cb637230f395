"""Height spectra of multipath AM tracks and the resulting height estimates.

The AM of an echo above a conducting ground is periodic in reciprocal
distance ``u = 1/d`` with frequency ``2*h_S*h_T/lambda``. Its Fourier
transform over ``u`` therefore has a peak whose location scales linearly to
the target height. Two transforms are provided: a direct DFT on the
non-equidistant ``u`` samples, and an FFT over the distance offsets after
linearising ``1/d`` around the interval centre.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from .errors import (
    DegenerateInputError,
    InsufficientObservationError,
    LinearizationError,
    NonMonotonicDistanceError,
)
from .extraction import MIN_AM_SAMPLES, AMTrack
from .fmcw import WindowKind, window_coefficients
from .geometry import ScatteringModel

__all__ = [
    "DC_LIMIT_FACTOR",
    "LINEARIZATION_LIMIT",
    "SpectrumMethod",
    "HeightGrid",
    "HeightSpectrum",
    "HeightEstimate",
    "preprocess",
    "nedft_psd",
    "linearized_fft_psd",
    "estimate_height",
    "spectral_resolution",
    "required_interval",
]

# estimates below this fraction of the spectral resolution are dominated by
# the DC removal
DC_LIMIT_FACTOR = 0.66
# maximum interval-to-centre ratio for the linearised transform
LINEARIZATION_LIMIT = 0.2


class SpectrumMethod(enum.Enum):
    NEDFT = "nedft"
    LINEARIZED_FFT = "linearized_fft"


@dataclass(frozen=True)
class HeightGrid:
    """Ascending, uniformly spaced target heights in meters."""

    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 1 or h.size < 2:
            raise ValueError("a height grid needs at least two points")
        if h[0] < 0:
            raise ValueError("grid heights must be >= 0")
        step = np.diff(h)
        if np.any(step <= 0) or not np.allclose(step, step[0], rtol=1e-9, atol=0):
            raise ValueError("grid heights must be ascending and uniformly spaced")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @classmethod
    def uniform(cls, max_height: float = 6.0, spacing: float = 0.02, min_height: float = 0.0) -> HeightGrid:
        n = int(math.floor((max_height - min_height) / spacing + 1e-9)) + 1
        return cls(min_height + spacing * np.arange(n))

    @property
    def spacing(self) -> float:
        return float(self.heights[1] - self.heights[0])

    @property
    def max_height(self) -> float:
        return float(self.heights[-1])

    def spectral_frequencies(self, sensor_height: float, wavelength: float) -> np.ndarray:
        """Frequencies over reciprocal distance belonging to each height."""
        return 2.0 * sensor_height / wavelength * self.heights

    def spectral_spacing(self, sensor_height: float, wavelength: float) -> float:
        return 2.0 * sensor_height / wavelength * self.spacing


@dataclass(frozen=True)
class HeightSpectrum:
    grid: HeightGrid
    psd: np.ndarray
    method: SpectrumMethod
    d0: float
    delta_d: float

    def __post_init__(self):
        p = np.asarray(self.psd, dtype=float)
        if p.shape != self.grid.heights.shape:
            raise ValueError("psd must have one value per grid height")
        if np.any(p < 0):
            raise ValueError("psd must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "psd", p)

    @property
    def heights(self) -> np.ndarray:
        return self.grid.heights

    @property
    def peak_height(self) -> float:
        """Grid height of the maximum, excluding the zero-height point."""
        return float(self.heights[_peak_index(self)])


@dataclass(frozen=True)
class HeightEstimate:
    height: float
    resolution: float
    valid_lower_bound: bool
    valid_dc_limit: bool
    retroreflector_corrected: bool
    apparent_height: float
    d0: float
    delta_d: float

    @property
    def valid(self) -> bool:
        return self.valid_lower_bound and self.valid_dc_limit


def _check_samples(track: AMTrack) -> None:
    if len(track) < MIN_AM_SAMPLES:
        raise InsufficientObservationError(f"{len(track)} AM samples, need >= {MIN_AM_SAMPLES}")
    step = np.diff(track.distances)
    if not (np.all(step > 0) or np.all(step < 0)):
        raise NonMonotonicDistanceError("AM sample distances are not strictly monotonic")


def preprocess(track: AMTrack) -> AMTrack:
    """Free-space correction, DC removal and max normalisation.

    A track that is constant after the ``d**2`` correction has no AM and
    comes back as all zeros.
    """
    _check_samples(track)
    raw = np.asarray(track.amplitudes, dtype=float)
    if not np.any(raw != 0):
        raise DegenerateInputError("AM track amplitudes are all zero")
    x = raw * track.distances**2
    x = x - x.mean()
    peak = np.max(np.abs(x))
    if peak <= 1e-12 * np.max(np.abs(raw * track.distances**2)):
        x = np.zeros_like(x)
    else:
        x = x / peak
    return replace(track, amplitudes=x)


def _normalise(psd: np.ndarray) -> np.ndarray:
    top = psd.max()
    return psd / top if top > 0 else psd


def nedft_psd(
    track: AMTrack,
    grid: HeightGrid | None = None,
    window: WindowKind = WindowKind.RECTANGULAR,
) -> HeightSpectrum:
    """Power spectrum over reciprocal distance, evaluated on a height grid.

    Direct DFT on the non-equidistant samples ``u[n] = 1/d[n]``; only the
    nonnegative frequencies belonging to ``grid`` are computed. The window,
    if any, is applied over the sample index.
    """
    _check_samples(track)
    grid = grid or HeightGrid.uniform()
    u = 1.0 / track.distances
    x = track.amplitudes * window_coefficients(window, len(track))
    freqs = grid.spectral_frequencies(track.sensor_height, track.wavelength)
    spectrum = np.exp(-2j * np.pi * np.outer(freqs, u)) @ x
    psd = _normalise(np.abs(spectrum) ** 2)
    d = track.distances
    return HeightSpectrum(
        grid=grid,
        psd=psd,
        method=SpectrumMethod.NEDFT,
        d0=0.5 * float(d.min() + d.max()),
        delta_d=float(d.max() - d.min()),
    )


def linearized_fft_psd(
    track: AMTrack,
    grid: HeightGrid | None = None,
    window: WindowKind = WindowKind.RECTANGULAR,
) -> HeightSpectrum:
    """FFT over the distance offset from the interval centre.

    Valid while the interval is short against its centre distance, where
    ``1/d`` is close to ``1/d0 - (d - d0)/d0**2`` and the AM becomes
    periodic in distance. Samples that are not equidistant are linearly
    resampled first. The transform is evaluated on ``grid`` itself with a
    chirp-z (zoom) FFT, so both spectrum methods share the same heights.
    """
    _check_samples(track)
    grid = grid or HeightGrid.uniform()
    d = track.distances
    d0 = 0.5 * float(d.min() + d.max())
    delta_d = float(d.max() - d.min())
    if delta_d / d0 >= LINEARIZATION_LIMIT:
        raise LinearizationError(
            f"observation interval {delta_d:.3f} m is too long for linearisation at "
            f"d0={d0:.3f} m (ratio {delta_d / d0:.3f} >= {LINEARIZATION_LIMIT})"
        )

    order = np.argsort(d)
    d_sorted, x_sorted = d[order], track.amplitudes[order]
    n = d.size
    step = delta_d / (n - 1)
    uniform = d0 - 0.5 * delta_d + step * np.arange(n)
    if not np.allclose(d_sorted, uniform, rtol=0, atol=1e-6 * step):
        x_sorted = np.interp(uniform, d_sorted, x_sorted)
    x = x_sorted * window_coefficients(window, n)

    # AM frequency over distance, in cycles per meter, for each grid height
    freqs = grid.spectral_frequencies(track.sensor_height, track.wavelength) / d0**2
    spectrum = signal.zoom_fft(x, [freqs[0], freqs[-1]], m=freqs.size, fs=1.0 / step, endpoint=True)
    return HeightSpectrum(
        grid=grid,
        psd=_normalise(np.abs(spectrum) ** 2),
        method=SpectrumMethod.LINEARIZED_FFT,
        d0=d0,
        delta_d=delta_d,
    )


def _peak_index(spectrum: HeightSpectrum) -> int:
    psd = np.array(spectrum.psd)
    psd[spectrum.heights <= 0] = -np.inf
    # argmax returns the first maximum, so ties go to the lower height
    return int(np.argmax(psd))


def _refined_peak(spectrum: HeightSpectrum) -> float:
    k = _peak_index(spectrum)
    h = spectrum.heights
    p = spectrum.psd
    if k <= 0 or k >= p.size - 1:
        return float(h[k])
    a, b, c = p[k - 1], p[k], p[k + 1]
    # a parabola in log-PSD needs a strict peak with non-zero neighbours
    if not (b > a > 0.0 and b > c > 0.0):
        return float(h[k])
    la, lb, lc = np.log(a), np.log(b), np.log(c)
    offset = 0.5 * (la - lc) / (la - 2.0 * lb + lc)
    return float(h[k] + offset * spectrum.grid.spacing)


def estimate_height(
    spectrum: HeightSpectrum,
    sensor_height: float,
    wavelength: float,
    scattering: ScatteringModel,
    range_resolution: float,
    target_track: AMTrack,
) -> HeightEstimate:
    """Height from the PSD maximum, with resolution and validity flags.

    For a retroreflector the spectral peak sits at twice the target height
    and is halved. Both validity flags use the reported (corrected) height.
    Since the DC removal acts on the spectral peak, which sits at twice
    that height for a retroreflector, the DC-limit flag is conservative
    there.
    """
    if not np.any(spectrum.psd > 0):
        raise DegenerateInputError("height spectrum is all zero")
    apparent = max(0.0, _refined_peak(spectrum))
    corrected = ScatteringModel(scattering) is ScatteringModel.RETROREFLECTOR
    height = 0.5 * apparent if corrected else apparent
    resolution = spectral_resolution(sensor_height, wavelength, spectrum.d0, spectrum.delta_d)
    lower_bound = 4.0 * height * sensor_height / range_resolution
    return HeightEstimate(
        height=height,
        resolution=resolution,
        valid_lower_bound=bool(target_track.distances.min() > lower_bound),
        valid_dc_limit=bool(height >= DC_LIMIT_FACTOR * resolution),
        retroreflector_corrected=corrected,
        apparent_height=apparent,
        d0=spectrum.d0,
        delta_d=spectrum.delta_d,
    )


def spectral_resolution(sensor_height: float, wavelength: float, d0: float, delta_d: float) -> float:
    """Height resolution of an observation of length ``delta_d`` centred at ``d0``."""
    if not 0 < delta_d < 2 * d0:
        raise ValueError(f"need 0 < delta_d < 2*d0, got delta_d={delta_d}, d0={d0}")
    return wavelength * (d0**2 - delta_d**2 / 4.0) / (2.0 * sensor_height * delta_d)


def required_interval(sensor_height: float, wavelength: float, d0: float, delta_h: float) -> float:
    """Observation length needed for height resolution ``delta_h`` at ``d0``."""
    if not delta_h > 0:
        raise ValueError(f"delta_h must be > 0, got {delta_h}")
    a = 2.0 * sensor_height * delta_h
    b = wavelength * d0
    # rationalised root: -a + sqrt(a^2 + b^2) = b^2 / (a + sqrt(a^2 + b^2))
    return 2.0 * b * b / (wavelength * (a + math.hypot(a, b)))
