"""Target extraction on range-Doppler maps, tracking, and AM-track assembly.

Two sampling realizations feed the height estimator:

* sampling over measurement cycles (SoMC): one AM sample per tracked
  detection per range-Doppler map;
* sampling over the ramp repetition interval (SoPRI): one AM sample per
  ramp of a single CPI, read at the target's range gate.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InsufficientObservationError, NonMonotonicDistanceError
from .fmcw import Cpi, RangeDopplerMap, WindowKind, next_pow2, tone_rows, window_coefficients

__all__ = [
    "SamplingMode",
    "Detection",
    "Track",
    "AMTrack",
    "MIN_AM_SAMPLES",
    "detect_targets",
    "update_tracks",
    "am_track_from_cycles",
    "am_track_from_cpi",
    "ramp_profiles",
    "unwrap_velocity",
]

MIN_AM_SAMPLES = 8


class SamplingMode(enum.Enum):
    SOMC = "somc"
    SOPRI = "sopri"


@dataclass(frozen=True)
class Detection:
    range: float
    radial_velocity: float
    amplitude: float
    cycle_index: int = 0
    range_bin: float = float("nan")
    doppler_bin: float = float("nan")

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"detection range must be > 0, got {self.range}")
        if not self.amplitude > 0:
            raise ValueError(f"detection amplitude must be > 0, got {self.amplitude}")


@dataclass
class Track:
    """Nearest-neighbour track with a constant-velocity range prediction."""

    track_id: int
    history: list[Detection] = field(default_factory=list)
    misses: int = 0
    active: bool = True

    @property
    def last(self) -> Detection:
        return self.history[-1]

    def range_rate(self, cycle_time: float, window: int = 6) -> float | None:
        """Least-squares range rate over the most recent detections."""
        recent = self.history[-window:]
        if len(recent) < 2:
            return None
        k = np.array([d.cycle_index for d in recent], dtype=float) * cycle_time
        r = np.array([d.range for d in recent])
        return float(np.polyfit(k - k[-1], r, 1)[0])

    def predicted_ranges(
        self,
        cycle_index: int,
        cycle_time: float,
        velocity_period: float | None = None,
        max_speed: float = math.inf,
    ) -> np.ndarray:
        """Candidate ranges at ``cycle_index``.

        With two or more detections there is a single prediction from the
        range rate. A fresh track only knows its Doppler velocity, which may
        be aliased; every admissible alias within ``max_speed`` is returned.
        """
        dt = (cycle_index - self.last.cycle_index) * cycle_time
        rate = self.range_rate(cycle_time)
        if rate is not None:
            return np.array([self.last.range + rate * dt])
        v = self.last.radial_velocity
        if velocity_period is None:
            return np.array([self.last.range + v * dt])
        k_max = int(math.floor((max_speed + abs(v)) / velocity_period)) if math.isfinite(max_speed) else 0
        ks = np.arange(-k_max, k_max + 1)
        candidates = v + ks * velocity_period
        candidates = candidates[np.abs(candidates) <= max_speed] if math.isfinite(max_speed) else candidates
        if candidates.size == 0:
            candidates = np.array([v])
        return self.last.range + candidates * dt

    @property
    def cycle_indices(self) -> np.ndarray:
        return np.array([d.cycle_index for d in self.history])


def _wrap(dv: float, period: float | None) -> float:
    if period is None:
        return dv
    return (dv + 0.5 * period) % period - 0.5 * period


def unwrap_velocity(doppler_velocity: float, reference_velocity: float, period: float) -> float:
    """Pick the Doppler alias closest to a coarse reference velocity."""
    k = round((reference_velocity - doppler_velocity) / period)
    return doppler_velocity + k * period


@functools.lru_cache(maxsize=32)
def _leakage_envelope(kind: WindowKind, n: int, n_fft: int) -> np.ndarray:
    """Monotone sidelobe envelope of a normalised window, indexed by FFT bin offset."""
    w = window_coefficients(kind, n)
    oversample = 8
    response = np.abs(np.fft.fft(w, n_fft * oversample)) / w.sum()
    half = response[: n_fft * oversample // 2 + 1]
    env = np.maximum.accumulate(half[::-1])[::-1]
    return env[::oversample]


def _envelope_at(env: np.ndarray, offset: float) -> float:
    i = int(math.floor(abs(offset)))
    return float(env[min(i, env.size - 1)])


def detect_targets(
    rd_map: RangeDopplerMap,
    threshold_factor: float = 8.0,
    cycle_index: int = 0,
    sidelobe_margin: float = 10.0,
    region_ratio: float = 0.25,
    near_cells: float = 6.0,
    near_dynamic_range_db: float = 20.0,
    dynamic_range_db: float = 120.0,
    walk_extent: float = 0.0,
) -> list[Detection]:
    """Peak detections in a range-Doppler map.

    A cell is a candidate when it is a 3x3 local maximum above
    ``threshold_factor`` times the median map magnitude (and above the
    receiver dynamic range below the map maximum, which only matters for
    noise-free maps). Candidates are visited strongest first and discarded
    when they

    * lie in the connected region of an accepted peak (cells above
      ``region_ratio`` of that peak),
    * lie within ``near_cells`` resolution cells of an accepted peak on both
      axes while being more than ``near_dynamic_range_db`` weaker, or
    * do not exceed ``sidelobe_margin`` times the window leakage an
      accepted peak produces at their offset, or
    * lie within ``walk_extent`` meters (plus one resolution cell) in range
      and two Doppler cells of an accepted peak. A target that migrates
      through several range cells during one CPI smears into a ridge whose
      AM can break it into separate local maxima; ``walk_extent`` should be
      the largest expected migration, ``max_speed * cpi_duration``.

    Surviving peaks are refined between bins on the exact transform.
    """
    mag = rd_map.magnitude
    floor = float(np.median(mag))
    threshold = max(threshold_factor * floor, float(mag.max()) * 10 ** (-dynamic_range_db / 20))
    if not np.any(mag > threshold):
        return []

    local_max = ndimage.maximum_filter(mag, size=3, mode="nearest") == mag
    cand = np.argwhere(local_max & (mag > threshold))
    # range bin 0 carries DC and negative-range wrap; no target can sit there
    cand = cand[cand[:, 1] > 0]
    order = np.argsort(mag[cand[:, 0], cand[:, 1]])[::-1]
    cand = cand[order]

    n_ramps, n_samp = rd_map.weighted.shape
    n_d, n_r = rd_map.shape
    env_r = _leakage_envelope(rd_map.window, n_samp, n_r)
    env_d = _leakage_envelope(rd_map.window, n_ramps, n_d)
    near_r = near_cells * n_r / n_samp
    near_d = near_cells * n_d / n_ramps
    near_ratio = 10 ** (-near_dynamic_range_db / 20)
    walk_r = walk_extent / rd_map.range_per_bin + n_r / n_samp
    walk_d = 2.0 * n_d / n_ramps

    accepted: list[tuple[int, int]] = []
    regions: list[np.ndarray] = []
    for i, j in cand:
        value = mag[i, j]
        rejected = False
        for (pi, pj), region in zip(accepted, regions):
            if region[i, j]:
                rejected = True
                break
            dd = _wrap(i - pi, n_d)
            if walk_extent > 0 and abs(j - pj) <= walk_r and abs(dd) <= walk_d:
                rejected = True
                break
            if abs(j - pj) <= near_r and abs(dd) <= near_d and value < near_ratio * mag[pi, pj]:
                rejected = True
                break
            leak = mag[pi, pj] * _envelope_at(env_r, j - pj) * _envelope_at(env_d, dd)
            if value <= sidelobe_margin * leak:
                rejected = True
                break
        if rejected:
            continue
        labels, _ = ndimage.label(mag >= max(threshold, region_ratio * value))
        accepted.append((int(i), int(j)))
        regions.append(labels == labels[i, j])

    detections = []
    for i, j in accepted:
        r_bin, d_bin, amp = rd_map.refine_peak(j, i)
        rng = rd_map.bin_to_range(r_bin)
        if rng <= 0 or amp <= 0:
            continue
        detections.append(
            Detection(
                range=rng,
                radial_velocity=rd_map.bin_to_velocity(d_bin),
                amplitude=amp,
                cycle_index=cycle_index,
                range_bin=r_bin,
                doppler_bin=d_bin,
            )
        )
    return detections


def update_tracks(
    tracks: list[Track],
    detections: Sequence[Detection],
    gate_radius: float,
    cycle_time: float,
    coast_limit: int = 3,
    velocity_period: float | None = None,
    max_speed: float = math.inf,
) -> list[Track]:
    """Greedy nearest-neighbour association of one cycle's detections.

    The association distance is Euclidean in ``(range, velocity * T_MC)``;
    velocities are compared modulo ``velocity_period`` when Doppler is
    ambiguous. Unassociated detections start new tracks unless they fall
    inside the gate of a detection associated in the same cycle: near AM
    nulls one echo can split into two range lobes, and the weaker twin
    must not spawn a competing track. Active tracks without a detection
    coast and retire after ``coast_limit`` misses. Retired tracks stay in
    the returned list with ``active=False``.
    """
    tracks = list(tracks)
    active = [t for t in tracks if t.active]
    pairs = []
    for ti, track in enumerate(active):
        for di, det in enumerate(detections):
            predicted = track.predicted_ranges(det.cycle_index, cycle_time, velocity_period, max_speed)
            dr = float(np.min(np.abs(predicted - det.range)))
            dv = _wrap(track.last.radial_velocity - det.radial_velocity, velocity_period)
            dist = math.hypot(dr, dv * cycle_time)
            if dist <= gate_radius:
                pairs.append((dist, ti, di))
    pairs.sort()
    used_t, used_d = set(), set()
    for _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        active[ti].history.append(detections[di])
        active[ti].misses = 0

    for ti, track in enumerate(active):
        if ti not in used_t:
            track.misses += 1
            if track.misses > coast_limit:
                track.active = False

    def shadowed(det: Detection) -> bool:
        for di in used_d:
            other = detections[di]
            dv = _wrap(other.radial_velocity - det.radial_velocity, velocity_period)
            if math.hypot(other.range - det.range, dv * cycle_time) <= gate_radius:
                return True
        return False

    next_id = max((t.track_id for t in tracks), default=-1) + 1
    for di, det in enumerate(detections):
        if di not in used_d and not shadowed(det):
            tracks.append(Track(next_id, [det]))
            next_id += 1
    return tracks


@dataclass(frozen=True)
class AMTrack:
    """Amplitude-modulation samples of one target versus distance."""

    distances: np.ndarray
    amplitudes: np.ndarray
    source: SamplingMode
    sensor_height: float
    wavelength: float
    track_id: int | None = None
    cycle_index: int | None = None

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        a = np.asarray(self.amplitudes, dtype=float)
        if d.shape != a.shape or d.ndim != 1:
            raise ValueError("distances and amplitudes must be 1-D arrays of equal length")
        if d.size < MIN_AM_SAMPLES:
            raise InsufficientObservationError(
                f"insufficient observation: {d.size} AM samples, need >= {MIN_AM_SAMPLES}"
            )
        if np.any(d <= 0):
            raise ValueError("AM sample distances must be > 0")
        step = np.diff(d)
        if not (np.all(step > 0) or np.all(step < 0)):
            raise NonMonotonicDistanceError("AM sample distances are not strictly monotonic")
        d.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "source", SamplingMode(self.source))

    def __len__(self):
        return self.distances.size

    @property
    def center_distance(self) -> float:
        return 0.5 * float(self.distances.min() + self.distances.max())

    @property
    def span(self) -> float:
        return float(self.distances.max() - self.distances.min())


def am_track_from_cycles(track: Track, sensor_height: float, wavelength: float) -> AMTrack:
    """SoMC track: one (range, amplitude) sample per associated cycle.

    Distances come from a constant-velocity least-squares fit of the
    detected ranges over the cycle index. Near deep AM nulls the direct and
    ground-reflected returns partly cancel and the detected range jitters
    by more than the motion between cycles; the fitted ranges stay
    monotonic. A track whose fitted motion does not exceed the scatter of
    its ranges about the fit is rejected as stationary.
    """
    if len(track.history) < MIN_AM_SAMPLES:
        raise InsufficientObservationError(
            f"insufficient observation: track {track.track_id} has {len(track.history)} detections"
        )
    k = track.cycle_indices.astype(float)
    r = np.array([d.range for d in track.history])
    slope, intercept = np.polyfit(k - k.mean(), r, 1)
    fitted = intercept + slope * (k - k.mean())
    scatter = float(np.sqrt(np.mean((r - fitted) ** 2)))
    if not abs(slope) * (k[-1] - k[0]) > scatter:
        raise NonMonotonicDistanceError(
            f"track {track.track_id}: distances are not strictly monotonic (no resolved motion)"
        )
    return AMTrack(
        distances=fitted,
        amplitudes=np.array([d.amplitude for d in track.history]),
        source=SamplingMode.SOMC,
        sensor_height=sensor_height,
        wavelength=wavelength,
        track_id=track.track_id,
    )


def ramp_profiles(cpi: Cpi, window: WindowKind = WindowKind.HANN) -> np.ndarray:
    """Per-ramp range profile magnitudes, zero-padded 4x, as used for SoPRI gating.

    Computing them once per CPI and passing them to every
    :func:`am_track_from_cpi` call of that CPI avoids repeating the FFT.
    """
    n_fft = 4 * next_pow2(cpi.config.samples_per_ramp)
    w = window_coefficients(window, cpi.config.samples_per_ramp)
    return np.abs(np.fft.fft(cpi.beat_samples * w, n_fft, axis=1)) / w.sum()


def am_track_from_cpi(
    cpi: Cpi,
    detection: Detection,
    sensor_height: float,
    wavelength: float,
    window: WindowKind = WindowKind.HANN,
    search_cells: float = 3.0,
    profiles: np.ndarray | None = None,
) -> AMTrack:
    """SoPRI track: one amplitude per ramp at the target's moving range gate.

    ``detection.radial_velocity`` must already be unambiguous. The gate
    follows ``d[n] = d0 + v*n*T_PRI``; ``d0`` maximises the walk-compensated
    sum of the per-ramp range profiles around the detected range, and each
    amplitude is the exact windowed transform of its ramp at ``d[n]``.
    """
    config = cpi.config
    n_ramps = config.ramps_per_cpi
    v = detection.radial_velocity
    if not (0 < detection.range < config.max_range):
        raise ValueError(
            f"detection range {detection.range:.3f} m outside the map (0, {config.max_range:.3f}) m"
        )
    if n_ramps < MIN_AM_SAMPLES:
        raise InsufficientObservationError(
            f"insufficient observation: CPI has {n_ramps} ramps, need >= {MIN_AM_SAMPLES}"
        )
    if v == 0 or abs(v) * config.ramp_repetition_interval <= 1e-12 * detection.range:
        raise NonMonotonicDistanceError("zero radial velocity gives non-monotonic AM distances")

    n = np.arange(n_ramps)
    offsets = v * (n - 0.5 * (n_ramps - 1)) * config.ramp_repetition_interval
    n_fft = 4 * next_pow2(config.samples_per_ramp)
    range_per_bin = config.max_range / n_fft
    if profiles is None:
        profiles = ramp_profiles(cpi, window)

    # non-coherent integration along the predicted walk
    c0 = detection.range / range_per_bin
    span = search_cells * config.range_resolution / range_per_bin
    trial = np.arange(math.floor(c0 - span), math.ceil(c0 + span) + 1)
    trial = trial[(trial > 0) & (trial < n_fft - 1)]
    shift = offsets / range_per_bin
    pos = np.clip(trial[None, :] + shift[:, None], 0, n_fft - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_fft - 2)
    frac = pos - lo
    rows = np.arange(n_ramps)[:, None]
    score = np.sum((1.0 - frac) * profiles[rows, lo] + frac * profiles[rows, lo + 1], axis=0)
    k = int(np.argmax(score))
    center = float(trial[k])
    if 0 < k < score.size - 1:
        a, b, c = score[k - 1 : k + 2]
        denom = a - 2 * b + c
        if denom < 0:
            center += 0.5 * (a - c) / denom
    d_center = center * range_per_bin
    distances = d_center + offsets

    # exact per-ramp transform at the gate
    w = window_coefficients(window, config.samples_per_ramp)
    nu = distances / config.max_range  # cycles per sample
    kernel = tone_rows(np.zeros(n_ramps), -2.0 * np.pi * nu, config.samples_per_ramp)
    amplitudes = np.abs(np.einsum("nm,nm->n", cpi.beat_samples * w[None, :], kernel)) / w.sum()

    return AMTrack(
        distances=distances,
        amplitudes=amplitudes,
        source=SamplingMode.SOPRI,
        sensor_height=sensor_height,
        wavelength=wavelength,
        cycle_index=detection.cycle_index,
    )
