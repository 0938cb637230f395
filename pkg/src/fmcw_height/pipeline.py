"""Run a scene through simulation, extraction and height estimation."""
from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FmcwHeightError, LinearizationError
from .estimation import (
    HeightEstimate,
    HeightGrid,
    HeightSpectrum,
    SpectrumMethod,
    estimate_height,
    linearized_fft_psd,
    nedft_psd,
    preprocess,
)
from .extraction import (
    MIN_AM_SAMPLES,
    AMTrack,
    Detection,
    SamplingMode,
    Track,
    am_track_from_cpi,
    am_track_from_cycles,
    detect_targets,
    ramp_profiles,
    unwrap_velocity,
    update_tracks,
)
from .fmcw import RadarConfig, TargetSpec, WindowKind, range_doppler_map, synthesize_cpi
from .geometry import GroundModel, ScatteringModel

log = logging.getLogger(__name__)

__all__ = ["ProcessingOptions", "EstimateRecord", "RunResult", "simulate_and_estimate", "estimate_track"]


@dataclass(frozen=True)
class ProcessingOptions:
    map_window: WindowKind = WindowKind.HANN
    spectral_window: WindowKind = WindowKind.RECTANGULAR
    threshold_factor: float = 8.0
    gate_radius: float | None = None  # default 3 range resolutions
    coast_limit: int = 3
    max_speed: float = 50.0
    grid: HeightGrid = field(default_factory=HeightGrid.uniform)
    method: SpectrumMethod | None = None  # default by sampling mode
    range_fft_size: int | None = None
    doppler_fft_size: int | None = None


@dataclass
class EstimateRecord:
    track_id: int
    target_id: int | None
    true_height: float
    cycle: int | None
    estimate: HeightEstimate
    spectrum: HeightSpectrum
    raw_track: AMTrack
    processed_track: AMTrack
    method: SpectrumMethod


@dataclass
class RunResult:
    mode: SamplingMode
    records: list[EstimateRecord]
    tracks: list[Track]
    skipped: list[tuple[int, str]]
    timings: dict[str, float]
    n_cycles: int


def estimate_track(
    track: AMTrack,
    scattering: ScatteringModel,
    range_resolution: float,
    grid: HeightGrid,
    method: SpectrumMethod = SpectrumMethod.NEDFT,
    window: WindowKind = WindowKind.RECTANGULAR,
) -> tuple[AMTrack, HeightSpectrum, HeightEstimate, SpectrumMethod]:
    """Preprocess, transform and estimate one AM track.

    The linearised FFT falls back to the non-equidistant DFT when the
    interval is too long for linearisation.
    """
    processed = preprocess(track)
    if method is SpectrumMethod.LINEARIZED_FFT:
        try:
            spectrum = linearized_fft_psd(processed, grid, window)
        except LinearizationError as exc:
            log.debug("falling back to NEDFT: %s", exc)
            method = SpectrumMethod.NEDFT
            spectrum = nedft_psd(processed, grid, window)
    else:
        spectrum = nedft_psd(processed, grid, window)
    estimate = estimate_height(
        spectrum, track.sensor_height, track.wavelength, scattering, range_resolution, track
    )
    return processed, spectrum, estimate, method


def _assign_targets(
    detections: Sequence[Detection], targets: Sequence[TargetSpec], t: float, tolerance: float
) -> list[int | None]:
    """One-to-one nearest assignment of detections to true target ranges at ``t``.

    Each target claims at most one detection, its closest within
    ``tolerance``; ground-mirror ghosts and other extras stay unassigned.
    """
    out: list[int | None] = [None] * len(detections)
    if not detections:
        return out
    truth = np.array([tg.distance_at(t) for tg in targets])
    ranges = np.array([det.range for det in detections])
    cost = np.abs(ranges[:, None] - truth[None, :])
    for flat in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(flat), truth.size)
        if cost[i, j] > tolerance:
            break
        if out[i] is None and j not in out:
            out[i] = j
    return out


def _match_track(
    track: Track, targets: Sequence[TargetSpec], cycle_time: float, cpi_mid: float, tolerance: float
) -> int | None:
    """Majority target over all detections of a track."""
    votes: dict[int, int] = defaultdict(int)
    for det in track.history:
        (tid,) = _assign_targets([det], targets, det.cycle_index * cycle_time + cpi_mid, tolerance)
        if tid is not None:
            votes[tid] += 1
    if not votes or 2 * max(votes.values()) < len(track.history):
        return None
    return min(votes, key=lambda tid: (-votes[tid], tid))


def simulate_and_estimate(
    config: RadarConfig,
    targets: Sequence[TargetSpec],
    ground: GroundModel,
    sensor_height: float,
    n_cycles: int,
    mode: SamplingMode = SamplingMode.SOMC,
    options: ProcessingOptions = ProcessingOptions(),
    seed: int | None = 0,
) -> RunResult:
    """Full chain over ``n_cycles`` measurement cycles.

    Scattering models are ground truth of the scene; the estimator is told
    each track's model through its matched target, matching the fact that
    the retroreflector correction is a property of the verification target.
    """
    mode = SamplingMode(mode)
    rng = np.random.default_rng(seed)
    gate = options.gate_radius or 3.0 * config.range_resolution
    dt = config.measurement_cycle
    period = 2.0 * config.unambiguous_velocity
    method = options.method or (
        SpectrumMethod.NEDFT if mode is SamplingMode.SOMC else SpectrumMethod.LINEARIZED_FFT
    )
    walk = options.max_speed * config.cpi_duration
    timings = defaultdict(float)

    tracks: list[Track] = []
    records: list[EstimateRecord] = []
    skipped: list[tuple[int, str]] = []
    pending = []  # SoPRI tracks awaiting truth matching
    for k in range(n_cycles):
        t0 = time.perf_counter()
        cpi = synthesize_cpi(config, targets, ground, sensor_height, k * dt, rng)
        t1 = time.perf_counter()
        rd = range_doppler_map(cpi, options.map_window, options.range_fft_size, options.doppler_fft_size)
        detections = detect_targets(rd, options.threshold_factor, cycle_index=k, walk_extent=walk)
        t2 = time.perf_counter()
        tracks = update_tracks(
            tracks, detections, gate, dt, options.coast_limit, velocity_period=period, max_speed=options.max_speed
        )
        t3 = time.perf_counter()
        timings["simulate"] += t1 - t0
        timings["detect"] += t2 - t1
        timings["track"] += t3 - t2

        if mode is SamplingMode.SOPRI:
            profiles = None
            for track in tracks:
                if not track.active or track.last.cycle_index != k:
                    continue
                rate = track.range_rate(dt)
                if rate is None:
                    continue
                det = track.last
                v = unwrap_velocity(det.radial_velocity, rate, period)
                det_v = Detection(det.range, v, det.amplitude, det.cycle_index, det.range_bin, det.doppler_bin)
                if profiles is None:
                    profiles = ramp_profiles(cpi, options.map_window)
                try:
                    am = am_track_from_cpi(
                        cpi, det_v, sensor_height, config.wavelength, options.map_window, profiles=profiles
                    )
                except FmcwHeightError as exc:
                    skipped.append((track.track_id, f"cycle {k}: {exc}"))
                    continue
                pending.append((track, k, am, det_v))
            timings["estimate"] += time.perf_counter() - t3

    t_est = time.perf_counter()
    cpi_mid = 0.5 * config.cpi_duration

    def _finish(track: Track, cycle: int | None, am: AMTrack, target_id: int | None):
        scattering = targets[target_id].scattering if target_id is not None else ScatteringModel.ISOTROPIC
        true_height = targets[target_id].height if target_id is not None else math.nan
        try:
            processed, spectrum, estimate, used = estimate_track(
                am, scattering, config.range_resolution, options.grid, method, options.spectral_window
            )
        except FmcwHeightError as exc:
            skipped.append((track.track_id, f"cycle {cycle}: {exc}" if cycle is not None else str(exc)))
            return
        records.append(
            EstimateRecord(track.track_id, target_id, true_height, cycle, estimate, spectrum, am, processed, used)
        )

    if mode is SamplingMode.SOMC:
        for track in tracks:
            if len(track.history) < MIN_AM_SAMPLES:
                continue
            try:
                am = am_track_from_cycles(track, sensor_height, config.wavelength)
            except FmcwHeightError as exc:
                skipped.append((track.track_id, str(exc)))
                continue
            _finish(track, None, am, _match_track(track, targets, dt, cpi_mid, gate))
    else:
        by_cycle = defaultdict(list)
        for item in pending:
            by_cycle[item[1]].append(item)
        for k in sorted(by_cycle):
            items = by_cycle[k]
            ids = _assign_targets([det for _, _, _, det in items], targets, k * dt + cpi_mid, gate)
            for (track, _, am, _), tid in zip(items, ids):
                _finish(track, k, am, tid)
    timings["estimate"] += time.perf_counter() - t_est

    return RunResult(mode, records, tracks, skipped, dict(timings), n_cycles)
