"""Per-frame point-cloud recovery: range/Doppler FFTs, noncoherent integration,
2D cell-averaging CFAR, TDM Doppler-phase compensation, and FFT beamforming
over the 4x4 virtual array."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .config import CfarParams, RadarConfig
from .errors import ConfigError, DegenerateInputError
from .sim import FrameCube


@dataclass
class RangeDopplerCube:
    """Complex range-Doppler data, (virtual channel, Doppler bin, range bin)."""

    data: np.ndarray
    range_bin_m: float
    doppler_bin_mps: float
    zero_doppler_bin: int


@dataclass
class DetectionCell:
    range_bin: int
    doppler_bin: int
    power: float
    snapshot: np.ndarray | None = field(default=None, repr=False)  # (n_virtual,) complex


@dataclass
class Point:
    r: float
    v: float
    azimuth: float
    elevation: float
    amplitude: float


@dataclass
class PointCloud:
    frame_index: int
    points: list

    def max_speed(self) -> float:
        return max((abs(p.v) for p in self.points), default=0.0)


def range_fft(cube: FrameCube, cfg: RadarConfig) -> np.ndarray:
    """Hann-windowed fast-time FFT, unitary scaling so Parseval holds per row."""
    data = cube.data
    expected = (cfg.n_virtual, cfg.chirps_per_tx, cfg.samples_per_chirp)
    if data.shape != expected:
        raise ConfigError(f"frame shape {data.shape} does not match config {expected}")
    n = cfg.samples_per_chirp
    win = np.hanning(n)
    return np.fft.fft(data * win, axis=-1) / math.sqrt(n)


def doppler_fft(range_cube: np.ndarray, cfg: RadarConfig) -> RangeDopplerCube:
    """Hann-windowed, fftshifted per-TX slow-time FFT; zero velocity at the center bin."""
    n = cfg.chirps_per_tx
    win = np.hanning(n)
    out = np.fft.fft(range_cube * win[None, :, None], axis=1) / math.sqrt(n)
    out = np.fft.fftshift(out, axes=1)
    return RangeDopplerCube(
        data=out,
        range_bin_m=cfg.range_resolution,
        doppler_bin_mps=cfg.velocity_resolution,
        zero_doppler_bin=cfg.zero_doppler_bin,
    )


def integrate(rd: RangeDopplerCube) -> np.ndarray:
    """Noncoherent power integration across virtual channels."""
    return np.sum(np.abs(rd.data) ** 2, axis=0)


def _clipped_box(values: np.ndarray, radius: int):
    """Box sums over a (2r+1)^2 window clipped at the map edges, plus cell counts."""
    n0, n1 = values.shape
    s = np.zeros((n0 + 1, n1 + 1))
    s[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    i = np.arange(n0)
    j = np.arange(n1)
    lo0 = np.clip(i - radius, 0, n0 - 1)
    hi0 = np.clip(i + radius, 0, n0 - 1)
    lo1 = np.clip(j - radius, 0, n1 - 1)
    hi1 = np.clip(j + radius, 0, n1 - 1)
    sums = (
        s[np.ix_(hi0 + 1, hi1 + 1)]
        - s[np.ix_(lo0, hi1 + 1)]
        - s[np.ix_(hi0 + 1, lo1)]
        + s[np.ix_(lo0, lo1)]
    )
    counts = np.outer(hi0 - lo0 + 1, hi1 - lo1 + 1)
    return sums, counts


def cfar_threshold_map(power: np.ndarray, params: CfarParams) -> np.ndarray:
    """Per-cell CA-CFAR threshold with edge-clipped training rings.

    alpha = N * (pfa^(-1/N) - 1) with N the per-cell training count, so the
    configured false-alarm rate holds exactly for exponential noise.
    """
    size = 2 * (params.guard + params.train) + 1
    if min(power.shape) < size:
        raise ConfigError(
            f"power map {power.shape} smaller than the CFAR window ({size} per axis)"
        )
    outer_sum, outer_cnt = _clipped_box(power, params.guard + params.train)
    inner_sum, inner_cnt = _clipped_box(power, params.guard)
    train_sum = outer_sum - inner_sum
    n_train = outer_cnt - inner_cnt
    noise = train_sum / n_train
    alpha = n_train * (params.pfa ** (-1.0 / n_train) - 1.0)
    return alpha * noise


def cfar_detect(
    power: np.ndarray,
    params: CfarParams,
    rd: RangeDopplerCube | None = None,
) -> list:
    """CA-CFAR detections gated on being 3x3 local maxima; attaches per-channel
    snapshots when the range-Doppler cube is supplied."""
    threshold = cfar_threshold_map(power, params)
    local_max = power >= maximum_filter(power, size=3, mode="constant", cval=-np.inf)
    mask = (power > threshold) & local_max
    cells = []
    for d, r in zip(*np.nonzero(mask)):
        snap = rd.data[:, d, r].copy() if rd is not None else None
        cells.append(DetectionCell(int(r), int(d), float(power[d, r]), snap))
    return cells


def compensate_tdm(cell: DetectionCell, cfg: RadarConfig) -> np.ndarray:
    """Undo the per-TX time offset of the round-robin for a moving detection.

    Returns the corrected (n_tx, n_rx) snapshot; zero-Doppler cells are unchanged.
    """
    if cell.snapshot is None:
        raise DegenerateInputError("detection cell carries no channel snapshot")
    snap = cell.snapshot.reshape(cfg.n_tx, cfg.n_rx)
    v = (cell.doppler_bin - cfg.zero_doppler_bin) * cfg.velocity_resolution
    f_d = 2.0 * v / cfg.wavelength
    m = np.arange(cfg.n_tx)
    correction = np.exp(-1j * 2.0 * np.pi * f_d * m * cfg.chirp_slot_time)
    return snap * correction[:, None]


def estimate_angles(snapshot: np.ndarray, n_fft: int = 64):
    """Direction estimate by zero-padded 2D FFT beamforming over the virtual array.

    Returns (azimuth, elevation, amplitude); the peak bin maps to direction
    sines u = sin(az) cos(el) (RX axis) and w = sin(el) (TX axis).
    """
    snap = np.asarray(snapshot)
    if not np.any(snap):
        raise DegenerateInputError("all-zero snapshot has no direction information")
    n_tx, n_rx = snap.shape
    spec = np.fft.fftshift(np.fft.fft2(snap, s=(n_fft, n_fft)))
    i, j = np.unravel_index(np.argmax(np.abs(spec)), spec.shape)
    half = n_fft // 2
    w = (i - half) / half
    u = (j - half) / half
    elevation = math.asin(np.clip(w, -1.0, 1.0))
    cos_el = math.cos(elevation)
    azimuth = math.asin(np.clip(u / cos_el if cos_el > 1e-12 else 0.0, -1.0, 1.0))
    amplitude = float(np.abs(spec[i, j])) / (n_tx * n_rx)
    return azimuth, elevation, amplitude


def extract_point_cloud(
    cube: FrameCube, cfg: RadarConfig, cfar: CfarParams = CfarParams()
) -> PointCloud:
    """Full per-frame chain: FFTs, integration, CFAR, TDM fix, angle estimation."""
    rc = range_fft(cube, cfg)
    rd = doppler_fft(rc, cfg)
    power = integrate(rd)
    cells = cfar_detect(power, cfar, rd)
    points = []
    for cell in cells:
        snap = compensate_tdm(cell, cfg)
        azimuth, elevation, amplitude = estimate_angles(snap)
        points.append(
            Point(
                r=cell.range_bin * cfg.range_resolution,
                v=(cell.doppler_bin - cfg.zero_doppler_bin) * cfg.velocity_resolution,
                azimuth=azimuth,
                elevation=elevation,
                amplitude=amplitude,
            )
        )
    return PointCloud(frame_index=cube.frame_index, points=points)


def point_cloud_to_dict(pc: PointCloud) -> dict:
    """NDJSON record layout: one line per frame."""
    return {
        "frame": pc.frame_index,
        "points": [
            {
                "r": round(p.r, 6),
                "v": round(p.v, 6),
                "az_deg": round(math.degrees(p.azimuth), 3),
                "el_deg": round(math.degrees(p.elevation), 3),
                "amp": round(p.amplitude, 6),
            }
            for p in pc.points
        ],
    }
