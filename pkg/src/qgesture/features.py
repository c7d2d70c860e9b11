"""Point-cloud dimension reduction to time-spectrum features and the
sliding-window gesture capture trigger.

Each frame's point cloud collapses to four 64-bin amplitude columns (range,
Doppler, azimuth, elevation). A ring buffer of the last 30 frames feeds the
burst trigger: a frame is active when its maximum radial speed exceeds
0.3 m/s, and a window is emitted when a burst of more than 5 active frames
ends (two consecutive inactive frames)."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import FeatureParams, RadarConfig
from .errors import InvalidInputError
from .dsp import PointCloud

AXIS_KINDS = ("range", "doppler", "azimuth", "elevation")
CHANNEL_ORDER = ("dta", "ata", "eta")  # CNN input planes


@dataclass
class FeatureColumn:
    kind: str
    values: np.ndarray          # (n_bins,) linear amplitude, >= 0
    frame_index: int


@dataclass
class FeatureWindow:
    """Normalized 3-channel (DTA, ATA, ETA) spectrogram window, values in [0, 1]."""

    values: np.ndarray          # (3, n_bins, window_frames) float32
    label: str | None = None
    meta: dict = field(default_factory=dict)


def axis_limits(kind: str, cfg: RadarConfig, params: FeatureParams):
    """(lo, hi) of the binned coordinate for one axis kind."""
    if kind == "range":
        return 0.0, params.range_bins_kept * cfg.range_resolution
    if kind == "doppler":
        return -cfg.max_velocity, cfg.max_velocity
    if kind in ("azimuth", "elevation"):
        return -1.0, 1.0
    raise InvalidInputError(f"unknown feature axis {kind!r}")


def reduce_axis(
    pc: PointCloud, kind: str, cfg: RadarConfig, params: FeatureParams = FeatureParams()
) -> FeatureColumn:
    """Amplitude-weighted histogram of the cloud along one axis; out-of-range
    coordinates clamp to the edge bins."""
    lo, hi = axis_limits(kind, cfg, params)
    values = np.zeros(params.n_bins)
    if pc.points:
        if kind == "range":
            coords = np.array([p.r for p in pc.points])
        elif kind == "doppler":
            coords = np.array([p.v for p in pc.points])
        elif kind == "azimuth":
            coords = np.array([math.sin(p.azimuth) * math.cos(p.elevation) for p in pc.points])
        else:
            coords = np.array([math.sin(p.elevation) for p in pc.points])
        amps = np.array([p.amplitude for p in pc.points])
        bins = np.floor((coords - lo) / (hi - lo) * params.n_bins).astype(int)
        bins = np.clip(bins, 0, params.n_bins - 1)
        np.add.at(values, bins, amps)
    return FeatureColumn(kind=kind, values=values, frame_index=pc.frame_index)


class CaptureState:
    """Single-writer streaming state: ring buffer of feature columns plus
    burst bookkeeping for the capture trigger."""

    def __init__(self, cfg: RadarConfig, params: FeatureParams = FeatureParams()):
        self.cfg = cfg
        self.params = params
        self.buffer = deque(maxlen=params.window_frames)  # (frame_index, dta, ata, eta)
        self.max_speed_history = deque(maxlen=params.window_frames)
        self.in_burst = False
        self.active_count = 0
        self.inactive_count = 0
        self.burst_start = None
        self.last_active = None

    def push_frame(self, pc: PointCloud) -> "CaptureState":
        dta = reduce_axis(pc, "doppler", self.cfg, self.params)
        ata = reduce_axis(pc, "azimuth", self.cfg, self.params)
        eta = reduce_axis(pc, "elevation", self.cfg, self.params)
        self.buffer.append((pc.frame_index, dta.values, ata.values, eta.values))
        max_speed = pc.max_speed()
        self.max_speed_history.append(max_speed)
        if max_speed > self.params.velocity_threshold:
            if not self.in_burst:
                self.in_burst = True
                self.active_count = 0
                self.burst_start = pc.frame_index
            self.active_count += 1
            self.inactive_count = 0
            self.last_active = pc.frame_index
        elif self.in_burst:
            self.inactive_count += 1
        return self

    def try_capture(self):
        """Emit the raw (unnormalized) window if a qualifying burst just ended."""
        if not (self.in_burst and self.inactive_count >= self.params.hangover_frames):
            return None
        qualified = self.active_count > self.params.min_active_frames
        stats = {
            "burst_start": self.burst_start,
            "burst_end": self.last_active,
            "active_frames": self.active_count,
            "peak_speed": float(max(self.max_speed_history, default=0.0)),
        }
        self.in_burst = False
        self.active_count = 0
        self.inactive_count = 0
        if not qualified:
            return None

        n_bins = self.params.n_bins
        n_frames = self.params.window_frames
        mid = (stats["burst_start"] + stats["burst_end"]) // 2
        first = mid - n_frames // 2
        columns = {fi: (d, a, e) for fi, d, a, e in self.buffer}
        raw = np.zeros((3, n_bins, n_frames))
        for slot in range(n_frames):
            cols = columns.get(first + slot)
            if cols is not None:
                raw[0, :, slot] = cols[0]
                raw[1, :, slot] = cols[1]
                raw[2, :, slot] = cols[2]
        stats["window_start"] = first
        return raw, stats


def normalize(
    raw: np.ndarray, dynamic_range_db: float = 40.0, label=None, meta=None
) -> FeatureWindow:
    """Log-compress each channel over its own 40 dB below peak and map to [0, 1].

    Channels without any nonzero value come out all-zero. The mapping is
    invariant to positive scaling of a channel.
    """
    raw = np.asarray(raw, dtype=float)
    out = np.zeros_like(raw)
    for c in range(raw.shape[0]):
        chan = raw[c]
        if not np.any(chan > 0):
            continue
        db = 20.0 * np.log10(chan + 1e-6)
        peak = db.max()
        floor = peak - dynamic_range_db
        out[c] = (np.clip(db, floor, peak) - floor) / dynamic_range_db
    return FeatureWindow(values=out.astype(np.float32), label=label, meta=dict(meta or {}))


def write_pgm(path, channel: np.ndarray) -> None:
    """Write one feature channel as binary PGM (P5, maxval 255).

    Storage order is (bin, frame); the image is written with 64 columns (bins)
    and 30 rows (frames), i.e. transposed so time runs down the image.
    """
    img = np.round(255.0 * np.clip(channel.T, 0.0, 1.0)).astype(np.uint8)
    h, w = img.shape
    header = (
        b"P5\n"
        b"# rows are frames, columns are bins; transposed from (bin, frame) storage\n"
        + f"{w} {h}\n255\n".encode()
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())


def export_window_images(window: FeatureWindow, out_dir, sample_id: str) -> list:
    """Write one PGM per channel, named <sample-id>_{dta|ata|eta}.pgm."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, name in enumerate(CHANNEL_ORDER):
        path = out_dir / f"{sample_id}_{name}.pgm"
        write_pgm(path, window.values[c])
        paths.append(path)
    return paths
