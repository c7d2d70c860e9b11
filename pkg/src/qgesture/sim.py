"""Gesture trajectory synthesis and raw FMCW TDM-MIMO frame rendering.

A gesture is modelled as a hand centroid moving on a smooth 3D path with a
small cloud of rigid scattering centers around it. Frames are rendered with
the dechirped (beat-signal) model: each scatterer contributes a fast-time
beat tone, a slow-time Doppler phase, and per-virtual-channel array phases.

Coordinate frame: radar at the origin, y is boresight depth, x lateral
(positive azimuth), z vertical (positive elevation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import SPEED_OF_LIGHT, RadarConfig
from .errors import InvalidInputError

GESTURE_CLASSES = (
    "wave up",
    "wave down",
    "wave left",
    "wave right",
    "push",
    "pull",
    "circle clockwise",
    "circle anticlockwise",
    "double-click",
    "double-push",
)

# Radial speeds are amplitude-planned so gestures stay inside the unambiguous
# velocity (+-1.54 m/s at defaults) with margin even for fast user profiles.
_RADIAL_SPEED_CAP = 1.35


class AliasingWarning(UserWarning):
    """A scatterer exceeds the unambiguous range or velocity; it is rendered aliased."""


def canonical_gesture(name: str) -> str:
    """Map spelling variants (underscores, hyphens, case) onto the canonical class name."""
    key = name.strip().lower().replace("_", " ").replace("-", " ")
    for cls in GESTURE_CLASSES:
        if cls.replace("-", " ") == key:
            return cls
    raise InvalidInputError(
        f"unknown gesture class {name!r}; expected one of {', '.join(GESTURE_CLASSES)}"
    )


@dataclass
class ScattererState:
    """One moving scattering center at a single instant."""

    r: float                 # m
    azimuth: float           # rad
    elevation: float         # rad
    velocity: float          # radial, m/s (positive = receding)
    amplitude: complex       # complex scattering amplitude

    def __post_init__(self):
        if self.r <= 0:
            raise InvalidInputError("scatterer range must be positive")
        if abs(self.azimuth) >= math.pi / 2 or abs(self.elevation) >= math.pi / 2:
            raise InvalidInputError("scatterer angles must lie in (-90, 90) degrees")


@dataclass(frozen=True)
class TrajectoryParams:
    """Randomization bounds for gesture trajectories (user profiles scale these)."""

    scale: float = 1.0               # spatial extent multiplier
    speed: float = 1.0               # tempo multiplier (shortens duration)
    start_range: tuple = (0.8, 1.2)  # m, interaction distance
    start_azimuth_deg: tuple = (-10.0, 10.0)
    start_elevation_deg: tuple = (-5.0, 5.0)
    range_bias: float = 0.0
    azimuth_bias_deg: float = 0.0
    n_scatterers: tuple = (3, 5)
    scatter_spread: float = 0.025    # m, rigid offset std around the centroid
    amplitude: float = 1.0
    amp_jitter_db: float = 3.0


@dataclass
class GestureTrajectory:
    """Per-frame scatterer states of one gesture performance."""

    label: str
    duration: float
    seed: int
    frame_rate: float
    frames: list                      # list of list[ScattererState]
    stroke: tuple                     # (t0, t1) of the primary stroke, seconds
    centroid: np.ndarray = field(repr=False, default=None)  # (n_frames, 3) positions
    centroid_velocity: np.ndarray = field(repr=False, default=None)  # (n_frames, 3)


@dataclass
class FrameCube:
    """One frame of raw complex baseband samples, (virtual channel, chirp, sample)."""

    data: np.ndarray
    frame_index: int
    config_hash: str


# ---------------------------------------------------------------------------
# motion primitives: each returns (value(t), dvalue/dt(t)) vectorized over t
# ---------------------------------------------------------------------------

def _ramp(t, t0, t1):
    """Half-cosine 0 -> 1 transition on [t0, t1]."""
    tau = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    s = 0.5 * (1.0 - np.cos(np.pi * tau))
    inside = (t > t0) & (t < t1)
    ds = np.where(inside, np.pi / (2.0 * (t1 - t0)) * np.sin(np.pi * tau), 0.0)
    return s, ds


def _bump(t, t0, t1):
    """sin^2 pulse: 0 -> 1 -> 0 on [t0, t1]."""
    tau = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    s = np.sin(np.pi * tau) ** 2
    inside = (t > t0) & (t < t1)
    ds = np.where(inside, np.pi / (t1 - t0) * np.sin(2.0 * np.pi * tau), 0.0)
    return s, ds


def _pulses(t, t0, t1, cycles):
    """Periodic sin^2 pulses: `cycles` full 0 -> 1 -> 0 excursions on [t0, t1].

    Unlike _osc there is no envelope, so radial speed stays high through the
    whole window except for sub-frame zero crossings (keeps bursts unbroken)."""
    width = t1 - t0
    tau = np.clip((t - t0) / width, 0.0, 1.0)
    s = np.sin(np.pi * cycles * tau) ** 2
    inside = (t > t0) & (t < t1)
    ds = np.where(inside, np.pi * cycles / width * np.sin(2.0 * np.pi * cycles * tau), 0.0)
    return s, ds


def _osc(t, t0, t1, cycles, phase):
    """Enveloped oscillation sin^2(pi tau) * sin(2 pi cycles tau + phase) on [t0, t1]."""
    width = t1 - t0
    tau = np.clip((t - t0) / width, 0.0, 1.0)
    env = np.sin(np.pi * tau) ** 2
    arg = 2.0 * np.pi * cycles * tau + phase
    s = env * np.sin(arg)
    inside = (t > t0) & (t < t1)
    denv = np.pi / width * np.sin(2.0 * np.pi * tau)
    ds = np.where(inside, denv * np.sin(arg) + env * np.cos(arg) * 2.0 * np.pi * cycles / width, 0.0)
    return s, ds


class _Motion:
    """Sum of direction-vector-weighted scalar primitives, with exact derivative."""

    def __init__(self, origin):
        self.origin = np.asarray(origin, dtype=float)
        self.terms = []  # (vec3, fn(t) -> (s, ds))

    def add(self, direction, fn):
        self.terms.append((np.asarray(direction, dtype=float), fn))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        pos = np.broadcast_to(self.origin, t.shape + (3,)).copy()
        vel = np.zeros(t.shape + (3,))
        for direction, fn in self.terms:
            s, ds = fn(t)
            pos += s[..., None] * direction
            vel += ds[..., None] * direction
        return pos, vel


def _build_motion(label: str, rng: np.random.Generator, params: TrajectoryParams):
    """Construct the centroid motion, its duration, and the stroke interval."""
    sc = params.scale

    def urand(lo, hi):
        return float(rng.uniform(lo, hi))

    r0 = urand(*params.start_range) + params.range_bias
    az0 = math.radians(urand(*params.start_azimuth_deg) + params.azimuth_bias_deg)
    el0 = math.radians(urand(*params.start_elevation_deg))
    x0 = r0 * math.sin(az0)
    z0 = r0 * math.sin(el0)
    y0 = math.sqrt(max(r0 * r0 - x0 * x0 - z0 * z0, 1e-6))
    origin = np.array([x0, y0, z0])

    def vcap(lo, hi):
        return min(urand(lo, hi) * sc, _RADIAL_SPEED_CAP)

    ex, ey, ez = np.eye(3)

    if label in ("push", "pull"):
        # one continuous in-out (or out-in) excursion; the zero crossing at the
        # turnaround is shorter than a frame so the burst stays unbroken
        duration = urand(0.8, 1.0) / params.speed
        stroke_len = urand(0.38, 0.44) / params.speed
        win = (0.1 * duration, 0.1 * duration + stroke_len)
        vp = vcap(1.2, 1.3)
        depth = vp * (win[1] - win[0]) / math.pi
        sign = -1.0 if label == "push" else 1.0
        m = _Motion(origin)
        m.add(sign * depth * ey, lambda t, w=win: _bump(t, *w))
        stroke = (win[0], 0.5 * (win[0] + win[1]))  # the forward half of the excursion
    elif label in ("wave left", "wave right", "wave up", "wave down"):
        duration = urand(0.7, 0.9) / params.speed
        win = (0.12 * duration, 0.88 * duration)
        sign = 1.0 if label in ("wave right", "wave up") else -1.0
        axis = ex if label in ("wave left", "wave right") else ez
        sweep = (urand(0.35, 0.5) if axis is ex else urand(0.3, 0.42)) * sc
        vw = vcap(0.85, 1.1)
        wobble = vw * (win[1] - win[0]) / (math.pi * 2.0)
        m = _Motion(origin - sign * 0.5 * sweep * axis)
        m.add(sign * sweep * axis, lambda t, w=win: _ramp(t, *w))
        m.add(-wobble * ey, lambda t, w=win: _pulses(t, *w, cycles=2.0))
        stroke = win
    elif label in ("circle clockwise", "circle anticlockwise"):
        duration = urand(0.8, 1.0) / params.speed
        win = (0.1 * duration, 0.9 * duration)
        radius = urand(0.12, 0.18) * sc
        vw = vcap(0.85, 1.1)
        wobble = vw * (win[1] - win[0]) / (math.pi * 2.0)
        zsign = 1.0 if label == "circle clockwise" else -1.0
        m = _Motion(origin)
        # azimuth trace leads (sin), elevation trace follows a quarter period behind
        m.add(radius * ex, lambda t, w=win: _osc(t, *w, cycles=1.0, phase=0.0))
        m.add(zsign * radius * ez, lambda t, w=win: _osc(t, *w, cycles=1.0, phase=math.pi / 2.0))
        m.add(-wobble * ey, lambda t, w=win: _pulses(t, *w, cycles=2.0))
        stroke = win
    elif label in ("double-click", "double-push"):
        duration = urand(0.9, 1.1) / params.speed
        if label == "double-click":
            vp = vcap(0.95, 1.1)
            pulse_frac, gap_frac, lead = 0.26, 0.01, 0.12
        else:
            vp = vcap(1.15, 1.3)
            pulse_frac, gap_frac, lead = 0.30, 0.01, 0.08
        tp = pulse_frac * duration
        w1 = (lead * duration, lead * duration + tp)
        w2 = (w1[1] + gap_frac * duration, w1[1] + gap_frac * duration + tp)
        depth = vp * tp / math.pi
        m = _Motion(origin)
        m.add(-depth * ey, lambda t, w=w1: _bump(t, *w))
        m.add(-depth * ey, lambda t, w=w2: _bump(t, *w))
        if label == "double-click":
            # finger-tap vertical dip distinguishes the click in the elevation trace
            m.add(-0.3 * depth * ez, lambda t, w=w1: _bump(t, *w))
            m.add(-0.3 * depth * ez, lambda t, w=w2: _bump(t, *w))
        stroke = (w1[0], w2[1])
    else:  # pragma: no cover - guarded by canonical_gesture
        raise InvalidInputError(f"unknown gesture class {label!r}")

    duration = float(np.clip(duration, 0.5, 1.2))
    return m, duration, stroke


def make_trajectory(
    gesture: str,
    seed: int,
    params: TrajectoryParams = TrajectoryParams(),
    frame_rate: float = 20.0,
) -> GestureTrajectory:
    """Generate one deterministic gesture performance sampled at the frame rate."""
    label = canonical_gesture(gesture)
    class_index = GESTURE_CLASSES.index(label)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), class_index, 0x51C3]))

    motion, duration, stroke = _build_motion(label, rng, params)
    n_frames = math.ceil(duration * frame_rate)
    t = np.arange(n_frames) / frame_rate
    centroid, cvel = motion(t)

    n_lo, n_hi = params.n_scatterers
    n_p = int(rng.integers(n_lo, n_hi + 1))
    offsets = rng.normal(0.0, params.scatter_spread, size=(n_p, 3))
    base_amp = params.amplitude * rng.uniform(0.7, 1.3, size=n_p)

    frames = []
    for k in range(n_frames):
        jitter_db = rng.uniform(-params.amp_jitter_db, params.amp_jitter_db, size=n_p)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_p)
        states = []
        for p in range(n_p):
            pos = centroid[k] + offsets[p]
            r = float(np.linalg.norm(pos))
            v = float(np.dot(pos, cvel[k]) / r)
            theta = math.atan2(pos[0], pos[1])
            phi = math.asin(np.clip(pos[2] / r, -1.0, 1.0))
            amp = base_amp[p] * 10.0 ** (jitter_db[p] / 20.0) * np.exp(1j * phases[p])
            states.append(ScattererState(r, theta, phi, v, complex(amp)))
        frames.append(states)

    return GestureTrajectory(
        label=label,
        duration=duration,
        seed=int(seed),
        frame_rate=frame_rate,
        frames=frames,
        stroke=stroke,
        centroid=centroid,
        centroid_velocity=cvel,
    )


# ---------------------------------------------------------------------------
# frame rendering
# ---------------------------------------------------------------------------

def expand_scene(states, cfg: RadarConfig):
    """Replicate frame-level scatterer states across all chirp slots of a frame,
    advancing each range by its radial velocity (Doppler enters via phase)."""
    slot_time = cfg.chirp_slot_time
    scene = []
    for s in range(cfg.chirps_per_frame):
        dt = s * slot_time
        scene.append(
            [
                ScattererState(
                    st.r + st.velocity * dt, st.azimuth, st.elevation, st.velocity, st.amplitude
                )
                for st in states
            ]
        )
    return scene


def synthesize_frame(scene, frame_index: int, cfg: RadarConfig, noise_seed: int) -> FrameCube:
    """Render one raw frame from per-chirp-slot scatterer states.

    `scene` must hold one list of ScattererState per chirp slot
    (cfg.chirps_per_frame entries). Slot s belongs to TX s % n_tx at per-TX
    chirp index s // n_tx.
    """
    if len(scene) != cfg.chirps_per_frame:
        raise InvalidInputError(
            f"scene must provide states for all {cfg.chirps_per_frame} chirp slots, got {len(scene)}"
        )

    n_s = cfg.samples_per_chirp
    cube = np.zeros((cfg.n_virtual, cfg.chirps_per_tx, n_s), dtype=np.complex128)

    counts = [len(sl) for sl in scene]
    total = sum(counts)
    if total:
        uniform = counts.count(counts[0]) == len(counts)
        if uniform:
            n_p = counts[0]
            r = np.array([[st.r for st in sl] for sl in scene])
            v = np.array([[st.velocity for st in sl] for sl in scene])
            th = np.array([[st.azimuth for st in sl] for sl in scene])
            ph = np.array([[st.elevation for st in sl] for sl in scene])
            amp = np.array([[st.amplitude for st in sl] for sl in scene])
        else:
            slot_idx, flat = [], []
            for s, sl in enumerate(scene):
                for st in sl:
                    slot_idx.append(s)
                    flat.append(st)
            r = np.array([st.r for st in flat])[:, None]
            v = np.array([st.velocity for st in flat])[:, None]
            th = np.array([st.azimuth for st in flat])[:, None]
            ph = np.array([st.elevation for st in flat])[:, None]
            amp = np.array([st.amplitude for st in flat])[:, None]

        if np.any(r > cfg.max_range) or np.any(np.abs(v) > cfg.max_velocity):
            warnings.warn(
                f"frame {frame_index}: scatterer beyond unambiguous range "
                f"({cfg.max_range:.2f} m) or velocity ({cfg.max_velocity:.3f} m/s); rendering aliased",
                AliasingWarning,
                stacklevel=2,
            )

        t_fast = np.arange(n_s) / cfg.sample_rate
        # Beat frequency is held at the frame-start range (range migration over
        # one frame is far below a range bin); Doppler lives in the slow-time
        # phase 4*pi*r(chirp)/lambda.
        if uniform:
            slot_dt = (np.arange(cfg.chirps_per_frame) * cfg.chirp_slot_time)[:, None]
        else:
            slot_dt = (np.asarray(slot_idx) * cfg.chirp_slot_time)[:, None]
        r_ref = r - v * slot_dt
        beat = 2.0 * cfg.sweep_slope * r_ref / SPEED_OF_LIGHT      # Hz
        psi = 4.0 * np.pi * r / cfg.wavelength                     # slow-time phase
        u = np.sin(th) * np.cos(ph)
        w = np.sin(ph)
        rx_ph = np.exp(1j * 2.0 * np.pi * cfg.rx_spacing * u[..., None] * np.arange(cfg.n_rx))
        tx_ph = np.exp(1j * 2.0 * np.pi * cfg.tx_spacing * w[..., None] * np.arange(cfg.n_tx))

        if uniform:
            # (slot, p, sample) tones, combined with each scatterer's own TX phase
            tone = amp[..., None] * np.exp(
                1j * (2.0 * np.pi * beat[..., None] * t_fast + psi[..., None])
            )
            m_of_slot = np.arange(cfg.chirps_per_frame) % cfg.n_tx
            tx_own = np.take_along_axis(tx_ph, m_of_slot[:, None, None], axis=2)[..., 0]
            weight = rx_ph * tx_own[..., None]                     # (slot, p, rx)
            per_slot = np.einsum("spj,spn->sjn", weight, tone)     # (slot, rx, sample)
            per_slot = per_slot.reshape(cfg.chirps_per_tx, cfg.n_tx, cfg.n_rx, n_s)
            cube += per_slot.transpose(1, 2, 0, 3).reshape(cfg.n_virtual, cfg.chirps_per_tx, n_s)
        else:
            slot_idx = np.asarray(slot_idx)
            tone = (amp * np.exp(1j * (2.0 * np.pi * beat * t_fast + psi)))  # (K, n_s)
            m_own = slot_idx % cfg.n_tx
            k_own = slot_idx // cfg.n_tx
            tx_own = tx_ph[np.arange(len(flat)), 0, m_own]
            weight = rx_ph[:, 0, :] * tx_own[:, None]              # (K, rx)
            contrib = weight[:, :, None] * tone[:, None, :]        # (K, rx, n_s)
            for i in range(len(flat)):
                m, k = m_own[i], k_own[i]
                cube[m * cfg.n_rx : (m + 1) * cfg.n_rx, k, :] += contrib[i]

    if cfg.noise_std > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence([int(noise_seed) & (2**63 - 1), 0x401]))
        sigma = cfg.noise_std / math.sqrt(2.0)
        cube += sigma * (
            rng.standard_normal(cube.shape) + 1j * rng.standard_normal(cube.shape)
        )

    return FrameCube(data=cube, frame_index=int(frame_index), config_hash=cfg.config_hash)


def iter_gesture_frames(
    traj: GestureTrajectory,
    cfg: RadarConfig,
    seed: int,
    idle_lead: int = 5,
    idle_tail: int = 5,
    static_scatterers=(),
):
    """Lazily render the frame sequence of one gesture with idle padding."""
    if abs(traj.frame_rate - cfg.frame_rate) > 1e-9:
        raise InvalidInputError("trajectory frame rate does not match the radar config")
    static = list(static_scatterers)
    n_gesture = len(traj.frames)
    total = idle_lead + n_gesture + idle_tail
    for fi in range(total):
        if idle_lead <= fi < idle_lead + n_gesture:
            states = list(traj.frames[fi - idle_lead]) + static
        else:
            states = list(static)
        noise_seed = _frame_noise_seed(seed, fi)
        yield synthesize_frame(expand_scene(states, cfg), fi, cfg, noise_seed)


def render_gesture(
    traj: GestureTrajectory,
    cfg: RadarConfig,
    seed: int,
    idle_lead: int = 5,
    idle_tail: int = 5,
    static_scatterers=(),
) -> list:
    """Render the full frame sequence of one gesture (idle + gesture + idle)."""
    return list(
        iter_gesture_frames(traj, cfg, seed, idle_lead, idle_tail, static_scatterers)
    )


def _frame_noise_seed(seed: int, frame_index: int) -> int:
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), int(frame_index)])
    return int(ss.generate_state(1, np.uint64)[0])
