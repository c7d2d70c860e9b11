"""Shared fixtures and frame-construction helpers."""

import dataclasses
import math

import numpy as np
import pytest

from qgesture.config import CfarParams, RadarConfig
from qgesture.sim import ScattererState, expand_scene, synthesize_frame


@pytest.fixture(scope="session")
def cfg():
    return RadarConfig()


@pytest.fixture(scope="session")
def quiet_cfg():
    return dataclasses.replace(RadarConfig(), noise_std=0.0)


@pytest.fixture(scope="session")
def cfar():
    return CfarParams()


def single_scatterer_frame(
    r, v, az_deg=0.0, el_deg=0.0, amp=1.0, noise_std=0.0, seed=0, frame_index=0
):
    """Render one frame containing exactly one scattering center."""
    cfg = dataclasses.replace(RadarConfig(), noise_std=noise_std)
    state = ScattererState(
        r=r,
        azimuth=math.radians(az_deg),
        elevation=math.radians(el_deg),
        velocity=v,
        amplitude=complex(amp),
    )
    return synthesize_frame(expand_scene([state], cfg), frame_index, cfg, seed), cfg


def scene_frame(states, noise_std=0.0, seed=0, frame_index=0):
    """Render one frame from a list of scatterer states."""
    cfg = dataclasses.replace(RadarConfig(), noise_std=noise_std)
    return synthesize_frame(expand_scene(list(states), cfg), frame_index, cfg, seed), cfg


def expected_range_bin(r, cfg):
    """Independent arithmetic: beat tone frequency mapped to the FFT grid."""
    f_b = 2.0 * cfg.sweep_slope * r / 299_792_458.0
    return round(f_b / cfg.sample_rate * cfg.samples_per_chirp)


def expected_doppler_bin(v, cfg):
    """Independent arithmetic: Doppler shift on the shifted slow-time grid."""
    bin_offset = round(v / cfg.velocity_resolution)
    return (cfg.zero_doppler_bin + bin_offset) % cfg.chirps_per_tx


def brightest_point(pc):
    assert pc.points, "point cloud is empty"
    return max(pc.points, key=lambda p: p.amplitude)


def rng_for_test(*parts):
    return np.random.default_rng(np.random.SeedSequence(list(parts)))
