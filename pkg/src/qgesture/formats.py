"""Binary file formats: raw frame sequences and feature-window samples.

All formats share the same skeleton: magic bytes, a little-endian uint32
JSON-header length, the UTF-8 JSON header, then raw little-endian payload.
Raw frames store binary32 interleaved (real, imag) in (channel, chirp,
sample) C-order; samples store a binary32 tensor in (channel, bin, frame)
C-order."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RadarConfig
from .errors import BadMagicError, DataFormatError, TruncatedFileError
from .features import FeatureWindow
from .sim import FrameCube

RAW_MAGIC = b"QGRAWFRAMESv001\x00"  # 16 bytes: magic + version
SAMPLE_MAGIC = b"QGFW1"


def write_block(path, magic: bytes, header: dict, payload: bytes) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_block(path, magic: bytes):
    data = Path(path).read_bytes()
    if len(data) < len(magic) or data[: len(magic)] != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}")
    off = len(magic)
    if len(data) < off + 4:
        raise TruncatedFileError(f"{path}: header length field missing")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad JSON header: {exc}") from exc
    return header, data[off + hlen :]


# -- raw frame sequences ----------------------------------------------------

def write_raw_frames(path, frames, cfg: RadarConfig, meta: dict | None = None) -> None:
    frames = list(frames)
    shape = [cfg.n_virtual, cfg.chirps_per_tx, cfg.samples_per_chirp]
    header = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash,
        "n_frames": len(frames),
        "frame_shape": shape,
        "meta": meta or {},
    }
    chunks = []
    for fc in frames:
        if list(fc.data.shape) != shape:
            raise DataFormatError(f"frame {fc.frame_index} shape {fc.data.shape} != {shape}")
        chunks.append(np.ascontiguousarray(fc.data.astype(np.complex64)).view("<f4").tobytes())
    write_block(path, RAW_MAGIC, header, b"".join(chunks))


def read_raw_frames(path):
    header, payload = read_block(path, RAW_MAGIC)
    try:
        cfg = RadarConfig.from_dict(header["config"])
        n_frames = int(header["n_frames"])
        shape = tuple(header["frame_shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed raw-frame header: {exc}") from exc
    per_frame = int(np.prod(shape)) * 2 * 4
    if len(payload) < n_frames * per_frame:
        raise TruncatedFileError(
            f"{path}: expected {n_frames * per_frame} payload bytes, got {len(payload)}"
        )
    frames = []
    for i in range(n_frames):
        flat = np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape)) * 2, offset=i * per_frame)
        data = flat.view(np.complex64).reshape(shape).astype(np.complex128)
        frames.append(FrameCube(data=data, frame_index=i, config_hash=cfg.config_hash))
    return frames, cfg, header.get("meta", {})


# -- feature-window samples -------------------------------------------------

def write_feature_sample(path, window: FeatureWindow) -> None:
    values = np.asarray(window.values, dtype="<f4")
    header = {
        "label": window.label,
        "shape": list(values.shape),
        "meta": window.meta,
    }
    write_block(path, SAMPLE_MAGIC, header, np.ascontiguousarray(values).tobytes())


def read_feature_sample(path) -> FeatureWindow:
    header, payload = read_block(path, SAMPLE_MAGIC)
    try:
        shape = tuple(header["shape"])
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed sample header: {exc}") from exc
    expected = int(np.prod(shape)) * 4
    if len(payload) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape))).reshape(shape)
    return FeatureWindow(values=values.copy(), label=header.get("label"), meta=header.get("meta", {}))
