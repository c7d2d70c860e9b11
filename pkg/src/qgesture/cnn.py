"""Lightweight multi-channel CNN built on numpy: two conv+relu+maxpool
stages, two dense layers, softmax output. Trained with cross-entropy and
Adam (constant learning rate), bit-deterministic under a fixed seed."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import (
    ArchitectureMismatchError,
    BadMagicError,
    ConfigError,
    DataFormatError,
    InvalidInputError,
    TruncatedFileError,
)

MODEL_MAGIC = b"QGCNN1"


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple = (3, 64, 30)
    conv_channels: tuple = (8, 16)
    kernel: int = 3
    hidden: int = 128
    classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(x) for x in self.input_shape))
        object.__setattr__(self, "conv_channels", tuple(int(x) for x in self.conv_channels))
        if self.kernel % 2 != 1:
            raise ConfigError("kernel size must be odd (same-padding convolutions)")
        if self.classes < 2 or self.hidden < 1 or not self.conv_channels:
            raise ConfigError("bad architecture dimensions")

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "conv_channels": list(self.conv_channels),
            "kernel": self.kernel,
            "hidden": self.hidden,
            "classes": self.classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            input_shape=tuple(d["input_shape"]),
            conv_channels=tuple(d["conv_channels"]),
            kernel=int(d["kernel"]),
            hidden=int(d["hidden"]),
            classes=int(d["classes"]),
        )


def param_shapes(arch: Architecture) -> dict:
    """Parameter name -> shape, in the fixed serialization order."""
    shapes = {}
    c_in, h, w = arch.input_shape
    k = arch.kernel
    for i, c_out in enumerate(arch.conv_channels):
        shapes[f"conv{i}_w"] = (c_out, c_in, k, k)
        shapes[f"conv{i}_b"] = (c_out,)
        c_in = c_out
        h, w = h // 2, w // 2  # 2x2 maxpool, floor
    flat = c_in * h * w
    shapes["fc0_w"] = (arch.hidden, flat)
    shapes["fc0_b"] = (arch.hidden,)
    shapes["fc1_w"] = (arch.classes, arch.hidden)
    shapes["fc1_b"] = (arch.classes,)
    return shapes


@dataclass
class CnnModel:
    arch: Architecture
    params: dict = field(repr=False)

    def copy(self) -> "CnnModel":
        return CnnModel(self.arch, {k: v.copy() for k, v in self.params.items()})


@dataclass
class OptimizerState:
    m: dict = field(repr=False)
    v: dict = field(repr=False)
    t: int = 0


def init_model(arch: Architecture = Architecture(), seed: int = 0) -> CnnModel:
    """Glorot-uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC44]))
    params = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_out = shape[0] * int(np.prod(shape[2:])) if len(shape) == 4 else shape[0]
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return CnnModel(arch=arch, params=params)


def init_optimizer(model: CnnModel) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in model.params.items()},
        v={k: np.zeros_like(v) for k, v in model.params.items()},
        t=0,
    )


# -- layers -----------------------------------------------------------------

def _conv_forward(x, w, b):
    """Same-padding stride-1 convolution via a sliding-window view."""
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", win, w, optimize=True) + b[None, :, None, None]
    return out, (win, xp.shape, x.shape, k)


def _conv_backward(dout, w, cache):
    win, xp_shape, x_shape, k = cache
    dw = np.einsum("bohw,bchwij->ocij", dout, win, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dwin = np.einsum("bohw,ocij->bchwij", dout, w, optimize=True)
    dxp = np.zeros(xp_shape)
    h, w_ = x_shape[2], x_shape[3]
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + w_] += dwin[:, :, :, :, i, j]
    p = k // 2
    dx = dxp[:, :, p : p + h, p : p + w_] if p else dxp
    return dx, dw, db


def _pool_forward(x):
    """2x2 max pooling, stride 2, floor on odd sizes; first-index tie break."""
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xc = x[:, :, : 2 * h2, : 2 * w2]
    patches = xc.reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = patches.argmax(axis=-1)
    out = np.take_along_axis(patches, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def _pool_backward(dout, cache):
    idx, x_shape = cache
    b, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dpatches = np.zeros((b, c, h2, w2, 4))
    np.put_along_axis(dpatches, idx[..., None], dout[..., None], axis=-1)
    dxc = dpatches.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
    dx = np.zeros(x_shape)
    dx[:, :, : 2 * h2, : 2 * w2] = dxc
    return dx


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(model: CnnModel, x):
    """Returns (probs, caches) for backprop."""
    caches = {}
    a = np.asarray(x, dtype=float)
    if a.ndim == 3:
        a = a[None]
    if a.shape[1:] != model.arch.input_shape:
        raise InvalidInputError(
            f"input shape {a.shape[1:]} does not match architecture {model.arch.input_shape}"
        )
    for i in range(len(model.arch.conv_channels)):
        a, caches[f"conv{i}"] = _conv_forward(a, model.params[f"conv{i}_w"], model.params[f"conv{i}_b"])
        caches[f"relu_c{i}"] = a > 0
        a = np.maximum(a, 0.0)
        a, caches[f"pool{i}"] = _pool_forward(a)
    caches["flat_shape"] = a.shape
    a = a.reshape(a.shape[0], -1)
    caches["fc0_in"] = a
    a = a @ model.params["fc0_w"].T + model.params["fc0_b"]
    caches["relu_f"] = a > 0
    a = np.maximum(a, 0.0)
    caches["fc1_in"] = a
    logits = a @ model.params["fc1_w"].T + model.params["fc1_b"]
    return _softmax(logits), caches


def forward(model: CnnModel, x) -> np.ndarray:
    """Class probabilities, (batch, classes); rows sum to one."""
    probs, _ = _forward_pass(model, x)
    return probs


def loss_and_grad(model: CnnModel, x, labels):
    """Mean cross-entropy over the batch and gradients for every parameter."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim == 0:
        labels = labels[None]
    if np.any(labels < 0) or np.any(labels >= model.arch.classes):
        raise InvalidInputError(f"labels must lie in [0, {model.arch.classes})")
    probs, caches = _forward_pass(model, x)
    n = probs.shape[0]
    if n != len(labels):
        raise InvalidInputError("batch size and label count differ")
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), labels], 1e-12, None))))

    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads["fc1_w"] = dlogits.T @ caches["fc1_in"]
    grads["fc1_b"] = dlogits.sum(axis=0)
    da = dlogits @ model.params["fc1_w"]
    da *= caches["relu_f"]
    grads["fc0_w"] = da.T @ caches["fc0_in"]
    grads["fc0_b"] = da.sum(axis=0)
    da = da @ model.params["fc0_w"]
    da = da.reshape(caches["flat_shape"])
    for i in reversed(range(len(model.arch.conv_channels))):
        da = _pool_backward(da, caches[f"pool{i}"])
        da *= caches[f"relu_c{i}"]
        da, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = _conv_backward(
            da, model.params[f"conv{i}_w"], caches[f"conv{i}"]
        )
    return loss, grads


def adam_step(model: CnnModel, grads: dict, opt: OptimizerState, cfg: TrainConfig):
    """Standard Adam update with bias correction; increments the step counter."""
    opt.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**opt.t
    bc2 = 1.0 - b2**opt.t
    for name, p in model.params.items():
        g = grads[name]
        opt.m[name] = b1 * opt.m[name] + (1.0 - b1) * g
        opt.v[name] = b2 * opt.v[name] + (1.0 - b2) * g * g
        m_hat = opt.m[name] / bc1
        v_hat = opt.v[name] / bc2
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return model, opt


def predict(model: CnnModel, sample):
    """(argmax class, probability vector); ties break to the lowest index."""
    probs = forward(model, np.asarray(sample)[None] if np.asarray(sample).ndim == 3 else sample)
    return int(np.argmax(probs[0])), probs[0]


def accuracy(model: CnnModel, x, y, batch_size: int = 64) -> float:
    hits = 0
    for lo in range(0, len(y), batch_size):
        probs = forward(model, x[lo : lo + batch_size])
        hits += int(np.sum(np.argmax(probs, axis=1) == y[lo : lo + batch_size]))
    return hits / len(y)


def batch_index_ranges(n: int, batch_size: int):
    """[(lo, hi)] batch slices; the last batch may be short."""
    return [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]


@dataclass
class TrainResult:
    final_model: CnnModel
    best_model: CnnModel
    best_val_accuracy: float
    history: list  # dicts: epoch, train_loss, val_acc, lr


def train(train_set, val_set, cfg: TrainConfig = TrainConfig(), arch: Architecture = Architecture(),
          model: CnnModel | None = None, verbose: bool = False) -> TrainResult:
    """Seeded-shuffle minibatch training; records loss and accuracy per epoch."""
    x_tr, y_tr = train_set
    x_va, y_va = val_set
    x_tr = np.asarray(x_tr, dtype=float)
    x_va = np.asarray(x_va, dtype=float)
    y_tr = np.asarray(y_tr, dtype=int)
    y_va = np.asarray(y_va, dtype=int)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ConfigError("train and validation splits must both be non-empty")

    if model is None:
        model = init_model(arch, seed=cfg.seed)
    opt = init_optimizer(model)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x7A17]))

    best_model = model.copy()
    best_acc = -1.0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y_tr))
        losses = []
        for lo, hi in batch_index_ranges(len(y_tr), cfg.batch_size):
            idx = order[lo:hi]
            loss, grads = loss_and_grad(model, x_tr[idx], y_tr[idx])
            adam_step(model, grads, opt, cfg)
            losses.append(loss)
        val_acc = accuracy(model, x_va, y_va)
        history.append(
            {
                "epoch": epoch + 1,
                "train_loss": float(np.mean(losses)),
                "val_acc": float(val_acc),
                "lr": cfg.learning_rate,
            }
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_model = model.copy()
        if verbose:
            print(f"epoch {epoch + 1:3d}  loss {np.mean(losses):.4f}  val_acc {val_acc:.3f}")
    return TrainResult(model, best_model, float(best_acc), history)


# -- persistence ------------------------------------------------------------

def save_model(path, model: CnnModel, opt: OptimizerState | None = None) -> None:
    """Magic, JSON architecture header, then float64 weight blobs in layer order."""
    names = list(param_shapes(model.arch))
    header = {
        "arch": model.arch.to_dict(),
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "optimizer": opt is not None,
        "t": opt.t if opt is not None else 0,
    }
    blobs = [np.ascontiguousarray(model.params[n], dtype="<f8").tobytes() for n in names]
    if opt is not None:
        for store in (opt.m, opt.v):
            blobs.extend(np.ascontiguousarray(store[n], dtype="<f8").tobytes() for n in names)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for b in blobs:
            fh.write(b)


def load_model(path):
    """Returns (model, optimizer-or-None); raises typed errors on corruption."""
    from pathlib import Path

    data = Path(path).read_bytes()
    if len(data) < len(MODEL_MAGIC) or data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise BadMagicError(f"{path}: expected magic {MODEL_MAGIC!r}")
    off = len(MODEL_MAGIC)
    if len(data) < off + 4:
        raise TruncatedFileError(f"{path}: header length field missing")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
        arch = Architecture.from_dict(header["arch"])
        declared = [(e["name"], tuple(e["shape"])) for e in header["params"]]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: malformed model header: {exc}") from exc
    off += hlen

    expected = [(n, s) for n, s in param_shapes(arch).items()]
    if declared != expected:
        raise ArchitectureMismatchError(
            f"{path}: declared parameter table does not match the architecture header"
        )
    copies = 3 if header.get("optimizer") else 1
    total = sum(int(np.prod(s)) for _, s in expected) * 8 * copies
    if len(data) - off < total:
        raise TruncatedFileError(f"{path}: expected {total} weight bytes, got {len(data) - off}")

    def take(n_elems):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=n_elems, offset=off).copy()
        off += n_elems * 8
        return arr

    params = {n: take(int(np.prod(s))).reshape(s) for n, s in expected}
    model = CnnModel(arch=arch, params=params)
    opt = None
    if header.get("optimizer"):
        m = {n: take(int(np.prod(s))).reshape(s) for n, s in expected}
        v = {n: take(int(np.prod(s))).reshape(s) for n, s in expected}
        opt = OptimizerState(m=m, v=v, t=int(header.get("t", 0)))
    return model, opt
