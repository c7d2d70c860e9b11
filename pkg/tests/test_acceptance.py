"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL
line. Run with `pytest tests/test_acceptance.py -v`."""

import dataclasses
import math
import sys
import time

import numpy as np
import pytest

from conftest import rng_for_test
from qgesture.cnn import (
    Architecture,
    init_model,
    init_optimizer,
    load_model,
    loss_and_grad,
    param_shapes,
    save_model,
    train,
)
from qgesture.config import CfarParams, DatasetSpec, RadarConfig, TrainConfig
from qgesture.dataset import (
    DatasetManifest,
    evaluate_arrays,
    generate_dataset,
    load_arrays,
    select_ids,
    split,
)
from qgesture.dsp import cfar_threshold_map, extract_point_cloud
from qgesture.errors import BadMagicError, DataFormatError, TruncatedFileError
from qgesture.features import CaptureState, FeatureWindow
from qgesture.formats import (
    read_feature_sample,
    read_raw_frames,
    write_feature_sample,
    write_raw_frames,
)
from qgesture.sim import (
    GESTURE_CLASSES,
    ScattererState,
    expand_scene,
    iter_gesture_frames,
    make_trajectory,
    synthesize_frame,
)


def report(number, name, ok):
    line = f"ACCEPTANCE {number} [{name}]: {'PASS' if ok else 'FAIL'}"
    print(line)
    print(line, file=sys.__stdout__)  # visible even under pytest capture
    return ok


@pytest.fixture(scope="module")
def full_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_dataset")
    start = time.perf_counter()
    manifest = generate_dataset(DatasetSpec(), out, seed=42)
    return manifest, out, time.perf_counter() - start


def test_criterion_1_point_target_recovery():
    rng = rng_for_test(1001)
    cfg = dataclasses.replace(RadarConfig(), noise_std=0.1)  # 20 dB SNR at unit amplitude
    start = time.perf_counter()
    hits = 0
    for trial in range(100):
        r = rng.uniform(0.5, 2.5)
        v = rng.uniform(-1.4, 1.4)
        az = rng.uniform(-40.0, 40.0)
        el = rng.uniform(-40.0, 40.0)
        state = ScattererState(r, math.radians(az), math.radians(el), v, 1.0)
        cube = synthesize_frame(expand_scene([state], cfg), 0, cfg, noise_seed=trial)
        pc = extract_point_cloud(cube, cfg)
        if not pc.points:
            continue
        p = max(pc.points, key=lambda q: q.amplitude)
        if (
            abs(p.r - r) <= 0.022
            and abs(p.v - v) <= 0.025
            and abs(math.degrees(p.azimuth) - az) <= 3.0
            and abs(math.degrees(p.elevation) - el) <= 3.0
        ):
            hits += 1
    elapsed = time.perf_counter() - start
    ok = hits >= 95 and elapsed < 30.0
    assert report(1, "point-target recovery", ok), f"{hits}/100 within tolerance, {elapsed:.1f} s"


def test_criterion_2_cfar_false_alarm_rate():
    params = CfarParams(pfa=1e-4)
    rng = rng_for_test(1002)
    start = time.perf_counter()
    cells = 0
    alarms = 0
    while cells < 10_000_000:
        power = rng.exponential(1.0, size=(64, 256))
        threshold = cfar_threshold_map(power, params)
        alarms += int(np.sum(power > threshold))
        cells += power.size
    elapsed = time.perf_counter() - start
    rate = alarms / cells
    ok = 0.2e-4 <= rate <= 5e-4 and elapsed < 60.0
    assert report(2, "CFAR calibration", ok), f"rate {rate:.2e} over {cells} cells, {elapsed:.1f} s"


def test_criterion_3_gradient_check():
    arch = Architecture(input_shape=(3, 8, 6), conv_channels=(2, 2), hidden=8, classes=3)
    model = init_model(arch, seed=7)
    rng = rng_for_test(1003)
    x = rng.uniform(0.0, 1.0, size=(3,) + arch.input_shape)
    y = rng.integers(0, arch.classes, size=3)
    start = time.perf_counter()
    _, grads = loss_and_grad(model, x, y)
    eps = 1e-6
    worst = 0.0
    for name, p in model.params.items():
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(8, flat.size), replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, _ = loss_and_grad(model, x, y)
            flat[idx] = orig - eps
            lm, _ = loss_and_grad(model, x, y)
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            analytic = grads[name].reshape(-1)[idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / denom)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 30.0
    assert report(3, "gradient check", ok), f"worst relative error {worst:.2e}, {elapsed:.1f} s"


def test_criterion_4_trigger_fidelity():
    from qgesture.dsp import Point, PointCloud

    cfg = RadarConfig()

    def run(speeds):
        state = CaptureState(cfg)
        captures = 0
        for i, speed in enumerate(speeds):
            points = [Point(1.0, speed, 0.0, 0.0, 1.0)] if speed > 0 else []
            state.push_frame(PointCloud(frame_index=i, points=points))
            if state.try_capture() is not None:
                captures += 1
        return captures

    unit_ok = (
        run([0.0] * 30) == 0                      # no motion, no capture
        and run([1.0] * 10 + [0.0] * 5) == 1      # qualifying burst fires once
        and run([1.0] * 4 + [0.0] * 5) == 0       # too few active frames
        and run([0.29] * 10 + [0.0] * 5) == 0     # below the speed threshold
        and run([1.0] * 7 + [0.0] * 3 + [1.0] * 7 + [0.0] * 3) == 2
    )

    noisy = dataclasses.replace(cfg, noise_std=0.01)
    gesture_ok = True
    for label in GESTURE_CLASSES:
        for seed in (0, 1):
            traj = make_trajectory(label, seed=seed)
            state = CaptureState(noisy)
            captures = 0
            for cube in iter_gesture_frames(traj, noisy, seed=seed):
                state.push_frame(extract_point_cloud(cube, noisy))
                if state.try_capture() is not None:
                    captures += 1
            if captures != 1:
                gesture_ok = False
    ok = unit_ok and gesture_ok
    assert report(4, "trigger fidelity", ok), f"unit cases {unit_ok}, gestures {gesture_ok}"


def test_criterion_5_end_to_end_classification(full_dataset):
    manifest, out, gen_elapsed = full_dataset
    start = time.perf_counter()
    tcfg = TrainConfig(epochs=100, learning_rate=0.001, batch_size=32, seed=42)

    train_ids, val_ids = split(manifest, train_frac=0.7, seed=42)
    x_tr, y_tr, _ = load_arrays(manifest, out, train_ids)
    x_va, y_va, _ = load_arrays(manifest, out, val_ids)
    result = train((x_tr, y_tr), (x_va, y_va), tcfg, Architecture())
    val_acc = result.best_val_accuracy

    louo_pool = select_ids(manifest, users=["B", "C", "D"])
    tr_ids, va_ids = split(manifest, train_frac=0.7, seed=42, ids=louo_pool)
    x_tr, y_tr, _ = load_arrays(manifest, out, tr_ids)
    x_va, y_va, _ = load_arrays(manifest, out, va_ids)
    louo_result = train((x_tr, y_tr), (x_va, y_va), tcfg, Architecture())
    x_e, y_e, _ = load_arrays(manifest, out, select_ids(manifest, users=["E"]))
    heldout = evaluate_arrays(louo_result.best_model, x_e, y_e, manifest.labels())
    gap = louo_result.best_val_accuracy - heldout.accuracy

    # end-to-end stream check: a rendered pull classifies as pull
    from qgesture.cnn import predict
    from qgesture.features import normalize

    noisy = dataclasses.replace(RadarConfig(), noise_std=0.01)
    traj = make_trajectory("pull", seed=0)
    state = CaptureState(noisy)
    predicted = None
    for cube in iter_gesture_frames(traj, noisy, seed=0):
        state.push_frame(extract_point_cloud(cube, noisy))
        captured = state.try_capture()
        if captured is not None:
            window = normalize(captured[0])
            cls, _ = predict(result.best_model, window.values.astype(float))
            predicted = manifest.labels()[cls]
    infer_ok = predicted == "pull"

    elapsed = gen_elapsed + (time.perf_counter() - start)
    ok = val_acc >= 0.90 and gap <= 0.15 and infer_ok and elapsed <= 1800.0
    assert report(5, "end-to-end classification", ok), (
        f"val accuracy {val_acc:.3f}, held-out user accuracy {heldout.accuracy:.3f} "
        f"(gap {gap * 100:.1f} pp), stream prediction {predicted!r}, total {elapsed / 60:.1f} min"
    )


def test_criterion_6_per_frame_latency():
    cfg = dataclasses.replace(RadarConfig(), noise_std=0.01)
    traj = make_trajectory("wave left", seed=5)
    cubes = list(iter_gesture_frames(traj, cfg, seed=5, idle_lead=10, idle_tail=10))
    state = CaptureState(cfg)
    times = []
    for cube in cubes:
        t0 = time.perf_counter()
        state.push_frame(extract_point_cloud(cube, cfg))
        state.try_capture()
        times.append(time.perf_counter() - t0)
    mean_ms = 1e3 * float(np.mean(times))
    ok = mean_ms < 50.0
    assert report(6, "real-time budget", ok), f"mean dsp+features latency {mean_ms:.1f} ms"


def test_criterion_7_determinism(tmp_path):
    spec = DatasetSpec(classes=("push", "wave up"), per_class=3, users=("B", "C"), scenes=("living_room",))
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        manifest = generate_dataset(spec, out, seed=99)
        tr, va = split(manifest, seed=99)
        x_tr, y_tr, _ = load_arrays(manifest, out, tr)
        x_va, y_va, _ = load_arrays(manifest, out, va)
        arch = Architecture(classes=2)
        result = train((x_tr, y_tr), (x_va, y_va), TrainConfig(epochs=3, seed=99), arch)
        runs.append((manifest, out, result.final_model))
    (m1, o1, mod1), (m2, o2, mod2) = runs
    manifests_equal = m1.to_dict() == m2.to_dict()
    bytes_equal = all(
        (o1 / r.path).read_bytes() == (o2 / r.path).read_bytes() for r in m1.samples
    )
    weights_equal = all(
        np.array_equal(mod1.params[n], mod2.params[n]) for n in mod1.params
    )
    ok = manifests_equal and bytes_equal and weights_equal
    assert report(7, "determinism", ok), (
        f"manifests {manifests_equal}, samples {bytes_equal}, weights {weights_equal}"
    )


def test_criterion_8_format_round_trips(tmp_path):
    cfg = dataclasses.replace(RadarConfig(), noise_std=0.02)
    state = ScattererState(1.0, 0.1, 0.0, 0.5, 1.0)
    cube = synthesize_frame(expand_scene([state], cfg), 0, cfg, noise_seed=1)
    raw_path = tmp_path / "frames.qgr"
    write_raw_frames(raw_path, [cube], cfg)
    frames, cfg2, _ = read_raw_frames(raw_path)
    raw_ok = cfg2 == cfg and np.array_equal(
        frames[0].data, cube.data.astype(np.complex64).astype(np.complex128)
    )

    values = rng_for_test(1008).uniform(size=(3, 64, 30)).astype(np.float32)
    sample_path = tmp_path / "sample.qgfw"
    write_feature_sample(sample_path, FeatureWindow(values=values, label="push", meta={"k": 1}))
    loaded = read_feature_sample(sample_path)
    sample_ok = np.array_equal(loaded.values, values) and loaded.label == "push"

    arch = Architecture(input_shape=(3, 8, 6), conv_channels=(2,), hidden=4, classes=3)
    model = init_model(arch, seed=3)
    opt = init_optimizer(model)
    model_path = tmp_path / "model.qgcnn"
    save_model(model_path, model, opt)
    loaded_model, loaded_opt = load_model(model_path)
    model_ok = loaded_model.arch == arch and all(
        np.array_equal(loaded_model.params[n], model.params[n]) for n in param_shapes(arch)
    ) and loaded_opt is not None

    typed_ok = True
    for path, reader in (
        (raw_path, read_raw_frames),
        (sample_path, read_feature_sample),
        (model_path, load_model),
    ):
        blob = path.read_bytes()
        bad = tmp_path / (path.name + ".badmagic")
        bad.write_bytes(b"X" * 4 + blob[4:])
        try:
            reader(bad)
            typed_ok = False
        except BadMagicError:
            pass
        except DataFormatError:
            typed_ok = False
        short = tmp_path / (path.name + ".short")
        short.write_bytes(blob[: len(blob) - 64])
        try:
            reader(short)
            typed_ok = False
        except TruncatedFileError:
            pass
        except DataFormatError:
            typed_ok = False

    ok = raw_ok and sample_ok and model_ok and typed_ok
    assert report(8, "format round trips", ok), (
        f"raw {raw_ok}, sample {sample_ok}, model {model_ok}, typed errors {typed_ok}"
    )
