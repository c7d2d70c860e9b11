"""Synthetic labeled gesture datasets: generation through the full
sim -> dsp -> features pipeline, stratified splitting, and evaluation
grouped by (scene, user).

"Users" are trajectory-parameter distributions and "scenes" are
(noise, static clutter) profiles, preserving the multi-user / multi-scenario
evaluation structure on purely synthetic data."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CfarParams, DatasetSpec, FeatureParams, RadarConfig
from .dsp import extract_point_cloud
from .errors import ConfigError, GenerationError, InvalidInputError
from .features import CaptureState, FeatureWindow, normalize
from .formats import read_feature_sample, write_feature_sample
from .sim import (
    GESTURE_CLASSES,
    ScattererState,
    TrajectoryParams,
    canonical_gesture,
    iter_gesture_frames,
    make_trajectory,
)


@dataclass(frozen=True)
class UserProfile:
    name: str
    scale: float = 1.0
    speed: float = 1.0
    range_bias: float = 0.0
    azimuth_bias_deg: float = 0.0
    amplitude: float = 1.0

    def trajectory_params(self) -> TrajectoryParams:
        return TrajectoryParams(
            scale=self.scale,
            speed=self.speed,
            range_bias=self.range_bias,
            azimuth_bias_deg=self.azimuth_bias_deg,
            amplitude=self.amplitude,
        )


@dataclass(frozen=True)
class SceneProfile:
    name: str
    noise_std: float = 0.01
    clutter: tuple = ()  # (range_m, azimuth_deg, elevation_deg, amplitude)

    def clutter_states(self) -> list:
        return [
            ScattererState(r, math.radians(az), math.radians(el), 0.0, complex(amp))
            for r, az, el, amp in self.clutter
        ]


DEFAULT_USERS = {
    "B": UserProfile("B", scale=1.0, speed=1.0),
    "C": UserProfile("C", scale=0.9, speed=1.08, azimuth_bias_deg=-4.0, amplitude=0.85),
    "D": UserProfile("D", scale=1.1, speed=0.92, range_bias=0.08, amplitude=1.2),
    "E": UserProfile("E", scale=1.05, speed=1.05, range_bias=-0.05, azimuth_bias_deg=5.0, amplitude=0.95),
}

DEFAULT_SCENES = {
    "living_room": SceneProfile("living_room", noise_std=0.01, clutter=()),
    "conference_room": SceneProfile(
        "conference_room",
        noise_std=0.02,
        clutter=((2.2, 25.0, 0.0, 0.45), (1.8, -30.0, 5.0, 0.35)),
    ),
}


@dataclass
class SampleRecord:
    sample_id: str
    label: str
    user: str
    scene: str
    seed: int
    path: str
    config_hash: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class DatasetManifest:
    spec: DatasetSpec
    seed: int
    config_hash: str
    samples: list
    regenerations: int = 0

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "regenerations": self.regenerations,
            "samples": [s.to_dict() for s in self.samples],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(
            spec=DatasetSpec.from_dict(d["spec"]),
            seed=int(d["seed"]),
            config_hash=d["config_hash"],
            regenerations=int(d.get("regenerations", 0)),
            samples=[SampleRecord(**s) for s in d["samples"]],
        )

    def labels(self) -> list:
        return sorted({s.label for s in self.samples}, key=GESTURE_CLASSES.index)


def _derive_seed(*parts) -> int:
    ss = np.random.SeedSequence([int(p) & (2**63 - 1) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_sample(
    label: str,
    seed: int,
    user: UserProfile,
    scene: SceneProfile,
    cfg: RadarConfig,
    cfar: CfarParams = CfarParams(),
    feat: FeatureParams = FeatureParams(),
) -> FeatureWindow | None:
    """Run one gesture through the full pipeline; None if the trigger never fires."""
    scene_cfg = dataclasses.replace(cfg, noise_std=scene.noise_std)
    traj = make_trajectory(label, seed, user.trajectory_params(), frame_rate=cfg.frame_rate)
    state = CaptureState(scene_cfg, feat)
    for cube in iter_gesture_frames(
        traj, scene_cfg, seed, static_scatterers=scene.clutter_states()
    ):
        state.push_frame(extract_point_cloud(cube, scene_cfg, cfar))
        captured = state.try_capture()
        if captured is not None:
            raw, stats = captured
            return normalize(
                raw,
                feat.dynamic_range_db,
                label=label,
                meta={"trigger_stats": stats, "seed": seed, "user": user.name, "scene": scene.name},
            )
    return None


def generate_dataset(
    spec: DatasetSpec,
    out_dir,
    seed: int,
    cfg: RadarConfig = RadarConfig(),
    cfar: CfarParams = CfarParams(),
    feat: FeatureParams = FeatureParams(),
    users: dict = None,
    scenes: dict = None,
    max_retries: int = 10,
    progress: bool = False,
) -> DatasetManifest:
    """Generate per-class samples round-robined over (user, scene) pairs.

    Samples whose capture trigger never fires are regenerated with a fresh
    sub-seed (counted in the manifest); persistent failure is an error."""
    classes = [canonical_gesture(c) for c in (spec.classes or GESTURE_CLASSES)]
    users = users or DEFAULT_USERS
    scenes = scenes or DEFAULT_SCENES
    for u in spec.users:
        if u not in users:
            raise ConfigError(f"unknown user profile {u!r}")
    for s in spec.scenes:
        if s not in scenes:
            raise ConfigError(f"unknown scene profile {s!r}")

    out_dir = Path(out_dir)
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)

    records = []
    regenerations = 0
    combos = [(u, s) for s in spec.scenes for u in spec.users]
    for ci, label in enumerate(classes):
        for k in range(spec.per_class):
            user_name, scene_name = combos[k % len(combos)]
            user, scene = users[user_name], scenes[scene_name]
            window = None
            sample_seed = None
            for retry in range(max_retries):
                sample_seed = _derive_seed(seed, GESTURE_CLASSES.index(label), k, retry)
                window = generate_sample(label, sample_seed, user, scene, cfg, cfar, feat)
                if window is not None:
                    break
                regenerations += 1
            if window is None:
                raise GenerationError(
                    f"no capture after {max_retries} attempts for "
                    f"(class={label!r}, user={user_name!r}, scene={scene_name!r})"
                )
            slug = label.replace(" ", "_").replace("-", "_")
            sample_id = f"{slug}_{user_name}_{scene_name}_{k:03d}"
            path = sample_dir / f"{sample_id}.qgfw"
            window.meta.update({"sample_id": sample_id})
            write_feature_sample(path, window)
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    label=label,
                    user=user_name,
                    scene=scene_name,
                    seed=sample_seed,
                    path=str(path.relative_to(out_dir)),
                    config_hash=cfg.config_hash,
                )
            )
            if progress:
                print(f"  generated {sample_id}")

    manifest = DatasetManifest(
        spec=spec, seed=int(seed), config_hash=cfg.config_hash,
        samples=records, regenerations=regenerations,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def split(manifest: DatasetManifest, train_frac: float = 0.7, seed: int = 0, ids=None):
    """Stratified per-class split (floor on the train side); disjoint, seeded."""
    pool = manifest.samples if ids is None else [s for s in manifest.samples if s.sample_id in set(ids)]
    by_class = {}
    for s in pool:
        by_class.setdefault(s.label, []).append(s.sample_id)
    for label, members in by_class.items():
        if len(members) < 2:
            raise ConfigError(f"class {label!r} has fewer than 2 samples; cannot split")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B117]))
    train_ids, val_ids = [], []
    for label in sorted(by_class, key=GESTURE_CLASSES.index):
        members = sorted(by_class[label])
        order = rng.permutation(len(members))
        n_train = int(math.floor(train_frac * len(members)))
        train_ids.extend(members[i] for i in order[:n_train])
        val_ids.extend(members[i] for i in order[n_train:])
    return train_ids, val_ids


def select_ids(manifest: DatasetManifest, users=None, scenes=None, classes=None) -> list:
    users = set(users) if users else None
    scenes = set(scenes) if scenes else None
    classes = {canonical_gesture(c) for c in classes} if classes else None
    return [
        s.sample_id
        for s in manifest.samples
        if (users is None or s.user in users)
        and (scenes is None or s.scene in scenes)
        and (classes is None or s.label in classes)
    ]


def load_arrays(manifest: DatasetManifest, base_dir, ids=None):
    """(X, y, records) for the selected sample ids; labels indexed over the manifest's classes."""
    base_dir = Path(base_dir)
    wanted = None if ids is None else set(ids)
    labels = manifest.labels()
    label_index = {l: i for i, l in enumerate(labels)}
    xs, ys, recs = [], [], []
    for s in manifest.samples:
        if wanted is not None and s.sample_id not in wanted:
            continue
        window = read_feature_sample(base_dir / s.path)
        xs.append(np.asarray(window.values, dtype=float))
        ys.append(label_index[s.label])
        recs.append(s)
    if not xs:
        raise InvalidInputError("selection matched no samples")
    return np.stack(xs), np.asarray(ys, dtype=int), recs


@dataclass
class EvalReport:
    labels: list
    accuracy: float
    per_class: dict          # label -> accuracy
    confusion: np.ndarray = field(repr=False)   # (classes, classes), rows = truth
    groups: dict = field(default_factory=dict)  # (scene, user) -> {"n": ..., "accuracy": ...}

    def table_text(self) -> str:
        """Human-readable (scene x user) accuracy table."""
        scenes = sorted({k[0] for k in self.groups})
        users = sorted({k[1] for k in self.groups})
        width = max([len(s) for s in scenes] + [12])
        lines = [f"{'Scene':<{width}}  " + "  ".join(f"User {u:>4}" for u in users)]
        for sc in scenes:
            cells = []
            for u in users:
                g = self.groups.get((sc, u))
                cells.append(f"{g['accuracy'] * 100:8.1f}%" if g else f"{'-':>9}")
            lines.append(f"{sc:<{width}}  " + "  ".join(cells))
        lines.append(f"overall accuracy: {self.accuracy * 100:.1f}%")
        return "\n".join(lines)


def evaluate_arrays(model, x, y, labels) -> EvalReport:
    from .cnn import forward

    n_cls = len(labels)
    confusion = np.zeros((n_cls, n_cls), dtype=int)
    preds = []
    for lo in range(0, len(y), 64):
        probs = forward(model, x[lo : lo + 64])
        preds.extend(np.argmax(probs, axis=1))
    preds = np.asarray(preds)
    for truth, pred in zip(y, preds):
        confusion[truth, pred] += 1
    per_class = {
        labels[i]: float(confusion[i, i] / confusion[i].sum()) if confusion[i].sum() else 0.0
        for i in range(n_cls)
    }
    return EvalReport(
        labels=list(labels),
        accuracy=float(np.mean(preds == y)),
        per_class=per_class,
        confusion=confusion,
    )


def evaluate(model, manifest: DatasetManifest, base_dir, ids=None) -> EvalReport:
    """Accuracy, confusion matrix, and per-(scene, user) grouping on a selection."""
    x, y, recs = load_arrays(manifest, base_dir, ids)
    report = evaluate_arrays(model, x, y, manifest.labels())
    preds = []
    from .cnn import forward

    for lo in range(0, len(y), 64):
        preds.extend(np.argmax(forward(model, x[lo : lo + 64]), axis=1))
    groups = {}
    for rec, truth, pred in zip(recs, y, preds):
        key = (rec.scene, rec.user)
        g = groups.setdefault(key, {"n": 0, "hits": 0})
        g["n"] += 1
        g["hits"] += int(truth == pred)
    report.groups = {
        k: {"n": g["n"], "accuracy": g["hits"] / g["n"]} for k, g in groups.items()
    }
    return report
