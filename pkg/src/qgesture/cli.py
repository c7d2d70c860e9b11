"""Command-line interface wiring the whole pipeline.

Commands: simulate, make-dataset, train, eval, infer, export-images.
Exit codes: 0 success, 2 config/parameter error, 3 I/O error, 4 data-format
error. Errors print a single machine-parseable line to stderr."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import cnn, dataset, dsp, features, formats, report, sim
from .config import AppConfig
from .errors import ConfigError, DataFormatError, InvalidInputError


def _load_config(args) -> AppConfig:
    if getattr(args, "config", None):
        return AppConfig.from_json(args.config)
    return AppConfig()


def _print_radar_constants(cfg) -> None:
    print(f"range resolution   dR    = {cfg.range_resolution:.4f} m")
    print(f"velocity resolution v_res = {cfg.velocity_resolution:.4f} m/s")
    print(f"unambiguous velocity v_max = {cfg.max_velocity:.4f} m/s")
    print(f"maximum range       r_max = {cfg.max_range:.2f} m")


def cmd_simulate(args) -> int:
    app = _load_config(args)
    cfg = app.radar
    label = sim.canonical_gesture(args.gesture)
    _print_radar_constants(cfg)
    traj = sim.make_trajectory(label, args.seed, frame_rate=cfg.frame_rate)
    frames = sim.render_gesture(traj, cfg, args.seed, idle_lead=args.idle_frames,
                                idle_tail=args.idle_frames)
    formats.write_raw_frames(
        args.out, frames, cfg,
        meta={"gesture": label, "seed": args.seed, "duration": traj.duration},
    )
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def cmd_make_dataset(args) -> int:
    app = _load_config(args)
    spec = app.dataset
    if args.per_class:
        import dataclasses

        spec = dataclasses.replace(spec, per_class=args.per_class)
    if args.classes:
        import dataclasses

        spec = dataclasses.replace(spec, classes=tuple(args.classes))
    manifest = dataset.generate_dataset(
        spec, args.out, args.seed, cfg=app.radar, cfar=app.cfar, feat=app.features,
        progress=args.verbose,
    )
    print(
        f"wrote {len(manifest.samples)} samples "
        f"({manifest.regenerations} regenerations) to {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    app = _load_config(args)
    manifest = dataset.DatasetManifest.load(Path(args.dataset) / "manifest.json")
    ids = dataset.select_ids(manifest, users=args.users or None) if args.users else None
    train_ids, val_ids = dataset.split(manifest, seed=args.seed, ids=ids)
    x_tr, y_tr, _ = dataset.load_arrays(manifest, args.dataset, train_ids)
    x_va, y_va, _ = dataset.load_arrays(manifest, args.dataset, val_ids)
    import dataclasses

    tcfg = dataclasses.replace(app.train, seed=args.seed)
    arch = cnn.Architecture(input_shape=x_tr.shape[1:], classes=len(manifest.labels()))
    result = cnn.train((x_tr, y_tr), (x_va, y_va), tcfg, arch, verbose=args.verbose)

    out = report.ensure_dir(args.out)
    cnn.save_model(out / "model.qgcnn", result.final_model)
    cnn.save_model(out / "model_best.qgcnn", result.best_model)
    report.save_history_csv(result.history, out / "history.csv")
    report.save_history_figure(result.history, out / "history.png")
    with open(out / "labels.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.labels(), fh)
    print(
        f"trained {tcfg.epochs} epochs on {len(y_tr)}/{len(y_va)} samples; "
        f"final val_acc {result.history[-1]['val_acc']:.3f}, best {result.best_val_accuracy:.3f}"
    )
    return 0


def cmd_eval(args) -> int:
    model, _ = cnn.load_model(args.model)
    manifest = dataset.DatasetManifest.load(Path(args.dataset) / "manifest.json")
    ids = None
    if args.users or args.scenes:
        ids = dataset.select_ids(manifest, users=args.users or None, scenes=args.scenes or None)
    rep = dataset.evaluate(model, manifest, args.dataset, ids)
    out = report.ensure_dir(args.out)
    report.save_group_report_csv(rep, out / "report.csv")
    report.save_confusion_csv(rep, out / "confusion.csv")
    report.save_confusion_figure(rep, out / "confusion_matrix.png")
    report.save_group_accuracy_figure(rep, out / "group_accuracy.png")
    table = rep.table_text()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_infer(args) -> int:
    app = _load_config(args)
    model, _ = cnn.load_model(args.model)
    labels = None
    labels_path = Path(args.model).parent / "labels.json"
    if labels_path.exists():
        labels = json.loads(labels_path.read_text(encoding="utf-8"))
    if labels is None:
        labels = list(sim.GESTURE_CLASSES)

    if args.input:
        frames, cfg, _meta = formats.read_raw_frames(args.input)
    elif args.simulate:
        cfg = app.radar
        label = sim.canonical_gesture(args.simulate)
        traj = sim.make_trajectory(label, args.seed, frame_rate=cfg.frame_rate)
        frames = sim.render_gesture(traj, cfg, args.seed)
    else:
        raise ConfigError("infer needs either --input RAWFILE or --simulate CLASS")

    sink = open(args.out_file, "w", encoding="utf-8") if args.out_file else sys.stdout
    state = features.CaptureState(cfg, app.features)
    latencies = []
    try:
        for cube in frames:
            t_sim = cube.frame_index / cfg.frame_rate
            t0 = time.perf_counter()
            pc = dsp.extract_point_cloud(cube, cfg, app.cfar)
            state.push_frame(pc)
            captured = state.try_capture()
            latency_ms = (time.perf_counter() - t0) * 1e3
            latencies.append(latency_ms)
            print(
                json.dumps(
                    {
                        "t": round(t_sim, 3),
                        "frame": cube.frame_index,
                        "latency_ms": round(latency_ms, 3),
                        "n_points": len(pc.points),
                    }
                ),
                file=sink,
            )
            if captured is not None:
                raw, stats = captured
                window = features.normalize(raw, app.features.dynamic_range_db)
                cls, probs = cnn.predict(model, window.values.astype(float))
                print(
                    json.dumps(
                        {
                            "t": round(t_sim, 3),
                            "class": labels[cls] if cls < len(labels) else cls,
                            "probs": [round(float(p), 4) for p in probs],
                            "trigger_stats": stats,
                        }
                    ),
                    file=sink,
                )
            if args.realtime:
                budget = 1.0 / cfg.frame_rate - (time.perf_counter() - t0)
                if budget > 0:
                    time.sleep(budget)
    finally:
        if sink is not sys.stdout:
            sink.close()
    print(
        f"processed {len(latencies)} frames, mean latency {np.mean(latencies):.1f} ms",
        file=sys.stderr,
    )
    return 0


def cmd_export_images(args) -> int:
    window = formats.read_feature_sample(args.sample)
    sample_id = window.meta.get("sample_id") or Path(args.sample).stem
    out = report.ensure_dir(args.out)
    paths = features.export_window_images(window, out, sample_id)
    report.save_feature_window_figure(window, out / f"{sample_id}_features.png")
    for p in paths:
        print(f"wrote {p}")
    print(f"wrote {out / f'{sample_id}_features.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgesture",
        description="Synthetic millimeter-wave hand-gesture recognition pipeline",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (AppConfig layout)")
    common.add_argument("--seed", type=int, default=0, help="random seed")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="render one gesture to a raw frame file")
    p.add_argument("--gesture", "--class", dest="gesture", required=True)
    p.add_argument("--out", required=True, help="output raw-frame file")
    p.add_argument("--idle-frames", type=int, default=5)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("make-dataset", parents=[common], help="generate a labeled dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--per-class", type=int)
    p.add_argument("--classes", nargs="*")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", parents=[common], help="train the classifier on a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory (with manifest.json)")
    p.add_argument("--out", required=True, help="output directory for model and history")
    p.add_argument("--users", nargs="*", help="restrict training to these user profiles")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset selection")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--users", nargs="*")
    p.add_argument("--scenes", nargs="*")
    p.add_argument("--group-by", default="scene,user", help="report grouping (scene,user)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", parents=[common], help="stream classification over a frame source")
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="raw frame file")
    p.add_argument("--simulate", help="render this gesture class as the live source")
    p.add_argument("--out-file", help="write NDJSON here instead of stdout")
    p.add_argument("--realtime", action="store_true", help="pace frames on the wall clock")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("export-images", parents=[common], help="write PGM feature images for a sample")
    p.add_argument("--sample", required=True, help="feature sample file (.qgfw)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_images)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"error: format: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
