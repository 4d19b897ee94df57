"""Command-line entry point.

Subcommands: generate, perturb, convert, train, predict, eval, ablate, bench.
Every run writes one ``manifest.json`` beside its outputs with the resolved
configuration, inputs, outputs, seed, and wall clock, so results can be
reproduced from the manifest alone.

Exit codes: 0 success, 2 bad input (unreadable files, inconsistent shapes,
bad flag values), 1 unexpected internal error. Flags can also be supplied via
environment variables named ``MOTIONFORECAST_<FLAG>`` (for example
``MOTIONFORECAST_SEED=7``); an explicit flag wins over the environment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .data import (
    MODES,
    SEQUENCE_SUFFIX,
    SPEED_RANGE,
    SyntheticSpec,
    apply_random_rigid,
    convert_raw,
    default_skeleton,
    generate_synthetic,
    load_directory,
    read_sequence,
    write_sequence,
)
from .metrics import bench_forward, evaluate_windows
from .model import ModelConfig, MotionPredictor, count_params, load_checkpoint
from .presets import PRESETS, get_preset
from .skeleton import HorizonSpec, MotionSequence, SequenceTooShortError, sliding_windows
from .training import TrainConfig, train

ENV_PREFIX = "MOTIONFORECAST_"

ABLATIONS = ("no_gat", "no_relative_attn", "no_shared_attn")

PERTURB_MODES = ("original", "translate", "rotate", "translate+rotate")


def _env(flag: str) -> str | None:
    return os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))


def _resolve(value, flag: str, cast, fallback):
    """Flag value if given, else environment override, else fallback."""
    if value is not None:
        return value
    raw = _env(flag)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ValueError(f"invalid value {raw!r} for {ENV_PREFIX}{flag.upper()}") from None


def _env_true(flag: str) -> bool:
    raw = _env(flag)
    return raw is not None and raw.strip().lower() in ("1", "true", "yes", "on")


def _apply_threads(args) -> None:
    threads = _resolve(getattr(args, "threads", None), "threads", int, None)
    if threads is not None:
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}")
        torch.set_num_threads(threads)


def _write_manifest(out_dir, command: str, config: dict, inputs, outputs, seed, started: float):
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _load_sequences(data_dir) -> list[MotionSequence]:
    seqs = load_directory(data_dir)
    if not seqs:
        raise ValueError(f"no sequences found in {data_dir}")
    first = seqs[0].skeleton
    for seq in seqs[1:]:
        if seq.skeleton != first:
            raise ValueError(f"sequences in {data_dir} use differing skeletons")
    return seqs


def _collect_windows(seqs, horizon: HorizonSpec, stride: int):
    windows = []
    for seq in seqs:
        windows.extend(sliding_windows(seq, horizon, stride=stride))
    if not windows:
        raise ValueError(
            f"no sequences found with at least {horizon.total} frames "
            f"(horizon {horizon.input_len}+{horizon.output_len})"
        )
    return windows


def cmd_generate(args) -> int:
    started = time.perf_counter()
    seed = _resolve(args.seed, "seed", int, 0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    skeleton = default_skeleton()
    outputs = []
    modes = MODES if args.mode == "mixed" else (args.mode,)
    for i in range(args.count):
        mode = modes[i % len(modes)]
        speed = args.speed if args.speed is not None else float(
            rng.uniform(SPEED_RANGE[0], SPEED_RANGE[1])
        )
        spec = SyntheticSpec(
            mode=mode,
            speed=speed,
            duration=args.duration,
            fps=args.fps,
            seed=seed + i,
            actor_height=args.height,
        )
        seq = generate_synthetic(spec, skeleton)
        path = out_dir / f"seq_{i:04d}{SEQUENCE_SUFFIX}"
        write_sequence(seq, path)
        outputs.append(path)
    config = {
        "count": args.count,
        "mode": args.mode,
        "speed": args.speed,
        "duration": args.duration,
        "fps": args.fps,
        "height": args.height,
    }
    _write_manifest(out_dir, "generate", config, [], outputs, seed, started)
    print(f"wrote {len(outputs)} sequences to {out_dir}")
    return 0


def cmd_perturb(args) -> int:
    started = time.perf_counter()
    seed = _resolve(args.seed, "seed", int, 0)
    in_dir = Path(args.data)
    seqs = sorted(in_dir.glob(f"*{SEQUENCE_SUFFIX}")) if in_dir.is_dir() else []
    if not seqs:
        raise ValueError(f"no sequences found in {args.data}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    applied = {}
    for i, src in enumerate(seqs):
        seq = read_sequence(src)
        moved, motion = apply_random_rigid(
            seq, translation_range=args.translation, yaw_range=args.yaw, seed=seed + i
        )
        dst = out_dir / src.name
        write_sequence(moved, dst)
        outputs.append(dst)
        applied[src.name] = {"translation": list(motion.translation), "yaw": motion.yaw}
    config = {
        "translation_range": args.translation,
        "yaw_range": args.yaw,
        "applied": applied,
    }
    _write_manifest(out_dir, "perturb", config, seqs, outputs, seed, started)
    print(f"perturbed {len(outputs)} sequences into {out_dir}")
    return 0


def cmd_convert(args) -> int:
    started = time.perf_counter()
    skeleton = default_skeleton()
    seq = convert_raw(
        args.infile, skeleton, fps_in=args.fps_in, fps_out=args.fps_out, units=args.units
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_sequence(seq, out_path)
    config = {"units": args.units, "fps_in": args.fps_in, "fps_out": args.fps_out}
    _write_manifest(out_path.parent, "convert", config, [args.infile], [out_path], None, started)
    print(f"wrote {len(seq)} frames at {seq.fps} fps to {out_path}")
    return 0


def _train_configs(args, skeleton_joints: int) -> tuple[ModelConfig, TrainConfig]:
    preset = get_preset(_resolve(args.preset, "preset", str, "h36m"))
    seed = _resolve(args.seed, "seed", int, 0)
    delta = _resolve(args.delta, "delta", int, 1)
    no_transform = args.no_transform or _env_true("no-transform")
    ablation = _resolve(args.ablation, "ablation", str, None)
    if ablation is not None and ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")

    config_path = _resolve(args.config, "config", str, None)
    base = TrainConfig.from_file(config_path) if config_path else TrainConfig()
    overrides: dict = {}
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    elif config_path is None:
        overrides["max_epochs"] = preset.max_epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.weight_decay is not None:
        overrides["weight_decay"] = args.weight_decay
    overrides["seed"] = seed
    if ablation is not None:
        overrides[ablation] = True
    train_cfg = dataclasses.replace(base, **overrides)

    model_cfg = ModelConfig(
        num_joints=skeleton_joints,
        input_len=args.input_len if args.input_len is not None else preset.input_len,
        output_len=args.output_len if args.output_len is not None else preset.output_len,
        j_dim=args.j_dim,
        num_layers=args.layers,
        num_heads=args.heads,
        ffn_dim=args.ffn_dim,
        dropout=args.dropout,
        use_transform=not no_transform,
        direction_interval=delta,
        dtype=args.dtype,
    )
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    started = time.perf_counter()
    _apply_threads(args)
    seqs = _load_sequences(args.data)
    skeleton = seqs[0].skeleton
    model_cfg, train_cfg = _train_configs(args, skeleton.num_joints)
    horizon = HorizonSpec(model_cfg.input_len, model_cfg.output_len)
    windows = _collect_windows(seqs, horizon, args.stride)
    val_windows = None
    if args.val_fraction > 0.0:
        rng = np.random.default_rng(train_cfg.seed)
        order = rng.permutation(len(windows))
        n_val = max(1, int(round(args.val_fraction * len(windows))))
        if n_val >= len(windows):
            raise ValueError("validation fraction leaves no training windows")
        val_windows = [windows[i] for i in order[:n_val]]
        windows = [windows[i] for i in order[n_val:]]
    result = train(windows, model_cfg, train_cfg, args.out, val_windows=val_windows)
    for record in result.records:
        line = f"epoch {record['epoch']}/{train_cfg.max_epochs} loss={record['train_loss']:.6f}"
        if "val_ade_tr" in record:
            line += f" val_ade_tr={record['val_ade_tr']:.4f}"
        print(line)
    outputs = [result.checkpoint_path]
    if result.best_checkpoint_path:
        outputs.append(result.best_checkpoint_path)
    config = {"model": result.model.cfg.as_dict(), "train": train_cfg.as_dict()}
    _write_manifest(args.out, "train", config, [args.data], outputs, train_cfg.seed, started)
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _read_model(args):
    _apply_threads(args)
    return load_checkpoint(args.checkpoint)


def cmd_predict(args) -> int:
    started = time.perf_counter()
    model, skeleton = _read_model(args)
    seq = read_sequence(args.infile)
    t1 = model.cfg.input_len
    if len(seq) < t1:
        raise SequenceTooShortError(f"{args.infile} has {len(seq)} frames, need {t1}")
    observed = seq.with_frames(seq.frames[len(seq) - t1 :])
    predictor = MotionPredictor(model, skeleton)
    future = predictor.predict(observed)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_sequence(future, out_path)
    config = {"checkpoint": str(args.checkpoint), "model": model.cfg.as_dict()}
    _write_manifest(
        out_path.parent, "predict", config, [args.checkpoint, args.infile], [out_path], None, started
    )
    print(f"wrote {len(future)} predicted frames to {out_path}")
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    model, skeleton = _read_model(args)
    seqs = _load_sequences(args.data)
    if seqs[0].skeleton != skeleton:
        raise ValueError("checkpoint skeleton does not match the data skeleton")
    horizon = HorizonSpec(model.cfg.input_len, model.cfg.output_len)
    windows = _collect_windows(seqs, horizon, args.stride)
    predictor = MotionPredictor(model, skeleton)
    runtime_ms = None
    if args.bench_repeats > 0:
        runtime_ms = bench_forward(predictor, windows[0][0], repeats=args.bench_repeats).median_ms
    report = evaluate_windows(predictor, windows, runtime_ms=runtime_ms)
    print(report.table())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    config = {"model": model.cfg.as_dict(), "bench_repeats": args.bench_repeats}
    _write_manifest(out_dir, "eval", config, [args.checkpoint, args.data], [report_path], None, started)
    return 0


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    seed = _resolve(args.seed, "seed", int, 0)
    model, skeleton = _read_model(args)
    seqs = _load_sequences(args.data)
    if seqs[0].skeleton != skeleton:
        raise ValueError("checkpoint skeleton does not match the data skeleton")
    no_transform = args.no_transform or _env_true("no-transform")
    predictor = MotionPredictor(
        model, skeleton, use_transform=False if no_transform else None
    )
    horizon = HorizonSpec(model.cfg.input_len, model.cfg.output_len)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in PERTURB_MODES]
    if bad:
        raise ValueError(f"unknown perturbation modes {bad}; available: {PERTURB_MODES}")
    rows = {}
    for mode in modes:
        t_range = args.translation if "translate" in mode else 0.0
        y_range = args.yaw if "rotate" in mode else 0.0
        if mode == "original":
            moved = seqs
        else:
            moved = [
                apply_random_rigid(seq, t_range, y_range, seed=seed + i)[0]
                for i, seq in enumerate(seqs)
            ]
        windows = _collect_windows(moved, horizon, args.stride)
        rows[mode] = evaluate_windows(predictor, windows)
    width = max(len(m) for m in rows)
    print(f"{'mode':<{width}} {'ADE_Po':>8} {'FDE_Po':>8} {'ADE_Tr':>8} {'FDE_Tr':>8}")
    for mode, rep in rows.items():
        print(
            f"{mode:<{width}} {rep.ade_pose:8.4f} {rep.fde_pose:8.4f} "
            f"{rep.ade_traj:8.4f} {rep.fde_traj:8.4f}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "robustness.json"
    report_path.write_text(
        json.dumps({m: r.as_dict() for m, r in rows.items()}, indent=2) + "\n",
        encoding="utf-8",
    )
    config = {
        "model": model.cfg.as_dict(),
        "modes": modes,
        "translation_range": args.translation,
        "yaw_range": args.yaw,
        "use_transform": predictor.use_transform,
    }
    _write_manifest(out_dir, "ablate", config, [args.checkpoint, args.data], [report_path], seed, started)
    return 0


def cmd_bench(args) -> int:
    started = time.perf_counter()
    model, skeleton = _read_model(args)
    cfg = model.cfg
    if args.infile is not None:
        seq = read_sequence(args.infile)
        if len(seq) < cfg.input_len:
            raise SequenceTooShortError(
                f"{args.infile} has {len(seq)} frames, need {cfg.input_len}"
            )
        observed = seq.with_frames(seq.frames[len(seq) - cfg.input_len :])
    else:
        rng = np.random.default_rng(_resolve(args.seed, "seed", int, 0))
        offsets = rng.normal(0.0, 0.3, size=(cfg.num_joints, 3))
        steps = np.arange(cfg.input_len, dtype=np.float64)
        frames = offsets[None, :, :] + np.stack(
            [0.1 * steps, np.zeros_like(steps), np.zeros_like(steps)], axis=-1
        )[:, None, :]
        observed = MotionSequence(skeleton, frames, 10.0)
    predictor = MotionPredictor(model, skeleton)
    result = bench_forward(predictor, observed, repeats=args.repeats)
    params = count_params(cfg)
    print(f"parameters: {params}")
    print(
        f"latency over {result.repeats} runs: median {result.median_ms:.2f} ms, "
        f"p95 {result.p95_ms:.2f} ms"
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "bench.json"
    payload = {"parameters": params, **result.as_dict()}
    report_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    config = {"model": cfg.as_dict(), "repeats": args.repeats}
    _write_manifest(out_dir, "bench", config, [args.checkpoint], [report_path], None, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionforecast",
        description="3D human pose and trajectory forecasting toolkit.",
        epilog=(
            "Flags can also be set through environment variables named "
            f"{ENV_PREFIX}<FLAG> (e.g. {ENV_PREFIX}SEED, {ENV_PREFIX}THREADS, "
            f"{ENV_PREFIX}PRESET); explicit flags take precedence."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic walking sequences")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--count", type=int, default=10, help="number of sequences")
    gen.add_argument(
        "--mode", choices=MODES + ("mixed",), default="mixed", help="path shape"
    )
    gen.add_argument("--speed", type=float, default=None, help="fixed speed in m/s (default: random)")
    gen.add_argument("--duration", type=float, default=6.0, help="seconds per sequence")
    gen.add_argument("--fps", type=float, default=10.0, help="frames per second")
    gen.add_argument("--height", type=float, default=1.75, help="actor height in m")
    gen.add_argument("--seed", type=int, default=None, help="master random seed")
    gen.set_defaults(func=cmd_generate)

    per = sub.add_parser("perturb", help="apply random rigid motions to sequences")
    per.add_argument("--data", required=True, help="input directory of .seq files")
    per.add_argument("--out", required=True, help="output directory")
    per.add_argument("--translation", type=float, default=10.0, help="translation range ±m")
    per.add_argument("--yaw", type=float, default=math.pi, help="yaw range ±rad")
    per.add_argument("--seed", type=int, default=None, help="master random seed")
    per.set_defaults(func=cmd_perturb)

    con = sub.add_parser("convert", help="convert raw coordinate dumps to .seq")
    con.add_argument("--in", dest="infile", required=True, help=".npy or text table input")
    con.add_argument("--out", required=True, help="output .seq path")
    con.add_argument("--fps-in", type=float, required=True, help="input frame rate")
    con.add_argument("--fps-out", type=float, default=None, help="decimate to this rate")
    con.add_argument("--units", choices=("m", "mm"), default="m", help="input units")
    con.set_defaults(func=cmd_convert)

    tr = sub.add_parser("train", help="train a forecasting model")
    tr.add_argument("--data", required=True, help="directory of .seq files")
    tr.add_argument("--out", required=True, help="output directory for checkpoints")
    tr.add_argument("--preset", choices=sorted(PRESETS), default=None, help="dataset preset")
    tr.add_argument("--config", default=None, help="JSON train-config file")
    tr.add_argument("--epochs", type=int, default=None, help="override epoch count")
    tr.add_argument("--batch-size", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None, help="learning rate")
    tr.add_argument("--weight-decay", type=float, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--threads", type=int, default=None, help="torch thread cap")
    tr.add_argument(
        "--no-transform",
        action="store_true",
        help="train on raw global coordinates instead of the canonical frame",
    )
    tr.add_argument("--ablation", choices=ABLATIONS, default=None, help="drop one component")
    tr.add_argument("--delta", type=int, default=None, help="frames between the yaw reference poses")
    tr.add_argument("--input-len", type=int, default=None, help="observed frames")
    tr.add_argument("--output-len", type=int, default=None, help="predicted frames")
    tr.add_argument("--stride", type=int, default=1, help="window stride over sequences")
    tr.add_argument("--val-fraction", type=float, default=0.0, help="validation share of windows")
    tr.add_argument("--j-dim", type=int, default=32, help="features per joint")
    tr.add_argument("--layers", type=int, default=4, help="encoder/decoder layers")
    tr.add_argument("--heads", type=int, default=8, help="attention heads")
    tr.add_argument("--ffn-dim", type=int, default=2048, help="feed-forward width")
    tr.add_argument("--dropout", type=float, default=0.1)
    tr.add_argument("--dtype", choices=("float32", "float64"), default="float64")
    tr.set_defaults(func=cmd_train)

    pre = sub.add_parser("predict", help="forecast the future of one sequence")
    pre.add_argument("--checkpoint", required=True)
    pre.add_argument("--in", dest="infile", required=True, help="observed .seq file")
    pre.add_argument("--out", required=True, help="output .seq path")
    pre.add_argument("--threads", type=int, default=None)
    pre.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="displacement errors of a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="directory of .seq files")
    ev.add_argument("--out", default=".", help="directory for report.json")
    ev.add_argument("--stride", type=int, default=1)
    ev.add_argument("--bench-repeats", type=int, default=0, help="also time the forward pass")
    ev.add_argument("--threads", type=int, default=None)
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="robustness table under rigid perturbations")
    ab.add_argument("--checkpoint", required=True)
    ab.add_argument("--data", required=True)
    ab.add_argument("--out", default=".", help="directory for robustness.json")
    ab.add_argument(
        "--modes",
        default=",".join(PERTURB_MODES),
        help=f"comma-separated subset of {PERTURB_MODES}",
    )
    ab.add_argument("--translation", type=float, default=10.0, help="translation range ±m")
    ab.add_argument("--yaw", type=float, default=math.pi, help="yaw range ±rad")
    ab.add_argument("--stride", type=int, default=1)
    ab.add_argument("--seed", type=int, default=None)
    ab.add_argument(
        "--no-transform",
        action="store_true",
        help="bypass canonicalization at inference to expose the degradation",
    )
    ab.add_argument("--threads", type=int, default=None)
    ab.set_defaults(func=cmd_ablate)

    be = sub.add_parser("bench", help="latency and parameter count of a checkpoint")
    be.add_argument("--checkpoint", required=True)
    be.add_argument("--repeats", type=int, default=50)
    be.add_argument("--in", dest="infile", default=None, help="optional observed .seq file")
    be.add_argument("--out", default=".", help="directory for bench.json")
    be.add_argument("--seed", type=int, default=None)
    be.add_argument("--threads", type=int, default=None)
    be.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # Covers bad flag values, malformed files (SequenceFileError,
        # CheckpointError), short sequences, and missing paths.
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
