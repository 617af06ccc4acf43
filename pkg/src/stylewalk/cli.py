"""Command-line front door: dataset generation, training, sampling,
evaluation, and BVH inspection.

Every command is a single process, takes an explicit seed where randomness
is involved, and writes a run manifest next to its outputs so any artifact
can be reproduced from the manifest alone.  Outputs are files; nothing is
interactive.

Exit codes: 0 success, 2 config/validation error, 3 I/O error (including
corrupt input files), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .denoiser import ConditionPair
from .motion import (BvhParseError, MotionClip, NormStats, WalkStyle, clip_from_csv,
                     clip_to_bvh, clip_to_csv, compute_norm_stats, normalize,
                     parse_bvh, synthetic_walk)
from .schedule import make_linear_schedule, sample_loop
from .training import (CheckpointError, ConfigError, NumericError, TrainConfig,
                       config_from_text, load_checkpoint, run_training,
                       save_checkpoint)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DEFAULT_STYLES = {
    "neutral": WalkStyle(stride_cm=55.0, frequency_hz=1.1, lean_deg=0.0, bounce_cm=5.0),
    "brisk": WalkStyle(stride_cm=45.0, frequency_hz=1.8, lean_deg=6.0, bounce_cm=7.0),
    "march": WalkStyle(stride_cm=65.0, frequency_hz=1.4, lean_deg=-3.0, bounce_cm=9.0),
    "sneak": WalkStyle(stride_cm=30.0, frequency_hz=0.9, lean_deg=12.0, bounce_cm=3.0),
}


def write_manifest(out_dir: Path, command: str, config: dict, seed,
                   inputs: dict, outputs: list[str], name: str = "manifest.json") -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
    }
    (out_dir / name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_style_flag(spec: str) -> tuple[str, WalkStyle]:
    # NAME=stride,frequency,lean,bounce
    try:
        name, params = spec.split("=", 1)
        stride, freq, lean, bounce = (float(v) for v in params.split(","))
    except ValueError:
        raise ConfigError(
            f"bad --style {spec!r}, expected NAME=stride,frequency,lean,bounce") from None
    return name, WalkStyle(stride, freq, lean, bounce)


# -- gendata -------------------------------------------------------------------


def cmd_gendata(args) -> int:
    if args.clips_per_style < 1:
        raise ConfigError("--clips-per-style must be >= 1")
    if args.style:
        styles = dict(_parse_style_flag(s) for s in args.style)
    else:
        styles = dict(DEFAULT_STYLES)
    if not styles:
        raise ConfigError("empty style grid")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    clip_entries = []
    written: list[str] = []
    clips = []
    clip_index = 0
    for style_id, (name, style) in enumerate(styles.items()):
        for _ in range(args.clips_per_style):
            seed = args.seed + clip_index
            clip, labels = synthetic_walk(
                style, clip_frames=args.frames, frame_time=args.frame_time, seed=seed)
            feat_name = f"clip_{clip_index:04d}.csv"
            contact_name = f"clip_{clip_index:04d}_contacts.csv"
            (out / feat_name).write_text(clip_to_csv(clip))
            contact_lines = [",".join(f"contact_{f}" for f in clip.layout.foot_names)]
            contact_lines += [",".join(f"{v:.0f}" for v in row) for row in labels]
            (out / contact_name).write_text("\n".join(contact_lines) + "\n")
            # dataset of record is the rounded CSV, so stats come from a re-parse
            clips.append(clip_from_csv((out / feat_name).read_text(), args.frame_time))
            clip_entries.append({
                "features": feat_name,
                "contacts": contact_name,
                "content_id": 0,
                "style_id": style_id,
                "style_name": name,
                "seed": seed,
            })
            written += [feat_name, contact_name]
            clip_index += 1

    stats = compute_norm_stats(clips)
    (out / "norm_stats.json").write_text(json.dumps({
        "mean": list(stats.mean), "std": list(stats.std)}, indent=2) + "\n")
    index = {
        "frame_time": args.frame_time,
        "clip_frames": args.frames,
        "content_names": ["walk"],
        "styles": [
            {"style_id": i, "name": name, "params": dataclasses.asdict(style)}
            for i, (name, style) in enumerate(styles.items())
        ],
        "clips": clip_entries,
    }
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    written += ["norm_stats.json", "index.json"]

    write_manifest(
        out, "gendata",
        {"clips_per_style": args.clips_per_style, "frames": args.frames,
         "frame_time": args.frame_time,
         "styles": {n: dataclasses.asdict(s) for n, s in styles.items()}},
        args.seed, {}, sorted(written))
    print(f"wrote {clip_index} clips ({len(styles)} styles) to {out}")
    return EXIT_OK


def load_dataset(data_dir) -> tuple[list[MotionClip], list[ConditionPair], dict]:
    data_dir = Path(data_dir)
    index = json.loads((data_dir / "index.json").read_text())
    frame_time = float(index["frame_time"])
    clips, conds = [], []
    for entry in index["clips"]:
        text = (data_dir / entry["features"]).read_text()
        clips.append(clip_from_csv(text, frame_time))
        conds.append(ConditionPair(int(entry["content_id"]), int(entry["style_id"])))
    if not clips:
        raise ConfigError(f"dataset at {data_dir} has no clips")
    return clips, conds, index


# -- train ---------------------------------------------------------------------


def _apply_overrides(config: TrainConfig, pairs: list[str]) -> TrainConfig:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = dataclasses.asdict(config)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"bad --set {pair!r}, expected key=value")
        key, value = (p.strip() for p in pair.split("=", 1))
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = fields[key].type
        try:
            values[key] = int(value) if ftype == "int" else (
                float(value) if ftype == "float" else value)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for {key!r}") from None
    return TrainConfig(**values)


def cmd_train(args) -> int:
    if args.config:
        config, _ = config_from_text(Path(args.config).read_text())
    else:
        config = TrainConfig()
    config = _apply_overrides(config, args.set or [])
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.epochs is not None:
        config = dataclasses.replace(config, epochs=args.epochs)
    config = dataclasses.replace(config, dataset=str(args.data))
    config.validate()

    clips, conds, index = load_dataset(args.data)
    config = dataclasses.replace(config, clip_frames=clips[0].frames)
    params, disc_params, stats, log = run_training(
        clips, conds, config,
        n_content=len(index.get("content_names", ["walk"])),
        n_style=len(index["styles"]))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    layout = clips[0].layout
    meta = {
        "layout_joints": ",".join(layout.joint_names),
        "layout_feet": ",".join(layout.foot_names),
        "frame_time": repr(clips[0].frame_time),
        "clip_frames": str(clips[0].frames),
    }
    save_checkpoint(out, params, disc_params, stats, config, meta)
    log_path = out.with_suffix(out.suffix + ".log") if out.suffix != ".log" else out
    log_path = Path(str(out) + ".log")
    log_path.write_text("\n".join(log) + "\n")
    write_manifest(
        out.parent, "train", dataclasses.asdict(config), config.seed,
        {"data": str(args.data), "config_file": str(args.config or "")},
        [out.name, log_path.name], name=out.name + ".manifest.json")
    last = json.loads(log[-1])
    print(f"trained {len(log)} steps; final total loss {last['total']:.6f}; "
          f"checkpoint at {out}")
    return EXIT_OK


# -- sample --------------------------------------------------------------------


def _layout_from_meta(meta: dict[str, str]):
    from .motion import FeatureLayout
    joints = tuple(meta["layout_joints"].split(","))
    feet = tuple(meta["layout_feet"].split(",")) if meta.get("layout_feet") else ()
    return FeatureLayout(joints, feet)


def sample_clip(bundle, content_id: int, style_id: int, seed: int) -> MotionClip:
    """One reverse-diffusion sample, denormalized into raw feature units."""
    layout = _layout_from_meta(bundle.meta)
    frame_time = float(bundle.meta["frame_time"])
    n_frames = int(bundle.meta["clip_frames"])
    if n_frames * layout.dim != bundle.params.feature_dim:
        raise ConfigError("checkpoint layout does not match its denoiser dimension")
    sched = make_linear_schedule(
        bundle.config.total_steps, bundle.config.beta_start, bundle.config.beta_end)
    cond = ConditionPair(content_id, style_id)
    bundle.params.check_ids(content_id, style_id)
    flat = sample_loop(sched, bundle.params, cond, seed)
    feats = flat.reshape(n_frames, layout.dim)
    clip = MotionClip(layout=layout, frame_time=frame_time, features=feats,
                      normalized=True)
    return normalize(clip, bundle.stats, "inverse")


def cmd_sample(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    bundle.params.check_ids(args.content, args.style)
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.count):
        clip = sample_clip(bundle, args.content, args.style, args.seed + i)
        if args.format == "csv":
            name = f"sample_{i:03d}.csv"
            (out / name).write_text(clip_to_csv(clip))
        else:
            name = f"sample_{i:03d}.bvh"
            (out / name).write_text(clip_to_bvh(clip))
        written.append(name)
    write_manifest(
        out, "sample",
        {"checkpoint": str(args.checkpoint), "content": args.content,
         "style": args.style, "count": args.count, "format": args.format},
        args.seed, {"checkpoint": str(args.checkpoint)}, sorted(written))
    print(f"wrote {args.count} {args.format} samples to {out}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def fit_sinusoid(values: np.ndarray, frame_time: float,
                 f_min: float = 0.2, f_max: float = 3.0,
                 f_step: float = 0.005) -> tuple[float, float]:
    """Least-squares (offset + sinusoid) fit over a frequency grid.

    Returns (frequency_hz, amplitude) at the best-fitting grid frequency.
    """
    times = np.arange(len(values)) * frame_time
    best = (np.inf, f_min, 0.0)
    for f in np.arange(f_min, f_max + 1e-12, f_step):
        basis = np.stack([np.ones_like(times),
                          np.sin(2.0 * np.pi * f * times),
                          np.cos(2.0 * np.pi * f * times)], axis=1)
        coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
        resid = values - basis @ coef
        ss = float(resid @ resid)
        if ss < best[0]:
            best = (ss, f, float(np.hypot(coef[1], coef[2])))
    return best[1], best[2]


def recover_walk_params(clip: MotionClip) -> dict:
    """Estimate gait parameters from the root trajectory of a raw clip."""
    root = clip.root_positions()
    times = np.arange(clip.frames) * clip.frame_time
    speed = float(np.polyfit(times, root[:, 0], 1)[0])
    frequency, amplitude = fit_sinusoid(root[:, 1], clip.frame_time)
    return {
        "speed_cm_per_s": speed,
        "frequency_hz": frequency,
        "stride_cm": speed / frequency,
        "bounce_cm": amplitude,
    }


def foot_skating(clip: MotionClip) -> float | None:
    """Mean foot speed (cm/s) over frames whose contact channel exceeds 0.5."""
    positions = clip.foot_global_positions()
    vel = np.empty_like(positions)
    vel[1:-1] = (positions[2:] - positions[:-2]) / (2.0 * clip.frame_time)
    vel[0] = (positions[1] - positions[0]) / clip.frame_time
    vel[-1] = (positions[-1] - positions[-2]) / clip.frame_time
    speed = np.linalg.norm(vel, axis=2)
    mask = clip.contacts() > 0.5
    if not mask.any():
        return None
    return float(speed[mask].mean())


def diversity(clips: list[MotionClip]) -> float:
    """Mean pairwise L2 distance between flattened feature matrices."""
    if len(clips) < 2:
        return 0.0
    flats = [c.features.reshape(-1) for c in clips]
    dists = [np.linalg.norm(a - b)
             for i, a in enumerate(flats) for b in flats[i + 1:]]
    return float(np.mean(dists))


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    _, _, index = load_dataset(args.data)
    n = args.samples_per_condition
    if n < 1:
        raise ConfigError("--samples-per-condition must be >= 1")

    conditions = []
    for style in index["styles"]:
        style_id = int(style["style_id"])
        requested = style.get("params")
        samples = [
            sample_clip(bundle, 0, style_id, args.seed + style_id * n + i)
            for i in range(n)
        ]
        entry: dict = {
            "content_id": 0,
            "style_id": style_id,
            "style_name": style.get("name"),
            "requested": requested,
            "diversity": diversity(samples),
        }
        if n == 1:
            entry["diversity_warning"] = "single sample per condition, no pairs"
        skating = [s for s in (foot_skating(c) for c in samples) if s is not None]
        entry["foot_skating_cm_per_s"] = float(np.mean(skating)) if skating else None
        if requested:
            fits = []
            for clip in samples:
                rec = recover_walk_params(clip)
                fits.append({
                    "frequency_hz": rec["frequency_hz"],
                    "stride_cm": rec["stride_cm"],
                    "rel_err_frequency": abs(rec["frequency_hz"] - requested["frequency_hz"])
                    / requested["frequency_hz"],
                    "rel_err_stride": abs(rec["stride_cm"] - requested["stride_cm"])
                    / requested["stride_cm"],
                })
            within = [f for f in fits
                      if f["rel_err_frequency"] <= 0.25 and f["rel_err_stride"] <= 0.25]
            entry["fidelity"] = {
                "samples": fits,
                "frac_within_25pct": len(within) / len(fits),
                "median_rel_err_frequency": float(
                    np.median([f["rel_err_frequency"] for f in fits])),
                "median_rel_err_stride": float(
                    np.median([f["rel_err_stride"] for f in fits])),
            }
        conditions.append(entry)

    report = {
        "proxy_note": ("diversity, condition fidelity and foot skating are "
                       "measurable proxies for perceptual motion quality"),
        "checkpoint": str(args.checkpoint),
        "samples_per_condition": n,
        "seed": args.seed,
        "conditions": conditions,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        write_manifest(
            out.parent, "eval",
            {"checkpoint": str(args.checkpoint), "data": str(args.data),
             "samples_per_condition": n},
            args.seed, {"checkpoint": str(args.checkpoint), "data": str(args.data)},
            [out.name], name=out.name + ".manifest.json")
    sys.stdout.write(text)
    return EXIT_OK


# -- bvh-info --------------------------------------------------------------------


def cmd_bvh_info(args) -> int:
    skeleton, frames, frame_time = parse_bvh(Path(args.path).read_text())
    real = skeleton.real_joint_indices
    print(f"joints: {len(real)}")
    print(f"channels: {skeleton.total_channels}")
    print(f"frames: {frames.shape[0]}")
    print(f"frame_time: {frame_time:.6f}")
    print(f"duration: {frames.shape[0] * frame_time:.6f}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylewalk",
        description="Styled walking-motion synthesis with a conditional "
                    "denoising diffusion model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gendata", help="generate a synthetic walking dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clips-per-style", type=int, default=32)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--frame-time", type=float, default=1.0 / 30.0)
    p.add_argument("--style", action="append",
                   help="NAME=stride,frequency,lean,bounce (repeatable; "
                        "replaces the default grid)")
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("train", help="train denoiser and discriminator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample motions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--content", type=int, default=0)
    p.add_argument("--style", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "bvh"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="diversity/fidelity/foot-skating report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples-per-condition", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bvh-info", help="summarize a BVH file")
    p.add_argument("path")
    p.set_defaults(func=cmd_bvh_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (BvhParseError, CheckpointError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
