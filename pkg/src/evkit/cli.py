"""Command-line front end: convert, stats, augment, plan, evaluate.

One structured config file (key = value sections per module) plus flag
overrides, flags winning.  Presets encode the two supported sensor layouts:
gen1-like (304x240, pad to 256x320, clips of 21) and gen4-like (1280x720,
bilinear downscale by 2, pad to 384x640, clips of 10).  Inputs are always
user-supplied paths; nothing is downloaded.

Every command is deterministic given (inputs, config, seed) and exits
nonzero with a single-line machine-parsable error on any failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import augment as augmod
from . import codec, detmetrics, sampler
from .errors import BadHeader, EvkitError
from .event_core import EventStream, SensorGeometry, partition_windows, slice_window
from .geometry import downscale, map_boxes, pad_to_multiple
from .representation import (
    StackedHistogramConfig,
    event_rate_stats,
    read_evf,
    stacked_histogram,
    write_evf,
)


@dataclass(frozen=True)
class Preset:
    name: str
    width: int
    height: int
    downscale_factor: int
    pad_multiple: int
    clip_len: int


PRESETS = {
    "gen1-like": Preset("gen1-like", 304, 240, 1, 32, 21),
    "gen4-like": Preset("gen4-like", 1280, 720, 2, 32, 10),
}


@dataclass(frozen=True)
class PipelineConfig:
    preset: str = "gen1-like"
    geometry: SensorGeometry = SensorGeometry(304, 240)
    downscale_factor: int = 1
    downscale_method: str = "bilinear"
    pad_multiple: int = 32
    clip_len: int = 21
    n_random: int = 4
    n_sequential: int = 4
    hist: StackedHistogramConfig = StackedHistogramConfig()
    augment: augmod.AugmentConfig = augmod.AugmentConfig()
    eval: detmetrics.EvalConfig = detmetrics.EvalConfig()
    seed: int = 0
    threads: int = 1
    keep_partial: bool = True

    def __post_init__(self):
        if self.geometry.height % self.downscale_factor or \
                self.geometry.width % self.downscale_factor:
            raise ValueError("preset geometry must be divisible by the downscale factor")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def from_preset(name: str) -> PipelineConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; options: {sorted(PRESETS)}")
    p = PRESETS[name]
    return PipelineConfig(
        preset=p.name,
        geometry=SensorGeometry(p.width, p.height),
        downscale_factor=p.downscale_factor,
        pad_multiple=p.pad_multiple,
        clip_len=p.clip_len,
    )


def _opt(section, key, conv):
    raw = section.get(key, "").strip()
    return conv(raw) if raw else None


def load_config(
    path: str | None = None,
    preset: str | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> PipelineConfig:
    """Assemble the pipeline config: preset defaults, then file, then flags."""
    parser = configparser.ConfigParser()
    if path is not None:
        with open(path, "r", encoding="ascii") as fh:
            parser.read_file(fh)
    pipe = parser["pipeline"] if parser.has_section("pipeline") else {}
    cfg = from_preset(preset or pipe.get("preset", "gen1-like"))

    updates: dict = {}
    if parser.has_section("pipeline"):
        for key in ("downscale_factor", "pad_multiple", "clip_len", "n_random",
                    "n_sequential", "seed", "threads"):
            v = _opt(pipe, key, int)
            if v is not None:
                updates[key] = v
        if pipe.get("downscale_method"):
            updates["downscale_method"] = pipe["downscale_method"].strip()
        geom = _opt(pipe, "geometry", str)
        if geom:
            w, _, h = geom.partition("x")
            updates["geometry"] = SensorGeometry(int(w), int(h))
    if parser.has_section("histogram"):
        sec = parser["histogram"]
        updates["hist"] = StackedHistogramConfig(
            t_frame=_opt(sec, "t_frame_us", int) or 50_000,
            n_bins=_opt(sec, "n_bins", int) or 10,
            clip_limit=_opt(sec, "clip_limit", int),
        )
    if parser.has_section("augment"):
        sec = parser["augment"]
        base = augmod.AugmentConfig()
        kwargs = {}
        for key in ("hflip_p", "rotate_p", "rotate_deg", "translate_p", "translate_frac",
                    "scale_p", "shear_p", "shear_deg", "erase_p",
                    "min_box_area", "min_box_visibility"):
            v = _opt(sec, key, float)
            if v is not None:
                kwargs[key] = v
        for key in ("scale_range", "erase_area", "erase_ratio"):
            lo = _opt(sec, key + "_min", float)
            hi = _opt(sec, key + "_max", float)
            if lo is not None or hi is not None:
                default = getattr(base, key)
                kwargs[key] = (lo if lo is not None else default[0],
                               hi if hi is not None else default[1])
        updates["augment"] = replace(base, **kwargs)
    if parser.has_section("eval"):
        sec = parser["eval"]
        classes = _opt(sec, "class_ids", str)
        updates["eval"] = detmetrics.EvalConfig(
            class_ids=tuple(int(c) for c in classes.split(",")) if classes else None,
            min_diagonal=_opt(sec, "min_diagonal", float),
            skip_initial_us=_opt(sec, "skip_initial_us", int),
            time_tolerance_us=_opt(sec, "time_tolerance_us", int) or 0,
        )
    if seed is not None:
        updates["seed"] = seed
    if threads is not None:
        updates["threads"] = threads
    return replace(cfg, **updates)


# --- shared input helpers ---------------------------------------------------------


def read_recording(path: str | Path, geometry: SensorGeometry | None) -> EventStream:
    """Load an EVS or DAT recording, detecting the container by magic."""
    data = Path(path).read_bytes()
    if data[:3] == codec.EVS_MAGIC[:3]:
        return codec.decode_evs(data)
    return codec.decode_dat(data, geometry)


def _frame_name(k: int) -> str:
    return f"frame_{k:06d}.evf"


# --- convert -----------------------------------------------------------------------


def _build_frame(stream: EventStream, window_slice, cfg: PipelineConfig) -> bytes:
    part = slice_window(stream, window_slice.window)
    frame = stacked_histogram(part, window_slice.window, cfg.hist)
    if cfg.downscale_factor > 1:
        frame = downscale(frame, cfg.downscale_factor, cfg.downscale_method)
    frame, _pads = pad_to_multiple(frame, cfg.pad_multiple)
    return write_evf(frame)


def cmd_convert(args, cfg: PipelineConfig) -> int:
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_begin = time.perf_counter()
    stream = read_recording(args.input, cfg.geometry)
    windows = partition_windows(stream, cfg.hist.t_frame, t_start=args.t_start)
    if not cfg.keep_partial or args.drop_partial:
        windows = [w for w in windows if not w.partial]

    boxes: list[codec.AnnotatedBox] = []
    if args.annotations:
        boxes = codec.read_annotations(args.annotations)
        scaled = map_boxes(boxes, 1.0 / cfg.downscale_factor)
        codec.write_annotations(out_dir / "annotations.txt", scaled)
    box_t = np.array([b.t for b in boxes], dtype=np.int64)

    index_lines = []
    chunk = max(4 * cfg.threads, 16)
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for lo in range(0, len(windows), chunk):
            batch = windows[lo : lo + chunk]
            if pool is not None:
                blobs = list(pool.map(lambda w: _build_frame(stream, w, cfg), batch))
            else:
                blobs = [_build_frame(stream, w, cfg) for w in batch]
            for j, (w, blob) in enumerate(zip(batch, blobs)):
                k = lo + j
                name = _frame_name(k)
                (out_dir / name).write_bytes(blob)
                if boxes:
                    ids = np.flatnonzero(
                        (box_t >= w.window.t0) & (box_t < w.window.t1)
                    )
                    ann = ",".join(str(i) for i in ids) if ids.size else "-"
                else:
                    ann = "-"
                index_lines.append(
                    f"window={k} t0={w.window.t0} t1={w.window.t1} "
                    f"file={name} partial={int(w.partial)} "
                    f"events={w.stop - w.start} ann={ann}"
                )
    finally:
        if pool is not None:
            pool.shutdown()
    (out_dir / "index.txt").write_text(
        "".join(line + "\n" for line in index_lines), encoding="ascii"
    )
    elapsed = time.perf_counter() - t_begin
    rate = len(stream) / elapsed if elapsed > 0 else float("inf")
    print(
        f"converted windows={len(windows)} events={len(stream)} "
        f"seconds={elapsed:.3f} rate_eps={rate:.0f}"
    )
    return 0


# --- stats --------------------------------------------------------------------------


def cmd_stats(args, cfg: PipelineConfig) -> int:
    stream = read_recording(args.input, cfg.geometry)
    stats = event_rate_stats(stream)
    print(f"events={stats['events']}")
    print(f"duration_us={stats['duration_us']}")
    print(f"rate_eps={stats['rate_eps']:.3f}")
    print(f"pos={stats['pos']}")
    print(f"neg={stats['neg']}")
    print(f"max_per_pixel={stats['max_per_pixel']}")
    print(f"geometry={stream.geometry.width}x{stream.geometry.height}")
    return 0


# --- augment ------------------------------------------------------------------------


def _read_index(frames_dir: Path) -> list[dict]:
    """Window index entries; falls back to a bare directory listing."""
    index_path = frames_dir / "index.txt"
    entries = []
    if index_path.exists():
        for line in index_path.read_text(encoding="ascii").splitlines():
            line = line.strip()
            if not line:
                continue
            fields = dict(tok.split("=", 1) for tok in line.split())
            entries.append(
                {"file": fields["file"], "t0": int(fields["t0"]), "t1": int(fields["t1"])}
            )
        return entries
    for k, path in enumerate(sorted(frames_dir.glob("*.evf"))):
        entries.append({"file": path.name, "t0": k, "t1": k + 1})
    return entries


def _format_opt(v) -> str:
    return "-" if v is None else repr(float(v))


def cmd_augment(args, cfg: PipelineConfig) -> int:
    frames_dir = Path(args.frames)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = _read_index(frames_dir)
    if not entries:
        raise BadHeader(f"no frames found in {frames_dir}")
    frames = [read_evf((frames_dir / e["file"]).read_bytes()) for e in entries]
    boxes = codec.read_annotations(args.annotations) if args.annotations else []
    per_frame = [
        [b for b in boxes if e["t0"] <= b.t < e["t1"]] for e in entries
    ]

    clip_len = 1 if args.mode == "frame" else cfg.clip_len
    clips = [
        (frames[i : i + clip_len], per_frame[i : i + clip_len])
        for i in range(0, len(frames), clip_len)
    ]
    master = np.random.default_rng(cfg.seed)
    children = master.spawn(len(clips))

    log_lines = []
    out_boxes: list[codec.AnnotatedBox] = []
    frame_idx = 0
    for c, ((clip_frames, clip_boxes), rng) in enumerate(zip(clips, children)):
        aug_frames, aug_boxes, log = augmod.augment_clip(
            clip_frames, clip_boxes, cfg.augment, rng
        )
        geo = log[0]
        affine = ",".join(repr(float(v)) for v in geo.transform.matrix.ravel())
        log_lines.append(
            f"clip={c} frames={len(clip_frames)} hflip={int(geo.hflip)} "
            f"angle={_format_opt(geo.angle_deg)} "
            f"tx={_format_opt(geo.translate_px[0] if geo.translate_px else None)} "
            f"ty={_format_opt(geo.translate_px[1] if geo.translate_px else None)} "
            f"scale={_format_opt(geo.scale)} "
            f"shear_x={_format_opt(geo.shear_deg[0] if geo.shear_deg else None)} "
            f"shear_y={_format_opt(geo.shear_deg[1] if geo.shear_deg else None)} "
            f"affine={affine}"
        )
        for frame, fb, aug in zip(aug_frames, aug_boxes, log):
            erase = "-" if aug.erasure is None else ",".join(str(v) for v in aug.erasure)
            log_lines.append(f"clip={c} frame={frame_idx} erase={erase}")
            (out_dir / f"aug_{frame_idx:06d}.evf").write_bytes(write_evf(frame))
            out_boxes.extend(fb)
            frame_idx += 1
    codec.write_annotations(out_dir / "annotations.txt", out_boxes)
    (out_dir / "aug_log.txt").write_text(
        "".join(line + "\n" for line in log_lines), encoding="ascii"
    )
    print(f"augmented frames={frame_idx} clips={len(clips)} mode={args.mode}")
    return 0


# --- plan ----------------------------------------------------------------------------


def cmd_plan(args, cfg: PipelineConfig) -> int:
    indices = sampler.read_sequence_index(args.index)
    batches = sampler.plan_epoch(
        indices, cfg.clip_len, cfg.n_random, cfg.n_sequential,
        rng=np.random.default_rng(cfg.seed),
    )
    text = sampler.format_plan(batches)
    if args.output:
        Path(args.output).write_text(text, encoding="ascii")
        print(f"planned batches={len(batches)} entries={sum(len(b) for b in batches)}")
    else:
        sys.stdout.write(text)
    return 0


# --- evaluate -------------------------------------------------------------------------


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    report = detmetrics.evaluate(args.predictions, args.ground_truth, cfg.eval)
    text = detmetrics.format_report(report)
    if args.output:
        Path(args.output).write_text(text, encoding="ascii")
    sys.stdout.write(text)
    return 0


# --- argument plumbing ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="structured config file (key = value sections)")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--preset", choices=sorted(PRESETS), help="dataset preset")
    shared.add_argument("--threads", type=int,
                        help="worker threads (or env EVKIT_THREADS)")

    parser = argparse.ArgumentParser(prog="evkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[shared],
                       help="recording -> per-window EVF frame tensors + index")
    p.add_argument("input", help="EVS or DAT recording")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--annotations", help="annotation file to re-scale and index")
    p.add_argument("--t-start", type=int, default=0, help="window origin in us")
    p.add_argument("--drop-partial", action="store_true",
                   help="drop the trailing partially-covered window")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", parents=[shared], help="single-pass recording summary")
    p.add_argument("input")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", parents=[shared],
                       help="augment converted frames and their annotations")
    p.add_argument("frames", help="directory produced by convert")
    p.add_argument("--output", required=True)
    p.add_argument("--annotations", help="annotation file aligned with the frames")
    p.add_argument("--mode", choices=("frame", "video"), default="frame")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("plan", parents=[shared],
                       help="plan one epoch of recurrent-training clips")
    p.add_argument("index", help="sequence index file (seq= frames= annotated=)")
    p.add_argument("--output")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", parents=[shared],
                       help="COCO-style mAP of predictions vs ground truth")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        threads = args.threads
        if threads is None and os.environ.get("EVKIT_THREADS"):
            threads = int(os.environ["EVKIT_THREADS"])
        cfg = load_config(args.config, args.preset, args.seed, threads)
        return args.func(args, cfg)
    except (EvkitError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error code={type(exc).__name__} msg=\"{msg}\"", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
