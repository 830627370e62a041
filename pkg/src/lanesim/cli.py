"""Command-line entry point: ``lanesim <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 controller error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from lanesim import __version__
from lanesim.augment import augment_frame, sample_offset
from lanesim.config import RunConfig
from lanesim.control.controllers import ControllerSpec
from lanesim.data import (
    POLICIES,
    distribution_stats,
    filter_frames,
    load_drive_log,
    log_digest,
    save_drive_log,
    select,
)
from lanesim.errors import (
    ControllerError,
    DataError,
    DomainError,
    GenerationError,
    TrackError,
)
from lanesim.geometry import write_png
from lanesim.report import (
    format_sweep,
    format_table,
    plot_offset,
    plot_trajectory,
    read_trace,
    write_json,
    write_trace,
)
from lanesim.simloop import aggregate, run_many, sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONTROLLER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    """What ran, with which inputs and settings; written before any output."""

    subcommand: str
    argv: list
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    python: str = platform.python_version()
    numpy: str = np.__version__
    started_at: str = ""
    finished_at: str | None = None
    status: str = "running"
    outputs: list = field(default_factory=list)

    def write(self, out_dir) -> Path:
        return write_json(asdict(self), Path(out_dir) / "run.json")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _start(args, cfg: RunConfig, out: Path, inputs: dict) -> RunManifest:
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        subcommand=args.command,
        argv=list(args.argv),
        config=cfg.doc,
        seeds={"seed": cfg.seed},
        inputs=inputs,
        started_at=_now(),
    )
    manifest.write(out)
    return manifest


def _finish(manifest: RunManifest, out: Path, outputs) -> None:
    manifest.status = "ok"
    manifest.finished_at = _now()
    manifest.outputs = sorted(str(Path(p).relative_to(out)) for p in outputs)
    manifest.write(out)


def _config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return RunConfig.load(args.config, overrides)


def _controller_spec(text: str | None, cfg: RunConfig) -> ControllerSpec:
    if text is None:
        return cfg.controller
    if text.endswith(".json") and Path(text).is_file():
        return ControllerSpec.from_dict(json.loads(Path(text).read_text()))
    try:
        return ControllerSpec.parse(text)
    except ControllerError as exc:
        raise UsageError(str(exc)) from None


def _load_logs(paths) -> tuple[list, dict]:
    logs, inputs = [], {}
    for p in paths:
        logs.append(load_drive_log(p))
        inputs[str(p)] = log_digest(p)
    return logs, inputs


def _track_doc(text: str) -> dict:
    from lanesim.synthworld import PRESETS, TrackSpec, preset_track

    if text in PRESETS:
        return preset_track(text).to_dict()
    path = Path(text)
    if not path.is_file():
        raise UsageError(f"--track must be a preset {sorted(PRESETS)} or a TrackSpec JSON file")
    try:
        return TrackSpec.load(path).to_dict()
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TrackError(f"cannot read track {path}: {exc}") from None


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    from lanesim.synthworld import SpeedProfile, SteeringNoise, TrackSpec, generate_log, make_track

    cfg = _config(args)
    syn = cfg.doc["synth"]
    track = _track_doc(args.track)
    out = Path(args.out)
    inputs = {args.track: _sha256(args.track)} if Path(args.track).is_file() else {args.track: "preset"}
    manifest = _start(args, cfg, out, inputs)
    truth = make_track(TrackSpec.from_dict(track))
    duration = args.duration if args.duration is not None else syn["duration"]
    noise_deg = args.noise_std_deg if args.noise_std_deg is not None else syn["noise_std_deg"]
    log = generate_log(
        truth,
        speed=SpeedProfile(truth, v_max=syn["v_max"], a_lat=syn["a_lat"]),
        gains=cfg.gains,
        params=cfg.vehicle,
        noise=SteeringNoise(math.radians(noise_deg), syn["noise_correlation"]),
        seed=cfg.seed,
        duration=duration,
        spec=cfg.projection,
        supersample=args.supersample or syn["supersample"],
        name=args.name or truth.spec.name,
    )
    write_frames = syn["write_frames"] and not args.no_frames
    save_drive_log(log, out, write_frames=write_frames)
    outputs = [out / "manifest.csv", out / "log.json", out / "truth.csv"]
    if write_frames:
        outputs += sorted((out / "frames").glob("*.png"))
    _finish(manifest, out, outputs)
    print(f"wrote {len(log)} frames ({log.duration:.1f} s) to {out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _config(args)
    acfg = cfg.augment_config
    aug = cfg.doc["augment"]
    policy = cfg.policy(args.policy or aug["policy"])
    samples = args.samples if args.samples is not None else aug["samples_per_frame"]
    if samples < 1:
        raise UsageError("--samples must be at least 1")
    out = Path(args.out)
    log = load_drive_log(args.log)
    manifest = _start(args, cfg, out, {args.log: log_digest(args.log)})
    flt = cfg.doc["filter"]
    kept = filter_frames(log, flt["min_speed"], flt["blinker_margin"])
    positions = select(kept, policy)
    rng = np.random.default_rng(acfg.seed)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    rows, outputs, labels = [], [], []
    sample_id = 0
    for k in positions:
        image = kept.image(int(k))
        for _ in range(samples):
            offset = sample_offset(rng, acfg)
            warped, label = augment_frame(image, float(kept.steering[k]), float(kept.speed[k]), offset, cfg.gains)
            path = out / "frames" / f"{sample_id:06d}.png"
            write_png(path, warped)
            outputs.append(path)
            labels.append(label)
            rows.append([
                sample_id,
                int(kept.frame_ids[k]),
                repr(offset.de),
                repr(math.degrees(offset.dtheta)),
                repr(float(kept.speed[k])),
                repr(math.degrees(float(kept.steering[k]))),
                repr(math.degrees(label)),
            ])
            sample_id += 1
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample", "frame_id", "de", "dtheta_deg", "speed", "steering_deg", "label_deg"])
        writer.writerows(rows)
    outputs.append(out / "labels.csv")
    if labels:
        st = distribution_stats(np.array(labels))
        outputs.append(write_json({"count": st.count, "std_deg": math.degrees(st.std)}, out / "labels_stats.json"))
    _finish(manifest, out, outputs)
    print(f"wrote {sample_id} augmented samples from {len(kept)} usable frames to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config(args)
    logs, inputs = _load_logs(args.log)
    flt = cfg.doc["filter"]
    angles = np.concatenate([filter_frames(log, flt["min_speed"], flt["blinker_margin"]).steering for log in logs])
    if angles.size == 0:
        raise DataError("no frames left after filtering")
    names = args.policy or list(POLICIES)
    small = math.radians(cfg.doc["selection"]["small_angle_threshold_deg"])
    result = {"frames": int(angles.size), "policies": {}}
    lines = [f"{'policy':12s} {'count':>7s} {'std_deg':>9s} {'small':>7s}"]
    for name in names:
        pol = cfg.policy(name)
        idx = select(angles, pol)
        if idx.size == 0:
            result["policies"][name] = {"count": 0, "std_deg": None, "small_count": 0}
            lines.append(f"{name:12s} {0:7d} {'-':>9s} {0:7d}")
            continue
        st = distribution_stats(angles, idx, small)
        result["policies"][name] = {
            "count": st.count,
            "std_deg": math.degrees(st.std),
            "small_count": st.small_count,
            "histogram": st.histogram.tolist(),
            "policy": pol.to_dict(),
        }
        lines.append(f"{name:12s} {st.count:7d} {math.degrees(st.std):9.3f} {st.small_count:7d}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        manifest = _start(args, cfg, out, inputs)
        outputs = [write_json(result, out / "stats.json")]
        (out / "stats.txt").write_text(text)
        outputs.append(out / "stats.txt")
        _finish(manifest, out, outputs)
    return EXIT_OK


def _labels(args, logs) -> list[str]:
    labels = args.scenario_label or []
    if not labels:
        return [log.name for log in logs]
    if len(labels) == 1:
        return labels * len(logs)
    if len(labels) != len(logs):
        raise UsageError("give one --scenario-label per --log, or a single label for all")
    return labels


def _jobs(args) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    spec = _controller_spec(args.controller, cfg)
    logs, inputs = _load_logs(args.log)
    labels = _labels(args, logs)
    if args.track is not None:
        doc = _track_doc(args.track)
        for log in logs:
            log.track = doc
    out = Path(args.out)
    manifest = _start(args, cfg, out, inputs)
    sim = cfg.sim
    results = run_many(logs, spec, sim, labels, jobs=_jobs(args))
    report = aggregate(results, labels, sim, seeds={"seed": cfg.seed}, controller=spec.to_dict())
    outputs = [write_json(report.to_dict(), out / "report.json")]
    table = format_table({spec.kind: report})
    (out / "table.txt").write_text(table)
    outputs.append(out / "table.txt")
    if not args.no_traces:
        (out / "traces").mkdir(exist_ok=True)
        for i, res in enumerate(results):
            path = write_trace(res, out / "traces" / f"{i:03d}_{res.name}.csv")
            outputs.append(path)
            if not args.no_plots:
                trace = read_trace(path)
                outputs.append(plot_offset(trace, res.dt, path.with_suffix(".offset.png"), f"{res.name} ({labels[i]})"))
                outputs.append(plot_trajectory(trace, path.with_suffix(".trajectory.png"), res.name))
    _finish(manifest, out, outputs)
    print(table, end="")
    return EXIT_OK


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise UsageError(f"--grid expects field=v1,v2,..., got {item!r}")
        try:
            vals = [float(v) for v in values.split(",")]
        except ValueError:
            raise UsageError(f"--grid values must be numbers: {item!r}") from None
        if key == "hfov_deg":
            key, vals = "hfov", [math.radians(v) for v in vals]
        elif key in ("width", "height"):
            vals = [int(v) for v in vals]
        grid[key] = vals
    return grid


def cmd_sweep(args) -> int:
    cfg = _config(args)
    spec = _controller_spec(args.controller, cfg)
    grid = _parse_grid(args.grid) if args.grid else dict(cfg.doc["sweep"]["grid"])
    if not grid:
        raise UsageError("no sweep grid: pass --grid field=v1,v2 or set sweep.grid in the config")
    logs, inputs = _load_logs(args.log)
    out = Path(args.out)
    manifest = _start(args, cfg, out, inputs)
    rows = sweep(grid, logs, spec, cfg.sim, jobs=_jobs(args))
    outputs = [write_json({"grid": grid, "controller": spec.to_dict(), "rows": [r.to_dict() for r in rows]}, out / "sweep.json")]
    text = format_sweep(rows)
    (out / "sweep.txt").write_text(text)
    outputs.append(out / "sweep.txt")
    _finish(manifest, out, outputs)
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    reports, inputs = {}, {}
    for run in args.run:
        path = Path(run) / "report.json"
        if not path.is_file():
            raise DataError(f"{path} not found")
        inputs[str(path)] = _sha256(path)
        reports[Path(run).name] = json.loads(path.read_text())
    cfg = _config(args)
    manifest = _start(args, cfg, out, inputs)
    table = format_table(reports)
    (out / "table.txt").write_text(table)
    outputs = [out / "table.txt"]
    for run in args.run:
        doc = reports[Path(run).name]
        seqs = doc.get("sequences", [])
        for trace_path in sorted((Path(run) / "traces").glob("*.csv")):
            trace = read_trace(trace_path)
            index = int(trace_path.stem.split("_", 1)[0])
            frame_dt = seqs[index]["dt"] if index < len(seqs) else 1.0 / 30.0
            stem = f"{Path(run).name}_{trace_path.stem}"
            outputs.append(plot_offset(trace, frame_dt, out / f"{stem}.offset.png", stem))
            outputs.append(plot_trajectory(trace, out / f"{stem}.trajectory.png", stem))
    _finish(manifest, out, outputs)
    print(table, end="")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config document (defaults are overlaid)")
    common.add_argument("--seed", type=int, help="override the config seed")

    ap = _Parser(prog="lanesim", description="Closed-loop steering evaluation on replayed drive logs.")
    ap.add_argument("--version", action="version", version=f"lanesim {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic drive log")
    p.add_argument("--track", required=True, help="track preset name or TrackSpec JSON file")
    p.add_argument("--out", required=True, help="output log directory")
    p.add_argument("--duration", type=float, help="seconds to record")
    p.add_argument("--noise-std-deg", type=float, help="steering noise std (deg)")
    p.add_argument("--supersample", type=int, help="rays per pixel side")
    p.add_argument("--no-frames", action="store_true", help="skip PNGs; frames re-render on load")
    p.add_argument("--name", help="log name")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", parents=[common], help="write warped frames with corrected labels")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=sorted(POLICIES))
    p.add_argument("--samples", type=int, help="offsets drawn per selected frame")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("stats", parents=[common], help="steering distribution per selection policy")
    p.add_argument("--log", required=True, action="append")
    p.add_argument("--policy", action="append", choices=sorted(POLICIES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run controllers in closed loop and score autonomy"),
        ("sweep", cmd_sweep, "rank projection calibrations by closed-loop score"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--log", required=True, action="append", help="log directory (repeatable)")
        p.add_argument("--controller", help="straight|replay|oracle|vision|external:<cmd>|spec.json")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--jobs", type=int, help="parallel sequences (default: all cores)")
        if name == "simulate":
            p.add_argument("--scenario-label", action="append", help="label per log (repeatable)")
            p.add_argument("--track", help="ground-truth track for the oracle (preset or JSON)")
            p.add_argument("--no-traces", action="store_true")
            p.add_argument("--no-plots", action="store_true")
        else:
            p.add_argument("--grid", action="append", help="field=v1,v2,... (repeatable)")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="compare finished runs")
    p.add_argument("--run", required=True, action="append", help="simulate run directory (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lanesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except ControllerError as exc:
        print(f"lanesim: controller error: {exc}", file=sys.stderr)
        return EXIT_CONTROLLER
    except (DataError, TrackError, GenerationError, FileNotFoundError) as exc:
        print(f"lanesim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, DomainError) as exc:
        print(f"lanesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
