"""Single entry point: fvv {sim, serve, client, eval, bench}.

Option precedence is flags > config file > built-in defaults. The config
file uses key=value sections named after the subcommands (see README).
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from .codec import ConfigError, validate_gop

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    if section not in parser:
        return {}
    return dict(parser[section])


def _merge(defaults: dict, config: dict, args: argparse.Namespace) -> argparse.Namespace:
    """flags > config file > defaults, with config values parsed per-type."""
    merged = dict(defaults)
    for key, raw in config.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        default = defaults[key]
        if isinstance(default, bool):
            merged[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            merged[key] = int(raw)
        elif isinstance(default, float):
            merged[key] = float(raw)
        else:
            merged[key] = raw
    for key, default in merged.items():
        flag = getattr(args, key, None)
        setattr(args, key, flag if flag is not None else default)
    return args


SIM_DEFAULTS = dict(seed=42, out="scene", cameras=12, frames=300, width=640,
                    height=360, format="yuv420", fps=30, flat=False,
                    baseline=1.0, gain=12.0)
SERVE_DEFAULTS = dict(input="scene", stages=4, views_per_side=16, fps=30,
                      segment_duration=2.0, gop=30, quality=75, port=8080,
                      realtime=False, max_ticks=0, channel_capacity=4, workers=2,
                      coarse_radius=12)
CLIENT_DEFAULTS = dict(url="http://127.0.0.1:8080", view=0, ui_port=0,
                       trajectory="", dump="", from_start=False, realtime=False,
                       max_segments=0, ui_assets="")
EVAL_DEFAULTS = dict(scene="scene", stages=2, frame=0, out="eval-report",
                     border=8, figures=True)
BENCH_DEFAULTS = dict(iterations=1000, scene="", out="bench-report", stages=1,
                      views_per_side=1, fps=30, segment_duration=0.2, gop=6,
                      quality=75, figures=True)


def _add_opts(sub: argparse.ArgumentParser, defaults: dict) -> None:
    for key, default in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            sub.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        else:
            sub.add_argument(flag, type=type(default), default=None,
                             metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvv",
        description="live free-viewpoint streaming: synthesize, serve, play, measure")
    parser.add_argument("--config", help="key=value config file with per-command sections")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_opts(sub.add_parser("sim", help="render a synthetic multi-camera capture"),
              SIM_DEFAULTS)
    _add_opts(sub.add_parser("serve", help="run the edge server on a captured scene"),
              SERVE_DEFAULTS)
    _add_opts(sub.add_parser("client", help="play a viewpoint trajectory from a server"),
              CLIENT_DEFAULTS)
    _add_opts(sub.add_parser("eval", help="score interpolation against ground truth"),
              EVAL_DEFAULTS)
    _add_opts(sub.add_parser("bench", help="per-stage pipeline latency report"),
              BENCH_DEFAULTS)
    return parser


def cmd_sim(args) -> int:
    from .scene import SceneSpec, SyntheticScene, capture_sequence, default_sprites_for

    sprites = () if args.flat else default_sprites_for(args.width, args.height)
    spec = SceneSpec(seed=args.seed, width=args.width, height=args.height,
                     format=args.format, fps=args.fps, camera_count=args.cameras,
                     baseline=args.baseline, gain=args.gain, sprites=sprites)
    out = capture_sequence(SyntheticScene(spec), args.out, args.frames)
    print(f"captured {args.cameras} cameras x {args.frames} frames "
          f"({args.width}x{args.height} {args.format}) -> {out}")
    return EXIT_OK


def _serve_config(args):
    from .interp import InterpConfig
    from .server.pipeline import PipelineConfig

    radius = (args.coarse_radius, max(2, args.coarse_radius // 3),
              max(1, args.coarse_radius // 6))
    return PipelineConfig(
        scene_dir=args.input, stages=args.stages, views_per_side=args.views_per_side,
        fps=args.fps, segment_duration=args.segment_duration, gop=args.gop,
        quality=args.quality, port=args.port, realtime=args.realtime,
        channel_capacity=args.channel_capacity, workers=args.workers,
        max_ticks=args.max_ticks or None,
        interp=InterpConfig(search_radius=radius))


def cmd_serve(args) -> int:
    from .server.httpserve import serve_pipeline

    config = _serve_config(args)
    validate_gop(config.gop, config.fps, config.segment_duration).raise_if_invalid()
    handle, server, _store = serve_pipeline(config)
    print(f"serving {handle.model.camera_count} clusters "
          f"({handle.model.total_views} views) at {server.url}")
    try:
        handle.wait()
        print(f"input exhausted after {handle.ticks_done} frames, "
              f"{handle.segments_published} segments published; "
              "playlists carry #EXT-X-ENDLIST", flush=True)
        import threading
        threading.Event().wait()  # keep serving the published segments
    except KeyboardInterrupt:
        print("stopping")
    finally:
        server.stop()
        handle.stop()
    return EXIT_OK


def _parse_trajectory(path: str) -> dict[int, int]:
    out = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            frame, view = line.split()
            out[int(frame)] = int(view)
        except ValueError:
            raise ConfigError(f"{path}:{no}: expected '<frame_index> <view_index>'")
    return out


def cmd_client(args) -> int:
    from .client import FvvClient
    from .client.ui import UiServer

    trajectory = _parse_trajectory(args.trajectory) if args.trajectory else None
    client = FvvClient(args.url, view=args.view, trajectory=trajectory,
                       dump_dir=args.dump or None, from_start=args.from_start,
                       realtime=args.realtime)
    ui = None
    if args.ui_port or args.ui_assets:
        ui = UiServer(client, args.ui_port, args.ui_assets or None).start()
        print(f"UI bridge at {ui.url}")
    try:
        stats = client.run(max_segments=args.max_segments or None)
    except KeyboardInterrupt:
        client.stop()
        stats = client.stats
    finally:
        if ui:
            ui.stop()
    print(json.dumps(stats.to_json(), indent=2))
    if args.dump:
        client.write_transcript(Path(args.dump) / "transcript.json")
        print(f"frames and transcript dumped to {args.dump}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .report import evaluate_scene, write_eval_report

    report = evaluate_scene(args.scene, stages=args.stages, frame_index=args.frame,
                            border=args.border)
    paths = write_eval_report(report, args.out, figures=args.figures)
    agg = report.aggregate()
    psnr = "inf" if agg["psnr"] is None else f"{agg['psnr']:.2f}"
    print(f"{len(report.rows)} rows; mean PSNR {psnr} dB, "
          f"mean SSIM {agg['ssim']:.4f}, mean lap {agg['lap_distance']:.4f}")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .report import write_bench_report
    from .server.bench import bench, format_report
    from .server.pipeline import PipelineConfig

    config = PipelineConfig(
        scene_dir=args.scene or None, stages=args.stages,
        views_per_side=args.views_per_side, fps=args.fps,
        segment_duration=args.segment_duration, gop=args.gop, quality=args.quality)
    report = bench(config, iterations=args.iterations)
    print(format_report(report))
    paths = write_bench_report(report, args.out, figures=args.figures)
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return EXIT_OK


COMMANDS = {"sim": (cmd_sim, SIM_DEFAULTS), "serve": (cmd_serve, SERVE_DEFAULTS),
            "client": (cmd_client, CLIENT_DEFAULTS), "eval": (cmd_eval, EVAL_DEFAULTS),
            "bench": (cmd_bench, BENCH_DEFAULTS)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn, defaults = COMMANDS[args.command]
    try:
        args = _merge(defaults, _load_config(args.config, args.command), args)
        return fn(args)
    except (ConfigError, ValueError) as e:
        print(f"fvv {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"fvv {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
