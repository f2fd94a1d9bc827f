"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation error (bad score, data
or parameters), 3 runtime or I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .psycho import CONTOUR_TABLE_VERSION
from .score import GRAMMAR_VERSION, expand_macros, lower_to_icards, load_score, save_score

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


def _plane(text: str) -> tuple[str, int]:
    try:
        axis, index = text.split("=")
        return axis, int(index)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AXIS=INDEX, got {text!r}") from None


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diass", description="Additive synthesis with loudness calibration.")
    p.add_argument("--version", action="version",
                   version=f"diass {__version__} (score grammar {GRAMMAR_VERSION}, "
                           f"contour table {CONTOUR_TABLE_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="parse and validate a score")
    c.add_argument("score")

    r = sub.add_parser("render", help="render a score to a 16-bit WAV file")
    r.add_argument("score")
    r.add_argument("-o", "--output", default=None, help="output WAV (default: score name with .wav)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--headroom", type=float, default=0.98)
    r.add_argument("--anticlip-max-rounds", type=int, default=10)
    r.add_argument("--no-anticlip", action="store_true")
    r.add_argument("--stats", action="store_true", help="print key=value statistics")

    s = sub.add_parser("sonify", help="map data to a score")
    ssub = s.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for name in ("plane", "window"):
        m = ssub.add_parser(name)
        m.add_argument("data")
        m.add_argument("-o", "--output", required=True)
        m.add_argument("--freq", type=_range, default=(100.0, 4000.0))
        m.add_argument("--sones", type=_range, default=(1.0, 32.0))
        m.add_argument("--dur", type=float, default=30.0)
        m.add_argument("--rate", type=int, default=44100)
        m.add_argument("--calibration-db", type=float, default=100.0)
        if name == "plane":
            m.add_argument("--plane", type=_plane, default=("z", 0))
            m.add_argument("--time-axis", default="x")
            m.add_argument("--stride", type=int, default=2)
            m.add_argument("--range", dest="value_range", type=_range, default=None)
            m.add_argument("--format", choices=("csv", "raw"), default=None)
        else:
            m.add_argument("--width", type=float, default=None)
            m.add_argument("--vibrato", type=float, default=8.0, help="vibrato depth in Hz")

    v = sub.add_parser("viz", help="SVG frames or a piano-roll overview")
    v.add_argument("target", help="score file, or 'overview' followed by a score file")
    v.add_argument("extra", nargs="?", default=None)
    v.add_argument("-o", "--output", required=True)
    v.add_argument("--rep", choices=("spheres", "planes"), default="spheres")
    v.add_argument("--fps", type=float, default=10.0)
    v.add_argument("--size", type=_size, default=(1280, 720))
    v.add_argument("--no-grid", action="store_true")
    v.add_argument("--workers", type=int, default=1)
    return p


def _check(args) -> int:
    score = expand_macros(load_score(args.score))
    cards = lower_to_icards(score)
    print(f"sounds={len(score.sounds)}")
    print(f"partials={len(cards)}")
    print(f"duration_s={score.duration():.6f}")
    print("valid=true")
    return EXIT_OK


def _render(args) -> int:
    from .render import RenderConfig, render_to_wav

    if args.workers < 1 or args.anticlip_max_rounds < 0:
        raise ValueError("--workers must be >= 1 and --anticlip-max-rounds >= 0")
    score = load_score(args.score)
    out = args.output or str(Path(args.score).with_suffix(".wav"))
    cfg = RenderConfig(workers=args.workers, headroom=args.headroom, anticlip=not args.no_anticlip,
                       anticlip_max_rounds=args.anticlip_max_rounds, output=out)
    result = render_to_wav(score, out, cfg)
    if args.stats:
        for key, value in result.stats.items():
            print(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
        print(f"output={out}")
    return EXIT_OK


def _sonify(args) -> int:
    from .sonify import MappingConfig, load_grid, load_trajectories, map_plane_scan, map_traveling_window

    common = dict(duration=args.dur, freq_range=args.freq, sones_range=args.sones,
                  sample_rate=args.rate, calibration_db=args.calibration_db)
    if args.mode == "plane":
        cfg = MappingConfig(mode="plane_scan", stride=args.stride, plane=args.plane, time_axis=args.time_axis,
                            value_range=args.value_range, **common)
        score = map_plane_scan(load_grid(args.data, args.format), cfg)
    else:
        cfg = MappingConfig(mode="traveling_window", window_width=args.width, vibrato_depth=args.vibrato, **common)
        score = map_traveling_window(load_trajectories(args.data), cfg)
    save_score(score, args.output)
    print(f"sounds={len(score.sounds)}")
    return EXIT_OK


def _viz(args) -> int:
    from .viz import FrameSpec, emit_frames, emit_overview

    width, height = args.size
    if args.target == "overview":
        if args.extra is None:
            raise _UsageError("viz overview needs a score file")
        emit_overview(load_score(args.extra), args.output, width, height)
        return EXIT_OK
    if args.extra is not None:
        raise _UsageError(f"unexpected argument {args.extra!r}")
    spec = FrameSpec(fps=args.fps, width=width, height=height, representation=args.rep, grid=not args.no_grid)
    paths = emit_frames(load_score(args.target), spec, args.output, workers=args.workers)
    print(f"frames={len(paths)}")
    return EXIT_OK


class _UsageError(Exception):
    pass


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"check": _check, "render": _render, "sonify": _sonify, "viz": _viz}[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"diass: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"diass: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:  # score, envelope, data and parameter validation
        print(f"diass: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"diass: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
