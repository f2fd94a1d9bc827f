"""Offline score visualization as SVG.

Two frame representations are supported. In *spheres* mode every active
partial is a circle: height follows pitch on a twelve-steps-per-octave grid,
horizontal placement follows the pan position, the radius grows with the
square root of the amplitude and the hue shifts with the reverb mix. Sounds
with tremolo get a pulse ring and sounds with vibrato a rotating spoke.
*Planes* mode draws one bar per sound at its lowest active partial only.

A static piano-roll overview shows every partial as a translucent bar over
its lifetime.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import Score
from .score import ICard, expand_macros, lower_to_icards

REF_HZ = 440.0
SEMITONES_PER_OCTAVE = 12
REVERB_HUE_SHIFT = 120.0  # degrees at mix = 1
GOLDEN_ANGLE = 137.508


@dataclass(frozen=True)
class FrameSpec:
    fps: float = 10.0
    width: int = 1280
    height: int = 720
    representation: str = "spheres"
    grid: bool = True
    freq_range: tuple[float, float] = (20.0, 20000.0)
    max_radius: float = 24.0
    min_radius: float = 1.5

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame size must be positive")
        if self.representation not in ("spheres", "planes"):
            raise ValueError(f"unknown representation {self.representation!r}")
        lo, hi = self.freq_range
        if not 0 < lo < hi:
            raise ValueError("frequency range must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class Glyph:
    sound_id: int
    partial_index: int
    frequency: float
    pitch: float  # semitones above REF_HZ
    amplitude: float
    x: float
    y: float
    size: float  # radius (spheres) or half width (planes)
    hue: float
    pulse: bool = False
    rotation: Optional[float] = None  # degrees, vibrato spoke


@dataclass(frozen=True)
class Scene:
    t: float
    spec: FrameSpec
    glyphs: tuple[Glyph, ...] = ()
    grid_lines: tuple[tuple[float, bool], ...] = ()  # (y, is_octave)

    @property
    def stacks(self) -> int:
        return len({g.sound_id for g in self.glyphs})


def pitch_of(freq) -> np.ndarray:
    """Semitone position on the twelve-per-octave grid."""
    return SEMITONES_PER_OCTAVE * np.log2(np.asarray(freq, dtype=float) / REF_HZ)


def _y(pitch: float, spec: FrameSpec) -> float:
    lo, hi = pitch_of(spec.freq_range)
    return spec.height * (1.0 - (pitch - lo) / (hi - lo))


def _x(p: float, spec: FrameSpec) -> float:
    margin = 0.1 * spec.width
    return margin + p * (spec.width - 2 * margin)


def _grid(spec: FrameSpec) -> tuple[tuple[float, bool], ...]:
    if not spec.grid:
        return ()
    lo, hi = pitch_of(spec.freq_range)
    return tuple((_y(float(k), spec), k % SEMITONES_PER_OCTAVE == 0)
                 for k in range(math.ceil(lo), math.floor(hi) + 1))


def _cards(score: Score) -> list[ICard]:
    return lower_to_icards(expand_macros(score))


def _active(c: ICard, t: float) -> bool:
    return c.partial.start <= t < c.partial.end


def layout_frame(score: Score, t: float, spec: FrameSpec = FrameSpec(),
                 cards: Optional[list[ICard]] = None) -> Scene:
    """Scene at time ``t``; ``cards`` may be passed to skip re-lowering."""
    cards = _cards(score) if cards is None else cards
    end = max((c.sound_end for c in cards), default=0.0)
    if not 0.0 <= t <= end:
        raise ValueError(f"time {t} outside the score span [0, {end}]")
    glyphs = []
    active = [c for c in cards if _active(c, t)]
    if spec.representation == "planes":
        lowest: dict[int, ICard] = {}
        for c in active:
            u = (t - c.partial.start) / c.partial.duration
            if c.sound_id not in lowest or c.partial.freq_env(u) < _freq(lowest[c.sound_id], t):
                lowest[c.sound_id] = c
        active = [lowest[sid] for sid in sorted(lowest)]
    for c in active:
        p = c.partial
        u = (t - p.start) / p.duration
        f = _freq(c, t)
        a = float(np.clip(p.amp_env(u), 0.0, 1.0))
        su = min(max((t - c.sound_start) / (c.sound_end - c.sound_start), 0.0), 1.0)
        pitch = float(pitch_of(f))
        mix = c.reverb.mix if c.reverb is not None else 0.0
        hue = (GOLDEN_ANGLE * c.sound_id + REVERB_HUE_SHIFT * mix) % 360.0
        size = spec.min_radius + (spec.max_radius - spec.min_radius) * math.sqrt(a)
        if spec.representation == "planes":
            size *= 3.0
        rotation = None
        if p.fm is not None:
            rotation = (360.0 * float(p.fm.freq_env(u)) * (t - p.start)) % 360.0
        glyphs.append(Glyph(c.sound_id, c.partial_index, f, pitch, a, _x(float(c.pan_env(su)), spec),
                            _y(pitch, spec), size, hue, p.am is not None, rotation))
    return Scene(t, spec, tuple(glyphs), _grid(spec))


def _freq(c: ICard, t: float) -> float:
    p = c.partial
    return float(p.freq_env((t - p.start) / p.duration))


def _num(v: float) -> str:
    return f"{v:.2f}"


def scene_to_svg(scene: Scene) -> str:
    spec = scene.spec
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{spec.height}" '
           f'viewBox="0 0 {spec.width} {spec.height}">',
           f'<rect width="{spec.width}" height="{spec.height}" fill="black"/>']
    for y, octave in scene.grid_lines:
        stroke, w = ("#555", 1.0) if octave else ("#222", 0.5)
        out.append(f'<line x1="0" y1="{_num(y)}" x2="{spec.width}" y2="{_num(y)}" stroke="{stroke}" '
                   f'stroke-width="{w}"/>')
    for g in scene.glyphs:
        fill = f"hsl({g.hue:.1f},80%,{35 + 30 * g.amplitude:.1f}%)"
        if spec.representation == "planes":
            out.append(f'<rect x="{_num(g.x - g.size)}" y="{_num(g.y - 2)}" width="{_num(2 * g.size)}" '
                       f'height="4" fill="{fill}" data-sound="{g.sound_id}"/>')
        else:
            out.append(f'<circle cx="{_num(g.x)}" cy="{_num(g.y)}" r="{_num(g.size)}" fill="{fill}" '
                       f'data-sound="{g.sound_id}" data-partial="{g.partial_index}"/>')
        if g.pulse:
            out.append(f'<circle cx="{_num(g.x)}" cy="{_num(g.y)}" r="{_num(g.size + 3)}" fill="none" '
                       f'stroke="{fill}" stroke-dasharray="2,2"/>')
        if g.rotation is not None:
            out.append(f'<line x1="{_num(g.x)}" y1="{_num(g.y)}" x2="{_num(g.x + g.size)}" y2="{_num(g.y)}" '
                       f'stroke="white" transform="rotate({g.rotation:.1f} {_num(g.x)} {_num(g.y)})"/>')
    out.append(f'<text x="8" y="20" fill="white" font-family="monospace" font-size="14">'
               f't={scene.t:.2f}s</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def frame_count(duration: float, fps: float) -> int:
    """ceil(duration * fps), ignoring float fuzz just above an integer."""
    x = duration * fps
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 * max(1.0, abs(x)) else math.ceil(x)


def emit_frames(score: Score, spec: FrameSpec, out_dir, workers: int = 1) -> list[Path]:
    """Write ``frame_000001.svg``... and ``index.csv`` (frame, file, time)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    score = expand_macros(score)
    cards = lower_to_icards(score)
    n = frame_count(score.duration() if score.sounds else 0.0, spec.fps)
    paths = [out_dir / f"frame_{k + 1:06d}.svg" for k in range(n)]

    def write(k):
        paths[k].write_text(scene_to_svg(layout_frame(score, k / spec.fps, spec, cards)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(write, range(n)))
    else:
        for k in range(n):
            write(k)
    lines = ["frame,file,time_s"] + [f"{k + 1},{paths[k].name},{k / spec.fps:.6f}" for k in range(n)]
    (out_dir / "index.csv").write_text("\n".join(lines) + "\n")
    return paths


@dataclass(frozen=True)
class Bar:
    sound_id: int
    partial_index: int
    x0: float
    x1: float
    y: float
    opacity: float


def overview_bars(score: Score, width: int = 1280, height: int = 720,
                  freq_range: Optional[tuple[float, float]] = None) -> list[Bar]:
    """Piano-roll geometry: time on x, log frequency on y."""
    cards = _cards(score)
    if not cards:
        return []
    end = max(c.partial.end for c in cards)
    if freq_range is None:
        fs = [f for c in cards for f in (c.partial.min_frequency(), c.partial.max_frequency())]
        freq_range = (min(fs) / 2 ** 0.25, max(fs) * 2 ** 0.25)
    plo, phi = pitch_of(freq_range)
    u = np.linspace(0.0, 1.0, 65)
    bars = []
    for c in cards:
        p = c.partial
        f = float(np.exp(np.mean(np.log(p.freq_env(u)))))
        y = height * (1.0 - (float(pitch_of(f)) - plo) / (phi - plo))
        opacity = float(np.clip(np.mean(p.amp_env(u)), 0.0, 1.0))
        bars.append(Bar(c.sound_id, c.partial_index, width * p.start / end, width * p.end / end, y, opacity))
    return bars


def emit_overview(score: Score, out_path, width: int = 1280, height: int = 720) -> Path:
    """Single SVG piano roll; opacity follows each partial's mean amplitude.

    Bars are drawn translucent so overlapping partials composite visibly.
    """
    bars = overview_bars(score, width, height)
    peak = max((b.opacity for b in bars), default=1.0) or 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           '<g style="mix-blend-mode:multiply">']
    for b in bars:
        alpha = 0.15 + 0.75 * b.opacity / peak
        out.append(f'<rect x="{_num(b.x0)}" y="{_num(b.y - 1)}" width="{_num(b.x1 - b.x0)}" height="2" '
                   f'fill="hsl({GOLDEN_ANGLE * b.sound_id % 360:.1f},70%,40%)" fill-opacity="{alpha:.3f}" '
                   f'data-sound="{b.sound_id}"/>')
    out += ["</g>", "</svg>"]
    out_path = Path(out_path)
    out_path.write_text("\n".join(out) + "\n")
    return out_path
