"""Overflow detection and loudness-preserving rescaling.

When the offline mix exceeds the headroom, every sound active in an
overflowing frame has its sone targets multiplied by a common factor, the
amplitudes are re-solved and the affected sounds re-rendered. Sounds that
never share a frame with an overflow are left bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import Score, Sound
from .psycho import apply_loudness
from .render import mix_buffers, render_sounds
from .score import ICard, lower_to_icards
from .synth import SampleBuffer

DEFAULT_HEADROOM = 0.98
#: runs of overflow closer than this are one frame
MERGE_GAP_S = 0.05
#: sone targets shrink by (headroom/peak)^(1/gamma) per round. With sones
#: near a^0.6 the amplitude falls by about (headroom/peak)^0.83, so rounds
#: approach the headroom from above
REDUCTION_GAMMA = 2.0


class AnticlipError(RuntimeError):
    def __init__(self, message: str, residual_peak: float):
        super().__init__(message)
        self.residual_peak = residual_peak


@dataclass(frozen=True)
class OverflowFrame:
    start: int
    end: int  # exclusive
    peak: float
    sound_ids: tuple[int, ...]


@dataclass(frozen=True)
class OverflowReport:
    frames: tuple[OverflowFrame, ...] = ()

    def __bool__(self):
        return bool(self.frames)

    @property
    def peak(self) -> float:
        return max((f.peak for f in self.frames), default=0.0)


def detect_overflow(mix: SampleBuffer, headroom: float = DEFAULT_HEADROOM,
                    spans: Optional[dict[int, tuple[int, int]]] = None,
                    merge_gap: Optional[int] = None) -> OverflowReport:
    """Frames where ``|sample| > headroom`` on any channel.

    Runs separated by fewer than ``merge_gap`` samples (default 50 ms) merge
    into one frame; ``spans`` maps sound id to its (start, end) samples and
    is used to list the sounds active in each frame.
    """
    if not 0.0 < headroom <= 1.0:
        raise ValueError("headroom must be in (0, 1]")
    if len(mix) == 0:
        return OverflowReport()
    if merge_gap is None:
        merge_gap = int(MERGE_GAP_S * mix.rate)
    level = np.abs(mix.samples).max(axis=0)
    over = level > headroom
    if not over.any():
        return OverflowReport()
    edges = np.diff(np.concatenate([[0], over.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    runs = [[int(starts[0]), int(ends[0])]]
    for s, e in zip(starts[1:], ends[1:]):
        if s - runs[-1][1] < merge_gap:
            runs[-1][1] = int(e)
        else:
            runs.append([int(s), int(e)])
    frames = []
    for s, e in runs:
        a, b = s + mix.start, e + mix.start
        ids = tuple(sorted(sid for sid, (s0, s1) in (spans or {}).items() if s0 < b and s1 > a))
        frames.append(OverflowFrame(a, b, float(level[s:e].max()), ids))
    return OverflowReport(tuple(frames))


def _components(score: Score, report: OverflowReport) -> list[tuple[set[int], float]]:
    """Sounds linked by a shared frame or loudness group, with the peak to fix."""
    parent: dict[int, int] = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        parent[find(a)] = find(b)

    groups: dict[str, list[int]] = {}
    for s in score.sounds:
        if s.group is not None:
            groups.setdefault(s.group, []).append(s.id)
    for f in report.frames:
        for sid in f.sound_ids:
            find(sid)
        for a, b in zip(f.sound_ids, f.sound_ids[1:]):
            union(a, b)
    involved = set(parent)
    for members in groups.values():
        if involved & set(members):
            for a, b in zip(members, members[1:]):
                union(a, b)
    comps: dict[int, tuple[set[int], float]] = {}
    for f in report.frames:
        if not f.sound_ids:
            continue
        root = find(f.sound_ids[0])
        ids, peak = comps.get(root, (set(), 0.0))
        comps[root] = (ids, max(peak, f.peak))
    for sid in list(parent):
        root = find(sid)
        if root in comps:
            comps[root][0].add(sid)
    return list(comps.values())


def scale_targets(score: Score, factors: dict[int, float]) -> Score:
    """Multiply the loudness envelopes of the given sounds by their factor."""
    sounds = []
    for s in score.sounds:
        r = factors.get(s.id)
        if r is None:
            sounds.append(s)
        else:
            sounds.append(replace(s, loudness_env=replace(s.loudness_env, scale=s.loudness_env.scale * r)))
    return replace(score, sounds=tuple(sounds))


def reduction_factors(score: Score, report: OverflowReport, headroom: float,
                      gamma: float = REDUCTION_GAMMA) -> dict[int, float]:
    factors = {}
    for ids, peak in _components(score, report):
        rho = (headroom / peak) ** (1.0 / gamma)
        for sid in ids:
            factors[sid] = rho
    return factors


def sample_spans(buffers: dict[int, SampleBuffer]) -> dict[int, tuple[int, int]]:
    return {sid: (b.start, b.end) for sid, b in buffers.items()}


@dataclass
class AnticlipResult:
    score: Score
    cards: list[ICard]
    mix: SampleBuffer
    buffers: dict[int, SampleBuffer]
    rounds: int
    report: OverflowReport


def anticlip_pass(score: Score, headroom: float = DEFAULT_HEADROOM, max_rounds: int = 10,
                  workers: int = 1) -> AnticlipResult:
    """Render, then rescale and re-render until the mix fits the headroom.

    ``score`` must already be macro-free.
    """
    cards = apply_loudness(lower_to_icards(score), score)
    buffers = render_sounds(cards, score.sample_rate, score.channels, workers)
    mix = mix_buffers(buffers, score.sample_rate, score.channels)
    report = detect_overflow(mix, headroom, sample_spans(buffers))
    rounds = 0
    while report:
        if rounds == max_rounds:
            raise AnticlipError(f"anticlip did not converge in {max_rounds} rounds; "
                                f"residual peak {report.peak:.4f} > {headroom}", report.peak)
        factors = reduction_factors(score, report, headroom)
        if not factors:
            raise AnticlipError("overflow frames with no active sound", report.peak)
        score = scale_targets(score, factors)
        cards = apply_loudness(lower_to_icards(score), score)
        buffers.update(render_sounds(cards, score.sample_rate, score.channels, workers, only=set(factors)))
        mix = mix_buffers(buffers, score.sample_rate, score.channels)
        report = detect_overflow(mix, headroom, sample_spans(buffers))
        rounds += 1
    return AnticlipResult(score, cards, mix, buffers, rounds, report)


def rescale_sounds(score: Score, report: OverflowReport, headroom: float = DEFAULT_HEADROOM,
                   max_rounds: int = 10, workers: int = 1) -> Score:
    """Score with loudness targets lowered until its mix no longer overflows.

    An empty ``report`` returns ``score`` unchanged.
    """
    if not report:
        return score
    score = scale_targets(score, reduction_factors(score, report, headroom))
    return anticlip_pass(score, headroom, max_rounds - 1, workers).score
