"""Sound-level parallel rendering, deterministic mixing and 16-bit output.

Whole sounds are the unit of work. They are dispatched to a thread pool in
starting-time order, and the mixer adds finished buffers in ascending sound
id order whatever order they complete in, so the mix is bit-identical for
any worker count.
"""
from __future__ import annotations

import logging
import time
import wave
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import Score
from .score import ICard, expand_macros, group_cards, lower_to_icards
from .synth import SampleBuffer, render_sound, time_to_sample

log = logging.getLogger(__name__)

BIT_DEPTH = 16
FULL_SCALE = 32767


class RenderError(RuntimeError):
    def __init__(self, sound_id: int, cause: BaseException):
        super().__init__(f"rendering sound {sound_id} failed: {cause}")
        self.sound_id = sound_id
        self.cause = cause


@dataclass
class RenderConfig:
    workers: int = 1
    headroom: float = 0.98
    anticlip: bool = True
    anticlip_max_rounds: int = 10
    output: Optional[str] = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 < self.headroom <= 1.0:
            raise ValueError("headroom must be in (0, 1]")


def _dispatch_order(by_sound: dict[int, list[ICard]]) -> list[int]:
    return sorted(by_sound, key=lambda sid: (by_sound[sid][0].sound_start, sid))


def render_sounds(cards: Sequence[ICard], rate: int, channels: int = 2, workers: int = 1,
                  only: Optional[set[int]] = None) -> dict[int, SampleBuffer]:
    """Render each sound (optionally a subset) to its own buffer."""
    by_sound = group_cards(list(cards))
    order = [sid for sid in _dispatch_order(by_sound) if only is None or sid in only]

    def work(sid):
        try:
            return render_sound(by_sound[sid], rate, channels)
        except Exception as exc:  # abort the run naming the sound
            raise RenderError(sid, exc) from exc

    if workers == 1:
        return {sid: work(sid) for sid in order}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {sid: pool.submit(work, sid) for sid in order}
        return {sid: f.result() for sid, f in futures.items()}


def mix_buffers(buffers: dict[int, SampleBuffer], rate: int, channels: int = 2) -> SampleBuffer:
    """Accumulate sound buffers at their offsets in ascending id order."""
    length = max((b.end for b in buffers.values()), default=0)
    out = np.zeros((channels, length))
    for sid in sorted(buffers):
        b = buffers[sid]
        out[:, b.start:b.end] += b.samples
    return SampleBuffer(channels, rate, out, 0)


def schedule_render(cards: Sequence[ICard], rate: int, channels: int = 2, workers: int = 1) -> SampleBuffer:
    """Render and mix all sounds; identical output for every ``workers``."""
    return mix_buffers(render_sounds(cards, rate, channels, workers), rate, channels)


def quantize(samples) -> np.ndarray:
    """Scale to 16-bit, rounding half away from zero, clamped."""
    x = np.asarray(samples.samples if isinstance(samples, SampleBuffer) else samples, dtype=float)
    q = np.sign(x) * np.floor(np.abs(x) * FULL_SCALE + 0.5)
    return np.clip(q, -32768, 32767).astype(np.int16)


def wav_data_bytes(rate: int, seconds: float, channels: int) -> int:
    return time_to_sample(seconds, rate) * channels * BIT_DEPTH // 8


def write_wav(samples: np.ndarray, rate: int, channels: int, path) -> None:
    """Write (channels, n) int16 samples as canonical PCM RIFF/WAVE."""
    samples = np.asarray(samples, dtype=np.int16)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[0] != channels:
        raise ValueError("channel count does not match sample array")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(BIT_DEPTH // 8)
        w.setframerate(rate)
        w.writeframes(samples.T.astype("<i2").tobytes())


@dataclass
class RenderResult:
    score: Score
    cards: list[ICard]
    mix: SampleBuffer
    stats: dict = field(default_factory=dict)


def prepare(score: Score) -> tuple[Score, list[ICard]]:
    """Expand macros, lower to cards and apply loudness scaling."""
    from .psycho import apply_loudness

    score = expand_macros(score)
    cards = apply_loudness(lower_to_icards(score), score)
    return score, cards


def render_score(score: Score, config: Optional[RenderConfig] = None) -> RenderResult:
    """Full pipeline: macros, loudness, synthesis, anticlip, mix."""
    from .anticlip import anticlip_pass

    config = config or RenderConfig()
    stats: dict = {}
    t0 = time.perf_counter()
    score, cards = prepare(score)
    t1 = time.perf_counter()
    stats["prepare_s"] = t1 - t0
    if config.anticlip:
        res = anticlip_pass(score, config.headroom, config.anticlip_max_rounds, config.workers)
        score, cards, mix = res.score, res.cards, res.mix
        stats["anticlip_rounds"] = res.rounds
    else:
        mix = schedule_render(cards, score.sample_rate, score.channels, config.workers)
        stats["anticlip_rounds"] = 0
    t2 = time.perf_counter()
    stats["synth_s"] = t2 - t1
    stats["sounds"] = len(score.sounds)
    stats["partials"] = len(cards)
    stats["samples"] = len(mix)
    stats["peak"] = float(np.abs(mix.samples).max()) if len(mix) else 0.0
    log.debug("rendered %d sounds / %d partials", stats["sounds"], stats["partials"])
    return RenderResult(score, cards, mix, stats)


def render_to_wav(score: Score, path, config: Optional[RenderConfig] = None) -> RenderResult:
    result = render_score(score, config)
    t0 = time.perf_counter()
    write_wav(quantize(result.mix), score.sample_rate, score.channels, path)
    result.stats["write_s"] = time.perf_counter() - t0
    return result
