"""The instrument: render I-cards to sample buffers.

Each partial computes ``a(t) * sin(theta(t) + phase)`` where the carrier
phase ``theta`` is the running integral of the instantaneous frequency

    f(t) = f_c(t) + a_fm(t) * w(fm phase)
    a(t) = loudness_scale(t) * (a_c(t) + a_am(t) * w(am phase))

with ``w`` a sine, triangle or square modulator wave. Partials of a sound
are summed, passed through the optional reverb, then panned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .model import Envelope, ModulatorSpec, ReverbSpec, TransientSpec
from .score import ICard

RNG_ALGORITHM = "pcg64/numpy-random-v1"
TRANSIENT_DECAY_S = 0.030
SPEED_OF_SOUND = 343.0
#: delay-line lengths relative to the hall delay
FDN_RATIOS = (1.0, 2 ** 0.25, 2 ** 0.5, 2 ** 0.75)


class SynthesisError(RuntimeError):
    pass


@dataclass
class SampleBuffer:
    """Float samples, shape (channels, n), placed at sample ``start``."""

    channels: int
    rate: int
    samples: np.ndarray
    start: int = 0

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] != self.channels:
            raise ValueError("channel count does not match sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples")

    def __len__(self):
        return self.samples.shape[1]

    @property
    def end(self) -> int:
        return self.start + len(self)


class RandomStream:
    """Seeded uniform stream shared by all partials of one sound."""

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def uniform(self, n: Optional[int] = None):
        self.draws += 1 if n is None else n
        return self._gen.random() if n is None else self._gen.random(n)


def time_to_sample(t: float, rate: int) -> int:
    """First sample index at or after time ``t``, robust to float fuzz."""
    x = t * rate
    r = round(x)
    return int(r) if abs(x - r) < 1e-6 else math.ceil(x)


def _wave(kind: str, cycles: np.ndarray) -> np.ndarray:
    frac = cycles - np.floor(cycles)
    if kind == "sine":
        return np.sin(2 * np.pi * frac)
    if kind == "triangle":
        x = cycles - 0.25
        return 4.0 * np.abs(x - np.floor(x) - 0.5) - 1.0
    return np.where(frac < 0.5, 1.0, -1.0)


def _integrate_cycles(freq: np.ndarray, rate: int) -> np.ndarray:
    """Cycles elapsed before each sample, starting from zero."""
    c = np.zeros_like(freq)
    if freq.size > 1:
        np.cumsum(freq[:-1], out=c[1:])
    return c / rate


def _modulation(m: ModulatorSpec, u: np.ndarray, rate: int) -> np.ndarray:
    cycles = _integrate_cycles(m.freq_env(u), rate) + m.phase / (2 * np.pi)
    return m.amp_env(u) * _wave(m.wave_type, cycles)


def _transient_profile(tr: TransientSpec, duration: float, tau: np.ndarray, rng: RandomStream) -> np.ndarray:
    """Relative carrier offset from randomly timed, linearly decaying kicks.

    Candidate events arrive as a Poisson process at ``max_rate`` and are
    kept with probability ``rate_env(u)`` (thinning). Every candidate draws
    exactly three uniforms, so draw counts depend only on the stream.
    """
    out = np.zeros_like(tau)
    if tr.max_rate <= 0 or tr.max_size == 0:
        return out
    t = 0.0
    while True:
        t += -math.log1p(-rng.uniform()) / tr.max_rate
        keep, x = rng.uniform(), 2.0 * rng.uniform() - 1.0
        if t >= duration:
            break
        u = t / duration
        if keep >= tr.rate_env(u):
            continue
        size = tr.max_size * tr.shape_env(u) * x
        lo, hi = np.searchsorted(tau, [t, t + TRANSIENT_DECAY_S])
        out[lo:hi] += size * (1.0 - (tau[lo:hi] - t) / TRANSIENT_DECAY_S)
    return out


def _flat_value(env: Envelope) -> Optional[float]:
    vals = env.values()
    return float(vals[0] * env.scale) if np.all(vals == vals[0]) else None


def render_partial(card: ICard, rng: RandomStream, rate: int) -> SampleBuffer:
    """Mono samples of one partial over [start, start + duration)."""
    n0, out = _partial_samples(card, rng, rate)
    return SampleBuffer(1, rate, out[None, :], start=n0)


def _partial_samples(card: ICard, rng: RandomStream, rate: int,
                     cache: Optional[dict] = None) -> tuple[int, np.ndarray]:
    """``cache`` shares control curves between partials of one sound."""
    cache = {} if cache is None else cache
    p = card.partial
    n0, n1 = time_to_sample(p.start, rate), time_to_sample(p.end, rate)
    n = np.arange(n0, n1)
    # flat controls stay scalars; this is the common case for harmonic clusters
    amp = _flat_value(p.amp_env) if p.am is None and p.amp_transient is None else None
    freq = _flat_value(p.freq_env) if p.fm is None and p.freq_transient is None else None
    t = n / rate
    if amp is None or freq is None:
        tau = t - p.start
        u = np.clip(tau / p.duration, 0.0, 1.0)
    if amp is None:
        key = ("amp", n0, n1, p.amp_env.initial, p.amp_env.segments)
        if key not in cache:
            cache[key] = replace(p.amp_env, scale=1.0)(u)
        amp = cache[key] * p.amp_env.scale
        if p.amp_transient is not None:
            amp = amp * (1.0 + _transient_profile(p.amp_transient, p.duration, tau, rng))
        if p.am is not None:
            amp = amp + _modulation(p.am, u, rate)
    if freq is None:
        freq = p.freq_env(u)
        if p.freq_transient is not None:
            freq = freq * (1.0 + _transient_profile(p.freq_transient, p.duration, tau, rng))
        if p.fm is not None:
            freq = freq + _modulation(p.fm, u, rate)

    nyquist = rate / 2.0
    fmax, fmin = (np.max(freq), np.min(freq)) if np.ndim(freq) and np.size(freq) else (freq, freq)
    if n.size and (fmax >= nyquist or fmin <= 0.0):
        bad = fmax if fmax >= nyquist else fmin
        raise SynthesisError(
            f"sound {card.sound_id} partial {card.partial_index}: instantaneous frequency {bad:g} Hz "
            f"outside (0, {nyquist:g}) Hz")

    if np.ndim(freq):
        cycles = _integrate_cycles(freq, rate)
    else:
        cycles = np.arange(n.size, dtype=float) * freq / rate
    cycles -= np.floor(cycles)
    cycles *= 2 * np.pi
    if p.phase:
        cycles += p.phase
    out = np.sin(cycles, out=cycles)
    if len(card.loudness_scale) > 1:
        s0, s1 = time_to_sample(card.sound_start, rate), time_to_sample(card.sound_end, rate)
        key = ("loud", s0, s1)
        if key not in cache:
            cache[key] = card.scale_at(np.arange(s0, s1) / rate)
        gain = cache[key][n0 - s0:n1 - s0]
    else:
        gain = card.loudness_scale[0][1]
    gain = gain * amp
    out *= gain
    return n0, out


def fdn_delays(spec: ReverbSpec, rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Delay lengths (samples) and per-line feedback gains."""
    base = spec.hall_size / SPEED_OF_SOUND
    delays = np.array([max(1, round(base * r * rate)) for r in FDN_RATIOS])
    gains = spec.reflection * np.exp(-spec.decay_rate * delays / rate)
    return delays, gains


def apply_reverb(buf: SampleBuffer, spec: Optional[ReverbSpec]) -> SampleBuffer:
    """Four-line feedback-delay network; the output grows by the tail length.

    The wet path is the direct signal plus the lines' attenuated outputs,
    fed back through an orthogonal (Householder) matrix. ``mix == 0``
    returns the input untouched.
    """
    if spec is None or spec.mix == 0.0:
        return buf
    rate = buf.rate
    tail = time_to_sample(spec.duration, rate)
    dry = np.concatenate([buf.samples, np.zeros((buf.channels, tail))], axis=1)
    delays, gains = fdn_delays(spec, rate)
    k = len(delays)
    feedback = np.eye(k) - 2.0 / k
    length = dry.shape[1]
    wet = np.empty_like(dry)
    block = int(delays.min())
    for ch in range(buf.channels):
        x = dry[ch]
        lines = np.zeros((k, length))
        y = x.copy()
        for b in range(0, length, block):
            e = min(b + block, length)
            taps = np.zeros((k, e - b))
            for j, d in enumerate(delays):
                lo = b - d
                if e - d <= 0:
                    continue
                src_lo = max(lo, 0)
                taps[j, src_lo - lo:] = lines[j, src_lo:e - d]
            taps *= gains[:, None]
            lines[:, b:e] = x[b:e] + feedback @ taps
            y[b:e] += taps.sum(axis=0)
        wet[ch] = y
    out = (1.0 - spec.mix) * dry + spec.mix * wet
    return SampleBuffer(buf.channels, rate, out, buf.start)


def pan_gains(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant-power gains; symmetric so p=0.5 gives identical channels."""
    p = np.asarray(p, dtype=float)
    return np.sin((1.0 - p) * np.pi / 2), np.sin(p * np.pi / 2)


def pan(buf: SampleBuffer, pan_env: Envelope, span: Optional[tuple[int, int]] = None) -> SampleBuffer:
    """Spread a mono buffer to stereo.

    ``span`` gives the (start, end) samples the envelope covers; by default
    the buffer itself. Samples past the span hold the final pan position.
    """
    if buf.channels != 1:
        raise ValueError("pan expects a mono buffer")
    s0, s1 = span if span is not None else (buf.start, buf.end)
    n = np.arange(buf.start, buf.end)
    u = np.clip((n - s0) / max(s1 - s0, 1), 0.0, 1.0)
    left, right = pan_gains(pan_env(u))
    mono = buf.samples[0]
    return SampleBuffer(2, buf.rate, np.stack([left * mono, right * mono]), buf.start)


def render_sound(cards: Sequence[ICard], rate: int, channels: int = 2) -> SampleBuffer:
    """Sum a sound's partials, then reverb, then pan (stereo) or not (mono).

    One RandomStream seeded from the sound is consumed in partial order, so
    the result depends only on the cards.
    """
    if not cards:
        raise ValueError("no cards to render")
    cards = sorted(cards, key=lambda c: c.partial_index)
    first = cards[0]
    if any(c.sound_id != first.sound_id for c in cards):
        raise ValueError("cards belong to different sounds")
    s0, s1 = time_to_sample(first.sound_start, rate), time_to_sample(first.sound_end, rate)
    acc = np.zeros(s1 - s0)
    rng = RandomStream(first.rng_seed)
    cache: dict = {}
    for c in cards:
        n0, part = _partial_samples(c, rng, rate, cache)
        acc[n0 - s0:n0 - s0 + part.size] += part
    buf = apply_reverb(SampleBuffer(1, rate, acc[None, :], s0), first.reverb)
    if channels == 1:
        return buf
    return pan(buf, first.pan_env, span=(s0, s1))
