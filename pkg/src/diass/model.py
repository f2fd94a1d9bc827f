"""Domain types: envelopes, partials, sounds and scores.

All types are frozen dataclasses holding tuples, so instances can be shared
between render threads freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

SAMPLE_RATES = (22050, 44100, 48000, 96000)
WAVE_TYPES = ("sine", "triangle", "square")
SHAPES = ("lin", "exp")

#: modulators act on the slow (sub-audio) time scale
MAX_MODULATOR_HZ = 200.0
MAX_TRANSIENT_SIZE = 0.5


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    fraction: float
    target: float
    shape: str = "lin"


@dataclass(frozen=True)
class Envelope:
    """Normalized breakpoint function on [0, 1] times a scale factor.

    Positions are relative to the duration of whatever the envelope
    controls, so the same envelope can drive partials of any length.
    """

    initial: float
    segments: tuple[Segment, ...]
    scale: float = 1.0

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise EnvelopeError("envelope needs at least one segment")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise EnvelopeError(f"envelope scale must be finite and >= 0, got {self.scale}")
        if not 0.0 <= self.initial <= 1.0:
            raise EnvelopeError(f"initial value {self.initial} outside [0, 1]")
        total = 0.0
        prev = self.initial
        for s in segs:
            if not 0.0 < s.fraction <= 1.0:
                raise EnvelopeError(f"segment fraction {s.fraction} outside (0, 1]")
            if not 0.0 <= s.target <= 1.0:
                raise EnvelopeError(f"segment target {s.target} outside [0, 1]")
            if s.shape not in SHAPES:
                raise EnvelopeError(f"unknown segment shape {s.shape!r}")
            if s.shape == "exp" and (prev == 0.0 or s.target == 0.0):
                raise EnvelopeError("exponential segment cannot touch zero")
            total += s.fraction
            prev = s.target
        if abs(total - 1.0) > 1e-9:
            raise EnvelopeError(f"segment fractions sum to {total!r}, expected 1")

    @classmethod
    def const(cls, value: float) -> "Envelope":
        return cls(1.0, (Segment(1.0, 1.0),), float(value))

    @classmethod
    def from_points(cls, values: Sequence[float], scale: Optional[float] = None) -> "Envelope":
        """Equally spaced linear breakpoints through ``values`` (absolute units)."""
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            v = float(values[0]) if values.size else 0.0
            return cls.const(v)
        if scale is None:
            scale = float(values.max())
        norm = values / scale if scale > 0 else np.zeros_like(values)
        norm = np.clip(norm, 0.0, 1.0)
        n = values.size - 1
        fracs = [1.0 / n] * n
        fracs[-1] = 1.0 - sum(fracs[:-1])
        return cls(float(norm[0]), tuple(Segment(f, float(v)) for f, v in zip(fracs, norm[1:])), float(scale))

    @property
    def is_const(self) -> bool:
        return self.initial == 1.0 and all(s.target == 1.0 for s in self.segments)

    def breakpoints(self) -> np.ndarray:
        """Relative positions of all breakpoints, including 0 and 1."""
        pos = np.concatenate([[0.0], np.cumsum([s.fraction for s in self.segments])])
        pos[-1] = 1.0
        return pos

    def values(self) -> np.ndarray:
        """Normalized values at the breakpoints."""
        return np.array([self.initial] + [s.target for s in self.segments])

    def peak(self) -> float:
        return self.scale * float(self.values().max())

    def __call__(self, u):
        return eval_envelope(self, u)


def eval_envelope(env: Envelope, u: Union[float, np.ndarray]):
    """Evaluate ``env`` at relative position(s) ``u`` in [0, 1].

    Linear segments interpolate arithmetically, exponential ones
    geometrically. Breakpoints are hit exactly.
    """
    scalar = np.ndim(u) == 0
    u = np.asarray(u, dtype=float)
    if u.size and not (u.min() >= 0.0 and u.max() <= 1.0):
        raise ValueError("envelope position outside [0, 1]")
    vals = env.values()
    nseg = len(env.segments)
    if np.all(vals == vals[0]):
        out = np.full(u.shape, vals[0] * env.scale)
    elif nseg == 1 and env.segments[0].shape == "lin":
        out = (vals[0] + (vals[1] - vals[0]) * u) * env.scale
        out = np.where(u == 1.0, vals[1] * env.scale, out)
    elif all(s.shape == "lin" for s in env.segments):
        out = np.interp(u, env.breakpoints(), vals) * env.scale
    else:
        pos = env.breakpoints()
        idx = np.searchsorted(pos, u, side="right") - 1
        idx = np.clip(idx, 0, nseg - 1)
        x0 = pos[idx]
        x = (u - x0) / (pos[idx + 1] - x0)
        x = np.clip(x, 0.0, 1.0)
        v0 = vals[idx]
        v1 = vals[idx + 1]
        out = v0 + (v1 - v0) * x
        is_exp = np.array([s.shape == "exp" for s in env.segments])
        if is_exp.any():
            e = is_exp[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(e, v0 * (v1 / v0) ** x, out)
        out = np.where(x == 1.0, v1, out)
        out = out * env.scale
    return float(out) if scalar else out


@dataclass(frozen=True)
class ModulatorSpec:
    wave_type: str
    amp_env: Envelope
    freq_env: Envelope
    phase: float = 0.0

    def __post_init__(self):
        if self.wave_type not in WAVE_TYPES:
            raise ValueError(f"unknown wave type {self.wave_type!r}")
        if self.freq_env.peak() >= MAX_MODULATOR_HZ:
            raise ValueError(f"modulator frequency {self.freq_env.peak()} Hz is not below {MAX_MODULATOR_HZ} Hz")


@dataclass(frozen=True)
class TransientSpec:
    max_size: float
    shape_env: Envelope
    max_rate: float
    rate_env: Envelope

    def __post_init__(self):
        if not 0.0 <= self.max_size <= MAX_TRANSIENT_SIZE:
            raise ValueError(f"transient size {self.max_size} outside [0, {MAX_TRANSIENT_SIZE}]")
        if not (math.isfinite(self.max_rate) and self.max_rate >= 0):
            raise ValueError(f"transient rate must be >= 0, got {self.max_rate}")


@dataclass(frozen=True)
class Partial:
    start: float
    duration: float
    freq_env: Envelope
    amp_env: Envelope
    phase: float = 0.0
    am: Optional[ModulatorSpec] = None
    fm: Optional[ModulatorSpec] = None
    amp_transient: Optional[TransientSpec] = None
    freq_transient: Optional[TransientSpec] = None

    def __post_init__(self):
        if not (math.isfinite(self.start) and self.start >= 0):
            raise ValueError(f"partial start must be >= 0, got {self.start}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"partial duration must be > 0, got {self.duration}")
        if not 0.0 <= self.phase < 2 * math.pi:
            raise ValueError(f"phase {self.phase} outside [0, 2*pi)")
        if self.amp_env.peak() > 1.0 + 1e-12:
            raise ValueError("carrier amplitude envelope exceeds full scale")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def max_frequency(self) -> float:
        """Upper bound on the instantaneous frequency."""
        f = self.freq_env.peak()
        if self.fm is not None:
            f += self.fm.amp_env.peak()
        if self.freq_transient is not None:
            f += self.freq_transient.max_size * self.freq_env.peak()
        return f

    def min_frequency(self) -> float:
        f = self.freq_env.scale * float(self.freq_env.values().min())
        if self.fm is not None:
            f -= self.fm.amp_env.peak()
        if self.freq_transient is not None:
            f -= self.freq_transient.max_size * self.freq_env.peak()
        return f


@dataclass(frozen=True)
class ReverbSpec:
    duration: float
    decay_rate: float
    mix: float
    hall_size: float
    reflection: float

    def __post_init__(self):
        for name in ("duration", "decay_rate", "mix", "hall_size", "reflection"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"reverb {name} must be finite")
        if self.duration < 0:
            raise ValueError("reverb duration must be >= 0")
        if self.decay_rate <= 0:
            raise ValueError("reverb decay rate must be > 0")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("reverb mix outside [0, 1]")
        if self.hall_size <= 0:
            raise ValueError("hall size must be > 0")
        if not 0.0 <= self.reflection < 1.0:
            raise ValueError("reflection coefficient outside [0, 1)")


@dataclass(frozen=True)
class HarmonicMacro:
    """A fundamental plus its harmonics, expanded into partials later."""

    fundamental: float
    max_partials: Optional[int] = None  # None means "up to Nyquist"
    rolloff: str = "equal"
    start: float = 0.0  # offset from the sound's start
    duration: Optional[float] = None
    amp_env: Envelope = field(default_factory=lambda: Envelope.const(1.0))

    def __post_init__(self):
        if not (math.isfinite(self.fundamental) and self.fundamental > 0):
            raise ValueError(f"fundamental must be > 0, got {self.fundamental}")
        if self.max_partials is not None and self.max_partials < 1:
            raise ValueError("max partials must be positive")
        if self.rolloff not in ("equal", "inverse"):
            raise ValueError(f"unknown rolloff {self.rolloff!r}")


@dataclass(frozen=True)
class Sound:
    id: int
    partials: tuple[Partial, ...]
    loudness_env: Envelope
    pan_env: Envelope = field(default_factory=lambda: Envelope.const(0.5))
    reverb: Optional[ReverbSpec] = None
    rng_seed: int = 0
    harmonics: tuple[HarmonicMacro, ...] = ()
    start: float = 0.0
    duration: Optional[float] = None
    group: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "partials", tuple(self.partials))
        object.__setattr__(self, "harmonics", tuple(self.harmonics))
        if self.id < 0:
            raise ValueError("sound id must be non-negative")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng seed must fit in 64 unsigned bits")
        if not self.partials and not self.harmonics:
            raise ValueError(f"sound {self.id} has no partials")
        if self.pan_env.peak() > 1.0:
            raise ValueError("pan envelope exceeds 1")

    def span(self) -> tuple[float, float]:
        return sound_span(self)


def sound_start(s: Sound) -> float:
    """Start time usable before macro expansion."""
    starts = [p.start for p in s.partials] + [h.start for h in s.harmonics]
    return min(starts)


def sound_span(s: Sound) -> tuple[float, float]:
    """(earliest partial start, latest partial end) in seconds."""
    if not s.partials:
        raise ValueError(f"sound {s.id} has unexpanded macros; expand first")
    return min(p.start for p in s.partials), max(p.end for p in s.partials)


@dataclass(frozen=True)
class Score:
    sounds: tuple[Sound, ...]
    sample_rate: int = 44100
    channels: int = 2
    calibration_db: float = 90.0

    def __post_init__(self):
        object.__setattr__(self, "sounds", tuple(sorted(self.sounds, key=lambda s: (sound_start(s), s.id))))
        if self.sample_rate not in SAMPLE_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}")
        if self.channels not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        ids = [s.id for s in self.sounds]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sound id")

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    def duration(self) -> float:
        """End time of the last sound, ignoring reverb tails."""
        if not self.sounds:
            return 0.0
        return max(sound_span(s)[1] for s in self.sounds)

    def sound(self, sound_id: int) -> Sound:
        for s in self.sounds:
            if s.id == sound_id:
                return s
        raise KeyError(sound_id)
