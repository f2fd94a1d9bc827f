"""Score language: parsing, canonical serialization, macro expansion and
lowering to I-cards (one self-contained record per partial).

Grammar (line oriented, ``#`` starts a comment)::

    diass-score 1
    rate 44100
    channels 2
    calibration_db 90
    sound id=1 start=0.0 dur=5.5 loudness=sones:32 pan=const:0.5 seed=12345
      reverb dur=1.2 decay=2.0 mix=0.2 hall=20 refl=0.7
      harmonic f0=40 max=60
      partial f=const:440 a=env:0;0.1,1,lin;0.9,0,lin phase=0.0

Envelope literals are ``const:X`` (also ``sones:X``) or
``env:INIT;FRAC,TARGET,lin|exp;...`` with an optional ``@SCALE`` suffix.
Partial and harmonic ``start`` values are absolute times that default to the
owning sound's ``start``; ``dur`` defaults to the sound's ``dur``.
Modulators and transients use dotted keys: ``fm.wave fm.phase fm.a fm.f``,
``am.*``, ``atr.size atr.shape atr.rate atr.rate_env`` and ``ftr.*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import (
    Envelope,
    EnvelopeError,
    HarmonicMacro,
    ModulatorSpec,
    Partial,
    ReverbSpec,
    Score,
    Segment,
    Sound,
    TransientSpec,
    sound_span,
)

GRAMMAR_VERSION = 1
HEADER = f"diass-score {GRAMMAR_VERSION}"
#: guard band kept free below Nyquist by harmonic expansion
NYQUIST_GUARD_HZ = 1.0


class ScoreError(ValueError):
    """Syntax or semantic error, optionally located in the source text."""

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}" if line is not None else ""
        if line is not None and col is not None:
            where += f", col {col}"
        super().__init__(f"{where}: {message}" if where else message)


# -- envelope literals -------------------------------------------------------

def parse_envelope(text: str) -> Envelope:
    kind, sep, body = text.partition(":")
    if not sep:
        raise ValueError(f"bad envelope literal {text!r}")
    if kind in ("const", "sones"):
        return Envelope.const(_float(body))
    if kind != "env":
        raise ValueError(f"unknown envelope kind {kind!r}")
    body, _, scale = body.partition("@")
    parts = body.split(";")
    segs = []
    for chunk in parts[1:]:
        fields = chunk.split(",")
        if len(fields) != 3:
            raise ValueError(f"envelope segment {chunk!r} needs frac,target,shape")
        segs.append(Segment(_float(fields[0]), _float(fields[1]), fields[2]))
    return Envelope(_float(parts[0]), tuple(segs), _float(scale) if scale else 1.0)


def format_envelope(env: Envelope) -> str:
    if env.is_const and len(env.segments) == 1:
        return f"const:{env.scale!r}"
    body = ";".join([repr(env.initial)] + [f"{s.fraction!r},{s.target!r},{s.shape}" for s in env.segments])
    if env.scale != 1.0:
        body += f"@{env.scale!r}"
    return "env:" + body


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {text!r}")
    return v


# -- parser ------------------------------------------------------------------

@dataclass
class _Token:
    key: str
    value: str
    col: int


@dataclass
class _SoundDraft:
    line: int
    attrs: dict
    reverb: Optional[ReverbSpec] = None
    partials: list = field(default_factory=list)
    harmonics: list = field(default_factory=list)


def _tokenize(line: str) -> tuple[str, list[tuple[str, int]]]:
    code = line.split("#", 1)[0]
    words = []
    i = 0
    while i < len(code):
        if code[i].isspace():
            i += 1
            continue
        j = i
        while j < len(code) and not code[j].isspace():
            j += 1
        words.append((code[i:j], i + 1))
        i = j
    if not words:
        return "", []
    return words[0][0], words[1:]


def _key_values(words: list[tuple[str, int]], lineno: int) -> list[_Token]:
    tokens = []
    for word, col in words:
        key, sep, value = word.partition("=")
        if not sep or not key:
            raise ScoreError(f"expected key=value, got {word!r}", lineno, col)
        tokens.append(_Token(key, value, col))
    return tokens


class _Attrs:
    """key=value tokens of one line with typed, located accessors."""

    def __init__(self, tokens: list[_Token], lineno: int, allowed: set[str]):
        self.lineno = lineno
        self.tokens = {}
        for t in tokens:
            if t.key not in allowed:
                raise ScoreError(f"unknown attribute {t.key!r}", lineno, t.col)
            if t.key in self.tokens:
                raise ScoreError(f"repeated attribute {t.key!r}", lineno, t.col)
            self.tokens[t.key] = t

    def __contains__(self, key):
        return key in self.tokens

    def col(self, key):
        t = self.tokens.get(key)
        return t.col if t else None

    def _get(self, key, conv, default, required):
        t = self.tokens.get(key)
        if t is None:
            if required:
                raise ScoreError(f"missing attribute {key!r}", self.lineno)
            return default
        try:
            return conv(t.value)
        except (ValueError, TypeError) as exc:
            raise ScoreError(f"bad value for {key!r}: {exc}", self.lineno, t.col) from None

    def float(self, key, default=None, required=False):
        return self._get(key, _float, default, required)

    def int(self, key, default=None, required=False):
        return self._get(key, int, default, required)

    def str(self, key, default=None, required=False):
        return self._get(key, str, default, required)

    def env(self, key, default=None, required=False):
        return self._get(key, parse_envelope, default, required)


_SOUND_KEYS = {"id", "start", "dur", "loudness", "pan", "seed", "group"}
_REVERB_KEYS = {"dur", "decay", "mix", "hall", "refl"}
_HARMONIC_KEYS = {"f0", "max", "rolloff", "start", "dur", "a"}
_PARTIAL_KEYS = {"start", "dur", "f", "a", "phase"} | {
    f"{m}.{k}" for m in ("am", "fm") for k in ("wave", "phase", "a", "f")
} | {f"{m}.{k}" for m in ("atr", "ftr") for k in ("size", "shape", "rate", "rate_env")}


def _modulator(attrs: _Attrs, prefix: str) -> Optional[ModulatorSpec]:
    keys = [k for k in attrs.tokens if k.startswith(prefix + ".")]
    if not keys:
        return None
    try:
        return ModulatorSpec(
            wave_type=attrs.str(f"{prefix}.wave", "sine"),
            amp_env=attrs.env(f"{prefix}.a", required=True),
            freq_env=attrs.env(f"{prefix}.f", required=True),
            phase=attrs.float(f"{prefix}.phase", 0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ScoreError):
            raise
        raise ScoreError(f"{prefix}: {exc}", attrs.lineno, attrs.col(keys[0])) from None


def _transient(attrs: _Attrs, prefix: str) -> Optional[TransientSpec]:
    keys = [k for k in attrs.tokens if k.startswith(prefix + ".")]
    if not keys:
        return None
    try:
        return TransientSpec(
            max_size=attrs.float(f"{prefix}.size", required=True),
            shape_env=attrs.env(f"{prefix}.shape", Envelope.const(1.0)),
            max_rate=attrs.float(f"{prefix}.rate", required=True),
            rate_env=attrs.env(f"{prefix}.rate_env", Envelope.const(1.0)),
        )
    except ValueError as exc:
        if isinstance(exc, ScoreError):
            raise
        raise ScoreError(f"{prefix}: {exc}", attrs.lineno, attrs.col(keys[0])) from None


def parse_score(text: str) -> Score:
    """Parse score text into a validated (possibly macro-bearing) Score."""
    header: dict = {}
    drafts: list[_SoundDraft] = []
    saw_version = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        head, words = _tokenize(line)
        if not head:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if not saw_version:
            if head != "diass-score":
                raise ScoreError("score must start with 'diass-score 1'", lineno, col)
            if [w for w, _ in words] != [str(GRAMMAR_VERSION)]:
                raise ScoreError(f"unsupported score version {' '.join(w for w, _ in words)!r}", lineno, col)
            saw_version = True
            continue
        if head in ("rate", "channels", "calibration_db"):
            if drafts:
                raise ScoreError(f"{head!r} must precede the first sound", lineno, col)
            if len(words) != 1:
                raise ScoreError(f"{head!r} takes one value", lineno, col)
            value, vcol = words[0]
            try:
                header[head] = _float(value) if head == "calibration_db" else int(value)
            except ValueError:
                raise ScoreError(f"bad value for {head!r}: {value!r}", lineno, vcol) from None
            continue
        if head == "sound":
            drafts.append(_SoundDraft(lineno, _Attrs(_key_values(words, lineno), lineno, _SOUND_KEYS)))
            continue
        if head in ("reverb", "harmonic", "partial"):
            if not drafts:
                raise ScoreError(f"{head!r} outside of a sound", lineno, col)
            d = drafts[-1]
            tokens = _key_values(words, lineno)
            if head == "reverb":
                if d.reverb is not None:
                    raise ScoreError("sound already has a reverb", lineno, col)
                d.reverb = _parse_reverb(_Attrs(tokens, lineno, _REVERB_KEYS))
            elif head == "harmonic":
                d.harmonics.append(_Attrs(tokens, lineno, _HARMONIC_KEYS))
            else:
                d.partials.append(_Attrs(tokens, lineno, _PARTIAL_KEYS))
            continue
        raise ScoreError(f"unknown statement {head!r}", lineno, col)
    if not saw_version:
        raise ScoreError("empty score (missing 'diass-score 1' header)", 1, 1)

    rate = header.get("rate", 44100)
    nyquist = rate / 2.0
    sounds = []
    seen = {}
    for d in drafts:
        sound = _build_sound(d, nyquist)
        if sound.id in seen:
            raise ScoreError(f"duplicate sound id {sound.id} (first at line {seen[sound.id]})", d.line, d.attrs.col("id"))
        seen[sound.id] = d.line
        sounds.append(sound)
    try:
        return Score(
            sounds=tuple(sounds),
            sample_rate=rate,
            channels=header.get("channels", 2),
            calibration_db=header.get("calibration_db", 90.0),
        )
    except ValueError as exc:
        raise ScoreError(str(exc)) from None


def _parse_reverb(a: _Attrs) -> ReverbSpec:
    try:
        return ReverbSpec(
            duration=a.float("dur", required=True),
            decay_rate=a.float("decay", required=True),
            mix=a.float("mix", required=True),
            hall_size=a.float("hall", required=True),
            reflection=a.float("refl", required=True),
        )
    except ScoreError:
        raise
    except ValueError as exc:
        raise ScoreError(str(exc), a.lineno) from None


def _build_sound(d: _SoundDraft, nyquist: float) -> Sound:
    a = d.attrs
    sid = a.int("id", required=True)
    start = a.float("start", 0.0)
    dur = a.float("dur")
    partials = []
    for pa in d.partials:
        p_start = pa.float("start", start)
        p_dur = pa.float("dur", dur)
        if p_dur is None:
            raise ScoreError("partial needs 'dur' (no sound-level default)", pa.lineno)
        try:
            p = Partial(
                start=p_start,
                duration=p_dur,
                freq_env=pa.env("f", required=True),
                amp_env=pa.env("a", Envelope.const(1.0)),
                phase=pa.float("phase", 0.0),
                am=_modulator(pa, "am"),
                fm=_modulator(pa, "fm"),
                amp_transient=_transient(pa, "atr"),
                freq_transient=_transient(pa, "ftr"),
            )
        except ScoreError:
            raise
        except ValueError as exc:
            raise ScoreError(str(exc), pa.lineno) from None
        if p.max_frequency() >= nyquist:
            raise ScoreError(
                f"frequency {p.max_frequency():g} Hz exceeds Nyquist ({nyquist:g} Hz)", pa.lineno, pa.col("f"))
        if p.min_frequency() <= 0:
            raise ScoreError("instantaneous frequency can reach 0 Hz or below", pa.lineno, pa.col("f"))
        partials.append(p)
    harmonics = []
    for ha in d.harmonics:
        mx = ha.str("max", "auto")
        try:
            h = HarmonicMacro(
                fundamental=ha.float("f0", required=True),
                max_partials=None if mx == "auto" else int(mx),
                rolloff=ha.str("rolloff", "equal"),
                start=ha.float("start", start),
                duration=ha.float("dur", dur),
                amp_env=ha.env("a", Envelope.const(1.0)),
            )
        except ScoreError:
            raise
        except ValueError as exc:
            raise ScoreError(str(exc), ha.lineno) from None
        if h.fundamental >= nyquist:
            raise ScoreError(f"fundamental {h.fundamental:g} Hz exceeds Nyquist ({nyquist:g} Hz)",
                             ha.lineno, ha.col("f0"))
        if h.duration is None:
            raise ScoreError("harmonic needs 'dur' (no sound-level default)", ha.lineno)
        harmonics.append(h)
    try:
        return Sound(
            id=sid,
            partials=tuple(partials),
            loudness_env=a.env("loudness", Envelope.const(1.0)),
            pan_env=a.env("pan", Envelope.const(0.5)),
            reverb=d.reverb,
            rng_seed=a.int("seed", sid),
            harmonics=tuple(harmonics),
            start=start,
            duration=dur,
            group=a.str("group"),
        )
    except ScoreError:
        raise
    except ValueError as exc:
        raise ScoreError(str(exc), d.line) from None


def load_score(path) -> Score:
    with open(path, encoding="utf-8") as fh:
        return parse_score(fh.read())


# -- serializer --------------------------------------------------------------

def serialize_score(score: Score) -> str:
    """Canonical text form; ``parse_score(serialize_score(s)) == s``."""
    out = [HEADER, f"rate {score.sample_rate}", f"channels {score.channels}",
           f"calibration_db {score.calibration_db!r}"]
    for s in score.sounds:
        line = f"sound id={s.id} start={s.start!r}"
        if s.duration is not None:
            line += f" dur={s.duration!r}"
        line += f" loudness={format_envelope(s.loudness_env)} pan={format_envelope(s.pan_env)} seed={s.rng_seed}"
        if s.group is not None:
            line += f" group={s.group}"
        out.append(line)
        if s.reverb is not None:
            r = s.reverb
            out.append(f"  reverb dur={r.duration!r} decay={r.decay_rate!r} mix={r.mix!r} "
                       f"hall={r.hall_size!r} refl={r.reflection!r}")
        for h in s.harmonics:
            mx = "auto" if h.max_partials is None else str(h.max_partials)
            out.append(f"  harmonic f0={h.fundamental!r} max={mx} rolloff={h.rolloff} start={h.start!r} "
                       f"dur={h.duration!r} a={format_envelope(h.amp_env)}")
        for p in s.partials:
            words = [f"start={p.start!r}", f"dur={p.duration!r}", f"f={format_envelope(p.freq_env)}",
                     f"a={format_envelope(p.amp_env)}", f"phase={p.phase!r}"]
            for name, m in (("am", p.am), ("fm", p.fm)):
                if m is not None:
                    words += [f"{name}.wave={m.wave_type}", f"{name}.phase={m.phase!r}",
                              f"{name}.a={format_envelope(m.amp_env)}", f"{name}.f={format_envelope(m.freq_env)}"]
            for name, tr in (("atr", p.amp_transient), ("ftr", p.freq_transient)):
                if tr is not None:
                    words += [f"{name}.size={tr.max_size!r}", f"{name}.shape={format_envelope(tr.shape_env)}",
                              f"{name}.rate={tr.max_rate!r}", f"{name}.rate_env={format_envelope(tr.rate_env)}"]
            out.append("  partial " + " ".join(words))
    return "\n".join(out) + "\n"


def save_score(score: Score, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_score(score))


# -- macro expansion ---------------------------------------------------------

def harmonic_count(fundamental: float, sample_rate: int, max_partials: Optional[int] = None) -> int:
    """Number of harmonics k*f0 that stay at least the guard band below Nyquist."""
    n = math.floor((sample_rate / 2.0 - NYQUIST_GUARD_HZ) / fundamental)
    if max_partials is not None:
        n = min(n, max_partials)
    return max(n, 0)


def expand_macros(score: Score) -> Score:
    """Replace every harmonic macro with explicit partials.

    Macro-generated partials of one sound are normalized so that their peak
    amplitudes sum to 1 before loudness scaling.
    """
    sounds = []
    for s in score.sounds:
        if not s.harmonics:
            sounds.append(s)
            continue
        generated = []
        for h in s.harmonics:
            if h.fundamental >= score.nyquist:
                raise ScoreError(f"sound {s.id}: fundamental {h.fundamental:g} Hz exceeds Nyquist")
            n = harmonic_count(h.fundamental, score.sample_rate, h.max_partials)
            if n == 0:
                raise ScoreError(f"sound {s.id}: fundamental {h.fundamental:g} Hz leaves no room below Nyquist")
            k = np.arange(1, n + 1)
            weights = np.ones(n) if h.rolloff == "equal" else 1.0 / k
            generated += [(h, int(ki), float(w)) for ki, w in zip(k, weights)]
        total = sum(w for _, _, w in generated)
        partials = list(s.partials)
        for h, ki, w in generated:
            amp = Envelope(h.amp_env.initial, h.amp_env.segments, h.amp_env.scale * w / total)
            partials.append(Partial(start=h.start, duration=h.duration,
                                    freq_env=Envelope.const(ki * h.fundamental), amp_env=amp))
        sounds.append(replace(s, partials=tuple(partials), harmonics=()))
    return replace(score, sounds=tuple(sounds))


# -- lowering ----------------------------------------------------------------

@dataclass(frozen=True)
class ICard:
    """Everything needed to render one partial, with no lookup into its sound.

    ``loudness_scale`` holds ``(time, factor)`` points in absolute seconds;
    the factor multiplies the partial amplitude and is interpolated linearly
    between points (held constant outside them).
    """

    sound_id: int
    partial_index: int
    partial: Partial
    pan_env: Envelope
    reverb: Optional[ReverbSpec]
    rng_seed: int
    sound_start: float
    sound_end: float
    loudness_scale: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def scale_at(self, t):
        """Loudness scale factor at absolute time(s) ``t``."""
        times = [p[0] for p in self.loudness_scale]
        values = [p[1] for p in self.loudness_scale]
        return np.interp(t, times, values)


def lower_to_icards(score: Score) -> list[ICard]:
    """One ICard per partial, ordered by (sound start, sound id, partial index)."""
    cards = []
    keyed = []
    for s in score.sounds:
        if s.harmonics:
            raise ScoreError(f"sound {s.id} still has macros; call expand_macros first")
        start, end = sound_span(s)
        keyed.append((start, s.id, s, end))
    for start, _, s, end in sorted(keyed, key=lambda k: (k[0], k[1])):
        for i, p in enumerate(s.partials):
            cards.append(ICard(s.id, i, p, s.pan_env, s.reverb, s.rng_seed, start, end))
    return cards


def group_cards(cards: list[ICard]) -> dict[int, list[ICard]]:
    """Cards keyed by sound id, keeping partial order."""
    out: dict[int, list[ICard]] = {}
    for c in cards:
        out.setdefault(c.sound_id, []).append(c)
    return out


__all__ = [
    "GRAMMAR_VERSION", "ICard", "ScoreError", "EnvelopeError", "expand_macros", "format_envelope",
    "group_cards", "harmonic_count", "load_score", "lower_to_icards", "parse_envelope", "parse_score",
    "save_score", "serialize_score",
]
