"""Loudness: dB, phons, sones, critical bands, and the inverse solve that
finds the amplitude scale giving a sound a target loudness in sones.

A full-scale 1 kHz sine is taken to play at ``calibration_db`` dB SPL, so a
digital amplitude ``a`` has intensity ``calibration_db + 20*log10(a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import Envelope, Score, Sound, sound_span
from .score import ICard

CONTOUR_TABLE_VERSION = 1
REFERENCE_PRESSURE = 2e-5  # newton/m^2, 1 kHz threshold of hearing
ROSSING_WEIGHT = 0.3


class LoudnessError(ValueError):
    """Target loudness cannot be reached within the amplitude limits."""

    def __init__(self, message: str, attainable: Optional[float] = None):
        super().__init__(message)
        self.attainable = attainable


# -- units -------------------------------------------------------------------

def pressure_to_db(delta_p: float, ref: float = REFERENCE_PRESSURE) -> float:
    if delta_p <= 0 or ref <= 0:
        raise ValueError("pressures must be positive")
    return 20.0 * math.log10(delta_p / ref)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def phon_to_sone(lp):
    return _scalar_or_array(2.0 ** ((np.asarray(lp, dtype=float) - 40.0) / 10.0))


def sone_to_phon(ls):
    ls = np.asarray(ls, dtype=float)
    if np.any(ls <= 0):
        raise ValueError("loudness in sones must be positive")
    return _scalar_or_array(40.0 + 10.0 * np.log2(ls))


def critical_bandwidth(f):
    """Approximate critical bandwidth in Hz around frequency ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    return _scalar_or_array(25.0 + 75.0 * (1.0 + 1.4 * (f / 1000.0) ** 2) ** 0.69)


# -- equal-loudness table ----------------------------------------------------

@dataclass(frozen=True)
class LoudnessTable:
    """``intensity_db[p, j]`` is the dB SPL reaching ``phon_levels[p]`` at
    ``frequencies[j]``."""

    frequencies: np.ndarray
    phon_levels: np.ndarray
    intensity_db: np.ndarray
    version: int = CONTOUR_TABLE_VERSION

    def __post_init__(self):
        f, p, db = self.frequencies, self.phon_levels, self.intensity_db
        if db.shape != (p.size, f.size):
            raise ValueError("intensity table shape does not match its axes")
        if np.any(np.diff(f) <= 0) or np.any(np.diff(p) <= 0):
            raise ValueError("table axes must be strictly increasing")
        if np.any(np.diff(db, axis=0) <= 0):
            raise ValueError("contours must increase with phon level at every frequency")

    @classmethod
    def from_csv(cls, path_or_text: str, is_text: bool = False) -> "LoudnessTable":
        if is_text:
            lines = path_or_text.splitlines()
        else:
            with open(path_or_text, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        rows = [ln.split(",") for ln in lines if ln.strip() and not ln.startswith("#")]
        if rows[0][0] != "phon_level":
            raise ValueError("contour CSV must have a phon_level,frequency_hz,intensity_db header")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        phons = np.unique(data[:, 0])
        freqs = np.unique(data[:, 1])
        db = np.full((phons.size, freqs.size), np.nan)
        pi = np.searchsorted(phons, data[:, 0])
        fi = np.searchsorted(freqs, data[:, 1])
        db[pi, fi] = data[:, 2]
        if np.isnan(db).any():
            raise ValueError("contour CSV is not a full phon x frequency grid")
        return cls(freqs, phons, db)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.frequencies[0]), float(self.frequencies[-1])

    def column(self, f: float) -> np.ndarray:
        """dB SPL of every contour at frequency ``f`` (linear in log f)."""
        lo, hi = self.span
        if not lo <= f <= hi:
            raise ValueError(f"frequency {f} Hz outside contour table span [{lo}, {hi}]")
        logf = np.log(self.frequencies)
        j = int(np.clip(np.searchsorted(logf, math.log(f), side="right") - 1, 0, logf.size - 2))
        w = (math.log(f) - logf[j]) / (logf[j + 1] - logf[j])
        return self.intensity_db[:, j] * (1.0 - w) + self.intensity_db[:, j + 1] * w

    def phon_from_column(self, col: np.ndarray, i):
        """Loudness level for intensity(ies) ``i`` given a contour column.

        Below the lowest contour the level clamps to that contour's phon
        value; above the highest it extrapolates from the top two.
        """
        p = self.phon_levels
        i = np.asarray(i, dtype=float)
        out = np.interp(i, col, p)
        slope = (p[-1] - p[-2]) / (col[-1] - col[-2])
        out = np.where(i > col[-1], p[-1] + (i - col[-1]) * slope, out)
        return out


@lru_cache(maxsize=1)
def default_table() -> LoudnessTable:
    text = resources.files("diass").joinpath("data/equal_loudness_v1.csv").read_text(encoding="utf-8")
    return LoudnessTable.from_csv(text, is_text=True)


def db_to_phon(f: float, i, table: Optional[LoudnessTable] = None):
    table = table or default_table()
    out = table.phon_from_column(table.column(f), i)
    return float(out) if np.ndim(out) == 0 else out


def _clamp_freq(f: float, table: LoudnessTable) -> float:
    lo, hi = table.span
    return min(max(f, lo), hi)


# -- critical bands ----------------------------------------------------------

@dataclass(frozen=True)
class CriticalBand:
    center: float
    members: tuple[tuple[int, float], ...]  # (partial index, intensity dB)
    band_db: float
    band_sones: float


def _power_sum_db(levels: Iterable[float]) -> float:
    levels = np.asarray(list(levels), dtype=float)
    top = levels.max()
    return float(top + 10.0 * np.log10(np.sum(10.0 ** ((levels - top) / 10.0))))


def _band_partition(freqs: np.ndarray) -> list[list[int]]:
    """Greedy left-to-right grouping; returns index lists into ``freqs``."""
    order = np.argsort(freqs, kind="stable")
    bands: list[list[int]] = []
    center = None
    for k in order:
        f = freqs[k]
        if center is None or abs(f - center) > critical_bandwidth(center) / 2.0:
            bands.append([int(k)])
            center = f
        else:
            bands[-1].append(int(k))
    return bands


def group_bands(partials: Sequence[tuple[float, float]], calibration_db: float = 90.0,
                table: Optional[LoudnessTable] = None) -> list[CriticalBand]:
    """Group (frequency, amplitude) pairs into critical bands.

    A partial joins the current band while it lies within half a critical
    bandwidth of the band's first (lowest) frequency; intensities inside a
    band add as powers.
    """
    if len(partials) == 0:
        raise ValueError("no partials to group")
    table = table or default_table()
    freqs = np.array([p[0] for p in partials], dtype=float)
    amps = np.array([p[1] for p in partials], dtype=float)
    if np.any(amps <= 0) or np.any(amps > 1.0 + 1e-12):
        raise ValueError("amplitudes must lie in (0, 1]")
    if np.any(freqs <= 0):
        raise ValueError("frequencies must be positive")
    levels = calibration_db + 20.0 * np.log10(amps)
    out = []
    for idx in _band_partition(freqs):
        center = float(freqs[idx[0]])
        band_db = _power_sum_db(levels[idx])
        phon = db_to_phon(_clamp_freq(center, table), band_db, table)
        out.append(CriticalBand(center, tuple((i, float(levels[i])) for i in idx), band_db,
                                float(phon_to_sone(phon))))
    return out


def combine_band_sones(band_sones: Sequence[float]) -> float:
    """Loudest band plus a 0.3 weight on the sum of all the others."""
    s = np.asarray(band_sones, dtype=float)
    if s.size == 0:
        return 0.0
    top = s.max()
    return float(top + ROSSING_WEIGHT * (s.sum() - top))


def sound_loudness(partials: Sequence[tuple[float, float]], calibration_db: float = 90.0,
                   table: Optional[LoudnessTable] = None) -> float:
    """Loudness in sones of a set of (frequency, amplitude) partials."""
    audible = [p for p in partials if p[1] > 0]
    if not audible:
        return 0.0
    return combine_band_sones([b.band_sones for b in group_bands(audible, calibration_db, table)])


# -- inverse solve -----------------------------------------------------------

class _ScaledLoudness:
    """Loudness as a function of a uniform amplitude scale, bands fixed."""

    def __init__(self, partials, calibration_db, table):
        self.table = table
        bands = group_bands(partials, calibration_db, table)
        self.band_db = np.array([b.band_db for b in bands])
        self.columns = [table.column(_clamp_freq(b.center, table)) for b in bands]

    def __call__(self, scale: float) -> float:
        shift = 20.0 * math.log10(scale)
        sones = [2.0 ** ((float(self.table.phon_from_column(col, db + shift)) - 40.0) / 10.0)
                 for col, db in zip(self.columns, self.band_db)]
        return combine_band_sones(sones)


def solve_spectrum_scale(partials: Sequence[tuple[float, float]], target: float, calibration_db: float = 90.0,
                         table: Optional[LoudnessTable] = None, rtol: float = 1e-4,
                         max_iter: int = 80) -> float:
    """Uniform amplitude scale bringing ``partials`` to ``target`` sones.

    Bisection on log(scale); the scale is capped so no partial exceeds full
    scale, and a LoudnessError reports the attainable range otherwise.
    """
    if target <= 0:
        raise ValueError("target loudness must be positive")
    table = table or default_table()
    audible = [p for p in partials if p[1] > 0]
    if not audible:
        raise LoudnessError("sound is silent at the solve time; no scale reaches the target", 0.0)
    loud = _ScaledLoudness(audible, calibration_db, table)
    hi = 1.0 / max(p[1] for p in audible)
    top = loud(hi)
    if top < target * (1 - rtol):
        raise LoudnessError(f"target {target:g} sones unreachable: at most {top:.4g} sones with amplitudes <= 1",
                            top)
    lo = hi * 1e-12
    bottom = loud(lo)
    if bottom > target * (1 + rtol):
        raise LoudnessError(f"target {target:g} sones is below the audibility floor of {bottom:.4g} sones",
                            bottom)
    if abs(top - target) <= rtol * target:
        return hi
    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(max_iter):
        mid = 0.5 * (log_lo + log_hi)
        val = loud(math.exp(mid))
        if abs(val - target) <= rtol * target:
            return math.exp(mid)
        if val < target:
            log_lo = mid
        else:
            log_hi = mid
    return math.exp(0.5 * (log_lo + log_hi))


def spectrum_at(partials, t: float) -> list[tuple[float, float]]:
    """(frequency, carrier amplitude) of partials sounding at time ``t``.

    Partials are taken as active on the closed interval [start, end] so a
    breakpoint at the very end of a sound still sees its spectrum.
    """
    out = []
    for p in partials:
        if p.start <= t <= p.end:
            u = min(max((t - p.start) / p.duration, 0.0), 1.0)
            out.append((float(p.freq_env(u)), float(p.amp_env(u))))
    return out


def solve_amplitude_scale(sound: Sound, t: float, target: float, calibration_db: float = 90.0,
                          table: Optional[LoudnessTable] = None) -> float:
    """Scale for ``sound``'s carrier amplitudes at time ``t`` reaching ``target`` sones."""
    start, end = sound_span(sound)
    if not start <= t <= end:
        raise ValueError(f"sound {sound.id} is not active at t={t}")
    return solve_spectrum_scale(spectrum_at(sound.partials, t), target, calibration_db, table)


def _peak_spectrum(partials) -> list[tuple[float, float]]:
    times = sorted({p.start + u * p.duration for p in partials for u in p.amp_env.breakpoints()}
                   | {p.start + 0.5 * p.duration for p in partials})
    best, best_sum = [], -1.0
    for t in times:
        spec = spectrum_at(partials, t)
        total = sum(a for _, a in spec)
        if total > best_sum:
            best, best_sum = spec, total
    return best


#: spectra weaker than this fraction of the peak spectrum are not solved on
WEAK_SPECTRUM = 0.01


def _solve_unit(partials, loudness_env: Envelope, start: float, end: float, calibration_db, table):
    """(time, scale) points for one loudness unit (a sound or a group)."""
    points = []
    fallback = None
    cache = {}
    for u in loudness_env.breakpoints():
        t = start + u * (end - start)
        target = float(loudness_env(u))
        if target <= 0:
            points.append((t, 0.0))
            continue
        spec = spectrum_at(partials, t)
        if fallback is None:
            fallback = _peak_spectrum(partials)
        # attack/release end points carry (almost) no energy; solving there
        # would blow the scale up, so the peak spectrum stands in
        if sum(a for _, a in spec) <= WEAK_SPECTRUM * sum(a for _, a in fallback):
            spec = fallback
        key = (tuple(spec), target)
        if key not in cache:
            cache[key] = solve_spectrum_scale(spec, target, calibration_db, table)
        points.append((t, cache[key]))
    if len({s for _, s in points}) == 1:
        return ((start, points[0][1]),)
    return tuple(points)


def loudness_units(score: Score) -> list[tuple[list[Sound], Envelope]]:
    """Sounds solved together: each ungrouped sound alone, each named group jointly."""
    units: dict = {}
    for s in score.sounds:
        key = ("group", s.group) if s.group is not None else ("sound", s.id)
        units.setdefault(key, []).append(s)
    out = []
    for key, members in units.items():
        env = members[0].loudness_env
        if any(m.loudness_env != env for m in members):
            raise ValueError(f"sounds in group {key[1]!r} must share one loudness envelope")
        out.append((members, env))
    return out


def apply_loudness(cards: list[ICard], score: Score, table: Optional[LoudnessTable] = None) -> list[ICard]:
    """Fill every card's ``loudness_scale`` so its sound meets its sone targets.

    Scales are solved at the loudness-envelope breakpoints and interpolated
    linearly in between. Grouped sounds share one scale solved over the
    union of their partials.
    """
    table = table or default_table()
    scales: dict[int, tuple] = {}
    for members, env in loudness_units(score):
        partials = [p for m in members for p in m.partials]
        spans = [sound_span(m) for m in members]
        start, end = min(s for s, _ in spans), max(e for _, e in spans)
        try:
            pts = _solve_unit(partials, env, start, end, score.calibration_db, table)
        except LoudnessError as exc:
            ids = ",".join(str(m.id) for m in members)
            raise LoudnessError(f"sound {ids}: {exc}", exc.attainable) from None
        for m in members:
            scales[m.id] = pts
    return [replace(c, loudness_scale=scales[c.sound_id]) for c in cards]


def measured_loudness(sounds: Sequence[Sound], cards: Sequence[ICard], t: float, calibration_db: float = 90.0,
                      table: Optional[LoudnessTable] = None) -> float:
    """Analyzer loudness at ``t`` of the given sounds after loudness scaling."""
    ids = {s.id for s in sounds}
    spec = []
    for c in cards:
        if c.sound_id not in ids:
            continue
        p = c.partial
        if p.start <= t <= p.end:
            u = min(max((t - p.start) / p.duration, 0.0), 1.0)
            spec.append((float(p.freq_env(u)), float(p.amp_env(u) * c.scale_at(t))))
    return sound_loudness(spec, calibration_db, table)
