"""Map scientific data onto scores.

Two mappings are provided:

* plane scan: a 2-D slice of a grid is swept along one axis over a fixed
  duration; every ``stride``-th point along the other axis becomes a sound
  on a regular frequency ladder whose loudness follows the data.
* traveling window: a window of constant width slides left to right over a
  set of moving entities; each entity inside the window sounds, with its
  height mapped to frequency, horizontal velocity to vibrato depth,
  horizontal position within the window to pan and speed to loudness.
"""
from __future__ import annotations

import csv
import heapq
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import Envelope, ModulatorSpec, Partial, Score, Segment, Sound

AXES = ("x", "y", "z")
MAX_SEGMENTS = 512
THIN_RTOL = 1e-3
RAW_MAGIC = "diass-grid"


class DataError(ValueError):
    pass


@dataclass
class GridData:
    values: np.ndarray  # indexed [x, y] or [x, y, z]
    labels: tuple[str, ...] = ("x", "y", "z")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (2, 3):
            raise DataError("grid must be 2-D or 3-D")
        if not np.all(np.isfinite(self.values)):
            raise DataError("grid contains non-finite values")
        self.labels = tuple(self.labels[: self.values.ndim])

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass
class TrajectoryData:
    """Entity states per time step; ``states[step, entity] = (x, y, speed)``,
    NaN where an entity is absent."""

    states: np.ndarray
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    entity_ids: tuple = ()

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3 or self.states.shape[2] != 3:
            raise DataError("trajectory states must have shape (steps, entities, 3)")
        xmin, xmax, ymin, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise DataError("degenerate domain bounds")
        x, y = self.states[..., 0], self.states[..., 1]
        present = ~np.isnan(x)
        if np.any((x[present] < xmin) | (x[present] > xmax) | (y[present] < ymin) | (y[present] > ymax)):
            raise DataError("entity position outside the domain bounds")
        if not self.entity_ids:
            self.entity_ids = tuple(range(self.states.shape[1]))

    @property
    def timesteps(self) -> int:
        return self.states.shape[0]


@dataclass
class MappingConfig:
    mode: str = "plane_scan"
    duration: float = 30.0
    stride: int = 2
    freq_range: tuple[float, float] = (100.0, 4000.0)
    sones_range: tuple[float, float] = (1.0, 32.0)
    value_range: Optional[tuple[float, float]] = None
    plane: tuple[str, int] = ("z", 0)
    time_axis: str = "x"
    window_width: Optional[float] = None
    vibrato_depth: float = 8.0  # Hz at the fastest horizontal motion
    vibrato_rate: float = 5.0
    sample_rate: int = 44100
    calibration_db: float = 100.0

    def __post_init__(self):
        if self.mode not in ("plane_scan", "traveling_window"):
            raise ValueError(f"unknown mapping mode {self.mode!r}")
        fmin, fmax = self.freq_range
        if not 0 < fmin < fmax:
            raise ValueError("frequency range must satisfy 0 < fmin < fmax")
        headroom = self.vibrato_depth if self.mode == "traveling_window" else 0.0
        if fmax + headroom >= self.sample_rate / 2:
            raise ValueError(f"fmax {fmax} Hz (+ vibrato) reaches Nyquist for rate {self.sample_rate}")
        if self.mode == "traveling_window" and fmin - self.vibrato_depth <= 0:
            raise ValueError("vibrato depth would push frequencies to 0 Hz")
        lo, hi = self.sones_range
        if not 0 < lo < hi:
            raise ValueError("loudness range must satisfy 0 < lo < hi")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.value_range is not None and not self.value_range[0] < self.value_range[1]:
            raise ValueError("value range must be increasing")
        if self.time_axis not in AXES:
            raise ValueError(f"unknown time axis {self.time_axis!r}")


# -- loading -----------------------------------------------------------------

def load_grid(path, format: Optional[str] = None) -> GridData:
    """Read a grid from CSV (``x,y[,z],value`` index rows) or raw float32.

    The raw format is one ASCII header line ``diass-grid float32 NX NY [NZ]``
    followed by little-endian float32 values in C order (x slowest).
    """
    path = Path(path)
    format = format or ("csv" if path.suffix.lower() == ".csv" else "raw")
    if format == "csv":
        return _load_grid_csv(path)
    if format != "raw":
        raise DataError(f"unknown grid format {format!r}")
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        payload = fh.read()
    if len(header) not in (4, 5) or header[0] != RAW_MAGIC or header[1] != "float32":
        raise DataError(f"bad raw grid header {' '.join(header)!r}")
    dims = tuple(int(d) for d in header[2:])
    values = np.frombuffer(payload, dtype="<f4")
    if values.size != math.prod(dims):
        raise DataError(f"header declares {'x'.join(map(str, dims))} = {math.prod(dims)} values, "
                        f"file holds {values.size}")
    return GridData(values.astype(float).reshape(dims))


def _load_grid_csv(path: Path) -> GridData:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows:
        raise DataError("empty grid file")
    width = len(rows[0])
    if width not in (3, 4) or any(len(r) != width for r in rows):
        raise DataError("grid CSV rows must all be x,y,value or x,y,z,value")
    data = np.array(rows, dtype=float)
    idx = data[:, :-1].astype(int)
    if np.any(idx < 0) or np.any(idx != data[:, :-1]):
        raise DataError("grid indices must be non-negative integers")
    dims = tuple(int(d) for d in idx.max(axis=0) + 1)
    if len(rows) != math.prod(dims):
        raise DataError(f"grid of dims {dims} needs {math.prod(dims)} values, got {len(rows)}")
    values = np.full(dims, np.nan)
    values[tuple(idx.T)] = data[:, -1]
    if np.isnan(values).any():
        raise DataError("grid CSV has duplicate or missing cells")
    return GridData(values)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_grid_raw(grid: GridData, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{RAW_MAGIC} float32 {' '.join(map(str, grid.dims))}\n".encode("ascii"))
        fh.write(grid.values.astype("<f4").tobytes())


def load_trajectories(path) -> TrajectoryData:
    """CSV with ``step,entity,x,y,speed`` rows; an optional
    ``# domain xmin xmax ymin ymax`` comment fixes the bounds."""
    bounds = None
    rows = []
    with open(path, newline="") as fh:
        for r in csv.reader(fh):
            if not r:
                continue
            if r[0].startswith("#"):
                words = ",".join(r).lstrip("#").replace(",", " ").split()
                if words and words[0] == "domain":
                    bounds = tuple(float(w) for w in words[1:5])
                continue
            if not _is_number(r[0]):
                continue
            rows.append(r)
    if not rows:
        raise DataError("no trajectory rows")
    steps = sorted({int(r[0]) for r in rows})
    entities = sorted({r[1] for r in rows}, key=lambda e: (not _is_number(e), float(e) if _is_number(e) else 0, e))
    si = {s: i for i, s in enumerate(range(steps[0], steps[-1] + 1))}
    ei = {e: i for i, e in enumerate(entities)}
    states = np.full((len(si), len(ei), 3), np.nan)
    for r in rows:
        states[si[int(r[0])], ei[r[1]]] = [float(r[2]), float(r[3]), float(r[4])]
    if bounds is None:
        x, y = states[..., 0], states[..., 1]
        bounds = (np.nanmin(x), np.nanmax(x), np.nanmin(y), np.nanmax(y))
    return TrajectoryData(states, tuple(float(b) for b in bounds), tuple(entities))


# -- envelopes from data -------------------------------------------------------

def thin_breakpoints(values: np.ndarray, max_segments: int = MAX_SEGMENTS, rtol: float = THIN_RTOL,
                     positions: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices of breakpoints kept by recursive max-error subdivision.

    Starts from the two end points and repeatedly splits the segment whose
    linear interpolation misses a sample by the most, until every sample is
    within ``rtol * max|values|`` or ``max_segments`` is reached.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    x = np.linspace(0.0, 1.0, n) if positions is None else np.asarray(positions, dtype=float)
    if n - 1 <= max_segments:
        return np.arange(n)
    tol = rtol * max(np.abs(values).max(), 1e-300)

    def worst(a, b):
        if b - a < 2:
            return 0.0, a
        xs = x[a + 1:b]
        line = values[a] + (values[b] - values[a]) * (xs - x[a]) / (x[b] - x[a])
        err = np.abs(values[a + 1:b] - line)
        k = int(np.argmax(err))
        return float(err[k]), a + 1 + k

    kept = {0, n - 1}
    e, k = worst(0, n - 1)
    heap = [(-e, 0, n - 1, k)]
    while heap and len(kept) - 1 < max_segments:
        neg, a, b, k = heapq.heappop(heap)
        if -neg <= tol:
            break
        kept.add(k)
        for lo, hi in ((a, k), (k, b)):
            e, kk = worst(lo, hi)
            if e > 0:
                heapq.heappush(heap, (-e, lo, hi, kk))
    return np.array(sorted(kept))


def envelope_from_series(times: Sequence[float], values: Sequence[float], scale: Optional[float] = None,
                         max_segments: int = MAX_SEGMENTS) -> Envelope:
    """Linear envelope through (time, value) samples over their own span."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if scale is None:
        scale = float(np.abs(values).max())
    if values.size < 2 or scale == 0:
        return Envelope.const(float(values[0]) if values.size else 0.0)
    if np.all(values == values[0]):
        return Envelope.const(float(values[0]))
    u = (times - times[0]) / (times[-1] - times[0])
    keep = thin_breakpoints(values, max_segments, positions=u)
    u, norm = u[keep], np.clip(values[keep] / scale, 0.0, 1.0)
    fracs = np.diff(u)
    segs = [Segment(float(f), float(v)) for f, v in zip(fracs, norm[1:]) if f > 0]
    total = sum(s.fraction for s in segs)
    segs[-1] = Segment(segs[-1].fraction + (1.0 - total), segs[-1].target)
    return Envelope(float(norm[0]), tuple(segs), float(scale))


def _normalize(data: np.ndarray, value_range: Optional[tuple[float, float]]) -> Optional[np.ndarray]:
    lo, hi = value_range if value_range is not None else (float(data.min()), float(data.max()))
    if hi <= lo:
        return None
    return np.clip((data - lo) / (hi - lo), 0.0, 1.0)


# -- plane scan ----------------------------------------------------------------

def select_plane(grid: GridData, plane: tuple[str, int] = ("z", 0), time_axis: str = "x") -> np.ndarray:
    """2-D array indexed [time sample, vertical point]."""
    values, labels = grid.values, list(grid.labels)
    if values.ndim == 3:
        axis, index = plane
        if axis not in labels:
            raise DataError(f"unknown plane axis {axis!r}")
        ax = labels.index(axis)
        if not 0 <= index < values.shape[ax]:
            raise DataError(f"plane index {index} outside 0..{values.shape[ax] - 1}")
        values = np.take(values, index, axis=ax)
        labels.pop(ax)
    if time_axis not in labels:
        raise DataError(f"time axis {time_axis!r} is not in the plane {labels}")
    return values if labels.index(time_axis) == 0 else values.T


def plane_frequencies(ny: int, cfg: MappingConfig) -> np.ndarray:
    """The frequency ladder: one rung per ``stride``-th vertical point."""
    fmin, fmax = cfg.freq_range
    j = np.arange(ny // cfg.stride)
    step = (fmax - fmin) / (ny - 1) if ny > 1 else 0.0
    return fmin + j * cfg.stride * step


def map_plane_scan(grid: GridData, cfg: Optional[MappingConfig] = None) -> Score:
    """Sweep a grid plane in time; rows become a frequency ladder of sounds."""
    cfg = cfg or MappingConfig()
    data = select_plane(grid, cfg.plane, cfg.time_axis)
    nx, ny = data.shape
    lo, hi = cfg.sones_range
    norm = _normalize(data, cfg.value_range)
    if norm is None:
        warnings.warn("degenerate plane (all values equal); using midpoint loudness", stacklevel=2)
        norm = np.full(data.shape, 0.5)
    freqs = plane_frequencies(ny, cfg)
    times = np.linspace(0.0, cfg.duration, nx) if nx > 1 else np.array([0.0, cfg.duration])
    sounds = []
    for j, f in enumerate(freqs):
        sones = lo + norm[:, j * cfg.stride] * (hi - lo)
        if sones.size == 1:
            sones = np.repeat(sones, 2)
        loud = envelope_from_series(times, sones, scale=hi)
        partial = Partial(0.0, cfg.duration, Envelope.const(float(f)), Envelope.const(1.0))
        sounds.append(Sound(id=j + 1, partials=(partial,), loudness_env=loud, rng_seed=j + 1,
                            start=0.0, duration=cfg.duration))
    return Score(tuple(sounds), sample_rate=cfg.sample_rate, channels=2, calibration_db=cfg.calibration_db)


# -- traveling window ----------------------------------------------------------

def _crossing(t0, t1, g0, g1):
    """Time where a linearly varying gap g crosses zero between t0 and t1."""
    if g0 == g1:
        return t1
    return t0 + (t1 - t0) * g0 / (g0 - g1)


def map_traveling_window(traj: TrajectoryData, cfg: Optional[MappingConfig] = None) -> Score:
    """One sound per continuous stay of an entity inside the moving window."""
    cfg = cfg or MappingConfig(mode="traveling_window")
    xmin, xmax, ymin, ymax = traj.bounds
    width = cfg.window_width if cfg.window_width is not None else (xmax - xmin) / 4
    if not 0 < width <= xmax - xmin:
        raise ValueError("window width must lie in (0, domain width]")
    steps = traj.timesteps
    times = np.linspace(0.0, cfg.duration, steps) if steps > 1 else np.zeros(1)
    left = xmin + (xmax - xmin - width) * times / cfg.duration
    x, y, speed = traj.states[..., 0], traj.states[..., 1], traj.states[..., 2]

    vx = np.full_like(x, np.nan)
    if steps > 1:
        vx = np.gradient(x, times, axis=0)
        vx[np.isnan(vx)] = 0.0
    vmax = np.nanmax(np.abs(vx)) if np.isfinite(vx).any() else 0.0
    s_lo, s_hi = (np.nanmin(speed), np.nanmax(speed)) if np.isfinite(speed).any() else (0.0, 0.0)
    lo, hi = cfg.sones_range
    fmin, fmax = cfg.freq_range

    def loudness(sp):
        if s_hi <= s_lo:
            return np.full_like(sp, 0.5 * (lo + hi))
        return lo + (sp - s_lo) / (s_hi - s_lo) * (hi - lo)

    inside = (~np.isnan(x)) & (x >= left[:, None]) & (x <= left[:, None] + width)
    runs = []
    for e in range(x.shape[1]):
        s = 0
        while s < steps:
            if not inside[s, e]:
                s += 1
                continue
            a = s
            while s + 1 < steps and inside[s + 1, e]:
                s += 1
            runs.append((e, a, s))
            s += 1

    events = []
    for e, a, b in runs:
        idx = list(range(a, b + 1))
        t_pts = [times[i] for i in idx]
        cols = [[x[i, e], y[i, e], speed[i, e], vx[i, e]] for i in idx]
        for nb, at_start in ((a - 1, True), (b + 1, False)):
            if 0 <= nb < steps and not np.isnan(x[nb, e]):
                i = a if at_start else b
                gap_i = min(x[i, e] - left[i], left[i] + width - x[i, e])
                gap_n = min(x[nb, e] - left[nb], left[nb] + width - x[nb, e])
                tc = _crossing(times[i], times[nb], gap_i, gap_n)
                w = (tc - times[i]) / (times[nb] - times[i])
                state = [(1 - w) * x[i, e] + w * x[nb, e], (1 - w) * y[i, e] + w * y[nb, e],
                         (1 - w) * speed[i, e] + w * speed[nb, e], (1 - w) * vx[i, e] + w * vx[nb, e]]
                if at_start and tc < t_pts[0]:
                    t_pts.insert(0, tc)
                    cols.insert(0, state)
                elif not at_start and tc > t_pts[-1]:
                    t_pts.append(tc)
                    cols.append(state)
        if t_pts[-1] - t_pts[0] <= 0:
            continue
        events.append((t_pts[0], e, np.array(t_pts), np.array(cols)))

    if not events:
        warnings.warn("no entity ever enters the window; emitting an empty score", stacklevel=2)
        return Score((), sample_rate=cfg.sample_rate, channels=2, calibration_db=cfg.calibration_db)

    if s_hi <= s_lo:
        warnings.warn("entity speed is constant; using midpoint loudness", stacklevel=2)
    events.sort(key=lambda ev: (ev[0], ev[1]))
    sounds = []
    for sid, (start, e, tp, cols) in enumerate(events, start=1):
        px, py, sp, vel = cols.T
        lft = xmin + (xmax - xmin - width) * tp / cfg.duration
        freq = fmin + (py - ymin) / (ymax - ymin) * (fmax - fmin)
        depth = cfg.vibrato_depth * np.abs(vel) / vmax if vmax > 0 else np.zeros_like(vel)
        pan = np.clip((px - lft) / width, 0.0, 1.0)
        dur = float(tp[-1] - tp[0])
        fm = None
        if np.any(depth > 0):
            fm = ModulatorSpec("sine", envelope_from_series(tp, depth), Envelope.const(cfg.vibrato_rate))
        partial = Partial(float(start), dur, envelope_from_series(tp, freq), Envelope.const(1.0), fm=fm)
        sounds.append(Sound(id=sid, partials=(partial,), loudness_env=envelope_from_series(tp, loudness(sp)),
                            pan_env=envelope_from_series(tp, pan, scale=1.0), rng_seed=sid,
                            start=float(start), duration=dur))
    return Score(tuple(sounds), sample_rate=cfg.sample_rate, channels=2, calibration_db=cfg.calibration_db)
