"""
From data to sound and pictures
===============================

Turns a simulated field and a handful of moving particles into scores, then
renders one of them and draws both SVG animation frames and a piano-roll
overview. Everything lands in ``demos/out``.
"""
import pathlib

import numpy as np

from diass.render import RenderConfig, render_to_wav
from diass.score import save_score
from diass.sonify import (GridData, MappingConfig, TrajectoryData, load_grid, map_plane_scan,
                          map_traveling_window, save_grid_raw)
from diass.viz import FrameSpec, emit_frames, emit_overview

OUT = pathlib.Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

# a warm blob drifting upward through a 3-D box; x is time, y is pitch
nx, ny, nz = 96, 48, 4
x, y, z = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny), np.linspace(0, 1, nz), indexing="ij")
field = np.exp(-((y - 0.2 - 0.6 * x) ** 2) / 0.01 - (z - 0.3) ** 2)
save_grid_raw(GridData(field), OUT / "blob.raw")
grid = load_grid(OUT / "blob.raw")
print("grid dims", grid.dims)

cfg = MappingConfig(duration=8.0, stride=4, freq_range=(150.0, 3000.0), sones_range=(0.5, 16.0),
                    sample_rate=22050, calibration_db=96.0)
plane = map_plane_scan(grid, cfg)
save_score(plane, OUT / "blob.score")
print(f"plane scan: {len(plane.sounds)} sounds over {plane.duration():.1f} s")
stats = render_to_wav(plane, OUT / "blob.wav", RenderConfig()).stats
print(f"blob.wav peak {stats['peak']:.3f}, anticlip rounds {stats['anticlip_rounds']}")

# particles crossing a window that sweeps left to right
rng = np.random.default_rng(3)
steps, n = 200, 6
start = rng.uniform([0.0, 0.1], [0.3, 0.9], size=(n, 2))
vel = rng.uniform([0.002, -0.001], [0.005, 0.001], size=(n, 2))
pos = start + vel * np.arange(steps)[:, None, None]
pos = np.clip(pos, 0.0, 1.0)
speed = np.broadcast_to(np.linalg.norm(vel, axis=1), (steps, n))
traj = TrajectoryData(np.concatenate([pos, speed[..., None]], axis=2), bounds=(0.0, 1.0, 0.0, 1.0))
window = map_traveling_window(traj, MappingConfig(mode="traveling_window", duration=10.0, sample_rate=22050))
save_score(window, OUT / "particles.score")
print(f"traveling window: {len(window.sounds)} sounds")

# animation frames at 5 fps and a static overview of the plane scan
frames = emit_frames(plane, FrameSpec(fps=5, width=640, height=360), OUT / "frames")
emit_overview(plane, OUT / "blob_overview.svg")
print(f"{len(frames)} frames in {OUT / 'frames'}; overview at {OUT / 'blob_overview.svg'}")
