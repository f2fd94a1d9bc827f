import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diass.model import Envelope, ModulatorSpec, ReverbSpec, Score
from diass.score import expand_macros, load_score, lower_to_icards
from diass.viz import (FrameSpec, emit_frames, emit_overview, frame_count, layout_frame, overview_bars, pitch_of,
                       scene_to_svg)

from conftest import FIXTURES, simple_score, simple_sound, tone


def test_before_first_sound_is_grid_only():
    score = simple_score(simple_sound(1, [tone(start=1.0)]))
    scene = layout_frame(score, 0.5)
    assert scene.glyphs == () and scene.grid_lines
    assert not layout_frame(score, 0.5, FrameSpec(grid=False)).grid_lines


def test_nine_sounds_nine_stacks():
    sounds = [simple_sound(i, [tone(100.0 * i * k, dur=2.0) for k in (1, 2, 3)], pan_env=Envelope.const(i / 10))
              for i in range(1, 10)]
    scene = layout_frame(simple_score(*sounds), 1.0)
    assert scene.stacks == 9 and len(scene.glyphs) == 27
    assert len({g.x for g in scene.glyphs}) == 9


def test_octave_is_twelve_grid_units():
    scene = layout_frame(simple_score(simple_sound(1, [tone(300.0), tone(600.0)])), 0.5)
    lo, hi = sorted(scene.glyphs, key=lambda g: g.frequency)
    assert hi.pitch - lo.pitch == pytest.approx(12.0, abs=1e-12)
    assert hi.y < lo.y


def test_radius_tracks_sqrt_amplitude():
    spec = FrameSpec()
    scene = layout_frame(simple_score(simple_sound(1, [tone(300.0, amp=1.0), tone(900.0, amp=0.25)])), 0.5, spec)
    big, small = sorted(scene.glyphs, key=lambda g: -g.amplitude)
    grow = lambda g: (g.size - spec.min_radius) / (spec.max_radius - spec.min_radius)
    assert grow(big) == pytest.approx(1.0) and grow(small) == pytest.approx(0.5)


def test_pan_reverb_and_modulation_glyphs():
    fm = ModulatorSpec("sine", Envelope.const(5.0), Envelope.const(4.0))
    am = ModulatorSpec("sine", Envelope.const(0.1), Envelope.const(4.0))
    dry = simple_sound(1, [tone(300.0, fm=fm)], pan_env=Envelope.const(0.0))
    wet = simple_sound(1, [tone(300.0, am=am)], pan_env=Envelope.const(1.0), reverb=ReverbSpec(1.0, 2.0, 0.5, 20, 0.5))
    g_dry = layout_frame(simple_score(dry), 0.3).glyphs[0]
    g_wet = layout_frame(simple_score(wet), 0.3).glyphs[0]
    assert g_dry.x < g_wet.x
    assert (g_wet.hue - g_dry.hue) % 360 == pytest.approx(60.0)
    assert g_dry.rotation is not None and not g_dry.pulse
    assert g_wet.pulse and g_wet.rotation is None
    svg = scene_to_svg(layout_frame(simple_score(wet), 0.3))
    assert "stroke-dasharray" in svg


def test_planes_mode_draws_fundamentals():
    sounds = [simple_sound(i, [tone(200.0 * i * k, dur=1.0) for k in (3, 1, 2)]) for i in (1, 2)]
    scene = layout_frame(simple_score(*sounds), 0.5, FrameSpec(representation="planes"))
    assert [(g.sound_id, g.frequency) for g in scene.glyphs] == [(1, 200.0), (2, 400.0)]
    assert "<rect x=" in scene_to_svg(scene)


def test_time_out_of_range():
    score = simple_score(simple_sound(1, [tone(dur=2.0)]))
    with pytest.raises(ValueError):
        layout_frame(score, 2.5)
    with pytest.raises(ValueError):
        layout_frame(score, -0.1)
    layout_frame(score, 2.0)


@pytest.mark.parametrize("dur, fps, n", [(5.5, 10, 55), (0.0, 10, 0), (1.0, 3, 3), (0.7, 10, 7), (0.71, 10, 8)])
def test_frame_count(dur, fps, n):
    assert frame_count(dur, fps) == n


def test_emit_frames(tmp_path):
    score = simple_score(simple_sound(1, [tone(440.0, dur=5.5)]))
    paths = emit_frames(score, FrameSpec(fps=10), tmp_path / "a")
    assert len(paths) == 55 and paths[0].name == "frame_000001.svg" and paths[-1].name == "frame_000055.svg"
    index = (tmp_path / "a" / "index.csv").read_text().splitlines()
    assert index[0] == "frame,file,time_s" and index[-1] == "55,frame_000055.svg,5.400000"
    again = emit_frames(score, FrameSpec(fps=10), tmp_path / "b", workers=3)
    assert all(p.read_bytes() == q.read_bytes() for p, q in zip(paths, again))


def test_emit_frames_empty_score(tmp_path):
    assert emit_frames(Score(()), FrameSpec(), tmp_path) == []
    assert (tmp_path / "index.csv").read_text() == "frame,file,time_s\n"


def test_overview_single_partial(tmp_path):
    score = simple_score(simple_sound(1, [tone(440.0, dur=2.0)]))
    (bar,) = overview_bars(score, width=1000)
    assert (bar.x0, bar.x1) == (0.0, 1000.0)
    out = emit_overview(score, tmp_path / "o.svg")
    assert out.read_text().count('data-sound="1"') == 1


def _column_groups(bars):
    spans = sorted({(b.x0, b.x1) for b in bars})
    groups = [list(spans[0])]
    for a, b in spans[1:]:
        if a < groups[-1][1]:  # half-open spans that only touch stay separate
            groups[-1][1] = max(groups[-1][1], b)
        else:
            groups.append([a, b])
    return groups


def test_overview_box3_five_columns(tmp_path):
    score = load_score(FIXTURES / "box3.score")
    bars = overview_bars(score, width=2770)
    groups = _column_groups(bars)
    assert len(groups) == 5
    assert [g[0] for g in groups] == pytest.approx([0.0, 550.0, 1100.0, 1650.0, 2220.0])
    svg = emit_overview(score, tmp_path / "box3.svg").read_text()
    assert "fill-opacity" in svg and "mix-blend-mode" in svg


def test_overlapping_bars_are_translucent(tmp_path):
    score = simple_score(simple_sound(1, [tone(440.0, dur=2.0)]), simple_sound(2, [tone(445.0, start=0.5, dur=2.0)]))
    svg = emit_overview(score, tmp_path / "o.svg").read_text()
    opacities = [float(x.split('"')[1]) for x in svg.split("fill-opacity=")[1:]]
    assert len(opacities) == 2 and all(o < 1.0 for o in opacities)


def test_opacity_follows_mean_amplitude():
    score = simple_score(simple_sound(1, [tone(440.0, amp=1.0), tone(880.0, amp=0.2)]))
    bars = sorted(overview_bars(score), key=lambda b: b.partial_index)
    assert bars[0].opacity == pytest.approx(1.0) and bars[1].opacity == pytest.approx(0.2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["spheres", "planes"]))
def test_sphere_count_equals_active_partials(seed, rep):
    rng = np.random.default_rng(seed)
    sounds = []
    for i in range(5):
        parts = [tone(float(rng.uniform(50, 8000)), start=float(rng.uniform(0, 4)), dur=float(rng.uniform(0.1, 2)))
                 for _ in range(rng.integers(1, 5))]
        sounds.append(simple_sound(i, parts))
    score = simple_score(*sounds)
    cards = lower_to_icards(score)
    end = score.duration()
    spec = FrameSpec(representation=rep)
    for t in rng.uniform(0, end, 10):
        scene = layout_frame(score, float(t), spec, cards)
        active = [c for c in cards if c.partial.start <= t < c.partial.end]
        if rep == "spheres":
            assert len(scene.glyphs) == len(active)
            order = sorted(scene.glyphs, key=lambda g: g.frequency)
            assert all(a.y >= b.y for a, b in zip(order, order[1:]))
        else:
            assert len(scene.glyphs) == len({c.sound_id for c in active})


def test_pitch_map_strictly_monotone():
    f = np.geomspace(20, 20000, 1000)
    assert np.all(np.diff(pitch_of(f)) > 0)
