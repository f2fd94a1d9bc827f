import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diass.score import parse_score, serialize_score
from diass.sonify import (DataError, GridData, MappingConfig, TrajectoryData, envelope_from_series, load_grid,
                          load_trajectories, map_plane_scan, map_traveling_window, plane_frequencies, save_grid_raw,
                          select_plane, thin_breakpoints)


def _csv_grid(path, values):
    rows = ["x,y,value"] + [f"{i},{j},{values[i, j]}" for i in range(values.shape[0]) for j in range(values.shape[1])]
    path.write_text("\n".join(rows) + "\n")


def test_load_csv_zeros(tmp_path):
    p = tmp_path / "g.csv"
    _csv_grid(p, np.zeros((4, 4)))
    g = load_grid(p)
    assert g.dims == (4, 4) and not g.values.any()


def test_load_csv_3d(tmp_path):
    p = tmp_path / "g3.csv"
    vals = np.arange(24.0).reshape(2, 3, 4)
    rows = [f"{i},{j},{k},{vals[i, j, k]}" for i in range(2) for j in range(3) for k in range(4)]
    p.write_text("\n".join(rows))
    assert np.array_equal(load_grid(p).values, vals)


def test_csv_missing_cell(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y,value\n0,0,1\n0,1,1\n1,0,1\n")
    with pytest.raises(DataError):
        load_grid(p)


def test_raw_header_count_mismatch(tmp_path):
    p = tmp_path / "bad.raw"
    p.write_bytes(b"diass-grid float32 8 8\n" + np.zeros(63, dtype="<f4").tobytes())
    with pytest.raises(DataError, match="64"):
        load_grid(p)


def test_raw_non_finite(tmp_path):
    p = tmp_path / "nan.raw"
    vals = np.zeros(4, dtype="<f4")
    vals[2] = np.nan
    p.write_bytes(b"diass-grid float32 2 2\n" + vals.tobytes())
    with pytest.raises(DataError, match="non-finite"):
        load_grid(p)


def test_raw_128_cube(tmp_path):
    p = tmp_path / "cube.raw"
    vals = np.random.default_rng(0).random((128, 128, 128)).astype("<f4")
    save_grid_raw(GridData(vals), p)
    g = load_grid(p)
    assert g.dims == (128, 128, 128)
    assert np.array_equal(g.values, vals.astype(float))


def test_plane_scan_counts_and_ladder():
    g = GridData(np.random.default_rng(1).random((64, 64)))
    cfg = MappingConfig(stride=2, freq_range=(100.0, 4000.0))
    score = map_plane_scan(g, cfg)
    assert len(score.sounds) == 32
    freqs = [s.partials[0].freq_env(0.0) for s in score.sounds]
    expect = [100.0 + j * 2 * 3900.0 / 63 for j in range(32)]
    assert freqs == pytest.approx(expect, rel=1e-12)
    assert all(s.partials[0].start == 0.0 and s.partials[0].end == 30.0 for s in score.sounds)


def test_constant_plane_warns_and_is_flat():
    with pytest.warns(UserWarning, match="degenerate"):
        score = map_plane_scan(GridData(np.full((16, 16), 3.0)), MappingConfig())
    assert all(s.loudness_env.is_const for s in score.sounds)
    assert {s.loudness_env(0.3) for s in score.sounds} == {16.5}


def test_monotone_row_gives_monotone_breakpoints():
    x = np.linspace(0, 1, 40)
    data = np.outer(x ** 2, np.ones(10)) + np.linspace(0, 0.1, 10)
    score = map_plane_scan(GridData(data), MappingConfig(stride=1))
    for s in score.sounds:
        v = s.loudness_env.values() * s.loudness_env.scale
        assert len(v) == 40 and np.all(np.diff(v) > 0)


def test_loudness_is_affine_in_data():
    data = np.outer(np.array([0.0, 0.25, 1.0]), np.ones(4))
    score = map_plane_scan(GridData(data), MappingConfig(sones_range=(2.0, 10.0), stride=1))
    v = score.sounds[0].loudness_env.values() * score.sounds[0].loudness_env.scale
    assert v == pytest.approx([2.0, 4.0, 10.0])


def test_explicit_value_range():
    data = np.outer(np.array([0.0, 0.5]), np.ones(2))
    score = map_plane_scan(GridData(data), MappingConfig(value_range=(0.0, 2.0), sones_range=(1.0, 5.0), stride=1))
    v = score.sounds[0].loudness_env.values() * score.sounds[0].loudness_env.scale
    assert v == pytest.approx([1.0, 2.0])


def test_plane_selection():
    vals = np.random.default_rng(2).random((6, 5, 4))
    assert np.array_equal(select_plane(GridData(vals), ("z", 2), "x"), vals[:, :, 2])
    assert np.array_equal(select_plane(GridData(vals), ("x", 1), "z"), vals[1].T)
    with pytest.raises(DataError):
        select_plane(GridData(vals), ("z", 9), "x")


def test_thinning_caps_segments_and_error():
    t = np.linspace(0, 1, 4000)
    v = 5 + np.sin(6 * np.pi * t) + 0.2 * np.sin(40 * np.pi * t)
    keep = thin_breakpoints(v)
    assert len(keep) - 1 <= 512 and keep[0] == 0 and keep[-1] == v.size - 1
    env = envelope_from_series(t, v)
    assert len(env.segments) <= 512
    err = np.abs(env(t) - v).max() / np.abs(v).max()
    assert err <= 1e-3 or len(env.segments) == 512


def test_thinning_keeps_short_series():
    v = np.arange(100.0)
    assert np.array_equal(thin_breakpoints(v), np.arange(100))


def test_config_validation():
    with pytest.raises(ValueError):
        MappingConfig(freq_range=(100.0, 30000.0))
    with pytest.raises(ValueError):
        MappingConfig(sones_range=(4.0, 4.0))
    with pytest.raises(ValueError):
        MappingConfig(stride=0)


def _trajectory(states, bounds=(0.0, 10.0, 0.0, 10.0)):
    return TrajectoryData(np.asarray(states, dtype=float), bounds)


def test_stationary_entity():
    st_ = np.zeros((31, 1, 3))
    st_[:, 0] = [5.0, 4.0, 1.0]
    cfg = MappingConfig(mode="traveling_window", window_width=2.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        score = map_traveling_window(_trajectory(st_), cfg)
    (s,) = score.sounds
    p = s.partials[0]
    assert p.freq_env.is_const and p.fm is None
    assert p.freq_env(0.0) == pytest.approx(100.0 + 0.4 * 3900.0)


def test_entity_exit_time():
    # the window's left edge moves 0 -> 7.5 over 30 s; an entity at x=2.5
    # is inside from the start until the edge passes it at t = 10 s
    st_ = np.zeros((31, 1, 3))
    st_[:, 0] = [2.5, 5.0, 1.0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        score = map_traveling_window(_trajectory(st_), MappingConfig(mode="traveling_window", window_width=2.5))
    (s,) = score.sounds
    assert s.partials[0].start == pytest.approx(0.0)
    assert s.partials[0].end == pytest.approx(10.0)


def test_crossing_is_interpolated_between_steps():
    st_ = np.zeros((7, 1, 3))
    st_[:, 0] = [2.5, 5.0, 1.0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        score = map_traveling_window(_trajectory(st_), MappingConfig(mode="traveling_window", window_width=2.5))
    assert score.sounds[0].partials[0].end == pytest.approx(10.0)


def test_rising_entity():
    n = 31
    st_ = np.zeros((n, 2, 3))
    st_[:, 0] = np.column_stack([np.full(n, 5.0), np.linspace(1, 9, n), np.full(n, 1.0)])
    st_[:, 1] = [9.9, 9.9, 3.0]  # a second, faster entity fixes the speed range
    score = map_traveling_window(_trajectory(st_), MappingConfig(mode="traveling_window", window_width=2.5))
    s = [s for s in score.sounds if s.start == pytest.approx(10.0)][0]
    f = s.partials[0].freq_env.values()
    assert np.all(np.diff(f) > 0)
    assert s.loudness_env.is_const and s.partials[0].fm is None


def test_horizontal_motion_gives_vibrato_and_pan():
    n = 31
    st_ = np.zeros((n, 1, 3))
    xs = np.linspace(0.5, 8.0, n)
    st_[:, 0] = np.column_stack([xs, np.full(n, 5.0), np.linspace(1, 2, n)])
    score = map_traveling_window(_trajectory(st_), MappingConfig(mode="traveling_window", window_width=2.5))
    p = score.sounds[0].partials[0]
    assert p.fm is not None and p.fm.amp_env.peak() > 0
    assert not score.sounds[0].loudness_env.is_const


def test_empty_window_warns():
    st_ = np.full((5, 1, 3), np.nan)
    st_[0, 0] = [9.9, 1.0, 1.0]
    with pytest.warns(UserWarning, match="empty"):
        score = map_traveling_window(_trajectory(st_), MappingConfig(mode="traveling_window", window_width=1.0))
    assert score.sounds == ()


def test_trajectory_bounds_enforced():
    with pytest.raises(DataError):
        _trajectory([[[11.0, 1.0, 1.0]]])


def test_load_trajectories(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# domain 0 10 0 5\nstep,entity,x,y,speed\n0,a,1,1,0.5\n0,b,2,2,1\n1,a,1.5,1,0.5\n")
    tr = load_trajectories(p)
    assert tr.states.shape == (2, 2, 3) and tr.bounds == (0.0, 10.0, 0.0, 5.0)
    assert np.isnan(tr.states[1, 1, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 40), st.integers(4, 40), st.integers(1, 4), st.integers(0, 2**31), st.floats(0.1, 100.0))
def test_emitted_scores_reparse_and_ladder_is_data_independent(nx, ny, stride, seed, factor):
    data = np.random.default_rng(seed).random((nx, ny))
    cfg = MappingConfig(stride=stride, duration=5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = map_plane_scan(GridData(data), cfg)
        b = map_plane_scan(GridData(data * factor), cfg)
    assert parse_score(serialize_score(a)) == a
    fa = [s.partials[0].freq_env(0.0) for s in a.sounds]
    assert fa == [s.partials[0].freq_env(0.0) for s in b.sounds]
    assert fa == list(plane_frequencies(ny, cfg))
    assert max(fa) < a.sample_rate / 2
