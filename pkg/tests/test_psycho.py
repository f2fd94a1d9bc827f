import csv
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diass.model import Envelope, Segment
from diass.psycho import (LoudnessError, LoudnessTable, apply_loudness, combine_band_sones, critical_bandwidth,
                          db_to_phon, default_table, group_bands, measured_loudness, phon_to_sone, pressure_to_db,
                          solve_amplitude_scale, solve_spectrum_scale, sone_to_phon, sound_loudness)
from diass.score import expand_macros, load_score, lower_to_icards

from conftest import FIXTURES, simple_score, simple_sound, tone


def _oracle_table():
    """Contour grid read straight from the shipped CSV, independent of the loader."""
    text = resources.files("diass").joinpath("data/equal_loudness_v1.csv").read_text()
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))][1:]
    grid = {}
    for p, f, i in rows:
        grid.setdefault(float(f), {})[float(p)] = float(i)
    return grid


def _oracle_db_to_phon(f, i):
    grid = _oracle_table()
    freqs = sorted(grid)
    lo = max(x for x in freqs if x <= f)
    hi = min(x for x in freqs if x >= f)
    w = 0.0 if hi == lo else (math.log(f) - math.log(lo)) / (math.log(hi) - math.log(lo))
    phons = sorted(grid[lo])
    col = [(1 - w) * grid[lo][p] + w * grid[hi][p] for p in phons]
    for k in range(len(phons) - 1):
        if col[k] <= i <= col[k + 1]:
            return phons[k] + (i - col[k]) / (col[k + 1] - col[k]) * (phons[k + 1] - phons[k])
    raise AssertionError("oracle only covers interior points")


@pytest.mark.parametrize("dp, expect", [(2e-5, 0.0), (2e-4, 20.0), (2e-2, 60.0)])
def test_pressure_to_db(dp, expect):
    assert pressure_to_db(dp, 2e-5) == pytest.approx(expect, abs=1e-12)


def test_pressure_to_db_rejects_nonpositive():
    with pytest.raises(ValueError):
        pressure_to_db(0.0, 2e-5)


def test_critical_bandwidth_direct_evaluation():
    for f in (0.0, 1000.0, 5000.0):
        direct = 25 + 75 * (1 + 1.4 * (f / 1000) ** 2) ** 0.69
        assert critical_bandwidth(f) == pytest.approx(direct, rel=1e-12)
    assert critical_bandwidth(0.0) == 100.0
    assert critical_bandwidth(1000.0) == pytest.approx(162.22, abs=5e-3)
    f = np.linspace(0, 20000, 500)
    assert np.all(np.diff(critical_bandwidth(f)) > 0)
    with pytest.raises(ValueError):
        critical_bandwidth(-1.0)


def test_sone_phon_conversions():
    assert [phon_to_sone(p) for p in (40, 50, 60, 90)] == [1.0, 2.0, 4.0, 32.0]
    assert sone_to_phon(32.0) == 90.0
    x = np.linspace(-20, 140, 321)
    assert np.max(np.abs(sone_to_phon(phon_to_sone(x)) - x)) < 1e-12
    with pytest.raises(ValueError):
        sone_to_phon(0.0)


def test_table_invariants():
    t = default_table()
    lo, hi = t.span
    assert lo <= 25 and hi >= 16000
    assert t.phon_levels[0] == 0 and t.phon_levels[-1] == 120
    assert np.all(np.diff(t.intensity_db, axis=0) > 0)
    j = int(np.flatnonzero(t.frequencies == 1000.0)[0])
    assert np.array_equal(t.intensity_db[:, j], t.phon_levels)


def test_phon_definition_at_reference():
    for i in range(0, 121, 10):
        assert db_to_phon(1000.0, float(i)) == pytest.approx(i, abs=0.1)


def test_sixty_hz_barely_audible_at_fifty_db():
    assert db_to_phon(60.0, 50.0) < 20.0


@pytest.mark.parametrize("f, i", [(4000.0, 40.0), (250.0, 55.0), (7000.0, 72.5), (31.5, 80.0)])
def test_db_to_phon_matches_bilinear_oracle(f, i):
    assert db_to_phon(f, i) == pytest.approx(_oracle_db_to_phon(f, i), abs=1e-9)


def test_db_to_phon_clamps_and_rejects():
    assert db_to_phon(1000.0, -30.0) == 0.0
    with pytest.raises(ValueError):
        db_to_phon(5.0, 60.0)
    i = np.linspace(-10, 130, 200)
    assert np.all(np.diff(db_to_phon(2000.0, i)) >= 0)


def test_table_rejects_non_monotone_contours():
    text = "phon_level,frequency_hz,intensity_db\n0,100,10\n0,1000,0\n10,100,5\n10,1000,10\n"
    with pytest.raises(ValueError):
        LoudnessTable.from_csv(text, is_text=True)


def test_group_bands_examples():
    (band,) = group_bands([(1000.0, 1.0)], 90.0)
    assert band.band_db == pytest.approx(90.0)
    (band,) = group_bands([(1000.0, 0.5), (1010.0, 0.5)], 90.0)
    single = 90.0 + 20 * math.log10(0.5)
    assert band.band_db == pytest.approx(single + 10 * math.log10(2), abs=1e-9)
    assert len(group_bands([(100.0, 1.0), (5000.0, 1.0)], 90.0)) == 2
    with pytest.raises(ValueError):
        group_bands([], 90.0)
    with pytest.raises(ValueError):
        group_bands([(1000.0, 1.5)], 90.0)


def test_rossing_summation():
    assert combine_band_sones([5.0]) == 5.0
    assert combine_band_sones([4.0, 2.0, 1.0]) == pytest.approx(4.9)
    assert combine_band_sones([1.0, 4.0, 2.0]) == pytest.approx(4.9)


def test_full_scale_reference_sine_is_32_sones():
    assert sound_loudness([(1000.0, 1.0)], 90.0) == pytest.approx(32.0, rel=1e-9)


def test_solve_closed_form_at_reference():
    s = solve_amplitude_scale(simple_sound(partials=[tone(1000.0)]), 0.5, 1.0, 90.0)
    assert s == pytest.approx(10 ** ((40 - 90) / 20), rel=1e-3)


def test_solve_fixed_point():
    parts = [(300.0, 0.2), (700.0, 0.1), (2500.0, 0.05)]
    current = sound_loudness(parts, 90.0)
    assert solve_spectrum_scale(parts, current, 90.0) == pytest.approx(1.0, abs=1e-3)


def test_unreachable_target_reports_attainable():
    with pytest.raises(LoudnessError) as err:
        solve_spectrum_scale([(1000.0, 1.0)], 64.0, 90.0)
    assert err.value.attainable == pytest.approx(32.0, rel=1e-3)


def test_box3_cluster2_round_trip():
    score = expand_macros(load_score(FIXTURES / "box3.score"))
    cards = apply_loudness(lower_to_icards(score), score)
    cluster = [s for s in score.sounds if s.group == "cluster2"]
    assert measured_loudness(cluster, cards, 8.0, score.calibration_db) == pytest.approx(32.0, rel=0.01)


def test_two_sound_ratio_and_independence():
    a = simple_sound(1, [tone(440.0), tone(1320.0, amp=0.5)], sones=8.0)
    b = simple_sound(2, [tone(2000.0), tone(3000.0, amp=0.3)], sones=16.0)
    score = simple_score(a, b)
    cards = apply_loudness(lower_to_icards(score), score)
    la = measured_loudness([a], cards, 0.5)
    lb = measured_loudness([b], cards, 0.5)
    assert lb / la == pytest.approx(2.0, rel=0.02)
    b2 = simple_sound(2, b.partials, sones=32.0)
    score2 = simple_score(a, b2)
    cards2 = apply_loudness(lower_to_icards(score2), score2)
    assert [c.loudness_scale for c in cards2 if c.sound_id == 1] == [c.loudness_scale for c in cards if c.sound_id == 1]


def test_constant_envelope_gives_single_scale():
    score = simple_score(simple_sound(1, [tone(440.0), tone(880.0)]))
    cards = apply_loudness(lower_to_icards(score), score)
    assert all(len(c.loudness_scale) == 1 for c in cards)


def test_scales_follow_loudness_envelope_breakpoints():
    env = Envelope(0.25, (Segment(0.5, 1.0), Segment(0.5, 0.5)), scale=16.0)
    s = simple_sound(1, [tone(500.0, dur=2.0)], sones=1.0)
    s = type(s)(**{**s.__dict__, "loudness_env": env})
    score = simple_score(s)
    cards = apply_loudness(lower_to_icards(score), score)
    assert [t for t, _ in cards[0].loudness_scale] == [0.0, 1.0, 2.0]
    for t, target in ((0.0, 4.0), (1.0, 16.0), (2.0, 8.0)):
        assert measured_loudness([s], cards, t) == pytest.approx(target, rel=1e-3)


@st.composite
def spectra(draw):
    n = draw(st.integers(1, 12))
    freqs = draw(st.lists(st.floats(30.0, 15000.0), min_size=n, max_size=n))
    amps = draw(st.lists(st.floats(1e-3, 1.0), min_size=n, max_size=n))
    return list(zip(freqs, amps))


@settings(max_examples=100, deadline=None)
@given(spectra())
def test_loudness_increases_with_uniform_scale(parts):
    top = max(a for _, a in parts)
    scales = np.geomspace(1e-3, 1.0 / top, 25)
    values = [sound_loudness([(f, a * s) for f, a in parts], 90.0) for s in scales]
    # below every contour bands clamp to 0 phon, a constant floor
    floor = sound_loudness([(f, a * 1e-9) for f, a in parts], 90.0)
    assert np.all(np.diff(values) >= 0)
    assert all(b > a for a, b in zip(values, values[1:]) if b > floor * (1 + 1e-9))


@settings(max_examples=40, deadline=None)
@given(st.floats(100.0, 8000.0), st.floats(100.0, 8000.0), st.floats(1.0, 20.0))
def test_equal_loudness_calibration(f1, f2, target):
    s1 = solve_spectrum_scale([(f1, 1.0)], target, 100.0)
    s2 = solve_spectrum_scale([(f2, 1.0)], target, 100.0)
    l1 = sound_loudness([(f1, s1)], 100.0)
    l2 = sound_loudness([(f2, s2)], 100.0)
    assert l1 == pytest.approx(l2, rel=0.01)


@settings(max_examples=60, deadline=None)
@given(spectra())
def test_bands_respect_membership_rule(parts):
    bands = group_bands(parts, 90.0)
    freqs = [f for f, _ in parts]
    for b in bands:
        for idx, _ in b.members:
            assert abs(freqs[idx] - b.center) <= critical_bandwidth(b.center) / 2
    centers = [b.center for b in bands]
    assert centers == sorted(centers)
    for prev, nxt in zip(bands, bands[1:]):
        # the next band opened because its first partial fell outside the previous band
        assert nxt.center - prev.center > critical_bandwidth(prev.center) / 2
