import pathlib

import pytest

from diass.model import Envelope, Partial, Score, Sound

ROOT = pathlib.Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def tone(freq=440.0, dur=1.0, start=0.0, amp=1.0, **kw):
    return Partial(start, dur, Envelope.const(freq), Envelope.const(amp), **kw)


def simple_sound(sid=1, partials=None, sones=8.0, **kw):
    partials = partials if partials is not None else (tone(),)
    return Sound(id=sid, partials=tuple(partials), loudness_env=Envelope.const(sones), rng_seed=sid, **kw)


def simple_score(*sounds, rate=44100, channels=2, calibration_db=90.0):
    return Score(tuple(sounds), sample_rate=rate, channels=channels, calibration_db=calibration_db)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def cluster_then_soft(n_cluster=24, loud_sones=40.0, soft_sones=2.0, rate=22050, calibration_db=90.0):
    """A loud grouped cluster over [0, 1.5) s, then a soft two-partial sound at [2, 3) s."""
    from diass.model import HarmonicMacro

    sounds = []
    for k in range(n_cluster):
        f0 = 110.0 * 2 ** (k / 6)
        h = HarmonicMacro(f0, 6, "inverse", 0.0, 1.5, Envelope.const(1.0))
        sounds.append(Sound(id=k + 1, partials=(), harmonics=(h,), loudness_env=Envelope.const(loud_sones),
                            rng_seed=k + 1, start=0.0, duration=1.5, group="cluster"))
    soft = Sound(id=100, partials=(tone(600.0, dur=1.0, start=2.0, amp=1.0), tone(900.0, dur=1.0, start=2.0, amp=0.5)),
                 loudness_env=Envelope.const(soft_sones), rng_seed=100)
    return Score(tuple(sounds) + (soft,), sample_rate=rate, channels=2, calibration_db=calibration_db)
