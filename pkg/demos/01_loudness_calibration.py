"""
Loudness calibration from pressure to sones
===========================================

Walks the perceptual chain used to set partial amplitudes: sound pressure
level, equal-loudness contours, the sone scale, critical-band grouping, and
finally solving a sound's amplitude so it plays at a requested loudness.
"""
import numpy as np

from diass.model import Envelope, Partial, Score, Sound
from diass.psycho import (critical_bandwidth, db_to_phon, group_bands, measured_loudness, phon_to_sone,
                          pressure_to_db, sound_loudness, apply_loudness)
from diass.score import lower_to_icards

# 20 micropascal is 0 dB; one pascal is about 94 dB
print("1 Pa  ->", round(pressure_to_db(1.0), 2), "dB")

# at 1 kHz the phon scale equals the dB scale by construction
for level in (20, 40, 60, 80):
    print(f"{level} dB at 1 kHz -> {db_to_phon(1000.0, level):.2f} phon")

# low tones need far more pressure for the same loudness
for f in (50.0, 100.0, 1000.0, 4000.0):
    print(f"60 dB at {f:>6.0f} Hz -> {db_to_phon(f, 60.0):6.2f} phon -> {phon_to_sone(db_to_phon(f, 60.0)):.2f} sones")

# every 10 phon doubles the loudness
print("sones for 40..90 phon:", [phon_to_sone(p) for p in range(40, 100, 10)])

# critical bands widen with frequency
freqs = np.array([100.0, 500.0, 1000.0, 5000.0, 10000.0])
print("critical bandwidths (Hz):", np.round(critical_bandwidth(freqs), 1))

# partials sharing a band add in power; separate bands add in sones
spectrum = [(1000.0, 0.2), (1050.0, 0.2), (3000.0, 0.2)]
for band in group_bands(spectrum, calibration_db=90.0):
    print(f"band {band.center:7.1f} Hz  {len(band.members)} partial(s)  {band.band_db:5.1f} dB  {band.band_sones:.2f} sones")
print(f"total: {sound_loudness(spectrum, calibration_db=90.0):.2f} sones")

# ask for 16 sones and let the solver pick the amplitude scale
parts = tuple(Partial(0.0, 1.0, Envelope.const(f), Envelope.const(a)) for f, a in spectrum)
sound = Sound(id=1, partials=parts, loudness_env=Envelope.const(16.0), rng_seed=1)
score = Score(sample_rate=44100, channels=2, calibration_db=90.0, sounds=(sound,))
cards = apply_loudness(lower_to_icards(score), score)
print(f"solved sound measures {measured_loudness([sound], cards, 0.5, 90.0):.3f} sones")
