"""
Scores, rendering and the anticlip pass
=======================================

Writes a small score in the text grammar, renders the equal-loudness cluster
fixture to a WAV file, and shows the anticlip pass taming a mix that clips
while leaving a quiet later sound untouched.
"""
import pathlib

import numpy as np

from diass.anticlip import anticlip_pass
from diass.psycho import apply_loudness, measured_loudness
from diass.render import RenderConfig, render_score, render_to_wav
from diass.score import expand_macros, load_score, lower_to_icards, parse_score, serialize_score

HERE = pathlib.Path(__file__).resolve().parent
OUT = HERE / "out"
OUT.mkdir(exist_ok=True)

# a sound is a loudness target plus partials; amplitudes are relative shapes
text = """diass-score 1
rate 22050
channels 2
calibration_db 90
sound id=1 start=0 dur=2 loudness=sones:8 pan=env:0.0;1.0,1.0,lin seed=7
  harmonic f0=220 max=8 rolloff=inverse a=env:0.0;0.1,1.0,lin;0.9,0.0,lin
sound id=2 start=1 dur=1.5 loudness=sones:4 pan=const:0.3 seed=8
  partial f=env:0.75;1.0,1.0,lin@880 a=const:1 fm.wave=sine fm.a=const:6 fm.f=const:5
  reverb dur=1.0 decay=2.5 mix=0.3 hall=20 refl=0.5
"""
score = parse_score(text)
print(serialize_score(score))
result = render_to_wav(score, OUT / "two_sounds.wav")
print("two_sounds.wav:", {k: round(v, 3) if isinstance(v, float) else v for k, v in result.stats.items()})

# five clusters of very different partial counts, each solved to 32 sones
box3 = load_score(HERE.parent / "fixtures" / "box3.score")
expanded = expand_macros(box3)
cards = apply_loudness(lower_to_icards(expanded), expanded)
for c, t in zip(range(1, 6), (2.75, 8.25, 13.75, 19.35, 24.95)):
    members = [s for s in expanded.sounds if s.group == f"cluster{c}"]
    n = sum(len(s.partials) for s in members)
    print(f"cluster {c}: {n:4d} partials -> {measured_loudness(members, cards, t, expanded.calibration_db):.2f} sones")
res = render_to_wav(box3, OUT / "box3.wav", RenderConfig(anticlip=False))
print(f"box3.wav peak {res.stats['peak']:.3f}")

# a loud cluster that clips on its own, then a soft sound two seconds later
lines = ["diass-score 1", "rate 22050", "channels 2", "calibration_db 80"]
for k in range(24):
    lines.append(f"sound id={k + 1} start=0 dur=1.5 loudness=sones:40 pan=const:0.5 seed={k + 1} group=cluster")
    lines.append(f"  harmonic f0={110 * 2 ** (k / 6):.3f} max=6 rolloff=inverse a=const:1")
lines.append("sound id=100 start=2 dur=1 loudness=sones:2 pan=const:0.5 seed=100")
lines.append("  partial f=const:600 a=const:1")
lines.append("  partial f=const:900 a=const:0.5")
loud = expand_macros(parse_score("\n".join(lines) + "\n"))
raw = render_score(loud, RenderConfig(anticlip=False))
fixed = anticlip_pass(loud, headroom=0.98)
print(f"raw peak {raw.stats['peak']:.3f} -> {np.abs(fixed.mix.samples).max():.4f} after {fixed.rounds} rounds")
print("cluster target now", round(fixed.score.sound(1).loudness_env.scale, 2), "sones;",
      "soft target still", fixed.score.sound(100).loudness_env.scale, "sones")
