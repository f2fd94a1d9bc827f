"""Regenerate the score fixtures under ``fixtures/``.

box3.score: five harmonic sound clusters of equal target loudness
(32 sones each, solved jointly per cluster) at 22050 Hz. The per-sound
partial caps reproduce the published partial totals 754/113/453/60/250:
each cluster uses one uniform cap (60, 55, 50, 60, 45), with leftover
partials added to the lowest fundamentals. Every partial in a cluster gets
the same amplitude.

benchmark.score: 236 sounds with 4939 partials over 146 s, mixing harmonic
macros with explicit partials that carry vibrato, tremolo, transients and
reverb. Generated from a fixed seed.
"""
import pathlib
import random
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from diass.score import harmonic_count  # noqa: E402

RATE = 22050
CALIBRATION_DB = 96.0
CLUSTERS = [
    # (start, duration, partial total, fundamentals high to low)
    (0.0, 5.5, 754, [5000, 4500, 4000, 3000, 2666, 2000, 1666, 1333, 1000, 750, 625, 500, 400, 300,
                     200, 165, 130, 90, 80, 70, 60, 53, 46, 40]),
    (5.5, 5.5, 113, [4000, 1666, 750, 300, 40]),
    (11.0, 5.5, 453, [4000, 3000, 2666, 1666, 1000, 750, 500, 300, 200, 130, 90, 60, 53, 46, 40]),
    (16.5, 5.7, 60, [40]),
    (22.2, 5.5, 250, [4500, 2000, 1333, 1000, 625, 400, 165, 80, 70, 40]),
]


def caps_for(fundamentals, total):
    full = [harmonic_count(f, RATE) for f in fundamentals]
    cap = max(k for k in range(1, max(full) + 1) if sum(min(n, k) for n in full) <= total)
    caps = [min(n, cap) for n in full]
    i = len(caps) - 1
    while sum(caps) < total:
        if caps[i] < full[i]:
            caps[i] += 1
        i = i - 1 if i > 0 else len(caps) - 1
    return caps


def box3():
    lines = ["diass-score 1", f"rate {RATE}", "channels 2", f"calibration_db {CALIBRATION_DB:g}"]
    sid = 0
    for c, (start, dur, total, fundamentals) in enumerate(CLUSTERS, start=1):
        caps = caps_for(fundamentals, total)
        top = max(caps)
        lines.append(f"# cluster {c}: {len(fundamentals)} sounds, {total} partials")
        for f0, cap in zip(fundamentals, caps):
            sid += 1
            lines.append(f"sound id={sid} start={start} dur={dur} loudness=sones:32 pan=const:0.5 "
                         f"seed={1000 + sid} group=cluster{c}")
            lines.append(f"  harmonic f0={f0} max={cap} a=const:{cap / top!r}")
    return "\n".join(lines) + "\n"


MINIMAL = """diass-score 1
rate 44100
channels 2
calibration_db 90
sound id=1 start=0.0 dur=1.0 loudness=sones:8 pan=const:0.5 seed=1
  partial f=const:440 a=env:0.0;0.05,1.0,lin;0.85,1.0,lin;0.1,0.0,lin
"""


BENCH_SOUNDS = 236
BENCH_PARTIALS = 4939
BENCH_SECONDS = 146.0


def benchmark(seed=236):
    rng = random.Random(seed)
    lines = ["diass-score 1", f"rate {RATE}", "channels 2", f"calibration_db {CALIBRATION_DB:g}"]
    base, extra = divmod(BENCH_PARTIALS, BENCH_SOUNDS)
    for i in range(BENCH_SOUNDS):
        n = base + (i < extra)
        dur = round(rng.uniform(2.0, 6.0), 3)
        start = BENCH_SECONDS - dur if i == BENCH_SOUNDS - 1 else round(rng.uniform(0.0, BENCH_SECONDS - dur), 3)
        f0 = round(rng.uniform(60.0, 400.0), 2)
        sones = round(rng.uniform(2.0, 12.0), 2)
        pan = round(rng.uniform(0.0, 1.0), 3)
        lines.append(f"sound id={i + 1} start={start!r} dur={dur!r} loudness=env:0.25;0.3,1.0,lin;0.7,0.5,lin@{sones} "
                     f"pan=const:{pan} seed={rng.getrandbits(63)}")
        if i % 3 == 0:
            lines.append("  reverb dur=0.8 decay=3.0 mix=0.25 hall=18 refl=0.6")
        if i % 2 == 0:
            lines.append(f"  harmonic f0={f0} max={n} rolloff=inverse a=env:0.0;0.1,1.0,lin;0.6,0.7,lin;0.3,0.0,lin")
            continue
        for k in range(1, n + 1):
            mods = []
            if i % 4 == 1:
                mods.append("fm.wave=sine fm.a=const:3 fm.f=const:5.5")
            if i % 4 == 3:
                mods.append("am.wave=triangle am.a=const:0.1 am.f=const:4")
            if i % 5 == 0:
                mods.append("atr.size=0.2 atr.shape=const:1 atr.rate=20 atr.rate_env=const:1")
            a = 1.0 / k
            lines.append(f"  partial f=const:{f0 * k:.2f} a=env:0.0;0.05,{a!r},lin;0.8,{a * 0.8!r},lin;0.15,0.0,lin "
                         f"phase={rng.uniform(0.0, 6.28):.4f} " + " ".join(mods))
    return "\n".join(lines) + "\n"


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "fixtures"
    out.mkdir(exist_ok=True)
    (out / "box3.score").write_text(box3())
    (out / "minimal.score").write_text(MINIMAL)
    (out / "benchmark.score").write_text(benchmark())


if __name__ == "__main__":
    main()
