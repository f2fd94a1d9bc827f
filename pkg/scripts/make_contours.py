"""Regenerate ``src/diass/data/equal_loudness_v1.csv``.

Contours come from the ISO 226:2003 equal-loudness formula evaluated at the
standard third-octave frequencies (20 Hz to 12.5 kHz), plus a 16 kHz column
that holds the 12.5 kHz exponent/offset parameters and takes its hearing
threshold from ISO 389-7 (40.2 dB). Each contour is shifted by its residual
at 1 kHz so that the table passes through ``phon`` dB there exactly.

Levels above 90 phon are outside the formula's validated range; they are
included as an extrapolation so the table spans 0-120 phon.
"""
import csv
import pathlib

import numpy as np

FREQS = np.array([
    20, 25, 31.5, 40, 50, 63, 80, 100, 125, 160, 200, 250, 315, 400, 500,
    630, 800, 1000, 1250, 1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000,
    10000, 12500, 16000])
ALPHA = np.array([
    0.532, 0.506, 0.480, 0.455, 0.432, 0.409, 0.387, 0.367, 0.349, 0.330,
    0.315, 0.301, 0.288, 0.276, 0.267, 0.259, 0.253, 0.250, 0.246, 0.244,
    0.243, 0.243, 0.243, 0.242, 0.242, 0.245, 0.254, 0.271, 0.301, 0.301])
L_U = np.array([
    -31.6, -27.2, -23.0, -19.1, -15.9, -13.0, -10.3, -8.1, -6.2, -4.5,
    -3.1, -2.0, -1.1, -0.4, 0.0, 0.3, 0.5, 0.0, -2.7, -4.1, -1.0, 1.7,
    2.5, 1.2, -2.1, -7.1, -11.2, -10.7, -3.1, -3.1])
T_F = np.array([
    78.5, 68.7, 59.5, 51.1, 44.0, 37.5, 31.5, 26.5, 22.1, 17.9, 14.4,
    11.4, 8.6, 6.2, 4.4, 3.0, 2.2, 2.4, 3.5, 1.7, -1.3, -4.2, -6.0,
    -5.4, -1.5, 6.0, 12.6, 13.9, 12.3, 40.2])
PHONS = np.arange(0, 121, 10)


def contour(phon):
    af = 4.47e-3 * (10 ** (0.025 * phon) - 1.15) + (0.4 * 10 ** ((T_F + L_U) / 10 - 9)) ** ALPHA
    return 10 / ALPHA * np.log10(af) - L_U + 94


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "diass" / "data" / "equal_loudness_v1.csv"
    ref = int(np.flatnonzero(FREQS == 1000)[0])
    with open(out, "w", newline="") as fh:
        fh.write("# diass equal-loudness contours v1 (ISO 226:2003 formula, 16 kHz from ISO 389-7)\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phon_level", "frequency_hz", "intensity_db"])
        for p in PHONS:
            row = contour(float(p))
            row = row - (row[ref] - p)
            for f, db in zip(FREQS, row):
                w.writerow([int(p), f"{f:g}", f"{db:.3f}"])


if __name__ == "__main__":
    main()
