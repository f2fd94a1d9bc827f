"""Additive synthesis with psychoacoustic loudness calibration.

The pipeline runs score text -> macro expansion -> I-cards -> loudness
solve -> synthesis -> anticlip -> 16-bit WAV. Sonification mappers turn
data into scores and the viz module draws scores as SVG.
"""
__version__ = "0.1.0"

from .model import Envelope, HarmonicMacro, ModulatorSpec, Partial, ReverbSpec, Score, Segment, Sound, TransientSpec
from .score import expand_macros, load_score, lower_to_icards, parse_score, serialize_score
from .psycho import sound_loudness, solve_amplitude_scale
from .render import RenderConfig, render_score, render_to_wav

__all__ = [
    "Envelope", "HarmonicMacro", "ModulatorSpec", "Partial", "ReverbSpec", "Score", "Segment", "Sound",
    "TransientSpec", "expand_macros", "load_score", "lower_to_icards", "parse_score", "serialize_score",
    "sound_loudness", "solve_amplitude_scale", "RenderConfig", "render_score", "render_to_wav",
]
