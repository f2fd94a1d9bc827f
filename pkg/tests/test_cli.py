import wave

import numpy as np
import pytest

from diass.cli import main
from diass.score import load_score
from diass.sonify import GridData, save_grid_raw

from conftest import FIXTURES


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert "score grammar 1" in out and "contour table 1" in out


def test_check_box3(capsys):
    assert main(["check", str(FIXTURES / "box3.score")]) == 0
    out = capsys.readouterr().out
    assert "sounds=55" in out and "partials=1630" in out and "valid=true" in out


def test_render_missing_file():
    assert main(["render", "missing.score"]) == 3


def test_usage_errors():
    assert main([]) == 1
    assert main(["render"]) == 1
    assert main(["bogus"]) == 1
    assert main(["render", "x.score", "--workers", "many"]) == 1


def test_validation_error(tmp_path):
    bad = tmp_path / "bad.score"
    bad.write_text("diass-score 1\nrate 22050\nsound id=1 dur=1 loudness=sones:4\n  partial f=const:12000 a=const:1\n")
    assert main(["check", str(bad)]) == 2
    assert main(["render", str(bad), "-o", str(tmp_path / "x.wav")]) == 2


def test_render_minimal(tmp_path, capsys):
    out = tmp_path / "out.wav"
    assert main(["render", str(FIXTURES / "minimal.score"), "-o", str(out), "--stats", "--workers", "2"]) == 0
    stats = dict(line.split("=", 1) for line in capsys.readouterr().out.split())
    assert stats["sounds"] == "1" and stats["partials"] == "1" and "synth_s" in stats
    with wave.open(str(out)) as w:
        assert w.getnframes() == 44100 and w.getnchannels() == 2


def test_render_deterministic(tmp_path):
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    assert main(["render", str(FIXTURES / "minimal.score"), "-o", str(a)]) == 0
    assert main(["render", str(FIXTURES / "minimal.score"), "-o", str(b), "--no-anticlip"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sonify_plane_and_window(tmp_path, capsys):
    grid = tmp_path / "g.raw"
    save_grid_raw(GridData(np.random.default_rng(0).random((8, 16, 2))), grid)
    out = tmp_path / "p.score"
    assert main(["sonify", "plane", str(grid), "--plane", "z=1", "--stride", "2", "--freq", "100:4000",
                 "--sones", "1:32", "--dur", "10", "-o", str(out)]) == 0
    assert len(load_score(out).sounds) == 8
    traj = tmp_path / "t.csv"
    traj.write_text("# domain 0 10 0 10\nstep,entity,x,y,speed\n" +
                    "".join(f"{s},a,5,{1 + 0.2 * s},{1 + 0.05 * s}\n" for s in range(31)))
    out2 = tmp_path / "w.score"
    assert main(["sonify", "window", str(traj), "--width", "2.5", "-o", str(out2)]) == 0
    assert len(load_score(out2).sounds) == 1
    assert main(["sonify", "plane", str(grid), "--freq", "100:40000", "-o", str(out)]) == 2
    assert main(["sonify", "plane", str(grid), "--freq", "oops", "-o", str(out)]) == 1


def test_viz_frames_and_overview(tmp_path, capsys):
    assert main(["viz", str(FIXTURES / "minimal.score"), "--rep", "planes", "--fps", "5", "--size", "320x200",
                 "-o", str(tmp_path / "frames")]) == 0
    assert "frames=5" in capsys.readouterr().out
    assert main(["viz", "overview", str(FIXTURES / "box3.score"), "-o", str(tmp_path / "ov.svg")]) == 0
    assert (tmp_path / "ov.svg").read_text().startswith("<svg")
    assert main(["viz", "overview", "-o", str(tmp_path / "x.svg")]) == 1
