"""Smoke test for the affectrack extension module.

Build first:

    cargo build -p affectrack-py --release --features extension-module

then run `python3 python/smoke_test.py`. An installed `affectrack` module is
used when present; otherwise the freshly built library is loaded from
target/release.
"""

import importlib.util
import json
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        import affectrack

        return affectrack
    except ImportError:
        pass
    for name in ("libaffectrack.so", "libaffectrack.dylib", "affectrack.dll"):
        built = os.path.join(ROOT, "target", "release", name)
        if os.path.exists(built):
            break
    else:
        sys.exit("affectrack library not found; build it with cargo first")
    tmp = tempfile.mkdtemp()
    dest = os.path.join(tmp, "affectrack.so")
    shutil.copy(built, dest)
    spec = importlib.util.spec_from_file_location("affectrack", dest)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    at = load()
    print("affectrack", at.__version__)

    assert at.area_between([1.0] * 10, [0.0] * 10) == 1.0
    assert at.reward([0.5], [0.5], False) == -1000.0
    target = at.target_trace("fluct", 30)
    assert target[:10] == [1.0] * 10 and target[10:20] == [0.0] * 10
    assert at.accuracy(target, target) == 100.0

    try:
        at.target_trace("sideways", 3)
    except at.AffectrackError as e:
        assert "sideways" in str(e)
    else:
        raise AssertionError("bad scenario accepted")

    work = tempfile.mkdtemp()
    digest = at.synth_corpus("three_archetypes", os.path.join(work, "corpus"))
    assert len(digest) == 64

    toy = os.path.join(work, "toy.cfg")
    with open(toy, "w") as f:
        f.write("genome_length = 3\ntile_kinds = straight, curve_right, loop\n")
    report = json.loads(at.oracle(toy))
    assert report["genomes"] == 27

    grid = os.path.join(work, "grid.cfg")
    with open(grid, "w") as f:
        f.write("es.mu = 4\nes.lambda = 8\nes.generations = 3\ngo.budget = 24\n")
    first = at.generate("edpcg", "max", seed=3, config=grid)
    assert first == at.generate("edpcg", "max", seed=3, config=grid)
    elite = json.loads(first)
    print("edpcg elite", elite["genome"], "accuracy", round(elite["accuracy"], 2))

    svg = at.render_svg(json.dumps(elite["track"]), elite["arousal"], 3)
    assert svg.startswith("<svg")
    print("smoke test passed")


if __name__ == "__main__":
    main()
