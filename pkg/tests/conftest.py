import pytest


@pytest.fixture(scope="session")
def tiny_overrides(tmp_path_factory):
    """Config overrides for a small, fast dataset shared by CLI tests."""
    root = tmp_path_factory.mktemp("tinydata")
    out = tmp_path_factory.mktemp("tinyout")
    return [
        f"data.root={root}",
        f"out.dir={out}",
        "synth.train=3",
        "synth.val=1",
        "synth.test=2",
        "synth.height=64",
        "synth.width=64",
        "synth.n_nuclei=8 10",
        "synth.min_separation=10",
        "synth.n_distractors=1 2",
        "synth.distractor_radius=5 6",
        "synth.distractor_margin=8",
        "ratio=0.5",
        "detect.epochs=6",
        "detect.rounds=1",
        "seg.epochs=6",
        "crf.epochs=2",
    ]
