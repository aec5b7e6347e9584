import numpy as np
import pytest

from demoire import synth

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def natural_crops(n, size=256, seed=0):
    """Random crops of the scikit-image sample photographs."""
    import skimage.data as data

    sources = [
        data.astronaut(),
        data.chelsea(),
        data.coffee(),
        data.rocket(),
        data.retina(),
        data.immunohistochemistry(),
        data.hubble_deep_field(),
        data.stereo_motorcycle()[0],
    ]
    sources = [s[:, :, :3] / 255.0 for s in sources]
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        img = sources[k % len(sources)]
        h, w = img.shape[:2]
        y = rng.integers(0, h - size + 1)
        x = rng.integers(0, w - size + 1)
        out.append(img[y : y + size, x : x + size])
    return out


def toy_pairs(n=16, size=64, seed=1):
    cfg = synth.SynthConfig(output_size=size)
    return [synth.synthesize_indexed(c, cfg, i) for i, c in enumerate(natural_crops(n, size=160, seed=seed))]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def source_dir(tmp_path_factory):
    from PIL import Image

    d = tmp_path_factory.mktemp("sources")
    for k, img in enumerate(natural_crops(4, size=200, seed=5)):
        Image.fromarray((img * 255).round().astype(np.uint8)).save(d / f"src{k}.png")
    return d


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
