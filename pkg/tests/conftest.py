import numpy as np
import pytest

from weakbound.synth import SynthConfig, gen_synthetic, synth_image


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def shapes_image():
    """One 96x96 synthetic image plus its instance labels."""
    return synth_image(np.random.default_rng(11), 96, 96, 2)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small on-disk dataset tree shared by IO-heavy tests."""
    root = tmp_path_factory.mktemp("dataset")
    manifest = gen_synthetic(
        root, SynthConfig(n_images=6, width=96, height=96, max_shapes=3), seed=9)
    return root, manifest
