import numpy as np
import pytest

from spadmark import enroll, golden_acquisition, new_chip


def make_image(seed: int = 0, size: int = 512) -> np.ndarray:
    """Deterministic synthetic host: gradient plus soft blobs plus texture.

    Values stay in [5, 210] so a +32 band-shift edit never clips.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    img = 30 + 0.25 * x + 0.15 * y
    for _ in range(12):
        cy, cx = rng.integers(0, size, 2)
        r = int(rng.integers(25, 80))
        amp = float(rng.uniform(-60, 60))
        img = img + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * r * r))
    img = img + rng.normal(0, 5, img.shape)
    return np.clip(np.rint(img), 5, 210).astype(np.uint8)


@pytest.fixture(scope="session")
def chips():
    return [new_chip(f"chip{seed}", seed) for seed in range(1, 6)]


@pytest.fixture(scope="session")
def records(chips):
    return [enroll(chip, golden_acquisition(chip, rng_seed=100 + i))
            for i, chip in enumerate(chips)]


@pytest.fixture(scope="session")
def host_images():
    return [make_image(seed) for seed in range(3)]
