import numpy as np
import pytest
import torch

torch.set_num_threads(2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def _photo_bank() -> list[np.ndarray]:
    import skimage.data as data

    photos = []
    for name in ("astronaut", "coffee", "chelsea", "rocket", "cat"):
        photos.append(np.asarray(getattr(data, name)(), dtype=np.float64) / 255.0)
    return photos


@pytest.fixture(scope="session")
def photos():
    """A handful of real photographs in [0, 1]."""
    return _photo_bank()


def random_patches(photos, count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(count):
        img = photos[rng.integers(0, len(photos))]
        h, w = img.shape[:2]
        top = rng.integers(0, h - size + 1)
        left = rng.integers(0, w - size + 1)
        patches.append(np.ascontiguousarray(img[top : top + size, left : left + size]))
    return patches


@pytest.fixture(scope="session")
def natural_16(photos):
    return random_patches(photos, 4, 16, seed=1)


@pytest.fixture(scope="session")
def natural_32(photos):
    return random_patches(photos, 8, 32, seed=2)


@pytest.fixture(scope="session")
def natural_64(photos):
    return random_patches(photos, 8, 64, seed=3)
