import numpy as np
import pytest
from PIL import Image

from easel.artifacts import ArtifactStore


def deterministic_image(width: int, height: int, seed: int = 7, mode: str = "RGB") -> Image.Image:
    """A reproducible non-uniform test image (seeded noise + gradient)."""
    rng = np.random.default_rng(seed)
    noise = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    xs = np.linspace(0, 255, width, dtype=np.float64)
    grad = np.tile(xs, (height, 1))
    arr = (noise.astype(np.float64) * 0.5 + grad[..., None] * 0.5).astype(np.uint8)
    img = Image.fromarray(arr, "RGB")
    return img if mode == "RGB" else img.convert(mode)


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(tmp_path / "session")


@pytest.fixture
def sample_image():
    return deterministic_image(48, 32, seed=11)
