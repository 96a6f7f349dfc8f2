import numpy as np
import pytest

from p2server.training import pretrain


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """One short pretraining run shared by the whole session."""
    path = tmp_path_factory.mktemp("model") / "base.pt"
    pretrain(path, steps=250, seed=0)
    return path


def write_ppm(path, array: np.ndarray) -> None:
    h, w, c = array.shape
    assert c == 3 and array.dtype == np.uint8
    path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + array.tobytes())


def random_rgb(rng: np.random.Generator, size: int = 16) -> np.ndarray:
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
