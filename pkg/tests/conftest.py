import numpy as np
import pytest

from op3d.match import MatcherHandle
from op3d.shapes import build_toy_bank, build_toy_benchmark, toy_camera


def random_cloud(seed: int, n: int = 120, scales=(1.0, 0.6, 0.3)) -> np.ndarray:
    """Anisotropic Gaussian cloud with well-separated principal variances."""
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 3)) * np.asarray(scales)


@pytest.fixture(scope="session")
def toy_cam():
    return toy_camera()


@pytest.fixture(scope="session")
def toy_bank(toy_cam):
    cfg, vox = toy_cam
    return build_toy_bank(cfg, vox)


@pytest.fixture(scope="session")
def toy_handle(toy_bank):
    return MatcherHandle.reference(toy_bank)


@pytest.fixture(scope="session")
def toy_benchmark(tmp_path_factory):
    work = tmp_path_factory.mktemp("toy_benchmark")
    rotated, manifest = build_toy_benchmark(str(work), n_per_class=10, seed=42)
    return rotated, manifest
