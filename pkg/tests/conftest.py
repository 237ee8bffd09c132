import numpy as np
import pytest

from fvv.scene import SceneSpec, SpriteSpec, SyntheticScene


@pytest.fixture(scope="session")
def default_scene():
    """640x360 YUV420 4-camera scene: the main interpolation oracle."""
    return SyntheticScene(SceneSpec(seed=42, camera_count=4))


@pytest.fixture(scope="session")
def flat_scene():
    """Single-layer (background only) gray scene with integer 4 px disparity."""
    spec = SceneSpec(seed=7, camera_count=3, width=320, height=96, format="gray8",
                     gain=12.0, background_depth=3.0, sprites=())
    return SyntheticScene(spec)


@pytest.fixture(scope="session")
def occlusion_scene():
    """One large near sprite over a far background; wide dis-occlusion bands."""
    spec = SceneSpec(seed=11, camera_count=2, width=320, height=240, format="gray8",
                     gain=16.0, background_depth=10.0,
                     sprites=(SpriteSpec(depth=1.6, width=110, height=110,
                                         cx=160.0, cy=120.0, shape="box"),))
    return SyntheticScene(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
