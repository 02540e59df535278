import numpy as np
import pytest

from psrelight import Camera, Preset, PresetSpec, generate


@pytest.fixture(scope="session")
def sphere64():
    return generate(PresetSpec(Preset.SPHERE, resolution=64, seed=7))


@pytest.fixture(scope="session")
def plane32():
    return generate(PresetSpec(Preset.TEXTURED_PLANE, resolution=32, seed=1, albedo_mode="texture"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cam500():
    return Camera(focal=500.0, cx=250.0, cy=250.0, width=1001, height=501)
