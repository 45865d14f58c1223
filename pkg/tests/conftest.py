import numpy as np
import pytest

from rigidflow.geom import RigidTransform, rotation_about_axis


def make_transform(rng, max_angle_deg=180.0, max_translation=5.0):
    """Random rigid transform for test fixtures."""
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, np.radians(max_angle_deg))
    translation = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(rotation_about_axis(axis, angle), translation)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
