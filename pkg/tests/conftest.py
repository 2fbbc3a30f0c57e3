import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from neuroshutter.scene import LatentScene, SceneKind, SceneParams  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def static_scene():
    return LatentScene(32, 24, 200_000, SceneKind.STATIC, SceneParams(texture_seed=3), 0.6)


@pytest.fixture
def pan_scene():
    params = SceneParams(velocity=(100.0, 0.0), texture_seed=5, contrast=0.8)
    return LatentScene(48, 32, 200_000, SceneKind.GLOBAL_TRANSLATE, params, 0.8)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
