import logging
import os
import sys

import pytest

# Add backend directory to path
sys.path.append(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "backend"))

from dynamics_config import Settings, set_settings  # noqa: E402


@pytest.fixture(autouse=True)
def default_settings():
    """Every test starts from the documented defaults, whatever the environment says"""
    set_settings(Settings())
    yield
    set_settings(Settings())
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_boundary_dynamics", False):
            root.removeHandler(handler)
