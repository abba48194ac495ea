from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evkit.event_core import EventStream, SensorGeometry


def make_stream(
    rng: np.random.Generator,
    n: int,
    geometry: SensorGeometry,
    t_max: int,
    t_min: int = 0,
) -> EventStream:
    """Sorted uniform-random events over [t_min, t_max)."""
    t = np.sort(rng.integers(t_min, max(t_max, t_min + 1), n))
    return EventStream(
        geometry,
        t,
        rng.integers(0, geometry.width, n).astype(np.uint16),
        rng.integers(0, geometry.height, n).astype(np.uint16),
        rng.integers(0, 2, n).astype(np.uint8),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def small_geometry() -> SensorGeometry:
    return SensorGeometry(32, 24)
