import json
from pathlib import Path

import numpy as np
import pytest

from cutstokes.discretization import Discretization
from cutstokes.geometry import disk
from cutstokes.problems import boundary_driven

ORACLES = Path(__file__).parent / "oracles" / "frozen.json"


@pytest.fixture(scope="session")
def oracles():
    with open(ORACLES) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def exact():
    return boundary_driven()


@pytest.fixture(scope="session")
def disc16():
    return Discretization.structured(16, disk())


@pytest.fixture(scope="session")
def disc8():
    return Discretization.structured(8, disk())


@pytest.fixture(scope="session")
def all_inside4():
    """n = 4 grid where every element is interior (disk much larger than the box)."""
    return Discretization.structured(4, disk(radius=10.0))


def match_rows(points, targets, tol=1e-12):
    """Index of each target point within ``points``."""
    d = np.linalg.norm(np.asarray(points)[None, :, :] - np.asarray(targets)[:, None, :], axis=2)
    idx = d.argmin(axis=1)
    assert np.all(d[np.arange(len(targets)), idx] < tol)
    return idx
