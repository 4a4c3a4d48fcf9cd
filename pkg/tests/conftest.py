import json

import numpy as np
import pytest

from relaxbc import fixtures
from relaxbc.reduction import derive_all
from relaxbc.spectral import SamplingSpec


@pytest.fixture(scope="session")
def pipe2x2():
    """Fully derived pipeline for the 2x2 worked example."""
    return derive_all(fixtures.example_system())


@pytest.fixture(scope="session")
def sys3():
    """Deterministic 3x3 double-characteristic system (n0 = n10 = 1)."""
    return fixtures.double_characteristic_system(seed=7)


@pytest.fixture(scope="session")
def pipe3(sys3):
    return derive_all(sys3, spec=SamplingSpec(resolution=8, rim_points=0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def random_bundles():
    """A shared pool of random admissible systems with their full derivations.

    Session-scoped because building each bundle runs the whole reduction
    chain; several property suites draw from the same pool.
    """
    gen = np.random.default_rng(1234)
    bundles = []
    while len(bundles) < 100:
        try:
            bundles.append(fixtures.random_admissible_bundle(gen))
        except Exception:
            continue
    return bundles


def write_system_file(path, sys_obj):
    from relaxbc.model import system_to_dict

    with open(path, "w") as fh:
        json.dump(system_to_dict(sys_obj), fh)
    return str(path)


@pytest.fixture
def sys2x2_file(tmp_path):
    return write_system_file(tmp_path / "system.json", fixtures.example_system())


@pytest.fixture
def scen2x2_file(tmp_path):
    doc = {
        "boundary": [{"kind": "sin"}, {"kind": "cos"}],
        "u0": [{"kind": "gauss_ramp", "amplitude": 1.0 / 3.0, "width": 0.5}],
        "T": 0.5,
        "x_max": 2.0,
        "epsilons": [1e-2, 3e-3, 1e-3, 3e-4],
    }
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    return str(p)
