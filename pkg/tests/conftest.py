import math

import numpy as np
import pytest

from latticeshift import AtomSample, LatticeGeometry, build_six_beam_lattice


def random_lattice_sample(n, theta_over_pi=0.15, box=2, seed=0):
    """``n`` distinct sites of a six-beam lattice drawn from a small index box."""
    rng = np.random.default_rng(seed)
    geom = build_six_beam_lattice(theta_over_pi * math.pi)
    cube = np.array(np.meshgrid(*[np.arange(-box, box + 1)] * 3, indexing="ij")).reshape(3, -1).T
    idx = cube[rng.choice(len(cube), size=n, replace=False)]
    return AtomSample(positions=geom.positions(idx), indices=idx, geometry=geom)


@pytest.fixture
def cubic():
    return LatticeGeometry.from_constants(1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
