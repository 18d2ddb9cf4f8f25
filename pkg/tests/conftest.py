import numpy as np
import pytest

from modules.engine import to_dense
from modules.geometry import GeometrySpec, build
from modules.surrogate import TargetState
from modules.tensor_core import Tensor, random_gaussian
from modules.utils import make_rng

TREE_FAMILIES = ["mps", "antenna", "balanced", "star", "dense"]
ALL_FAMILIES = TREE_FAMILIES + ["peps"]


def spec_for(family, n, chi, **kwargs):
    return GeometrySpec(family, n, chi, **kwargs)


def target_near(net, seed, noise=0.5):
    """Unit target close to the network state (F well away from 0)."""
    psi = to_dense(net)
    g = random_gaussian(psi.indices, make_rng(seed, "noise"))
    data = psi.data / psi.norm() + noise * g.data / g.norm()
    data = data / np.linalg.norm(data)
    return TargetState(Tensor(psi.indices, data), "FullRandom", seed, 0)


def target_from(net):
    """Unit target equal to the network state."""
    psi = to_dense(net)
    return TargetState(psi.scaled(1.0 / psi.norm()), "HiddenTN", 0, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mps6():
    return build(GeometrySpec("mps", 6, 4), seed=11)
