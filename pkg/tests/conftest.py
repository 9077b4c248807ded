import numpy as np
import pytest

from kahlernet.networks import Architecture, random_init
from kahlernet.projective import fermat
from kahlernet.sampling import sample_hypersurface

# one small architecture per family; mps boundary bonds > 1 (bond-1 ends give a flat metric)
FAMILY_ARCHS = {
    "algebraic": Architecture("algebraic", 5, 2),
    "holomorphic": Architecture("holomorphic", 5, 1, (2,), (4,)),
    "bihomogeneous": Architecture("bihomogeneous", 5, 1, (2,), (6,)),
    "tree_bihomogeneous": Architecture("tree_bihomogeneous", 5, 1, (2, 2), (3, 2)),
    "mps": Architecture("mps", 5, 1, bonds=(2, 3, 2)),
}


@pytest.fixture(scope="session")
def quintic():
    return fermat()


@pytest.fixture(scope="session")
def quintic_samples(quintic):
    return sample_hypersurface(quintic, 2000, seed=11)


def random_algebraic(arch, seed):
    rng = np.random.default_rng(seed)
    S = arch.num_sections
    A = rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S))
    from kahlernet.networks import KahlerNetwork
    return KahlerNetwork(arch, (), A @ A.conj().T / S + np.eye(S))


def family_net(name, seed=0):
    arch = FAMILY_ARCHS[name]
    return random_algebraic(arch, seed) if name == "algebraic" else random_init(arch, seed)
