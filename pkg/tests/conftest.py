import numpy as np
import pytest
from hypothesis import settings

from mbhyperneat import genome as G

# first calls compile numba kernels, so per-example timing is meaningless
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def random_genome(seed, family="preference", modules=1, situation=False, team=False,
                  steps=12, registry=None, variants=()):
    """Grow a genome with a random sequence of structural and weight mutations."""
    rng = np.random.default_rng(seed)
    reg = registry or G.InnovationRegistry(G.input_count(situation, team))
    g = G.initial_genome(reg, rng, modules, family, situation, team)
    for _ in range(steps):
        u = rng.random()
        if u < 0.35:
            g = G.mutate_add_link(g, reg, rng)
        elif u < 0.6:
            g = G.mutate_add_node(g, reg, rng)
        elif u < 0.7 and variants:
            g = G.module_mutation(g, reg, rng, variants[int(rng.integers(len(variants)))])
        else:
            g = G.mutate_weights(g, rng, sigma=1.0)
    return g, reg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
