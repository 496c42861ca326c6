import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbhyperneat import cppn as C
from mbhyperneat import genome as G
from mbhyperneat.genome import HIDDEN, INPUT, OUTPUT, LinkGene, NodeGene

from conftest import random_genome


def reference_value(genome, inputs):
    """Recursive evaluation straight from the genome, no plan involved."""
    by_id = {n.id: n for n in genome.nodes}
    memo = {}

    def value(nid):
        if nid in memo:
            return memo[nid]
        node = by_id[nid]
        if node.role == INPUT:
            v = float(inputs[nid])
        else:
            total = sum(lk.weight * value(lk.source) for lk in genome.incoming(nid))
            v = float(C.ACTIVATION_FUNCTIONS[node.activation](total))
        memo[nid] = v
        return v

    return {(n.module, n.output_role): value(n.id) for n in genome.nodes if n.role == OUTPUT}


def tiny_genome(weight, activation="sine"):
    """Single-family genome: input 0 feeds the W output, B output unconnected."""
    nodes = tuple(NodeGene(i, INPUT) for i in range(5)) + (
        NodeGene(5, OUTPUT, activation, 0, G.WEIGHT),
        NodeGene(6, OUTPUT, "sigmoid", 0, G.BIAS),
    )
    return G.Genome(nodes, (LinkGene(0, 0, 5, weight),), 1, "single")


def test_activation_formulas():
    assert C.sigmoid(0.0) == 0.0
    assert C.sigmoid(1.0) == pytest.approx(2 / (1 + math.exp(-4.9)) - 1)
    assert C.gaussian(0.0) == 1.0
    assert C.gaussian(2.0) == pytest.approx(2 * math.exp(-4) - 1)
    assert C.absolute(0.0) == -1.0
    assert C.absolute(0.25) == pytest.approx(-0.5)
    assert C.absolute(-7.0) == 1.0
    assert C.sine(math.pi / 2) == pytest.approx(1.0)


@given(st.floats(-50, 50))
def test_activations_are_bipolar(x):
    for f in C.ACTIVATION_FUNCTIONS.values():
        assert -1.0 <= float(f(x)) <= 1.0


@given(st.floats(-10, 10), st.sampled_from(G.ACTIVATIONS))
def test_kernel_matches_numpy_activation(x, name):
    assert C._activate(C.ACT_CODE[name], x) == pytest.approx(float(C.ACTIVATION_FUNCTIONS[name](x)), abs=1e-15)


@pytest.mark.parametrize("w", [0.0, 0.5, -1.3, 2.0])
@pytest.mark.parametrize("x", [-1.0, 0.0, 0.3, 1.0])
def test_single_sine_link(w, x):
    plan = C.compile_genome(tiny_genome(w))
    out = C.evaluate(plan, [x, 0.2, -0.4, 0.9, 1.0])
    assert out[(0, G.WEIGHT)] == pytest.approx(math.sin(w * x), abs=1e-15)
    # the bias output has no incoming links: sigmoid(0)
    assert out[(0, G.BIAS)] == 0.0


def test_zero_weights_give_activation_at_zero(rng):
    reg = G.InnovationRegistry(5)
    g = G.initial_genome(reg, rng, 2, "preference")
    g = G.Genome(g.nodes, tuple(LinkGene(lk.innovation, lk.source, lk.target, 0.0) for lk in g.links),
                 g.num_modules, g.family)
    out = C.evaluate(C.compile_genome(g), rng.uniform(-1, 1, 5))
    assert set(out) == {(m, r) for m in range(2) for r in G.output_roles("preference")}
    assert all(v == 0.0 for v in out.values())


@pytest.mark.parametrize("seed", range(40))
def test_matches_recursive_oracle(seed):
    modules = 1 + seed % 3
    g, _ = random_genome(seed, modules=modules, situation=seed % 2 == 0, team=seed % 5 == 0,
                         steps=20, variants=("P", "R", "D"))
    plan = C.compile_genome(g)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x = np.append(rng.uniform(-1, 1, g.num_inputs - 1), 1.0)
        got = C.evaluate(plan, x)
        want = reference_value(g, x)
        assert got.keys() == want.keys()
        for k in want:
            assert got[k] == pytest.approx(want[k], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_outputs_bounded(seed, coords):
    g, _ = random_genome(seed, steps=15)
    out = C.evaluate(C.compile_genome(g), coords + [1.0])
    assert all(-1.0 <= v <= 1.0 for v in out.values())


def test_evaluation_is_pure(rng):
    g, _ = random_genome(3, modules=2, steps=25, variants=("R",))
    plan = C.compile_genome(g)
    x = np.append(rng.uniform(-1, 1, 4), 1.0)
    first = C.evaluate(plan, x)
    C.evaluate_batch(plan, rng.uniform(-1, 1, (50, 5)))
    assert C.evaluate(plan, x) == first


def test_batch_matches_single_queries(rng):
    g, _ = random_genome(8, steps=20)
    plan = C.compile_genome(g)
    X = np.column_stack([rng.uniform(-1, 1, (30, 4)), np.ones(30)])
    batch = C.evaluate_batch(plan, X)
    for row, x in zip(batch, X):
        single = C.evaluate(plan, x)
        for key, col in plan.outputs.items():
            assert row[col] == single[key]


def test_input_arity_is_checked():
    plan = C.compile_genome(tiny_genome(1.0))
    with pytest.raises(ValueError, match="expected 5 inputs"):
        C.evaluate(plan, [0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        C.evaluate_batch(plan, np.zeros((3, 6)))


@pytest.mark.parametrize("seed", range(15))
def test_plan_is_deterministic_and_topological(seed):
    g, _ = random_genome(seed, modules=2, steps=30, variants=("P", "R"))
    a = C.compile_genome(g)
    b = C.compile_genome(G.loads(G.dumps(g)))
    assert a.same_plan(b)
    assert a.order[:g.num_inputs] == tuple(range(g.num_inputs))
    position = {nid: i for i, nid in enumerate(a.order)}
    for lk in g.links:
        if lk.enabled:
            assert position[lk.source] < position[lk.target]
    assert sorted(a.order) == sorted(n.id for n in g.nodes)


def test_disabled_link_is_ignored():
    g = tiny_genome(2.0)
    off = G.Genome(g.nodes, (LinkGene(0, 0, 5, 2.0, enabled=False),), 1, "single")
    assert C.evaluate(C.compile_genome(off), [0.7, 0, 0, 0, 1])[(0, G.WEIGHT)] == 0.0


def test_cycle_is_rejected():
    nodes = tuple(NodeGene(i, INPUT) for i in range(5)) + (
        NodeGene(5, OUTPUT, "sigmoid", 0, G.WEIGHT),
        NodeGene(6, OUTPUT, "sigmoid", 0, G.BIAS),
        NodeGene(7, HIDDEN, "sine"),
        NodeGene(8, HIDDEN, "abs"),
    )
    links = (LinkGene(0, 0, 7, 1.0), LinkGene(1, 7, 8, 1.0), LinkGene(2, 8, 7, 1.0),
             LinkGene(3, 8, 5, 1.0))
    with pytest.raises(G.GenomeError, match="cycle"):
        C.compile_genome(G.Genome(nodes, links, 1, "single"))
