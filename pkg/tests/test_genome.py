import threading
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbhyperneat import genome as G
from mbhyperneat.genome import ConfigurationError, GenomeError, GenomeFormatError

from conftest import random_genome


def minimal(rng, family="single", modules=1, situation=False, team=False):
    reg = G.InnovationRegistry(G.input_count(situation, team))
    return G.initial_genome(reg, rng, modules, family, situation, team), reg


def single_link_genome(weight=0.7, enabled=True):
    nodes = tuple(G.NodeGene(i, G.INPUT) for i in range(5)) + (
        G.NodeGene(5, G.OUTPUT, "sigmoid", 0, G.WEIGHT),
        G.NodeGene(6, G.OUTPUT, "sigmoid", 0, G.BIAS),
    )
    links = (G.LinkGene(0, 0, 5, weight, enabled),)
    return G.Genome(nodes, links, 1, "single")


class NeverRng:
    """Stand-in generator whose uniform draws never pass a probability test."""

    def random(self):
        return 0.999

    def normal(self, *a):
        raise AssertionError("should not be drawn")

    def uniform(self, *a):
        raise AssertionError("should not be drawn")


# -- initial genomes ---------------------------------------------------------

def test_initial_genome_is_fully_connected(rng):
    g, _ = minimal(rng, "preference", 2)
    g.validate()
    outputs = [n for n in g.nodes if n.role == G.OUTPUT]
    assert len(outputs) == 6
    assert len(g.links) == 6 * 5
    assert all(-1.0 <= lk.weight <= 1.0 for lk in g.links)
    assert {(n.module, n.output_role) for n in outputs} == {
        (m, r) for m in range(2) for r in ("W", "B", "P")}


def test_input_count_layout():
    assert G.input_count(False, False) == 5
    assert G.input_count(True, False) == 6
    assert G.input_count(True, True) == 7


# -- weight mutation ---------------------------------------------------------

def test_mutate_weights_all_disabled_is_identity(rng):
    g, _ = minimal(rng)
    g = replace(g, links=tuple(replace(lk, enabled=False) for lk in g.links))
    assert G.mutate_weights(g, np.random.default_rng(1)) == g


def test_mutate_weights_matches_scripted_draws():
    g = single_link_genome(0.7)
    seed = 3
    out = G.mutate_weights(g, np.random.default_rng(seed))
    script = np.random.default_rng(seed)
    if script.random() < 0.8:
        expected = 0.7 + script.normal(0.0, 0.3)
    elif script.random() < 0.05:
        expected = script.uniform(-1.0, 1.0)
    else:
        expected = 0.7
    assert out.links[0].weight == expected
    assert abs(out.links[0].weight - 0.7) > 0


def test_mutate_weights_never_firing_rng_keeps_weights(rng):
    g, _ = minimal(rng)
    assert G.mutate_weights(g, NeverRng()) == g


def test_mutate_weights_keeps_topology(rng):
    g, _ = random_genome(4)
    out = G.mutate_weights(g, rng)
    assert [(l.innovation, l.source, l.target, l.enabled) for l in out.links] == \
        [(l.innovation, l.source, l.target, l.enabled) for l in g.links]
    assert out.nodes == g.nodes


# -- add link ----------------------------------------------------------------

def test_add_link_saturated_genome_unchanged(rng):
    g, reg = minimal(rng)
    assert G.legal_new_links(g) == []
    assert G.mutate_add_link(g, reg, rng) == g


def test_add_link_picks_a_legal_pair(rng):
    g, reg = minimal(rng)
    g = G.mutate_add_node(g, reg, rng)
    legal = set(G.legal_new_links(g))
    assert legal
    out = G.mutate_add_link(g, reg, rng)
    new = [lk for lk in out.links if lk not in g.links]
    assert len(new) == 1
    assert (new[0].source, new[0].target) in legal
    assert new[0].enabled and -1.0 <= new[0].weight <= 1.0
    out.validate()


def test_add_link_same_pair_same_innovation():
    reg = G.InnovationRegistry(5)
    rng = np.random.default_rng(0)
    base = G.initial_genome(reg, rng, 1, "single")
    base = G.mutate_add_node(base, reg, np.random.default_rng(1))
    a = G.mutate_add_link(base, reg, np.random.default_rng(7))
    b = G.mutate_add_link(base, reg, np.random.default_rng(7))
    la, lb = a.links[-1], b.links[-1]
    assert (la.source, la.target) == (lb.source, lb.target)
    assert la.innovation == lb.innovation


# -- add node ----------------------------------------------------------------

def test_add_node_splits_link():
    g = single_link_genome(0.7)
    reg = G.InnovationRegistry.for_genomes([g])
    out = G.mutate_add_node(g, reg, np.random.default_rng(0))
    old = out.links[0]
    assert not old.enabled
    hidden = [n for n in out.nodes if n.role == G.HIDDEN]
    assert len(hidden) == 1 and hidden[0].activation in G.ACTIVATIONS
    h = hidden[0].id
    into = [lk for lk in out.links if lk.target == h]
    outof = [lk for lk in out.links if lk.source == h]
    assert [(lk.source, lk.weight) for lk in into] == [(0, 1.0)]
    assert [(lk.target, lk.weight) for lk in outof] == [(5, 0.7)]


def test_add_node_without_enabled_links_unchanged():
    g = single_link_genome(0.7, enabled=False)
    reg = G.InnovationRegistry.for_genomes([g])
    assert G.mutate_add_node(g, reg, np.random.default_rng(0)) == g


def test_add_node_same_innovation_same_node_id():
    g = single_link_genome(0.7)
    reg = G.InnovationRegistry.for_genomes([g])
    a = G.mutate_add_node(g, reg, np.random.default_rng(1))
    b = G.mutate_add_node(g, reg, np.random.default_rng(2))
    ha = [n.id for n in a.nodes if n.role == G.HIDDEN]
    hb = [n.id for n in b.nodes if n.role == G.HIDDEN]
    assert ha == hb


def test_resplit_of_reenabled_link_gets_fresh_node():
    g = single_link_genome(0.7)
    reg = G.InnovationRegistry.for_genomes([g])
    a = G.mutate_add_node(g, reg, np.random.default_rng(1))
    # re-enable the split link and leave it as the only enabled one
    links = (replace(a.links[0], enabled=True),) + tuple(replace(lk, enabled=False) for lk in a.links[1:])
    b = G.mutate_add_node(replace(a, links=links), reg, np.random.default_rng(1))
    b.validate()
    hidden = [n.id for n in b.nodes if n.role == G.HIDDEN]
    assert len(hidden) == len(set(hidden)) == 2


# -- module mutation ---------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_mm_p_links_are_lateral_unit_weights(seed):
    g, reg = random_genome(seed, steps=8)
    out = G.module_mutation(g, reg, np.random.default_rng(seed), "P")
    assert out.num_modules == g.num_modules + 1
    new = {n.id for n in out.nodes if n.role == G.OUTPUT and n.module == g.num_modules}
    old_outputs = {n.id for n in g.nodes if n.role == G.OUTPUT}
    for nid in new:
        inc = out.incoming(nid)
        assert len(inc) == 1
        assert inc[0].weight == 1.0 and inc[0].source in old_outputs
    out.validate()


def test_mm_r_copies_incoming_count():
    g, reg = random_genome(5, steps=10)
    src_counts = {r: len(g.incoming(g.output_node(0, r).id)) for r in ("W", "B", "P")}
    out = G.module_mutation(g, reg, np.random.default_rng(0), "R")
    for r in ("W", "B", "P"):
        node = out.output_node(1, r)
        inc = out.incoming(node.id)
        assert len(inc) == src_counts[r]
        assert all(out.node(lk.source).role != G.OUTPUT for lk in inc)
        assert all(-1.0 <= lk.weight <= 1.0 for lk in inc)


def test_mm_r_three_incoming_links():
    rng = np.random.default_rng(0)
    reg = G.InnovationRegistry(5)
    g = G.initial_genome(reg, rng, 1, "preference")
    w = g.output_node(0, "W").id
    keep = [lk for lk in g.links if lk.target != w or lk.source < 3]
    g = replace(g, links=tuple(keep))
    assert len(g.incoming(w)) == 3
    out = G.module_mutation(g, reg, rng, "R")
    assert len(out.incoming(out.output_node(1, "W").id)) == 3


def test_mm_d_copies_links_and_activation():
    g, reg = random_genome(9, steps=10)
    out = G.module_mutation(g, reg, np.random.default_rng(0), "D")
    for r in ("W", "B", "P"):
        proto = g.output_node(0, r)
        node = out.output_node(1, r)
        assert node.activation == proto.activation
        assert sorted((lk.source, lk.weight) for lk in out.incoming(node.id)) == \
            sorted((lk.source, lk.weight) for lk in g.incoming(proto.id))


@pytest.mark.parametrize("family", ["single", "spg", "multitask"])
def test_module_mutation_rejected_without_preference(family, rng):
    g, reg = minimal(rng, family, situation=family == "spg")
    with pytest.raises(ConfigurationError):
        G.module_mutation(g, reg, rng, "D")


def test_module_mutation_unknown_variant(rng):
    g, reg = minimal(rng, "preference")
    with pytest.raises(GenomeError):
        G.module_mutation(g, reg, rng, "X")


# -- crossover ---------------------------------------------------------------

def test_self_crossover_is_identity():
    g, _ = random_genome(3)
    child = G.crossover(g, g, 1.0, 1.0, np.random.default_rng(0))
    assert child == g


def test_crossover_module_count_from_fitter():
    base, reg = random_genome(1, steps=4)
    a = G.module_mutation(base, reg, np.random.default_rng(0), "D")
    b = G.module_mutation(a, reg, np.random.default_rng(1), "P")
    assert (a.num_modules, b.num_modules) == (2, 3)
    child = G.crossover(a, b, 0.2, 0.9, np.random.default_rng(0))
    assert child.num_modules == 3
    child.validate()
    child = G.crossover(a, b, 0.9, 0.2, np.random.default_rng(0))
    assert child.num_modules == 2


def test_disjoint_gene_of_less_fit_parent_is_dropped():
    base, reg = random_genome(2, steps=2)
    weaker = G.mutate_add_node(base, reg, np.random.default_rng(5))
    extra = {lk.innovation for lk in weaker.links} - {lk.innovation for lk in base.links}
    child = G.crossover(base, weaker, 1.0, 0.5, np.random.default_rng(0))
    assert extra and not extra & {lk.innovation for lk in child.links}


def test_crossover_incompatible_layouts(rng):
    a, _ = minimal(rng, "single")
    b, _ = minimal(rng, "single", team=True)
    with pytest.raises(GenomeError):
        G.crossover(a, b, 1.0, 1.0, rng)


@pytest.mark.parametrize("seed", range(30))
def test_crossover_genes_come_from_parents(seed):
    reg = G.InnovationRegistry(5)
    a, _ = random_genome(seed, registry=reg, steps=15, variants=("P", "R", "D"))
    b, _ = random_genome(seed + 1000, registry=reg, steps=15, variants=("P", "R", "D"))
    child = G.crossover(a, b, float(seed % 3), 1.0, np.random.default_rng(seed))
    child.validate()
    pool = {(lk.innovation, lk.source, lk.target, lk.weight) for lk in a.links + b.links}
    assert all((lk.innovation, lk.source, lk.target, lk.weight) in pool for lk in child.links)
    ids = {n.id for n in a.nodes} | {n.id for n in b.nodes}
    assert all(n.id in ids for n in child.nodes)


# -- compatibility distance ----------------------------------------------------

def test_distance_identity():
    g, _ = random_genome(0)
    assert G.compatibility_distance(g, g) == 0.0


def test_distance_weight_term():
    g = single_link_genome(0.7)
    h = replace(g, links=(replace(g.links[0], weight=1.7),))
    assert G.compatibility_distance(g, h) == pytest.approx(0.1, abs=1e-15)


def test_distance_symmetric_on_random_pairs():
    reg = G.InnovationRegistry(5)
    for i in range(100):
        a, _ = random_genome(i, registry=reg, steps=6)
        b, _ = random_genome(i + 500, registry=reg, steps=6)
        d = G.compatibility_distance(a, b)
        assert d == G.compatibility_distance(b, a)
        assert d >= 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 12))
def test_distance_premetric(sa, sb, steps):
    reg = G.InnovationRegistry(5)
    a, _ = random_genome(sa, registry=reg, steps=steps)
    b, _ = random_genome(sb, registry=reg, steps=steps)
    assert G.compatibility_distance(a, a) == 0.0
    assert G.compatibility_distance(a, b) == G.compatibility_distance(b, a) >= 0.0


# -- operator fuzz -------------------------------------------------------------

def test_operators_preserve_invariants_over_many_applications():
    applied = 0
    lineage = 0
    while applied < 10_000:
        rng = np.random.default_rng([99, lineage])
        reg = G.InnovationRegistry(5)
        pop = [G.initial_genome(reg, rng, 1, "preference") for _ in range(4)]
        for _ in range(250):
            i = int(rng.integers(len(pop)))
            g = pop[i]
            u = rng.random()
            if u < 0.3:
                g = G.mutate_add_link(g, reg, rng)
            elif u < 0.5:
                g = G.mutate_add_node(g, reg, rng)
            elif u < 0.55:
                g = G.module_mutation(g, reg, rng, "PRD"[int(rng.integers(3))])
            elif u < 0.8:
                j = int(rng.integers(len(pop)))
                g = G.crossover(g, pop[j], rng.random(), rng.random(), rng)
            else:
                g = G.mutate_weights(g, rng)
            g.validate()
            assert len({lk.innovation for lk in g.links}) == len(g.links)
            # the registry never hands one pair two innovations
            for lk in g.links:
                assert reg.link(lk.source, lk.target) == lk.innovation
            pop[i] = g
            applied += 1
        lineage += 1


# -- registry ------------------------------------------------------------------

def test_registry_concurrent_lookups_agree():
    reg = G.InnovationRegistry(5)
    pairs = [(s, t) for s in range(5) for t in range(5, 40)]
    results = [dict() for _ in range(8)]

    def work(k):
        order = list(pairs)
        np.random.default_rng(k).shuffle(order)
        for p in order:
            results[k][p] = reg.link(*p)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == results[0] for r in results)
    assert sorted(results[0].values()) == list(range(len(pairs)))


def test_registry_rejects_wrong_input_count(rng):
    reg = G.InnovationRegistry(5)
    with pytest.raises(GenomeError):
        G.initial_genome(reg, rng, 1, "single", situation=True)


# -- serialization -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_round_trip_is_lossless(seed):
    g, _ = random_genome(seed, steps=20, variants=("P", "R", "D"))
    text = G.dumps(g)
    assert G.loads(text) == g
    assert G.dumps(G.loads(text)) == text


def test_round_trip_keeps_full_precision():
    g = single_link_genome(0.1 + 0.2)
    assert G.loads(G.dumps(g)).links[0].weight == 0.1 + 0.2


def test_header_records_layout():
    g, _ = random_genome(0, family="spg", situation=True, team=True)
    first = G.dumps(g).splitlines()[0]
    assert "num_inputs=7" in first and "family=spg" in first and "situation=1" in first


def test_corrupted_file_reports_line():
    g, _ = random_genome(0)
    lines = G.dumps(g).splitlines()
    lines[3] = "node banana"
    with pytest.raises(GenomeFormatError) as exc:
        G.loads("\n".join(lines))
    assert exc.value.line == 4
    assert "line 4" in str(exc.value)


def test_invalid_structure_rejected_on_load():
    g = single_link_genome(0.5)
    text = G.dumps(g) + "link 1 5 5 0x1.0p+0 1\n"
    with pytest.raises(GenomeError):
        G.loads(text)


def test_validate_catches_cycle():
    g = single_link_genome(0.5)
    nodes = g.nodes + (G.NodeGene(7, G.HIDDEN, "sine"), G.NodeGene(8, G.HIDDEN, "abs"))
    links = g.links + (G.LinkGene(1, 7, 8, 1.0), G.LinkGene(2, 8, 7, 1.0))
    with pytest.raises(GenomeError, match="cycle"):
        replace(g, nodes=nodes, links=links).validate()
