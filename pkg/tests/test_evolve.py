import math

import numpy as np
import pytest

from mbhyperneat import genome as G
from mbhyperneat.evolve import (
    METHODS, SITUATIONS, EvolutionConfig, Evaluator, RunState, Species, adjust_threshold,
    allocate, build_controllers, format_log, initial_population, initial_state, method_spec,
    mutate_offspring, new_registry, next_generation, offspring_counts, read_log, run_experiment,
    speciate,
)
from mbhyperneat.substrate import ConfigurationError

from conftest import random_genome


def weight_sum_evaluator(genomes):
    """Cheap deterministic stand-in for a domain evaluation."""
    return [(float(sum(abs(lk.weight) for lk in g.links if lk.enabled)), g.num_modules)
            for g in genomes]


def test_offspring_mix_at_500():
    assert offspring_counts(EvolutionConfig(population_size=500)) == (100, 200, 200)
    assert offspring_counts(EvolutionConfig(population_size=150)) == (30, 60, 60)
    assert sum(offspring_counts(EvolutionConfig(population_size=37))) == 37


def test_generation_of_500_has_exact_mix():
    cfg = EvolutionConfig(method="MT", domain="dual_task", population_size=500, seed=1)
    reg = new_registry(cfg.method, cfg.domain)
    state = initial_state(cfg, weight_sum_evaluator, reg)
    nxt = next_generation(state, cfg, weight_sum_evaluator, reg)
    assert nxt.counts == (100, 200, 200)
    assert len(nxt.genomes) == 500
    top = np.argsort(-state.fitness, kind="stable")[:100]
    assert all(nxt.genomes[k] is state.genomes[i] for k, i in enumerate(top))


def test_module_mutation_rate_is_binomial():
    cfg = EvolutionConfig(method="MM(P)", domain="dual_task")
    g, reg = random_genome(0, modules=1, steps=5)
    rng = np.random.default_rng(99)
    n = 10_000
    fired = [mutate_offspring(g, reg, rng, cfg)[1] for _ in range(n)]
    for name, rate in (("module", 0.01), ("weight", 0.96), ("add_link", 0.03), ("add_node", 0.01)):
        k = sum(name in f for f in fired)
        sd = math.sqrt(n * rate * (1 - rate))
        assert abs(k - n * rate) <= 3 * sd, name


def test_exclusive_mutation_fires_at_most_one():
    cfg = EvolutionConfig(method="MM(R)", domain="dual_task", exclusive_mutation=True)
    g, reg = random_genome(1, modules=1, steps=5)
    rng = np.random.default_rng(5)
    assert all(len(mutate_offspring(g, reg, rng, cfg)[1]) <= 1 for _ in range(500))


def test_non_module_methods_never_add_modules():
    cfg = EvolutionConfig(method="MT", domain="dual_task", module_rate=1.0)
    g, reg = random_genome(1, family="multitask", modules=2, steps=5)
    rng = np.random.default_rng(3)
    for _ in range(200):
        child, fired = mutate_offspring(g, reg, rng, cfg)
        assert "module" not in fired and child.num_modules == 2


def test_identical_population_keeps_champion():
    cfg = EvolutionConfig(method="2M", domain="dual_task", population_size=20, seed=4)
    reg = new_registry(cfg.method, cfg.domain)
    g = initial_population(cfg.method, cfg.domain, 1, reg, 0)[0]
    flat = lambda gs: [(1.0, 1)] * len(gs)
    state = RunState(0, [g] * 20, np.ones(20), [1] * 20, [Species(0, g, list(range(20)))], 0.3, 1)
    state.record()
    for _ in range(3):
        state = next_generation(state, cfg, flat, reg)
        assert state.genomes[:4] == [g] * 4
    assert [r["champion_fitness"] for r in state.log] == [1.0] * 4


def test_empty_population_is_an_error():
    cfg = EvolutionConfig(population_size=1)
    state = RunState(0, [], np.zeros(0), [], [], 0.3, 0)
    with pytest.raises(ValueError):
        next_generation(state, cfg, weight_sum_evaluator, new_registry("MT", "dual_task"))


@pytest.mark.parametrize("method", METHODS)
def test_lineage_module_counts(method):
    cfg = EvolutionConfig(method=method, domain="lone_patrol", population_size=30, seed=2,
                          module_rate=0.3)
    spec = method_spec(method, cfg.domain)
    reg = new_registry(method, cfg.domain)
    state = initial_state(cfg, weight_sum_evaluator, reg)
    for _ in range(6):
        state = next_generation(state, cfg, weight_sum_evaluator, reg)
    counts = {g.num_modules for g in state.genomes}
    fixed = {"1M": 1, "SPG": 1, "MT": len(SITUATIONS["lone_patrol"]), "2M": 2, "3M": 3}
    if method in fixed:
        assert counts == {fixed[method]}
    else:
        assert min(counts) >= 1 and max(counts) > 1
    assert all(g.family == spec.family for g in state.genomes)


def test_module_count_never_shrinks_along_a_lineage():
    cfg = EvolutionConfig(method="MM(D)", domain="dual_task", module_rate=0.2)
    g, reg = random_genome(6, modules=1, steps=3)
    rng = np.random.default_rng(0)
    for _ in range(100):
        child, _ = mutate_offspring(g, reg, rng, cfg)
        assert child.num_modules >= g.num_modules
        g = child


def test_method_wiring_builds_expected_brains():
    reg = new_registry("MT", "lone_patrol")
    g = initial_population("MT", "lone_patrol", 1, reg, 0)[0]
    (ctl,) = build_controllers(g, "MT", "lone_patrol")
    assert len(ctl.brains) == 3 and ctl.policy.mapping == {0: 0, 1: 1, 2: 2, 3: 1}
    reg = new_registry("SPG", "dual_task")
    g = initial_population("SPG", "dual_task", 1, reg, 0)[0]
    assert g.situation and len(build_controllers(g, "SPG", "dual_task")[0].brains) == 2
    reg = new_registry("3M", "team_patrol")
    g = initial_population("3M", "team_patrol", 1, reg, 0)[0]
    ctls = build_controllers(g, "3M", "team_patrol")
    assert len(ctls) == 3 and all(len(c.brains) == 3 for c in ctls)
    # signal input only for single- and preference-family team controllers
    assert ctls[0].packed.w_ih.shape[2] == 7
    reg = new_registry("MT", "team_patrol")
    g = initial_population("MT", "team_patrol", 1, reg, 0)[0]
    assert build_controllers(g, "MT", "team_patrol")[0].packed.w_ih.shape[2] == 6
    with pytest.raises(ConfigurationError):
        build_controllers(g, "1M", "team_patrol")


@pytest.mark.parametrize("changes,field", [
    (dict(method="4M"), "method"),
    (dict(domain="maze"), "domain"),
    (dict(population_size=-1), "population_size"),
    (dict(generations=-1), "generations"),
    (dict(elite_fraction=0.5), "elite_fraction"),
    (dict(weight_rate=1.5), "weight_rate"),
    (dict(jobs=0), "jobs"),
    (dict(threshold_step=1.0), "threshold_step"),
])
def test_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigurationError, match=field.split("_")[0]):
        EvolutionConfig(**changes).validate()


def test_default_population_per_domain():
    assert EvolutionConfig(domain="lone_patrol").population_size == 500
    assert EvolutionConfig(domain="two_rooms").population_size == 300


def test_speciation_and_threshold():
    cfg = EvolutionConfig()
    genomes = [random_genome(s, steps=s % 4)[0] for s in range(12)]
    species, next_id = speciate(genomes, [], 1e-9, cfg, 0)
    assert sum(len(s.members) for s in species) == 12
    assert next_id == len(species)
    one, _ = speciate(genomes, [], 1e9, cfg, 0)
    assert len(one) == 1 and one[0].members == list(range(12))
    assert adjust_threshold(1.0, 3, cfg) == pytest.approx(0.9)
    assert adjust_threshold(1.0, 30, cfg) == pytest.approx(1.1)
    assert adjust_threshold(1.0, 10, cfg) == 1.0
    assert adjust_threshold(1e-6, 1, cfg) == 1e-6


def test_allocate_largest_remainder():
    assert allocate([1, 1, 1], 10) == [4, 3, 3]
    assert allocate([3, 1], 8) == [6, 2]
    assert allocate([0, 0], 5) == [3, 2]
    assert sum(allocate(np.random.default_rng(0).random(7), 200)) == 200


def test_parallel_evaluation_matches_sequential():
    reg = new_registry("MT", "dual_task")
    genomes = initial_population("MT", "dual_task", 12, reg, 3)
    seq = Evaluator("MT", "dual_task")(genomes)
    with Evaluator("MT", "dual_task", jobs=2) as ev:
        par = ev(genomes)
    assert seq == par


def test_run_is_deterministic_and_writes_outputs(tmp_path):
    cfg = EvolutionConfig(method="MT", domain="dual_task", population_size=16, generations=3,
                          seed=8, snapshot_every=2)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "log.csv").read_bytes() == (tmp_path / "b" / "log.csv").read_bytes()
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == [
        "champion.genome", "champion_gen00000.genome", "champion_gen00002.genome", "log.csv"]
    assert read_log(tmp_path / "a" / "log.csv") == a.log
    assert G.loads((tmp_path / "a" / "champion.genome").read_text()) == a.champion
    champs = [r["champion_fitness"] for r in a.log]
    assert champs == sorted(champs)
    assert format_log(a.log) == format_log(b.log)


def test_zero_generations_logs_initial_population():
    res = run_experiment(EvolutionConfig(method="1M", domain="dual_task", population_size=8,
                                         generations=0))
    assert [r["generation"] for r in res.log] == [0]


def test_target_fitness_stops_early():
    cfg = EvolutionConfig(method="MT", domain="dual_task", population_size=10, generations=50,
                          target_fitness=0.0)
    assert run_experiment(cfg).log[-1]["generation"] == 0


def test_unwritable_output_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        run_experiment(EvolutionConfig(population_size=4, generations=0), blocker / "sub")
