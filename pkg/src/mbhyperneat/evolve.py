"""Generational evolution: method wiring, speciation, reproduction and runs."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import genome as G
from .controller import HumanTaskDivision, MultiBrainController, PreferenceArgmax
from .cppn import compile_genome
from .domains.evaluate import EvalResult, evaluate_domain
from .domains.config import DOMAINS, DomainConfig, default_config
from .domains.environment import Environment, default_environments
from .substrate import ConfigurationError, DecodeMode, decode, forage_spec, patrol_spec

log = logging.getLogger(__name__)

METHODS = ("1M", "SPG", "MT", "2M", "3M", "MM(P)", "MM(R)", "MM(D)")
DEFAULT_POPULATION = {"team_patrol": 500, "lone_patrol": 500, "dual_task": 300, "two_rooms": 300}
LOG_FIELDS = ("generation", "champion_fitness", "mean_fitness", "species",
              "champion_modules", "champion_brains_used")

# Human task divisions: task id -> brain index, and the SPG situation value per brain.
TASK_DIVISION = {
    "team_patrol": {0: 0, 1: 1},
    "lone_patrol": {0: 0, 1: 1, 2: 2, 3: 1},
    "dual_task": {0: 0, 1: 1},
    "two_rooms": {0: 0, 1: 1},
}
SITUATIONS = {
    "team_patrol": (-1.0, 1.0),
    "lone_patrol": (-1.0, 0.0, 1.0),
    "dual_task": (0.0, 1.0),
    "two_rooms": (0.0, 1.0),
}
TEAM_COORDS = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class MethodSpec:
    name: str
    family: str
    initial_modules: int
    situation: bool
    variant: str | None = None


def method_spec(method: str, domain: str) -> MethodSpec:
    if method not in METHODS:
        raise ConfigurationError(f"method: unknown method {method!r}; expected one of {list(METHODS)}")
    if domain not in DOMAINS:
        raise ConfigurationError(f"domain: unknown domain {domain!r}; expected one of {list(DOMAINS)}")
    n_brains = len(SITUATIONS[domain])
    if method == "1M":
        return MethodSpec(method, "single", 1, False)
    if method == "SPG":
        return MethodSpec(method, "spg", 1, True)
    if method == "MT":
        return MethodSpec(method, "multitask", n_brains, False)
    if method in ("2M", "3M"):
        return MethodSpec(method, "preference", int(method[0]), False)
    return MethodSpec(method, "preference", 1, False, method[3])


def uses_signal_input(method: str, domain: str) -> bool:
    """Team patrol brains that cover both phases get the phase signal as a substrate input."""
    return domain == "team_patrol" and method_spec(method, domain).family in ("single", "preference")


def domain_config_for(method: str, domain: str, base: DomainConfig | None = None) -> DomainConfig:
    cfg = base or default_config(domain)
    return cfg.with_(signal_input=uses_signal_input(method, domain))


def substrate_for(method: str, domain: str):
    pref = method_spec(method, domain).family == "preference"
    if domain in ("team_patrol", "lone_patrol"):
        return patrol_spec(uses_signal_input(method, domain), pref)
    return forage_spec(pref)


def new_registry(method: str, domain: str) -> G.InnovationRegistry:
    spec = method_spec(method, domain)
    return G.InnovationRegistry(G.input_count(spec.situation, domain == "team_patrol"))


def initial_population(method: str, domain: str, size: int, registry, seed: int) -> list[G.Genome]:
    spec = method_spec(method, domain)
    return [
        G.initial_genome(registry, np.random.default_rng([seed, 0, slot]), spec.initial_modules,
                         spec.family, spec.situation, domain == "team_patrol")
        for slot in range(size)
    ]


def build_controllers(genome: G.Genome, method: str, domain: str) -> list[MultiBrainController]:
    """Decode ``genome`` into the controllers of ``domain`` (three for team patrol)."""
    spec = method_spec(method, domain)
    if genome.family != spec.family:
        raise ConfigurationError(f"method {method} needs a {spec.family!r} genome, "
                                 f"got {genome.family!r}")
    expected = G.input_count(spec.situation, domain == "team_patrol")
    if genome.num_inputs != expected:
        raise ConfigurationError(f"genome has {genome.num_inputs} CPPN inputs, "
                                 f"{method} on {domain} expects {expected}")
    cppn = compile_genome(genome)
    substrate = substrate_for(method, domain)
    tasks = TASK_DIVISION[domain]
    teams = TEAM_COORDS if domain == "team_patrol" else (None,)
    out = []
    for team in teams:
        if spec.family == "single":
            mode, policy = DecodeMode.single(team), HumanTaskDivision({t: 0 for t in tasks})
        elif spec.family == "spg":
            mode, policy = DecodeMode.spg(SITUATIONS[domain], team), HumanTaskDivision(tasks)
        elif spec.family == "multitask":
            mode, policy = DecodeMode.multitask(genome.num_modules, team), HumanTaskDivision(tasks)
        else:
            mode, policy = DecodeMode.preference(genome.num_modules, team), PreferenceArgmax()
        out.append(MultiBrainController(decode(cppn, substrate, mode, genome), policy, len(tasks)))
    return out


def evaluate_genome(genome: G.Genome, method: str, domain: str,
                    envs: Sequence[Environment] | None = None,
                    config: DomainConfig | None = None) -> EvalResult:
    envs = envs if envs is not None else default_environments(domain)
    return evaluate_domain(domain, build_controllers(genome, method, domain), envs,
                      domain_config_for(method, domain, config))


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EvolutionConfig:
    """Settings of one evolutionary run.

    ``population_size`` of 0 selects the domain default.  With
    ``exclusive_mutation`` an asexual offspring receives at most one
    operator, drawn with the mutation rates as (normalized) probabilities.
    """

    method: str = "MT"
    domain: str = "dual_task"
    population_size: int = 0
    generations: int = 2000
    elite_fraction: float = 0.2
    crossover_fraction: float = 0.4
    mutation_fraction: float = 0.4
    weight_rate: float = 0.96
    add_link_rate: float = 0.03
    add_node_rate: float = 0.01
    module_rate: float = 0.01
    exclusive_mutation: bool = False
    weight_perturb_rate: float = 0.8
    weight_sigma: float = 0.3
    weight_replace_rate: float = 0.05
    c_nodes: float = 1.0
    c_links: float = 1.0
    c_weights: float = 0.1
    target_species: int = 10
    initial_threshold: float = 0.3
    threshold_step: float = 0.1
    seed: int = 0
    jobs: int = 1
    target_fitness: float | None = None
    snapshot_every: int = 50

    def __post_init__(self):
        if self.population_size == 0:
            object.__setattr__(self, "population_size", DEFAULT_POPULATION.get(self.domain, 0))

    @property
    def population(self) -> int:
        return self.population_size

    def validate(self) -> "EvolutionConfig":
        method_spec(self.method, self.domain)
        if self.population_size < 1:
            raise ConfigurationError(f"population_size: must be at least 1, got {self.population_size}")
        if self.generations < 0:
            raise ConfigurationError(f"generations: must be non-negative, got {self.generations}")
        fracs = (self.elite_fraction, self.crossover_fraction, self.mutation_fraction)
        for name, v in zip(("elite_fraction", "crossover_fraction", "mutation_fraction"), fracs):
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}: must lie in [0, 1], got {v}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"elite_fraction + crossover_fraction + mutation_fraction "
                                     f"must be 1, got {sum(fracs)}")
        for name in ("weight_rate", "add_link_rate", "add_node_rate", "module_rate",
                     "weight_perturb_rate", "weight_replace_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}: must lie in [0, 1], got {v}")
        for name in ("weight_sigma", "c_nodes", "c_links", "c_weights", "initial_threshold"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name}: must be non-negative")
        if self.target_species < 1:
            raise ConfigurationError("target_species: must be at least 1")
        if not 0.0 <= self.threshold_step < 1.0:
            raise ConfigurationError("threshold_step: must lie in [0, 1)")
        if self.jobs < 1:
            raise ConfigurationError(f"jobs: must be at least 1, got {self.jobs}")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every: must be non-negative")
        return self

    def with_(self, **changes) -> "EvolutionConfig":
        return replace(self, **changes)


def offspring_counts(config: EvolutionConfig) -> tuple[int, int, int]:
    """(elites, crossover offspring, mutants) for one generation."""
    n = config.population_size
    elites = min(n, int(round(config.elite_fraction * n)))
    rest = n - elites
    share = config.crossover_fraction + config.mutation_fraction
    cross = int(round(rest * config.crossover_fraction / share)) if share > 0 else 0
    return elites, cross, rest - cross


# --------------------------------------------------------------------------
# variation


def mutate_offspring(genome: G.Genome, registry: G.InnovationRegistry, rng,
                     config: EvolutionConfig) -> tuple[G.Genome, list[str]]:
    """Apply the asexual mutation operators; returns the child and the names of those fired."""
    variant = method_spec(config.method, config.domain).variant
    ops = [("weight", config.weight_rate), ("add_link", config.add_link_rate),
           ("add_node", config.add_node_rate)]
    if variant is not None:
        ops.append(("module", config.module_rate))
    if config.exclusive_mutation:
        total = sum(r for _, r in ops)
        u = rng.random() * max(1.0, total)
        fired = []
        acc = 0.0
        for name, r in ops:
            acc += r
            if u < acc:
                fired = [name]
                break
    else:
        fired = [name for name, r in ops if rng.random() < r]
    for name in fired:
        if name == "weight":
            genome = G.mutate_weights(genome, rng, config.weight_perturb_rate, config.weight_sigma,
                                      config.weight_replace_rate)
        elif name == "add_link":
            genome = G.mutate_add_link(genome, registry, rng)
        elif name == "add_node":
            genome = G.mutate_add_node(genome, registry, rng)
        else:
            genome = G.module_mutation(genome, registry, rng, variant)
    return genome, fired


# --------------------------------------------------------------------------
# speciation


@dataclass
class Species:
    id: int
    representative: G.Genome
    members: list[int] = field(default_factory=list)


def speciate(genomes: Sequence[G.Genome], previous: Sequence[Species], threshold: float,
             config: EvolutionConfig, next_id: int) -> tuple[list[Species], int]:
    """Assign each genome to the first species whose representative is within ``threshold``."""
    species = [Species(s.id, s.representative) for s in previous]
    for i, g in enumerate(genomes):
        for s in species:
            d = G.compatibility_distance(g, s.representative, config.c_nodes, config.c_links,
                                         config.c_weights)
            if d < threshold:
                s.members.append(i)
                break
        else:
            species.append(Species(next_id, g, [i]))
            next_id += 1
    species = [s for s in species if s.members]
    for s in species:
        s.representative = genomes[s.members[0]]
    return species, next_id


def adjust_threshold(threshold: float, n_species: int, config: EvolutionConfig) -> float:
    if n_species < config.target_species:
        return max(1e-6, threshold * (1.0 - config.threshold_step))
    if n_species > config.target_species:
        return threshold * (1.0 + config.threshold_step)
    return threshold


def allocate(weights: Sequence[float], total: int) -> list[int]:
    """Split ``total`` slots proportionally to ``weights`` by largest remainder."""
    w = np.asarray(weights, dtype=float)
    if total <= 0 or w.size == 0:
        return [0] * w.size
    if w.sum() <= 0:
        w = np.ones_like(w)
    exact = w / w.sum() * total
    base = np.floor(exact).astype(int)
    order = np.argsort(-(exact - base), kind="stable")
    for k in order[: total - base.sum()]:
        base[k] += 1
    return [int(v) for v in base]


def _tournament(members: Sequence[int], fitness: np.ndarray, rng) -> int:
    a = members[int(rng.integers(len(members)))]
    b = members[int(rng.integers(len(members)))]
    return b if fitness[b] > fitness[a] else a


# --------------------------------------------------------------------------
# evaluation


_WORKER = {}


def _worker_init(method, domain, envs, config):
    _WORKER.update(method=method, domain=domain, envs=envs, config=config)


def _worker_eval(genome):
    r = evaluate_genome(genome, _WORKER["method"], _WORKER["domain"], _WORKER["envs"],
                        _WORKER["config"])
    return r.fitness, r.brains_used


class Evaluator:
    """Maps genomes to ``(fitness, brains_used)``, optionally across processes.

    Results are returned in input order and do not depend on ``jobs``.
    """

    def __init__(self, method: str, domain: str, envs: Sequence[Environment] | None = None,
                 config: DomainConfig | None = None, jobs: int = 1):
        self.method = method
        self.domain = domain
        self.envs = list(envs) if envs is not None else default_environments(domain)
        self.config = config
        self.jobs = jobs
        self._pool = None

    def __call__(self, genomes: Sequence[G.Genome]) -> list[tuple[float, int]]:
        if self.jobs <= 1 or len(genomes) < 2:
            out = []
            for g in genomes:
                r = evaluate_genome(g, self.method, self.domain, self.envs, self.config)
                out.append((r.fitness, r.brains_used))
            return out
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                self.jobs, initializer=_worker_init,
                initargs=(self.method, self.domain, self.envs, self.config))
        chunk = max(1, len(genomes) // (4 * self.jobs))
        return list(self._pool.map(_worker_eval, genomes, chunksize=chunk))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --------------------------------------------------------------------------
# generational loop


@dataclass
class RunState:
    generation: int
    genomes: list[G.Genome]
    fitness: np.ndarray
    brains_used: list[int]
    species: list[Species]
    threshold: float
    next_species_id: int
    log: list[dict] = field(default_factory=list)
    counts: tuple[int, int, int] = (0, 0, 0)

    @property
    def champion_index(self) -> int:
        return int(np.argmax(self.fitness))

    @property
    def champion(self) -> G.Genome:
        return self.genomes[self.champion_index]

    def species_of(self) -> list[int]:
        ids = [0] * len(self.genomes)
        for s in self.species:
            for i in s.members:
                ids[i] = s.id
        return ids

    def record(self) -> dict:
        c = self.champion_index
        rec = {
            "generation": self.generation,
            "champion_fitness": float(self.fitness[c]),
            "mean_fitness": float(np.mean(self.fitness)),
            "species": len(self.species),
            "champion_modules": self.genomes[c].num_modules,
            "champion_brains_used": int(self.brains_used[c]),
        }
        self.log.append(rec)
        return rec


def initial_state(config: EvolutionConfig, evaluator, registry) -> RunState:
    genomes = initial_population(config.method, config.domain, config.population_size,
                                 registry, config.seed)
    results = evaluator(genomes)
    species, next_id = speciate(genomes, [], config.initial_threshold, config, 0)
    state = RunState(0, genomes, np.array([r[0] for r in results], dtype=float),
                     [r[1] for r in results], species, config.initial_threshold, next_id)
    state.threshold = adjust_threshold(state.threshold, len(species), config)
    state.record()
    return state


def next_generation(state: RunState, config: EvolutionConfig, evaluator, registry) -> RunState:
    """Elites, crossover offspring and mutants; evaluate, speciate and log."""
    n = len(state.genomes)
    if n == 0:
        raise ValueError("cannot reproduce an empty population")
    gen = state.generation + 1
    n_elite, n_cross, n_mut = offspring_counts(config)
    assert n_elite + n_cross + n_mut == n, "reproduction accounting"

    fit = state.fitness
    order = np.argsort(-fit, kind="stable")
    elites = [int(i) for i in order[:n_elite]]

    species = [s for s in state.species if s.members]
    weights = [float(np.mean(fit[s.members])) for s in species]
    lo = min(weights) if weights else 0.0
    if lo < 0:
        weights = [w - lo for w in weights]
    cross_slots = allocate(weights, n_cross)
    mut_slots = allocate(weights, n_mut)

    children: list[G.Genome] = []
    kinds: list[str] = []
    slot = 0
    for s, k in zip(species, cross_slots):
        for _ in range(k):
            rng = np.random.default_rng([config.seed, gen, slot])
            a = _tournament(s.members, fit, rng)
            b = _tournament(s.members, fit, rng)
            children.append(G.crossover(state.genomes[a], state.genomes[b], fit[a], fit[b], rng))
            kinds.append("crossover")
            slot += 1
    for s, k in zip(species, mut_slots):
        for _ in range(k):
            rng = np.random.default_rng([config.seed, gen, slot])
            p = _tournament(s.members, fit, rng)
            child, _ = mutate_offspring(state.genomes[p], registry, rng, config)
            children.append(child)
            kinds.append("mutant")
            slot += 1
    assert kinds.count("crossover") == n_cross and kinds.count("mutant") == n_mut, \
        "reproduction accounting"

    results = evaluator(children)
    genomes = [state.genomes[i] for i in elites] + children
    fitness = np.concatenate([fit[elites], np.array([r[0] for r in results], dtype=float)])
    used = [state.brains_used[i] for i in elites] + [r[1] for r in results]
    assert len(genomes) == n, "reproduction accounting"

    new_species, next_id = speciate(genomes, species, state.threshold, config,
                                    state.next_species_id)
    new = RunState(gen, genomes, fitness, used, new_species,
                   adjust_threshold(state.threshold, len(new_species), config), next_id,
                   state.log, (n_elite, n_cross, n_mut))
    rec = new.record()
    if n_elite > 0:
        assert rec["champion_fitness"] >= state.log[-2]["champion_fitness"], "champion monotonicity"
    return new


@dataclass
class RunResult:
    log: list[dict]
    champion: G.Genome
    champion_fitness: float
    state: RunState

    def generations_to(self, target: float) -> int | None:
        """First generation whose champion reaches ``target`` (None if never)."""
        for rec in self.log:
            if rec["champion_fitness"] >= target:
                return rec["generation"]
        return None


def format_log(records: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in records:
        w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in LOG_FIELDS])
    return buf.getvalue()


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"generation": int(r["generation"]),
             "champion_fitness": float(r["champion_fitness"]),
             "mean_fitness": float(r["mean_fitness"]),
             "species": int(r["species"]),
             "champion_modules": int(r["champion_modules"]),
             "champion_brains_used": int(r["champion_brains_used"])} for r in rows]


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def run_experiment(config: EvolutionConfig, out_dir=None, envs: Sequence[Environment] | None = None,
                   domain_config: DomainConfig | None = None,
                   progress: Callable[[dict], None] | None = None) -> RunResult:
    """Evolve for ``config.generations`` generations (or until ``target_fitness``).

    With ``out_dir`` the log is written as ``log.csv`` after every
    generation, champion snapshots as ``champion_gen{N}.genome`` every
    ``snapshot_every`` generations and the final champion as ``champion.genome``.
    """
    config.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    registry = new_registry(config.method, config.domain)
    with Evaluator(config.method, config.domain, envs, domain_config, config.jobs) as ev:
        state = initial_state(config, ev, registry)
        while True:
            rec = state.log[-1]
            if progress is not None:
                progress(rec)
            if out is not None:
                _write(out / "log.csv", format_log(state.log))
                if config.snapshot_every and state.generation % config.snapshot_every == 0:
                    _write(out / f"champion_gen{state.generation:05d}.genome", G.dumps(state.champion))
            done = (config.target_fitness is not None
                    and rec["champion_fitness"] >= config.target_fitness)
            if done or state.generation >= config.generations:
                break
            state = next_generation(state, config, ev, registry)
    if out is not None:
        _write(out / "champion.genome", G.dumps(state.champion))
    return RunResult(state.log, state.champion, float(state.fitness[state.champion_index]), state)
