"""CPPN genotypes, variation operators and innovation bookkeeping.

Genomes are immutable: every operator returns a new :class:`Genome`.  The only
shared mutable object is the :class:`InnovationRegistry`, which hands out node
ids and link innovation numbers so that identical structural changes made in
different genomes line up during crossover.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

ACTIVATIONS = ("sigmoid", "gaussian", "abs", "sine")
FAMILIES = ("single", "spg", "multitask", "preference")
MODULE_VARIANTS = ("P", "R", "D")

INPUT, HIDDEN, OUTPUT = "input", "hidden", "output"
WEIGHT, BIAS, PREFERENCE = "W", "B", "P"


class GenomeError(ValueError):
    """Raised for structurally invalid genomes or incompatible operations."""


class ConfigurationError(ValueError):
    """A decode mode, operator or controller setting that does not fit the genome."""


class GenomeFormatError(GenomeError):
    """Raised when a serialized genome cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: str
    activation: str | None = None
    module: int | None = None
    output_role: str | None = None


@dataclass(frozen=True)
class LinkGene:
    innovation: int
    source: int
    target: int
    weight: float
    enabled: bool = True


def output_roles(family: str) -> tuple[str, ...]:
    """Output roles present in every module for a decode family."""
    if family == "preference":
        return (WEIGHT, BIAS, PREFERENCE)
    return (WEIGHT, BIAS)


def input_count(situation: bool, team: bool) -> int:
    # (x1, y1, x2, y2, [S], [T], bias)
    return 5 + int(situation) + int(team)


@dataclass(frozen=True)
class Genome:
    nodes: tuple[NodeGene, ...]
    links: tuple[LinkGene, ...]
    num_modules: int
    family: str = "single"
    situation: bool = False
    team: bool = False

    @property
    def num_inputs(self) -> int:
        return input_count(self.situation, self.team)

    @property
    def input_layout(self) -> tuple[int, str, bool, bool]:
        return (self.num_inputs, self.family, self.situation, self.team)

    def node(self, node_id: int) -> NodeGene:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def output_node(self, module: int, role: str) -> NodeGene:
        for n in self.nodes:
            if n.role == OUTPUT and n.module == module and n.output_role == role:
                return n
        raise KeyError((module, role))

    def incoming(self, node_id: int, enabled_only: bool = True) -> list[LinkGene]:
        return [
            lk for lk in self.links
            if lk.target == node_id and (lk.enabled or not enabled_only)
        ]

    def validate(self) -> None:
        """Check every structural invariant; raise :class:`GenomeError` on failure."""
        if self.family not in FAMILIES:
            raise GenomeError(f"unknown decode family {self.family!r}")
        if self.num_modules < 1:
            raise GenomeError("num_modules must be >= 1")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GenomeError("duplicate node ids")
        inputs = [n for n in self.nodes if n.role == INPUT]
        if sorted(n.id for n in inputs) != list(range(self.num_inputs)):
            raise GenomeError(
                f"expected input ids 0..{self.num_inputs - 1}, found "
                f"{sorted(n.id for n in inputs)}"
            )
        roles = output_roles(self.family)
        seen = set()
        for n in self.nodes:
            if n.role not in (INPUT, HIDDEN, OUTPUT):
                raise GenomeError(f"node {n.id}: unknown role {n.role!r}")
            if n.role != INPUT and n.activation not in ACTIVATIONS:
                raise GenomeError(f"node {n.id}: unknown activation {n.activation!r}")
            if n.role == OUTPUT:
                key = (n.module, n.output_role)
                if n.output_role not in roles or key in seen:
                    raise GenomeError(f"node {n.id}: bad output slot {key}")
                if not (0 <= n.module < self.num_modules):
                    raise GenomeError(f"node {n.id}: module {n.module} out of range")
                seen.add(key)
        if len(seen) != self.num_modules * len(roles):
            raise GenomeError("every module needs exactly one node per output role")
        by_id = {n.id: n for n in self.nodes}
        innovations = set()
        pairs = set()
        for lk in self.links:
            if lk.innovation in innovations:
                raise GenomeError(f"duplicate innovation {lk.innovation}")
            innovations.add(lk.innovation)
            if lk.source not in by_id or lk.target not in by_id:
                raise GenomeError(f"link {lk.innovation} references a missing node")
            if by_id[lk.target].role == INPUT:
                raise GenomeError(f"link {lk.innovation} targets an input node")
            if not math.isfinite(lk.weight):
                raise GenomeError(f"link {lk.innovation} has a non-finite weight")
            if lk.enabled:
                if (lk.source, lk.target) in pairs:
                    raise GenomeError(f"duplicate enabled link {lk.source}->{lk.target}")
                pairs.add((lk.source, lk.target))
        if _has_cycle(self.nodes, self.links):
            raise GenomeError("enabled links form a cycle")


def _has_cycle(nodes: Sequence[NodeGene], links: Iterable[LinkGene]) -> bool:
    succ: dict[int, list[int]] = {n.id: [] for n in nodes}
    indeg = {n.id: 0 for n in nodes}
    for lk in links:
        if lk.enabled:
            succ[lk.source].append(lk.target)
            indeg[lk.target] += 1
    stack = [i for i, d in indeg.items() if d == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    return seen != len(nodes)


def _reaches(links: Iterable[LinkGene], start: int, goal: int) -> bool:
    succ: dict[int, list[int]] = {}
    for lk in links:
        if lk.enabled:
            succ.setdefault(lk.source, []).append(lk.target)
    stack, seen = [start], {start}
    while stack:
        i = stack.pop()
        if i == goal:
            return True
        for j in succ.get(i, ()):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return False


class InnovationRegistry:
    """Assigns node ids and link innovation numbers.

    The maps are persistent for the life of a run, so the same structural
    change always receives the same number, in the same generation or not.
    Lookups and inserts are serialized by a lock.
    """

    def __init__(self, num_inputs: int):
        self.num_inputs = num_inputs
        self._next_node = num_inputs
        self._next_innovation = 0
        self._links: dict[tuple[int, int], int] = {}
        self._splits: dict[int, int] = {}
        self._outputs: dict[tuple[int, str], int] = {}
        self._lock = threading.Lock()

    @classmethod
    def for_genomes(cls, genomes: Sequence[Genome]) -> "InnovationRegistry":
        """Rebuild a registry consistent with existing genomes."""
        reg = cls(genomes[0].num_inputs)
        for g in genomes:
            for n in g.nodes:
                reg._next_node = max(reg._next_node, n.id + 1)
                if n.role == OUTPUT:
                    reg._outputs.setdefault((n.module, n.output_role), n.id)
            for lk in g.links:
                reg._links.setdefault((lk.source, lk.target), lk.innovation)
                reg._next_innovation = max(reg._next_innovation, lk.innovation + 1)
        return reg

    def link(self, source: int, target: int) -> int:
        with self._lock:
            key = (source, target)
            if key not in self._links:
                self._links[key] = self._next_innovation
                self._next_innovation += 1
            return self._links[key]

    def output_node(self, module: int, role: str) -> int:
        with self._lock:
            key = (module, role)
            if key not in self._outputs:
                self._outputs[key] = self._next_node
                self._next_node += 1
            return self._outputs[key]

    def split_node(self, innovation: int, taken: Iterable[int] = ()) -> int:
        """Node id for splitting link ``innovation``.

        A fresh id is issued when the registered one is already present in the
        genome being mutated (the link was re-enabled after an earlier split).
        """
        with self._lock:
            node = self._splits.get(innovation)
            if node is None or node in set(taken):
                node = self._next_node
                self._next_node += 1
                self._splits.setdefault(innovation, node)
            return node


def initial_genome(
    registry: InnovationRegistry,
    rng,
    num_modules: int = 1,
    family: str = "single",
    situation: bool = False,
    team: bool = False,
) -> Genome:
    """Every output connected to every input, no hidden nodes, weights in [-1, 1]."""
    n_in = input_count(situation, team)
    if n_in != registry.num_inputs:
        raise GenomeError(f"registry built for {registry.num_inputs} inputs, genome has {n_in}")
    nodes = [NodeGene(i, INPUT) for i in range(n_in)]
    links = []
    for m in range(num_modules):
        for role in output_roles(family):
            nid = registry.output_node(m, role)
            nodes.append(NodeGene(nid, OUTPUT, "sigmoid", m, role))
            for src in range(n_in):
                links.append(LinkGene(registry.link(src, nid), src, nid, float(rng.uniform(-1.0, 1.0))))
    return Genome(tuple(nodes), tuple(links), num_modules, family, situation, team)


def mutate_weights(genome: Genome, rng, rate: float = 0.8, sigma: float = 0.3,
                   replace_rate: float = 0.05) -> Genome:
    """Perturb or replace enabled link weights; topology is untouched."""
    links = []
    for lk in genome.links:
        if lk.enabled:
            if rng.random() < rate:
                lk = replace(lk, weight=lk.weight + float(rng.normal(0.0, sigma)))
            elif rng.random() < replace_rate:
                lk = replace(lk, weight=float(rng.uniform(-1.0, 1.0)))
        links.append(lk)
    return replace(genome, links=tuple(links))


def legal_new_links(genome: Genome) -> list[tuple[int, int]]:
    """All (source, target) pairs that may be added without breaking invariants."""
    existing = {(lk.source, lk.target) for lk in genome.links}
    sources = [n.id for n in genome.nodes if n.role in (INPUT, HIDDEN)]
    targets = [n.id for n in genome.nodes if n.role in (HIDDEN, OUTPUT)]
    out = []
    for s in sources:
        for t in targets:
            if s == t or (s, t) in existing:
                continue
            if _reaches(genome.links, t, s):
                continue
            out.append((s, t))
    return out


def mutate_add_link(genome: Genome, registry: InnovationRegistry, rng) -> Genome:
    pairs = legal_new_links(genome)
    if not pairs:
        return genome
    s, t = pairs[int(rng.integers(len(pairs)))]
    lk = LinkGene(registry.link(s, t), s, t, float(rng.uniform(-1.0, 1.0)))
    return replace(genome, links=genome.links + (lk,))


def mutate_add_node(genome: Genome, registry: InnovationRegistry, rng) -> Genome:
    enabled = [i for i, lk in enumerate(genome.links) if lk.enabled]
    if not enabled:
        return genome
    idx = enabled[int(rng.integers(len(enabled)))]
    old = genome.links[idx]
    nid = registry.split_node(old.innovation, (n.id for n in genome.nodes))
    act = ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))]
    links = list(genome.links)
    links[idx] = replace(old, enabled=False)
    links.append(LinkGene(registry.link(old.source, nid), old.source, nid, 1.0))
    links.append(LinkGene(registry.link(nid, old.target), nid, old.target, old.weight))
    return replace(
        genome,
        nodes=genome.nodes + (NodeGene(nid, HIDDEN, act),),
        links=tuple(links),
    )


def module_mutation(genome: Genome, registry: InnovationRegistry, rng, variant: str) -> Genome:
    """Add one output module (W, B, P) wired according to ``variant``.

    ``P`` feeds each new output from its counterpart in a random existing
    module with weight 1.0, ``R`` gives it as many random incoming links as
    that counterpart has, ``D`` copies the counterpart's activation and
    incoming links exactly.
    """
    if genome.family != "preference":
        raise ConfigurationError(
            f"module mutation needs preference outputs; genome family is {genome.family!r}"
        )
    if variant not in MODULE_VARIANTS:
        raise GenomeError(f"unknown module mutation variant {variant!r}")
    new_m = genome.num_modules
    src_m = int(rng.integers(genome.num_modules))
    candidates = [n.id for n in genome.nodes if n.role in (INPUT, HIDDEN)]
    nodes = list(genome.nodes)
    links = list(genome.links)
    for role in output_roles(genome.family):
        proto = genome.output_node(src_m, role)
        nid = registry.output_node(new_m, role)
        if variant == "D":
            act = proto.activation
        else:
            act = ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))]
        nodes.append(NodeGene(nid, OUTPUT, act, new_m, role))
        incoming = genome.incoming(proto.id)
        if variant == "P":
            links.append(LinkGene(registry.link(proto.id, nid), proto.id, nid, 1.0))
        elif variant == "R":
            k = min(len(incoming), len(candidates))
            picks = rng.choice(len(candidates), size=k, replace=False) if k else []
            for p in sorted(int(i) for i in picks):
                s = candidates[p]
                links.append(LinkGene(registry.link(s, nid), s, nid, float(rng.uniform(-1.0, 1.0))))
        else:
            for lk in incoming:
                links.append(LinkGene(registry.link(lk.source, nid), lk.source, nid, lk.weight))
    return replace(genome, nodes=tuple(nodes), links=tuple(links), num_modules=new_m + 1)


def crossover(parent_a: Genome, parent_b: Genome, fitness_a: float, fitness_b: float, rng) -> Genome:
    """NEAT crossover aligned on innovation numbers.

    Matching genes come from either parent with equal probability; disjoint
    and excess genes, and the module count, come from the fitter parent
    (``parent_a`` on ties).
    """
    if parent_a.input_layout != parent_b.input_layout:
        raise GenomeError(
            f"incompatible input layouts {parent_a.input_layout} vs {parent_b.input_layout}"
        )
    fit, other = (parent_a, parent_b) if fitness_a >= fitness_b else (parent_b, parent_a)
    other_links = {lk.innovation: lk for lk in other.links}
    other_nodes = {n.id: n for n in other.nodes}
    links = []
    for lk in fit.links:
        twin = other_links.get(lk.innovation)
        if twin is not None and rng.random() < 0.5:
            lk = replace(lk, weight=twin.weight, enabled=twin.enabled)
        links.append(lk)
    nodes = []
    for n in fit.nodes:
        twin = other_nodes.get(n.id)
        if n.role != INPUT and twin is not None and twin.role == n.role and rng.random() < 0.5:
            n = replace(n, activation=twin.activation)
        nodes.append(n)
    if _has_cycle(nodes, links) or _duplicate_pairs(links):
        # re-enabled genes from the other parent closed a loop; keep fitter parent's flags
        flags = {lk.innovation: lk.enabled for lk in fit.links}
        links = [replace(lk, enabled=flags[lk.innovation]) for lk in links]
    return replace(fit, nodes=tuple(nodes), links=tuple(links))


def _duplicate_pairs(links: Sequence[LinkGene]) -> bool:
    pairs = [(lk.source, lk.target) for lk in links if lk.enabled]
    return len(pairs) != len(set(pairs))


def compatibility_distance(a: Genome, b: Genome, c_nodes: float = 1.0,
                           c_links: float = 1.0, c_weights: float = 0.1) -> float:
    max_nodes = max(len(a.nodes), len(b.nodes), 1)
    node_term = abs(len(a.nodes) - len(b.nodes)) / max_nodes
    wa = {lk.innovation: lk.weight for lk in a.links}
    wb = {lk.innovation: lk.weight for lk in b.links}
    matching = wa.keys() & wb.keys()
    unmatched = len(wa.keys() ^ wb.keys())
    link_term = unmatched / max(len(wa), len(wb), 1)
    if matching:
        weight_term = sum(abs(wa[i] - wb[i]) for i in sorted(matching)) / len(matching)
    else:
        weight_term = 0.0
    return c_nodes * node_term + c_links * link_term + c_weights * weight_term


# --------------------------------------------------------------------------
# serialization


def dumps(genome: Genome) -> str:
    lines = [
        f"genome num_inputs={genome.num_inputs} num_modules={genome.num_modules} "
        f"family={genome.family} situation={int(genome.situation)} team={int(genome.team)}"
    ]
    for n in genome.nodes:
        act = n.activation if n.activation is not None else "-"
        mod = str(n.module) if n.module is not None else "-"
        orole = n.output_role if n.output_role is not None else "-"
        lines.append(f"node {n.id} {n.role} {act} {mod} {orole}")
    for lk in genome.links:
        lines.append(f"link {lk.innovation} {lk.source} {lk.target} {lk.weight.hex()} {int(lk.enabled)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Genome:
    header = None
    nodes: list[NodeGene] = []
    links: list[LinkGene] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "genome":
                if header is not None:
                    raise GenomeFormatError("second header line", lineno)
                fields = dict(p.split("=", 1) for p in parts[1:])
                header = (
                    int(fields["num_inputs"]),
                    int(fields["num_modules"]),
                    fields["family"],
                    bool(int(fields["situation"])),
                    bool(int(fields["team"])),
                )
            elif kind == "node":
                if len(parts) != 6:
                    raise GenomeFormatError(f"node record needs 5 fields, got {len(parts) - 1}", lineno)
                _, nid, role, act, mod, orole = parts
                nodes.append(NodeGene(
                    int(nid), role,
                    None if act == "-" else act,
                    None if mod == "-" else int(mod),
                    None if orole == "-" else orole,
                ))
            elif kind == "link":
                if len(parts) != 6:
                    raise GenomeFormatError(f"link record needs 5 fields, got {len(parts) - 1}", lineno)
                _, inno, src, tgt, w, en = parts
                if en not in ("0", "1"):
                    raise GenomeFormatError(f"enabled flag must be 0 or 1, got {en!r}", lineno)
                links.append(LinkGene(int(inno), int(src), int(tgt), float.fromhex(w), en == "1"))
            else:
                raise GenomeFormatError(f"unknown record type {kind!r}", lineno)
        except GenomeFormatError:
            raise
        except (ValueError, KeyError) as exc:
            raise GenomeFormatError(f"malformed {kind} record ({exc})", lineno) from None
        if header is None:
            raise GenomeFormatError("missing genome header", lineno)
    if header is None:
        raise GenomeFormatError("empty genome file")
    num_inputs, num_modules, family, situation, team = header
    genome = Genome(tuple(nodes), tuple(links), num_modules, family, situation, team)
    if genome.num_inputs != num_inputs:
        raise GenomeFormatError(
            f"header declares {num_inputs} inputs but flags imply {genome.num_inputs}", 1
        )
    genome.validate()
    return genome
