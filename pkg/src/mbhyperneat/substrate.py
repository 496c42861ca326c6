"""Substrate geometry and decoding of CPPNs into one or more brains.

Every substrate here has an input layer, one hidden row and an output layer.
Links come from querying the CPPN with source and target coordinates; a
query whose weight output has magnitude at or below ``LINK_THRESHOLD`` does
not express a link, stronger ones are rescaled into ``(0, W_MAX]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cppn import CompiledCPPN, evaluate, evaluate_batch
from .genome import BIAS, PREFERENCE, WEIGHT, ConfigurationError, Genome

LINK_THRESHOLD = 0.2
W_MAX = 3.0
PREFERENCE_COORD = (0.0, 0.8)
SIGNAL_COORD = (0.0, -0.8)

LAYER_ROLES = ("input", "hidden", "output")
DEFAULT_CONNECTIVITY = (("input", "hidden"), ("hidden", "output"))


def row(n: int, y: float) -> tuple[tuple[float, float], ...]:
    """``n`` neurons evenly spaced across x in [-1, 1] at height ``y``."""
    if n == 1:
        return ((0.0, y),)
    return tuple((-1.0 + 2.0 * i / (n - 1), y) for i in range(n))


@dataclass(frozen=True)
class SubstrateSpec:
    inputs: tuple[tuple[float, float], ...]
    hidden: tuple[tuple[float, float], ...]
    outputs: tuple[tuple[float, float], ...]
    connectivity: tuple[tuple[str, str], ...] = DEFAULT_CONNECTIVITY
    preference_coord: tuple[float, float] | None = None
    signal_input: bool = False

    def __post_init__(self):
        for pair in self.connectivity:
            if pair not in (("input", "hidden"), ("hidden", "output"), ("input", "output")):
                raise ConfigurationError(f"unsupported substrate connection {pair}")

    @property
    def layers(self) -> tuple[tuple[str, tuple], ...]:
        return (("input", self.inputs), ("hidden", self.hidden), ("output", self.outputs))

    def layer(self, role: str) -> tuple[tuple[float, float], ...]:
        return {"input": self.inputs, "hidden": self.hidden, "output": self.outputs}[role]

    def with_preference(self) -> "SubstrateSpec":
        return SubstrateSpec(self.inputs, self.hidden, self.outputs, self.connectivity,
                             PREFERENCE_COORD, self.signal_input)


def patrol_spec(signal_input: bool = False, preference: bool = False) -> SubstrateSpec:
    """Six rangefinders, nine hidden neurons, outputs (left, forward, right)."""
    inputs = row(6, -1.0) + ((SIGNAL_COORD,) if signal_input else ())
    return SubstrateSpec(inputs, row(9, 0.0), row(3, 1.0),
                         preference_coord=PREFERENCE_COORD if preference else None,
                         signal_input=signal_input)


# pie slices are listed front-left, front-right, back-left, back-right but
# placed so that left slices sit at negative x
PIE_COORDS = ((-1.0 / 3.0, -1.2), (1.0 / 3.0, -1.2), (-1.0, -1.2), (1.0, -1.2))


def forage_spec(preference: bool = False) -> SubstrateSpec:
    """Dual task and two rooms: five rangefinders, four pie slices, ten hidden."""
    return SubstrateSpec(row(5, -1.0) + PIE_COORDS, row(10, 0.0), row(3, 1.0),
                         preference_coord=PREFERENCE_COORD if preference else None)


@dataclass(frozen=True)
class DecodeMode:
    """How a CPPN maps onto brains.

    ``kind`` is one of ``single``, ``spg``, ``multitask``, ``preference``.
    ``team`` is the team coordinate appended to every query (or None).
    """

    kind: str
    num_brains: int = 1
    situations: tuple[float, ...] = ()
    team: float | None = None

    @classmethod
    def single(cls, team=None):
        return cls("single", 1, (), team)

    @classmethod
    def spg(cls, situations, team=None):
        situations = tuple(float(s) for s in situations)
        return cls("spg", len(situations), situations, team)

    @classmethod
    def multitask(cls, k, team=None):
        return cls("multitask", int(k), (), team)

    @classmethod
    def preference(cls, k, team=None):
        return cls("preference", int(k), (), team)


@dataclass(eq=False)
class BrainNetwork:
    """One decoded substrate network.

    Weight matrices are indexed ``[target, source]``; absent links are zero.
    """

    w_input_hidden: np.ndarray
    w_hidden_output: np.ndarray
    w_input_output: np.ndarray
    bias_hidden: np.ndarray
    bias_output: np.ndarray
    pref_input: np.ndarray | None = None
    pref_hidden: np.ndarray | None = None
    pref_bias: float | None = None

    @property
    def has_preference(self) -> bool:
        return self.pref_input is not None

    def arrays(self):
        return (self.w_input_hidden, self.w_hidden_output, self.w_input_output,
                self.bias_hidden, self.bias_output)

    def identical_to(self, other: "BrainNetwork") -> bool:
        same = all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))
        if self.has_preference != other.has_preference:
            return False
        if self.has_preference:
            same = same and np.array_equal(self.pref_input, other.pref_input) \
                and np.array_equal(self.pref_hidden, other.pref_hidden) \
                and self.pref_bias == other.pref_bias
        return same

    def activate(self, x) -> tuple[np.ndarray, float | None]:
        """Output activations and preference activation for sensor vector ``x``."""
        from .controller import forward_brain
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty(self.bias_output.shape[0])
        pref = forward_brain(x, self.w_input_hidden, self.bias_hidden, self.w_hidden_output,
                             self.w_input_output, self.bias_output,
                             _or_zeros(self.pref_input, x.shape[0]),
                             _or_zeros(self.pref_hidden, self.bias_hidden.shape[0]),
                             0.0 if self.pref_bias is None else self.pref_bias, out,
                             np.empty(self.bias_hidden.shape[0]))
        return out, (pref if self.has_preference else None)


def _or_zeros(a, n):
    return np.zeros(n) if a is None else a


def express(value: float) -> float:
    """Threshold-and-rescale a raw CPPN weight output (0.0 means no link)."""
    mag = abs(value)
    if mag <= LINK_THRESHOLD:
        return 0.0
    return float(np.sign(value)) * (mag - LINK_THRESHOLD) / (1.0 - LINK_THRESHOLD) * W_MAX


def _express_array(values: np.ndarray) -> np.ndarray:
    mag = np.abs(values)
    scaled = np.sign(values) * (mag - LINK_THRESHOLD) / (1.0 - LINK_THRESHOLD) * W_MAX
    return np.where(mag <= LINK_THRESHOLD, 0.0, scaled)


def _query_row(a, b, extra):
    return [a[0], a[1], b[0], b[1], *extra, 1.0]


def extra_inputs(situation=None, team=None) -> list[float]:
    """CPPN inputs between the coordinates and the bias: ``[S]`` then ``[T]``."""
    extra = []
    if situation is not None:
        extra.append(float(situation))
    if team is not None:
        extra.append(float(team))
    return extra


def query_link(cppn: CompiledCPPN, src, tgt, module: int, extra_inputs=()) -> float | None:
    """Expressed link weight from ``src`` to ``tgt`` or None when absent."""
    w = evaluate(cppn, _query_row(src, tgt, extra_inputs))[(module, WEIGHT)]
    value = express(w)
    return None if value == 0.0 else value


def query_bias(cppn: CompiledCPPN, tgt, module: int, extra_inputs=()) -> float:
    return evaluate(cppn, _query_row((0.0, 0.0), tgt, extra_inputs))[(module, BIAS)] * W_MAX


def query_preference_link(cppn: CompiledCPPN, src, module: int, extra_inputs=()) -> float | None:
    if (module, PREFERENCE) not in cppn.outputs:
        raise ConfigurationError("preference links need a CPPN with preference outputs")
    p = evaluate(cppn, _query_row(src, PREFERENCE_COORD, extra_inputs))[(module, PREFERENCE)]
    value = express(p)
    return None if value == 0.0 else value


def check_mode(genome: Genome, spec: SubstrateSpec, mode: DecodeMode) -> None:
    """Raise :class:`ConfigurationError` naming the first violated layout rule."""
    if mode.kind not in ("single", "spg", "multitask", "preference"):
        raise ConfigurationError(f"unknown decode mode {mode.kind!r}")
    if (mode.team is not None) != genome.team:
        raise ConfigurationError(
            f"team coordinate {'given' if mode.team is not None else 'missing'} but genome "
            f"{'has' if genome.team else 'lacks'} the team input"
        )
    if mode.kind == "spg":
        if not genome.situation:
            raise ConfigurationError("SPG decoding requires the situation input S")
        if not mode.situations:
            raise ConfigurationError("SPG decoding requires at least one situation value")
    elif genome.situation:
        raise ConfigurationError(f"{mode.kind} decoding does not use the situation input S")
    if mode.kind in ("single", "spg") and genome.num_modules != 1:
        raise ConfigurationError(f"{mode.kind} decoding requires num_modules == 1, "
                                 f"genome has {genome.num_modules}")
    if mode.kind in ("multitask", "preference") and genome.num_modules != mode.num_brains:
        raise ConfigurationError(f"{mode.kind}({mode.num_brains}) requires num_modules == "
                                 f"{mode.num_brains}, genome has {genome.num_modules}")
    if (mode.kind == "preference") != (genome.family == "preference"):
        raise ConfigurationError(f"decode mode {mode.kind!r} does not match genome family "
                                 f"{genome.family!r}")


def decode(cppn: CompiledCPPN, spec: SubstrateSpec, mode: DecodeMode,
           genome: Genome | None = None) -> list[BrainNetwork]:
    """Decode ``cppn`` into brains.

    When ``genome`` is given its layout is checked against ``mode`` first.
    """
    if genome is not None:
        check_mode(genome, spec, mode)
    pref = mode.kind == "preference"
    if pref and (0, PREFERENCE) not in cppn.outputs:
        raise ConfigurationError("preference decoding needs a CPPN with preference outputs")
    if mode.kind == "spg":
        settings = [(0, s) for s in mode.situations]
    else:
        settings = [(m, None) for m in range(mode.num_brains)]
    n_modules = max(m for m, _ in cppn.outputs) + 1
    if any(m >= n_modules for m, _ in settings):
        raise ConfigurationError(f"mode needs {mode.num_brains} modules, CPPN has {n_modules}")

    ins, hid, outs = spec.inputs, spec.hidden, spec.outputs
    pairs = []  # (src layer, tgt layer, [(src coord, tgt coord), ...]) in row-major order
    for s_role, t_role in spec.connectivity:
        S, T = spec.layer(s_role), spec.layer(t_role)
        pairs.append((s_role, t_role, [(a, b) for b in T for a in S]))
    bias_targets = list(hid) + list(outs)
    pref_sources = list(ins) + list(hid)
    if pref:
        bias_targets.append(PREFERENCE_COORD)

    # group by situation value so each distinct extra-input tuple is one batch
    cache = {}
    brains = []
    for module, situation in settings:
        extra = extra_inputs(situation, mode.team)
        key = tuple(extra)
        if key not in cache:
            rows = []
            for _, _, coords in pairs:
                rows.extend(_query_row(a, b, extra) for a, b in coords)
            rows.extend(_query_row((0.0, 0.0), t, extra) for t in bias_targets)
            if pref:
                rows.extend(_query_row(a, PREFERENCE_COORD, extra) for a in pref_sources)
            cache[key] = evaluate_batch(cppn, np.array(rows, dtype=float))
        values = cache[key]
        wcol = values[:, cppn.outputs[(module, WEIGHT)]]
        bcol = values[:, cppn.outputs[(module, BIAS)]]
        mats = {
            ("input", "hidden"): np.zeros((len(hid), len(ins))),
            ("hidden", "output"): np.zeros((len(outs), len(hid))),
            ("input", "output"): np.zeros((len(outs), len(ins))),
        }
        r = 0
        for s_role, t_role, coords in pairs:
            n = len(coords)
            n_src = len(spec.layer(s_role))
            mats[(s_role, t_role)] = _express_array(wcol[r:r + n]).reshape(-1, n_src)
            r += n
        biases = bcol[r:r + len(bias_targets)] * W_MAX
        r += len(bias_targets)
        brain = BrainNetwork(
            mats[("input", "hidden")], mats[("hidden", "output")], mats[("input", "output")],
            biases[:len(hid)].copy(), biases[len(hid):len(hid) + len(outs)].copy(),
        )
        if pref:
            pcol = values[:, cppn.outputs[(module, PREFERENCE)]]
            pw = _express_array(pcol[r:r + len(pref_sources)])
            brain.pref_input = pw[:len(ins)].copy()
            brain.pref_hidden = pw[len(ins):].copy()
            brain.pref_bias = float(biases[-1])
        brains.append(brain)
    return brains
