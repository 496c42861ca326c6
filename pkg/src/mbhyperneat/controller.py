"""Agent controllers built from one or more decoded brains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .substrate import BrainNetwork, ConfigurationError

ACTIONS = ("left", "forward", "right")
USED_FRACTION = 0.01


@njit(cache=True)
def _bipolar(x):
    return 2.0 / (1.0 + math.exp(-x)) - 1.0


@njit(cache=True)
def forward_brain(x, w_ih, b_h, w_ho, w_io, b_o, p_in, p_h, p_b, out, h):
    """Activate one brain on ``x``; writes outputs into ``out`` and hidden
    activations into ``h``, returns the preference activation (0 when
    ``p_in`` is empty, i.e. the brain has no preference neuron)."""
    n_h = b_h.shape[0]
    n_i = x.shape[0]
    for j in range(n_h):
        acc = b_h[j]
        for i in range(n_i):
            acc += w_ih[j, i] * x[i]
        h[j] = _bipolar(acc)
    for k in range(b_o.shape[0]):
        acc = b_o[k]
        for j in range(n_h):
            acc += w_ho[k, j] * h[j]
        for i in range(n_i):
            acc += w_io[k, i] * x[i]
        out[k] = _bipolar(acc)
    if p_in.shape[0] == 0:
        return 0.0
    acc = p_b
    for i in range(n_i):
        acc += p_in[i] * x[i]
    for j in range(n_h):
        acc += p_h[j] * h[j]
    return _bipolar(acc)


@njit(cache=True)
def argmax_first(v):
    best = 0
    for k in range(1, v.shape[0]):
        if v[k] > v[best]:
            best = k
    return best


@njit(cache=True)
def _hidden_packed(x, b, w_ih, b_h, h):
    # loops run input-major so the hidden sums are independent; each sum still
    # adds its terms in input order, matching forward_brain bit for bit
    n_h = b_h.shape[1]
    for j in range(n_h):
        h[j] = b_h[b, j]
    for i in range(x.shape[0]):
        xi = x[i]
        for j in range(n_h):
            h[j] += w_ih[b, j, i] * xi
    for j in range(n_h):
        h[j] = _bipolar(h[j])


@njit(cache=True)
def _outputs_packed(x, b, w_ho, w_io, b_o, h, out):
    n_o = b_o.shape[1]
    for k in range(n_o):
        out[k] = b_o[b, k]
    for j in range(h.shape[0]):
        hj = h[j]
        for k in range(n_o):
            out[k] += w_ho[b, k, j] * hj
    for i in range(x.shape[0]):
        xi = x[i]
        for k in range(n_o):
            out[k] += w_io[b, k, i] * xi
    for k in range(n_o):
        out[k] = _bipolar(out[k])


@njit(cache=True)
def _preference_packed(x, b, p_in, p_h, p_b, h):
    acc = p_b[b]
    for i in range(x.shape[0]):
        acc += p_in[b, i] * x[i]
    for j in range(h.shape[0]):
        acc += p_h[b, j] * h[j]
    return _bipolar(acc)


@njit(cache=True)
def choose_action(x, task, w_ih, b_h, w_ho, w_io, b_o, p_in, p_h, p_b, task_map, use_pref, out, h):
    """Return (action, brain) for packed brains of one agent.

    ``out`` and ``h`` are scratch buffers for output and hidden activations.
    """
    if use_pref:
        best_b = -1
        best_p = 0.0
        for b in range(b_h.shape[0]):
            _hidden_packed(x, b, w_ih, b_h, h)
            p = _preference_packed(x, b, p_in, p_h, p_b, h)
            if best_b < 0 or p > best_p:
                best_b = b
                best_p = p
        b = best_b
    else:
        b = task_map[task]
    _hidden_packed(x, b, w_ih, b_h, h)
    _outputs_packed(x, b, w_ho, w_io, b_o, h, out)
    return argmax_first(out), b


@dataclass(frozen=True)
class HumanTaskDivision:
    """Fixed task id -> brain index assignment chosen by the experimenter."""

    mapping: Mapping[int, int]


@dataclass(frozen=True)
class PreferenceArgmax:
    """Every brain runs; the one with the highest preference output acts."""


@dataclass(frozen=True)
class Action:
    action: int
    chosen_brain: int

    @property
    def name(self) -> str:
        return ACTIONS[self.action]


@dataclass(frozen=True)
class PackedBrains:
    """Brains of one agent stacked along a leading axis for the kernels."""

    w_ih: np.ndarray
    b_h: np.ndarray
    w_ho: np.ndarray
    w_io: np.ndarray
    b_o: np.ndarray
    p_in: np.ndarray
    p_h: np.ndarray
    p_b: np.ndarray
    task_map: np.ndarray
    use_pref: bool

    def args(self):
        return (self.w_ih, self.b_h, self.w_ho, self.w_io, self.b_o,
                self.p_in, self.p_h, self.p_b, self.task_map, self.use_pref)


class MultiBrainController:
    """Brains plus an arbitration policy, with per-brain usage counters."""

    def __init__(self, brains: Sequence[BrainNetwork], policy, num_tasks: int | None = None):
        if not brains:
            raise ConfigurationError("a controller needs at least one brain")
        if isinstance(policy, PreferenceArgmax):
            if not all(b.has_preference for b in brains):
                raise ConfigurationError("PreferenceArgmax requires preference weights on every brain")
        elif isinstance(policy, HumanTaskDivision):
            bad = [t for t, b in policy.mapping.items() if not 0 <= b < len(brains)]
            if bad:
                raise ConfigurationError(f"task division maps tasks {bad} to missing brains")
            if num_tasks is not None:
                missing = [t for t in range(num_tasks) if t not in policy.mapping]
                if missing:
                    raise ConfigurationError(f"task division is missing task ids {missing}")
        else:
            raise ConfigurationError(f"unknown arbitration policy {policy!r}")
        self.brains = list(brains)
        self.policy = policy
        self.usage = [0] * len(self.brains)
        self._packed = None

    def reset_usage(self) -> None:
        self.usage = [0] * len(self.brains)

    @property
    def packed(self) -> PackedBrains:
        if self._packed is None:
            self._packed = pack_brains(self.brains, self.policy)
        return self._packed

    def select_action(self, sensors, task: int = 0) -> Action:
        x = np.ascontiguousarray(sensors, dtype=float)
        pk = self.packed
        if x.shape != (pk.w_ih.shape[2],):
            raise ConfigurationError(
                f"sensor vector has {x.size} values, substrate expects {pk.w_ih.shape[2]}"
            )
        if not pk.use_pref and task not in self.policy.mapping:
            raise ConfigurationError(f"task id {task} is not in the task division")
        out = np.empty(pk.b_o.shape[1])
        h = np.empty(pk.b_h.shape[1])
        action, brain = choose_action(x, int(task), *pk.args(), out, h)
        self.usage[brain] += 1
        return Action(int(action), int(brain))


def pack_brains(brains: Sequence[BrainNetwork], policy) -> PackedBrains:
    n_i = brains[0].w_input_hidden.shape[1]
    n_h = brains[0].bias_hidden.shape[0]

    def stack(get):
        return np.ascontiguousarray(np.stack([get(b) for b in brains]), dtype=float)

    if isinstance(policy, HumanTaskDivision):
        size = max(policy.mapping) + 1 if policy.mapping else 1
        task_map = np.full(size, -1, dtype=np.int64)
        for t, b in policy.mapping.items():
            task_map[t] = b
        use_pref = False
    else:
        task_map = np.zeros(1, dtype=np.int64)
        use_pref = True
    return PackedBrains(
        stack(lambda b: b.w_input_hidden),
        stack(lambda b: b.bias_hidden),
        stack(lambda b: b.w_hidden_output),
        stack(lambda b: b.w_input_output),
        stack(lambda b: b.bias_output),
        stack(lambda b: b.pref_input if b.pref_input is not None else np.zeros(n_i)),
        stack(lambda b: b.pref_hidden if b.pref_hidden is not None else np.zeros(n_h)),
        np.array([b.pref_bias if b.pref_bias is not None else 0.0 for b in brains], dtype=float),
        task_map,
        use_pref,
    )


def brains_used(chosen: Sequence[int] | np.ndarray, num_brains: int,
                fraction: float = USED_FRACTION) -> int:
    """Number of brains acting on at least ``fraction`` of the steps."""
    chosen = np.asarray(chosen, dtype=np.int64)
    if chosen.size == 0:
        return 0
    counts = np.bincount(chosen, minlength=num_brains)
    return int(np.sum(counts >= fraction * chosen.size))
