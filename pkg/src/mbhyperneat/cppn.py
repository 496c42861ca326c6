"""Compile genomes into feedforward evaluation plans and query them."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .genome import ACTIVATIONS, INPUT, OUTPUT, Genome, GenomeError, _has_cycle

# activation codes used inside the compiled plan; -1 marks pass-through inputs
ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}


def sigmoid(x):
    return 2.0 / (1.0 + np.exp(-4.9 * np.asarray(x, dtype=float))) - 1.0


def gaussian(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * np.exp(-x * x) - 1.0


def absolute(x):
    return 2.0 * np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0) - 1.0


def sine(x):
    return np.sin(np.asarray(x, dtype=float))


ACTIVATION_FUNCTIONS = {"sigmoid": sigmoid, "gaussian": gaussian, "abs": absolute, "sine": sine}


@njit(cache=True)
def _activate(code, x):
    if code == 0:
        return 2.0 / (1.0 + math.exp(-4.9 * x)) - 1.0
    if code == 1:
        return 2.0 * math.exp(-x * x) - 1.0
    if code == 2:
        return 2.0 * min(abs(x), 1.0) - 1.0
    if code == 3:
        return math.sin(x)
    return x


@njit(cache=True)
def _eval_rows(X, n_inputs, codes, ptr, src, w, out_idx):
    n_rows = X.shape[0]
    n_nodes = codes.shape[0]
    out = np.empty((n_rows, out_idx.shape[0]))
    vals = np.empty(n_nodes)
    for r in range(n_rows):
        for i in range(n_inputs):
            vals[i] = X[r, i]
        for i in range(n_inputs, n_nodes):
            acc = 0.0
            for k in range(ptr[i], ptr[i + 1]):
                acc += w[k] * vals[src[k]]
            vals[i] = _activate(codes[i], acc)
        for j in range(out_idx.shape[0]):
            out[r, j] = vals[out_idx[j]]
    return out


@dataclass(frozen=True, eq=False)
class CompiledCPPN:
    """Topologically ordered evaluation plan.

    ``order`` lists node ids in evaluation order (inputs first, in id order).
    Incoming links of plan position ``i`` live in ``src[ptr[i]:ptr[i+1]]`` /
    ``weights[...]`` as plan positions, sorted by source node id.
    """

    order: tuple[int, ...]
    codes: np.ndarray
    ptr: np.ndarray
    src: np.ndarray
    weights: np.ndarray
    num_inputs: int
    outputs: dict  # (module, role) -> column in the output vector
    out_idx: np.ndarray

    def incoming(self, node_id: int) -> list[tuple[int, float]]:
        i = self.order.index(node_id)
        return [
            (self.order[self.src[k]], float(self.weights[k]))
            for k in range(self.ptr[i], self.ptr[i + 1])
        ]

    def same_plan(self, other: "CompiledCPPN") -> bool:
        return (
            self.order == other.order
            and self.outputs == other.outputs
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.ptr, other.ptr)
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.weights, other.weights)
        )


def compile_genome(genome: Genome) -> CompiledCPPN:
    if _has_cycle(genome.nodes, genome.links):
        raise GenomeError("cannot compile: enabled links form a cycle")
    by_id = {n.id: n for n in genome.nodes}
    preds: dict[int, list] = {n.id: [] for n in genome.nodes}
    succ: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for lk in genome.links:
        if lk.enabled:
            preds[lk.target].append((lk.source, lk.weight))
            succ[lk.source].append(lk.target)
    inputs = sorted(n.id for n in genome.nodes if n.role == INPUT)
    if inputs != list(range(genome.num_inputs)):
        raise GenomeError("input nodes do not match the genome layout")
    # Kahn's algorithm releasing the smallest ready id first; input ids are the
    # smallest in every genome, so inputs lead the order
    indeg = {i: len(p) for i, p in preds.items()}
    heap = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, j)
    pos = {nid: k for k, nid in enumerate(order)}
    codes = np.full(len(order), -1, dtype=np.int64)
    ptr = np.zeros(len(order) + 1, dtype=np.int64)
    src, weights = [], []
    for k, nid in enumerate(order):
        node = by_id[nid]
        if node.role != INPUT:
            codes[k] = ACT_CODE[node.activation]
            for s, w in sorted(preds[nid]):
                src.append(pos[s])
                weights.append(w)
        ptr[k + 1] = len(src)
    out_nodes = sorted(
        (n for n in genome.nodes if n.role == OUTPUT), key=lambda n: (n.module, n.output_role)
    )
    outputs = {(n.module, n.output_role): c for c, n in enumerate(out_nodes)}
    out_idx = np.array([pos[n.id] for n in out_nodes], dtype=np.int64)
    return CompiledCPPN(
        tuple(order), codes, ptr,
        np.array(src, dtype=np.int64), np.array(weights, dtype=float),
        genome.num_inputs, outputs, out_idx,
    )


def evaluate_batch(cppn: CompiledCPPN, X) -> np.ndarray:
    """Evaluate many input rows at once; columns follow ``cppn.outputs``."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cppn.num_inputs:
        raise ValueError(f"expected rows of {cppn.num_inputs} inputs, got shape {X.shape}")
    return _eval_rows(X, cppn.num_inputs, cppn.codes, cppn.ptr, cppn.src, cppn.weights, cppn.out_idx)


def evaluate(cppn: CompiledCPPN, inputs) -> dict:
    """Evaluate one query; returns ``{(module, role): value}``.

    The caller supplies the trailing constant bias input.
    """
    row = np.asarray(inputs, dtype=float)
    if row.ndim != 1 or row.shape[0] != cppn.num_inputs:
        raise ValueError(f"expected {cppn.num_inputs} inputs, got {row.shape[0] if row.ndim == 1 else row.shape}")
    values = evaluate_batch(cppn, row[None, :])[0]
    return {key: float(values[c]) for key, c in cppn.outputs.items()}
