"""Brickwork graphs, their flow, and measurement patterns.

Node labeling is column-major and 1-based: column c (1-based) holds nodes
(c-1)*n_wires + 1 .. c*n_wires, top to bottom. Column 1 nodes are the
inputs, the last column's nodes are the outputs, and client k owns input
node k and output node q + k where q = n_wires * (n_columns - 1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quantum import PureState, octant, plus_state


@dataclass(frozen=True)
class BrickworkGraph:
    n_wires: int
    n_columns: int
    edges: frozenset[tuple[int, int]]

    @property
    def num_nodes(self) -> int:
        return self.n_wires * self.n_columns

    @property
    def input_nodes(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_wires + 1))

    @property
    def output_nodes(self) -> tuple[int, ...]:
        q = self.n_wires * (self.n_columns - 1)
        return tuple(range(q + 1, q + self.n_wires + 1))

    @property
    def measured_nodes(self) -> tuple[int, ...]:
        """All non-output nodes, in label (= column-major measurement) order."""
        return tuple(range(1, self.n_wires * (self.n_columns - 1) + 1))

    def column_of(self, node: int) -> int:
        return (node - 1) // self.n_wires + 1

    def wire_of(self, node: int) -> int:
        return (node - 1) % self.n_wires + 1

    def node_at(self, wire: int, column: int) -> int:
        return (column - 1) * self.n_wires + wire

    @cached_property
    def _adjacency(self) -> dict[int, frozenset[int]]:
        adj: dict[int, set[int]] = {v: set() for v in range(1, self.num_nodes + 1)}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return {v: frozenset(nb) for v, nb in adj.items()}

    def neighbors(self, node: int) -> frozenset[int]:
        return self._adjacency[node]


def build_brickwork(n_wires: int, n_columns: int) -> BrickworkGraph:
    """Brickwork layout: horizontal rails plus brick rungs.

    Every node is joined to its horizontal successor. Vertical rungs sit in
    even columns; which wire pairs they join alternates every other brick,
    so column c rungs join wires (1,2), (3,4), ... when floor((c-2)/4) is
    even and (2,3), (4,5), ... when it is odd. n_wires must be even (the
    rung pattern needs it) and at least 2; n_columns >= 1, where a single
    column is the degenerate identity graph.
    """
    if n_wires < 2 or n_wires % 2:
        raise ValueError("n_wires must be even and >= 2")
    if n_columns < 1:
        raise ValueError("n_columns must be >= 1")
    edges: set[tuple[int, int]] = set()

    def node(wire: int, column: int) -> int:
        return (column - 1) * n_wires + wire

    for c in range(1, n_columns):
        for w in range(1, n_wires + 1):
            edges.add((node(w, c), node(w, c + 1)))
    for c in range(2, n_columns + 1, 2):
        first = 1 if ((c - 2) // 4) % 2 == 0 else 2
        for w in range(first, n_wires, 2):
            edges.add((node(w, c), node(w + 1, c)))
    return BrickworkGraph(n_wires, n_columns, frozenset(edges))


@dataclass(frozen=True)
class Flow:
    """Causal flow data: successor map and correction sets.

    f maps each measured node to its horizontal successor. s_x[j] and
    s_z[j] are the sets of measured nodes whose outcomes feed the X and Z
    corrections of node j: s_x[j] = {f^-1(j)} and s_z[j] = {i != j with j
    adjacent to f(i)}.
    """

    f: dict[int, int]
    f_inv: dict[int, int]
    order: tuple[int, ...]
    s_x: dict[int, frozenset[int]]
    s_z: dict[int, frozenset[int]]


def compute_flow(graph: BrickworkGraph) -> Flow:
    measured = graph.measured_nodes
    f = {j: j + graph.n_wires for j in measured}
    f_inv = {v: k for k, v in f.items()}
    s_x: dict[int, frozenset[int]] = {}
    s_z: dict[int, frozenset[int]] = {}
    for j in range(1, graph.num_nodes + 1):
        s_x[j] = frozenset({f_inv[j]} if j in f_inv else set())
        s_z[j] = frozenset(i for i in measured if i != j and j in graph.neighbors(f[i]))
    return Flow(f=f, f_inv=f_inv, order=measured, s_x=s_x, s_z=s_z)


def corrected_angle(phi: int, a_j: int, a_pred: int, s_x: int, s_z: int) -> int:
    """Adapt a pattern angle for earlier outcomes and the input flip bits.

    phi' = (-1)^(a_j xor s_x) * phi + 4 * s_z + 4 * a_pred (mod 8), where
    s_x and s_z are the parities of the node's X and Z correction sets,
    a_j is the node's own input flip and a_pred the flip of its flow
    predecessor (both zero for nodes that are not inputs / have none).
    """
    sign = -1 if (a_j ^ s_x) & 1 else 1
    return octant(sign * phi + 4 * (s_z & 1) + 4 * (a_pred & 1))


@dataclass(frozen=True)
class MeasurementPattern:
    """A brickwork graph plus one octant angle per measured node."""

    graph: BrickworkGraph
    angles: dict[int, int]

    def __post_init__(self):
        expected = set(self.graph.measured_nodes)
        got = set(self.angles)
        if got != expected:
            raise ValueError(f"angles must cover exactly the measured nodes; missing {expected - got}, extra {got - expected}")
        object.__setattr__(self, "angles", {j: octant(l) for j, l in self.angles.items()})

    def to_json(self) -> str:
        payload = {
            "n_wires": self.graph.n_wires,
            "n_columns": self.graph.n_columns,
            "angles": [{"node": j, "octant": self.angles[j]} for j in sorted(self.angles)],
        }
        return json.dumps(payload, indent=2)


def pattern_from_json(text: str) -> MeasurementPattern:
    payload = json.loads(text)
    graph = build_brickwork(int(payload["n_wires"]), int(payload["n_columns"]))
    angles = {int(e["node"]): octant(int(e["octant"])) for e in payload["angles"]}
    return MeasurementPattern(graph, angles)


def random_pattern(graph: BrickworkGraph, rng: np.random.Generator) -> MeasurementPattern:
    return MeasurementPattern(graph, {j: int(rng.integers(8)) for j in graph.measured_nodes})


def reference_execute(pattern: MeasurementPattern, input_state: PureState, rng: np.random.Generator) -> PureState:
    """Run a pattern directly, with corrections applied in the clear.

    input_state holds one qubit per wire (qubit k-1 is input node k) plus
    any number of trailing reference qubits that the graph never touches.
    Returns the output register: output nodes in label order, then the
    reference qubits. Outcome randomness only shuffles byproducts, so the
    returned state is the same (up to global phase) for every rng.
    """
    graph, angles = pattern.graph, pattern.angles
    flow = compute_flow(graph)
    n = graph.n_wires
    n_ref = input_state.num_qubits - n
    if n_ref < 0:
        raise ValueError("input register smaller than the number of wires")

    # Register layout: input qubits, reference qubits, then every prepared
    # node appended in label order. `pos` tracks each node's current index.
    state = input_state
    pos: dict[int, int] = {j: j - 1 for j in graph.input_nodes}
    ref_pos = list(range(n, n + n_ref))
    for j in range(n + 1, graph.num_nodes + 1):
        state = state.tensor(plus_state(0))
        pos[j] = state.num_qubits - 1
    for u, v in sorted(graph.edges):
        state = state.cz(pos[u], pos[v])

    outcomes: dict[int, int] = {}

    def parity(nodes: frozenset[int]) -> int:
        bit = 0
        for i in nodes:
            bit ^= outcomes[i]
        return bit

    for j in flow.order:
        delta = corrected_angle(angles[j], 0, 0, parity(flow.s_x[j]), parity(flow.s_z[j]))
        idx = pos[j]
        outcomes[j], state = state.measure_rotated(idx, delta, rng)
        pos = {v: (i if i < idx else i - 1) for v, i in pos.items() if v != j}
        ref_pos = [i if i < idx else i - 1 for i in ref_pos]

    for j in graph.output_nodes:
        if parity(flow.s_x[j]):
            state = state.x(pos[j])
        if parity(flow.s_z[j]):
            state = state.z(pos[j])

    return state.reorder([pos[j] for j in graph.output_nodes] + ref_pos)
