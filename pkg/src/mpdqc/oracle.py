"""Trusted classical oracle: secret sharing, angle computation, honesty checks.

Every classical secret in the protocol (pad flips a_k, contribution angles
theta_j^k, masking bits r_j^k) is additively shared n-of-n among the
clients; the oracle only ever sees shares and reconstructs internally.
Octant secrets live mod 8, bit secrets mod 2, and the two domains never
mix: a bit enters an angle only as 4 * bit.

The ledger is the oracle's working memory for one protocol run. It knows
the measurement pattern (the computation is not hidden from the oracle,
only from the server), receives shares and measurement outcomes as the run
progresses, and answers exactly two kinds of questions: the measurement
angle delta_j to announce to the server, and the final output keys per
output node. Measured outcomes are append-only; nothing can be rewritten
after the fact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .brickwork import Flow, MeasurementPattern, compute_flow, corrected_angle
from .quantum import PureState, flip, octant
from .rsp import theta_aux, theta_input

Tag = tuple


@dataclass(frozen=True)
class SecretShare:
    """One additive share of a secret. `owner` is the client holding this piece."""

    owner: int
    tag: Tag
    value: int
    modulus: int

    def __post_init__(self):
        if self.modulus not in (2, 8):
            raise ValueError("share modulus must be 2 (bits) or 8 (octants)")
        object.__setattr__(self, "value", int(self.value) % self.modulus)
        object.__setattr__(self, "tag", tuple(self.tag))


def share_secret(value: int, n: int, modulus: int, rng: np.random.Generator, tag: Tag = ()) -> list[SecretShare]:
    """Split a secret into n additive shares mod `modulus`, one per client."""
    if n < 1:
        raise ValueError("need at least one share")
    pieces = [int(rng.integers(modulus)) for _ in range(n - 1)]
    pieces.append((value - sum(pieces)) % modulus)
    return [SecretShare(owner=k + 1, tag=tag, value=v, modulus=modulus) for k, v in enumerate(pieces)]


def reconstruct(shares: Sequence[SecretShare]) -> int:
    """Recombine a complete share set. Raises on gaps, duplicates, or mixed tags."""
    if not shares:
        raise ValueError("no shares")
    tag, modulus = shares[0].tag, shares[0].modulus
    owners = sorted(s.owner for s in shares)
    if any(s.tag != tag or s.modulus != modulus for s in shares):
        raise ValueError("shares mix different secrets")
    if owners != list(range(1, len(shares) + 1)):
        raise ValueError(f"incomplete or duplicated share set (owners {owners})")
    return sum(s.value for s in shares) % modulus


@dataclass
class VerificationResult:
    client: int
    accepted: bool
    survivor: int
    outcomes: dict[int, int]
    tested_angles: dict[int, int]


def verify_client(client: int, angle_shares: Sequence[Sequence[SecretShare]], qubits: Sequence[PureState], rng: np.random.Generator) -> VerificationResult:
    """Test a batch of declared-angle copies from one client.

    The server holds m single-qubit copies; the declared angle of each is
    reconstructed from its share set. One uniformly chosen survivor is left
    untouched; every other copy is measured in the basis its declaration
    promises, where an honest copy answers 0 with certainty. Any outcome 1
    rejects the client. The survivor's index is returned so the caller can
    feed that copy (and its still-secret shares) onward.
    """
    m = len(qubits)
    if m != len(angle_shares):
        raise ValueError("share sets and qubits must pair up")
    if m < 2:
        raise ValueError("need at least 2 copies to test any")
    survivor = int(rng.integers(m))
    outcomes: dict[int, int] = {}
    tested: dict[int, int] = {}
    accepted = True
    for i in range(m):
        if i == survivor:
            continue
        theta = reconstruct(angle_shares[i])
        tested[i] = theta
        outcome, _ = qubits[i].measure_rotated(0, theta, rng)
        outcomes[i] = outcome
        if outcome != 0:
            accepted = False
    return VerificationResult(client=client, accepted=accepted, survivor=survivor, outcomes=outcomes, tested_angles=tested)


def theta_tag(node: int, client: int, copy: int = 0) -> Tag:
    return ("theta", node, client, copy)


def r_tag(node: int, client: int) -> Tag:
    return ("r", node, client)


def a_tag(client: int) -> Tag:
    return ("a", client)


@dataclass
class OracleLedger:
    """The oracle's view of one run: registered shares, outcomes, chain results."""

    pattern: MeasurementPattern
    n_clients: int
    flow: Flow = field(init=False)
    shares: dict[Tag, dict[int, SecretShare]] = field(default_factory=dict)
    outcomes: dict[int, int] = field(default_factory=dict)
    chain_t: dict[int, dict[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_clients != self.pattern.graph.n_wires:
            raise ValueError("one client per wire")
        self.flow = compute_flow(self.pattern.graph)

    # ------------------------------------------------------------ intake

    def register_share(self, share: SecretShare) -> None:
        slot = self.shares.setdefault(share.tag, {})
        if share.owner in slot:
            raise ValueError(f"duplicate share from client {share.owner} for {share.tag}")
        slot[share.owner] = share

    def register_chain(self, node: int, t: dict[int, int]) -> None:
        if node in self.chain_t:
            raise ValueError(f"chain outcomes for node {node} already recorded")
        self.chain_t[node] = {int(k): int(v) & 1 for k, v in t.items()}

    def register_outcome(self, node: int, b: int) -> None:
        if node in self.outcomes:
            raise ValueError(f"outcome for node {node} already recorded")
        self.outcomes[node] = int(b) & 1

    # ----------------------------------------------------- reconstruction

    def _secret(self, tag: Tag) -> int:
        slot = self.shares.get(tuple(tag))
        if slot is None or len(slot) != self.n_clients:
            raise ValueError(f"share set for {tag} incomplete")
        return reconstruct(list(slot.values()))

    def a_bit(self, client: int) -> int:
        return self._secret(a_tag(client))

    def node_flip(self, node: int) -> int:
        """The pad flip bit of a node: a_j for inputs, 0 elsewhere."""
        return self.a_bit(node) if node in self.pattern.graph.input_nodes else 0

    def _contributed_theta(self, node: int, client: int) -> int:
        """The one angle from (node, client) whose shares were submitted.

        Clients share many candidate copies of an angle but submit only the
        shares of the copy that survived verification, so exactly one
        complete set per (node, client) may be present.
        """
        prefix = ("theta", node, client)
        tags = [tag for tag in self.shares if tag[:3] == prefix]
        if len(tags) != 1:
            raise ValueError(f"expected one submitted angle for node {node} client {client}, found {len(tags)}")
        return self._secret(tags[0])

    def node_theta(self, node: int) -> int:
        """Effective secret angle of a node's prepared qubit, from shares and t."""
        n = self.n_clients
        shares = [self._contributed_theta(node, k) for k in range(1, n + 1)]
        t = self.chain_t[node]
        if node in self.pattern.graph.input_nodes:
            return theta_input(shares, node, t, self.a_bit(node))
        return theta_aux(shares, t)

    def node_r(self, node: int) -> int:
        bit = 0
        for k in range(1, self.n_clients + 1):
            bit ^= self._secret(r_tag(node, k))
        return bit

    def _s(self, node: int) -> int:
        """Corrected outcome s_i = b_i xor r_i of a measured node."""
        return self.outcomes[node] ^ self.node_r(node)

    def _parities(self, node: int) -> tuple[int, int]:
        s_x = 0
        for i in self.flow.s_x[node]:
            s_x ^= self._s(i)
        s_z = 0
        for i in self.flow.s_z[node]:
            s_z ^= self._s(i)
        return s_x, s_z

    def _pred_flip(self, node: int) -> int:
        pred = self.flow.f_inv.get(node)
        return self.node_flip(pred) if pred is not None else 0

    # ------------------------------------------------------------ answers

    def corrected_pattern_angle(self, node: int) -> int:
        s_x, s_z = self._parities(node)
        return corrected_angle(self.pattern.angles[node], self.node_flip(node), self._pred_flip(node), s_x, s_z)

    def delta(self, node: int) -> int:
        """The blind measurement angle announced to the server for one node.

        delta = phi' + 4 r + (-1)^a theta. The sign on theta matters: the
        prepared qubit is padded by X^a Z(theta) with the X outermost, and
        commuting the measurement past that X flip negates the Z angle it
        has to compensate.
        """
        a = self.node_flip(node)
        return octant(self.corrected_pattern_angle(node) + 4 * self.node_r(node) + flip(self.node_theta(node), a))

    def output_keys(self, node: int) -> tuple[int, int]:
        """(s_x, s_z) one-time-pad keys for an output node.

        The Z key folds in the pad flip of the output's flow predecessor:
        that X sits next to the predecessor's measurement and propagates to
        the output as a Z byproduct.
        """
        if node not in self.pattern.graph.output_nodes:
            raise ValueError(f"node {node} is not an output")
        s_x, s_z = self._parities(node)
        return s_x, s_z ^ self._pred_flip(node)

    def dump_secrets(self) -> dict:
        """Full reconstruction for trusted-debug output. Never reaches the server."""
        graph = self.pattern.graph
        out: dict = {"a": {}, "theta": {}, "r": {}, "delta": {}}
        for k in range(1, self.n_clients + 1):
            out["a"][k] = self.a_bit(k)
        for j in graph.measured_nodes:
            out["theta"][j] = self.node_theta(j)
            out["r"][j] = self.node_r(j)
            if j in self.outcomes:
                out["delta"][j] = self.delta(j)
        return out
