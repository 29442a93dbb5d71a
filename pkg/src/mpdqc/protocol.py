"""Full protocol runtime: parties, registers, messages, and the run driver.

Parties are the n clients ("client:1".."client:n"), the untrusted "server",
the trusted classical "oracle", and "environment" for reference qubits that
no party touches. All quantum state lives in one QuantumSystem that tracks
which party owns each qubit; sending a qubit is an ownership transfer, so a
sender structurally cannot keep a copy.

A run follows four phases in a fixed order: secret setup and preparation
(pads, test copies, verification, preparation chains), entangling, the
measurement rounds, and output delivery. Every classical message goes
through the Transcript, which is what the security harness inspects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .brickwork import MeasurementPattern, compute_flow
from .oracle import (
    OracleLedger,
    SecretShare,
    a_tag,
    r_tag,
    reconstruct,
    share_secret,
    theta_tag,
)
from .quantum import DensityMatrix, PureState, plus_state
from .rsp import aux_chain_steps, input_chain_steps, pad_input

VARIANTS = (
    "QubitTransfer",
    "ShareDistribution",
    "OutcomeVector",
    "DeltaAnnounce",
    "ResultBroadcast",
    "OutputQubit",
    "OutputKeys",
    "Abort",
)


@dataclass(frozen=True)
class Message:
    seq: int
    sender: str
    receiver: str
    variant: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "sender": self.sender, "receiver": self.receiver, "variant": self.variant, "payload": self.payload},
            sort_keys=True,
        )


class Transcript:
    """Ordered log of every classical message exchanged during a run."""

    def __init__(self):
        self.messages: list[Message] = []

    def record(self, sender: str, receiver: str, variant: str, payload: dict) -> Message:
        if variant not in VARIANTS:
            raise ValueError(f"unknown message variant {variant!r}")
        msg = Message(seq=len(self.messages), sender=sender, receiver=receiver, variant=variant, payload=payload)
        self.messages.append(msg)
        return msg

    def visible_to(self, parties: set[str]) -> list[Message]:
        """Messages a set of parties sees: sent, received, or broadcast."""
        out = []
        for m in self.messages:
            if m.sender in parties or m.receiver in parties or m.receiver == "all":
                out.append(m)
        return out

    def to_jsonl(self) -> str:
        return "\n".join(m.to_json() for m in self.messages) + ("\n" if self.messages else "")


def share_payload(share: SecretShare) -> dict:
    return {"owner": share.owner, "tag": list(share.tag), "value": share.value, "modulus": share.modulus}


class QuantumSystem:
    """All live qubits, split into independent components, with ownership.

    Components are tensor factors that never got entangled with each other;
    two-qubit gates merge components on demand. Measuring a qubit removes
    it. Labels are stable strings; positions inside components are internal.
    """

    def __init__(self):
        self._states: list[PureState | None] = []
        self._labels: list[list[str]] = []
        self._home: dict[str, int] = {}
        self.owner: dict[str, str] = {}

    def add_register(self, state: PureState, labels: list[str], owners: list[str]) -> None:
        if state.num_qubits != len(labels) or len(labels) != len(owners):
            raise ValueError("labels and owners must match the register size")
        for lab in labels:
            if lab in self._home:
                raise ValueError(f"label {lab!r} already exists")
        idx = len(self._states)
        self._states.append(state)
        self._labels.append(list(labels))
        for lab, who in zip(labels, owners):
            self._home[lab] = idx
            self.owner[lab] = who

    def labels_of(self, party: str) -> tuple[str, ...]:
        return tuple(lab for lab, who in self.owner.items() if who == party)

    def transfer(self, label: str, new_owner: str) -> None:
        if label not in self.owner:
            raise KeyError(f"no live qubit {label!r}")
        self.owner[label] = new_owner

    def _loc(self, label: str) -> tuple[int, int]:
        comp = self._home[label]
        return comp, self._labels[comp].index(label)

    def _merge(self, a: str, b: str) -> None:
        ca, cb = self._home[a], self._home[b]
        if ca == cb:
            return
        self._states[ca] = self._states[ca].tensor(self._states[cb])
        for lab in self._labels[cb]:
            self._home[lab] = ca
        self._labels[ca].extend(self._labels[cb])
        self._states[cb] = None
        self._labels[cb] = []

    def apply_x(self, label: str) -> None:
        c, q = self._loc(label)
        self._states[c] = self._states[c].x(q)

    def apply_z(self, label: str) -> None:
        c, q = self._loc(label)
        self._states[c] = self._states[c].z(q)

    def apply_h(self, label: str) -> None:
        c, q = self._loc(label)
        self._states[c] = self._states[c].h(q)

    def apply_z_rot(self, label: str, theta: int) -> None:
        c, q = self._loc(label)
        self._states[c] = self._states[c].z_rot(q, theta)

    def apply_cz(self, a: str, b: str) -> None:
        self._merge(a, b)
        c, qa = self._loc(a)
        _, qb = self._loc(b)
        self._states[c] = self._states[c].cz(qa, qb)

    def apply_cnot(self, control: str, target: str) -> None:
        self._merge(control, target)
        c, qc = self._loc(control)
        _, qt = self._loc(target)
        self._states[c] = self._states[c].cnot(qc, qt)

    def _drop(self, label: str) -> None:
        comp, q = self._loc(label)
        self._labels[comp].pop(q)
        del self._home[label]
        del self.owner[label]
        if not self._labels[comp]:
            self._states[comp] = None

    def measure_rotated(self, label: str, delta: int, rng: np.random.Generator) -> int:
        c, q = self._loc(label)
        outcome, self._states[c] = self._states[c].measure_rotated(q, delta, rng)
        self._drop(label)
        return outcome

    def measure_computational(self, label: str, rng: np.random.Generator) -> int:
        c, q = self._loc(label)
        outcome, self._states[c] = self._states[c].measure_computational(q, rng)
        self._drop(label)
        return outcome

    def state_of(self, labels: list[str]) -> PureState:
        """Joint pure state of exactly these qubits, in the order given.

        The involved components must not contain any other live qubits;
        use density_of when they might be entangled with the rest.
        """
        comps: list[int] = []
        for lab in labels:
            c = self._home[lab]
            if c not in comps:
                comps.append(c)
        covered = [lab for c in comps for lab in self._labels[c]]
        if sorted(covered) != sorted(labels):
            raise ValueError("requested qubits are entangled with others")
        state = self._states[comps[0]]
        order = list(self._labels[comps[0]])
        for c in comps[1:]:
            state = state.tensor(self._states[c])
            order.extend(self._labels[c])
        return state.reorder([order.index(lab) for lab in labels])

    def density_of(self, labels: list[str]) -> DensityMatrix:
        """Reduced state of these qubits (order given), tracing out the rest."""
        comps: list[int] = []
        for lab in labels:
            c = self._home[lab]
            if c not in comps:
                comps.append(c)
        blocks: list[DensityMatrix] = []
        order: list[str] = []
        for c in comps:
            keep = [q for q, lab in enumerate(self._labels[c]) if lab in labels]
            order.extend(lab for lab in self._labels[c] if lab in labels)
            blocks.append(self._states[c].density().partial_trace(keep))
        rho = blocks[0].matrix
        for blk in blocks[1:]:
            rho = np.kron(rho, blk.matrix)
        joint = DensityMatrix(rho)
        perm = [order.index(lab) for lab in labels]
        n = len(labels)
        full = joint.matrix.reshape([2] * (2 * n))
        full = np.transpose(full, perm + [n + p for p in perm])
        return DensityMatrix(full.reshape(2 ** n, 2 ** n))


@dataclass
class ClientSecrets:
    a: int
    pad_theta: int
    copy_angles: dict[tuple[int, int], int] = field(default_factory=dict)
    r: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class AbortInfo:
    stage: str
    node: int
    client: int
    reason: str


class ServerHandle:
    """The adversary's interface: act on server-owned qubits, read its log."""

    def __init__(self, system: QuantumSystem, node_label: dict[int, str], classical: dict):
        self._system = system
        self._node_label = node_label
        self.classical = classical

    def _label(self, node: int) -> str:
        lab = self._node_label[node]
        if self._system.owner.get(lab) != "server":
            raise PermissionError(f"server does not hold node {node}")
        return lab

    def x(self, node: int) -> None:
        self._system.apply_x(self._label(node))

    def z(self, node: int) -> None:
        self._system.apply_z(self._label(node))

    def h(self, node: int) -> None:
        self._system.apply_h(self._label(node))

    def z_rot(self, node: int, theta: int) -> None:
        self._system.apply_z_rot(self._label(node), theta)

    def cz(self, a: int, b: int) -> None:
        self._system.apply_cz(self._label(a), self._label(b))

    def density(self, nodes: list[int]) -> DensityMatrix:
        """Reduced state of the server's own qubits; its register, its right."""
        return self._system.density_of([self._label(j) for j in nodes])


@dataclass
class ServerStrategy:
    """Optional deviations a malicious-but-structured server can apply."""

    after_entangle: Callable[[ServerHandle], None] | None = None
    before_measurement: Callable[[ServerHandle, int], None] | None = None
    before_output_send: Callable[[ServerHandle], None] | None = None


@dataclass
class ProtocolRun:
    pattern: MeasurementPattern
    n_ref: int
    transcript: Transcript
    ledger: OracleLedger
    system: QuantumSystem
    chain_t: dict[int, dict[int, int]]
    delta: dict[int, int]
    b: dict[int, int]
    keys: dict[int, tuple[int, int]]
    client_secrets: dict[int, ClientSecrets]
    abort: AbortInfo | None
    output_state: PureState | None

    @property
    def aborted(self) -> bool:
        return self.abort is not None


def _client(k: int) -> str:
    return f"client:{k}"


def run_full_protocol(
    pattern: MeasurementPattern,
    input_state: PureState,
    rng: np.random.Generator,
    *,
    m_copies: int = 10,
    debug_secrets: bool = False,
    r_override: dict[tuple[int, int], int] | None = None,
    server_strategy: ServerStrategy | None = None,
) -> ProtocolRun:
    """Execute one full run and return everything each party ended up with.

    input_state holds client k's input qubit at position k-1 plus optional
    trailing reference qubits that stay with the environment. m_copies is
    the batch size for the copy-based honesty test; m_copies=1 skips the
    test entirely (every contribution survives), which the equivalence
    harness uses. r_override forces chosen masking bits (node, client) ->
    bit without disturbing the rng stream, for pathwise comparisons.
    """
    graph = pattern.graph
    n = graph.n_wires
    flow = compute_flow(graph)
    if n < 2:
        raise ValueError("protocol needs at least 2 clients")
    if m_copies < 1:
        raise ValueError("m_copies must be >= 1")
    n_ref = input_state.num_qubits - n
    if n_ref < 0:
        raise ValueError(f"input register has {input_state.num_qubits} qubits but the graph has {n} wires")

    system = QuantumSystem()
    in_labels = [f"in:{k}" for k in range(1, n + 1)]
    ref_labels = [f"ref:{i}" for i in range(1, n_ref + 1)]
    system.add_register(input_state, in_labels + ref_labels, [_client(k) for k in range(1, n + 1)] + ["environment"] * n_ref)

    ledger = OracleLedger(pattern, n)
    transcript = Transcript()
    strategy = server_strategy or ServerStrategy()

    def contributors(node: int) -> list[int]:
        # the input's owner contributes the padded input itself, not copies
        return [k for k in range(1, n + 1) if not (node in graph.input_nodes and k == node)]

    # ----------------------------------------------------------- secrets
    secrets: dict[int, ClientSecrets] = {}
    for k in range(1, n + 1):
        secrets[k] = ClientSecrets(a=int(rng.integers(2)), pad_theta=int(rng.integers(8)))
    for j in graph.measured_nodes:
        for k in contributors(j):
            for i in range(m_copies):
                secrets[k].copy_angles[(j, i)] = int(rng.integers(8))

    def distribute_and_submit(owner: int, shares: list[SecretShare], context: dict) -> None:
        """Owner hands each client its piece; every piece then goes to the oracle."""
        for piece in shares:
            if piece.owner != owner:
                transcript.record(_client(owner), _client(piece.owner), "ShareDistribution", {**context, "share": share_payload(piece)})
        for piece in shares:
            transcript.record(_client(piece.owner), "oracle", "ShareDistribution", {**context, "share": share_payload(piece)})
            ledger.register_share(piece)

    for k in range(1, n + 1):
        distribute_and_submit(k, share_secret(secrets[k].a, n, 2, rng, a_tag(k)), {"kind": "pad-flip", "client": k})

    # ------------------------------------------------------- preparation
    node_label: dict[int, str] = {}
    pending_shares: dict[tuple[int, int, int], list[SecretShare]] = {}
    abort: AbortInfo | None = None

    def prepare_node(j: int) -> AbortInfo | None:
        is_input = j in graph.input_nodes
        survivor_label: dict[int, str] = {}
        for k in contributors(j):
            copy_shares = [share_secret(secrets[k].copy_angles[(j, i)], n, 8, rng, theta_tag(j, k, i)) for i in range(m_copies)]
            for i, shares in enumerate(copy_shares):
                pending_shares[(j, k, i)] = shares
                for piece in shares:
                    if piece.owner != k:
                        transcript.record(_client(k), _client(piece.owner), "ShareDistribution", {"kind": "copy-angle", "node": j, "contributor": k, "copy": i, "share": share_payload(piece)})
            for i in range(m_copies):
                lab = f"copy:{j}:{k}:{i}"
                system.add_register(plus_state(secrets[k].copy_angles[(j, i)]), [lab], [_client(k)])
                system.transfer(lab, "server")
                transcript.record(_client(k), "server", "QubitTransfer", _qubit_payload(system, lab, {"node": j, "contributor": k, "copy": i, "purpose": "test-copy"}, debug_secrets))
            # Copy-based honesty test: one uniformly chosen survivor stays
            # blind, the rest are opened and measured in their declared bases.
            survivor = int(rng.integers(m_copies))
            transcript.record("server", "all", "OutcomeVector", {"kind": "survivor", "node": j, "contributor": k, "survivor": survivor})
            outcomes: dict[int, int] = {}
            for i in range(m_copies):
                if i == survivor:
                    continue
                for piece in pending_shares[(j, k, i)]:
                    transcript.record(_client(piece.owner), "server", "ShareDistribution", {"kind": "opened-angle", "node": j, "contributor": k, "copy": i, "share": share_payload(piece)})
                theta_i = reconstruct(pending_shares[(j, k, i)])
                outcomes[i] = system.measure_rotated(f"copy:{j}:{k}:{i}", theta_i, rng)
            transcript.record("server", "all", "OutcomeVector", {"kind": "verification", "node": j, "contributor": k, "outcomes": sorted(outcomes.items())})
            if any(v != 0 for v in outcomes.values()):
                transcript.record("server", "all", "Abort", {"stage": "verification", "node": j, "client": k, "reason": "test copy failed its declared basis"})
                return AbortInfo(stage="verification", node=j, client=k, reason="test copy failed its declared basis")
            for piece in pending_shares[(j, k, survivor)]:
                transcript.record(_client(piece.owner), "oracle", "ShareDistribution", {"kind": "survivor-angle", "node": j, "contributor": k, "copy": survivor, "share": share_payload(piece)})
                ledger.register_share(piece)
            survivor_label[k] = f"copy:{j}:{k}:{survivor}"

        if is_input:
            # The owner pads its input in place and hands the qubit over.
            own = secrets[j]
            system.apply_z_rot(f"in:{j}", own.pad_theta)
            if own.a:
                system.apply_x(f"in:{j}")
            for piece in share_secret(own.pad_theta, n, 8, rng, theta_tag(j, j, 0)):
                if piece.owner != j:
                    transcript.record(_client(j), _client(piece.owner), "ShareDistribution", {"kind": "pad-angle", "node": j, "share": share_payload(piece)})
                transcript.record(_client(piece.owner), "oracle", "ShareDistribution", {"kind": "pad-angle", "node": j, "share": share_payload(piece)})
                ledger.register_share(piece)
            system.transfer(f"in:{j}", "server")
            transcript.record(_client(j), "server", "QubitTransfer", {"node": j, "purpose": "padded-input"})
            registers = {k: (f"in:{j}" if k == j else survivor_label[k]) for k in range(1, n + 1)}
            steps = input_chain_steps(n, j)
        else:
            registers = dict(survivor_label)
            steps = aux_chain_steps(n)

        t: dict[int, int] = {}
        for target, control in steps:
            system.apply_cnot(registers[control], registers[target])
            t[target] = system.measure_computational(registers[target], rng)
        transcript.record("server", "all", "OutcomeVector", {"kind": "chain", "node": j, "t": sorted(t.items())})
        ledger.register_chain(j, t)
        node_label[j] = registers[j if is_input else n]
        return None

    for j in graph.measured_nodes:
        abort = prepare_node(j)
        if abort is not None:
            break
    if abort is None:
        for j in graph.output_nodes:
            if j in graph.input_nodes:
                # degenerate single-column graph: the output is the input,
                # which never leaves its client
                node_label[j] = f"in:{j}"
            else:
                lab = f"node:{j}"
                system.add_register(plus_state(0), [lab], ["server"])
                node_label[j] = lab

    if abort is not None:
        return ProtocolRun(pattern, n_ref, transcript, ledger, system, dict(ledger.chain_t), {}, {}, {}, secrets, abort, None)

    # -------------------------------------------------------- entangling
    for u, v in sorted(graph.edges):
        system.apply_cz(node_label[u], node_label[v])
    classical_log: dict = {"t": dict(ledger.chain_t), "delta": {}, "b": {}}
    handle = ServerHandle(system, node_label, classical_log)
    if strategy.after_entangle:
        strategy.after_entangle(handle)

    # -------------------------------------------------- measurement rounds
    deltas: dict[int, int] = {}
    outcomes_b: dict[int, int] = {}
    for j in flow.order:
        for k in range(1, n + 1):
            r_bit = int(rng.integers(2))
            if r_override is not None:
                r_bit = r_override.get((j, k), r_bit)
            secrets[k].r[j] = r_bit
            distribute_and_submit(k, share_secret(r_bit, n, 2, rng, r_tag(j, k)), {"kind": "mask-bit", "node": j, "client": k})
        delta_j = ledger.delta(j)
        deltas[j] = delta_j
        classical_log["delta"][j] = delta_j
        transcript.record("oracle", "server", "DeltaAnnounce", {"node": j, "delta": delta_j})
        if strategy.before_measurement:
            strategy.before_measurement(handle, j)
        b_j = system.measure_rotated(node_label[j], delta_j, rng)
        outcomes_b[j] = b_j
        classical_log["b"][j] = b_j
        transcript.record("server", "all", "ResultBroadcast", {"node": j, "b": b_j})
        ledger.register_outcome(j, b_j)

    # ------------------------------------------------------------ outputs
    if strategy.before_output_send:
        strategy.before_output_send(handle)
    keys: dict[int, tuple[int, int]] = {}
    for j in graph.output_nodes:
        c = graph.wire_of(j)
        if j in graph.input_nodes:
            keys[j] = (0, 0)
            continue
        system.transfer(node_label[j], _client(c))
        transcript.record("server", _client(c), "OutputQubit", _qubit_payload(system, node_label[j], {"node": j}, debug_secrets))
        s_x, s_z = ledger.output_keys(j)
        keys[j] = (s_x, s_z)
        transcript.record("oracle", _client(c), "OutputKeys", {"node": j, "s_x": s_x, "s_z": s_z})
        if s_x:
            system.apply_x(node_label[j])
        if s_z:
            system.apply_z(node_label[j])

    output_state = system.state_of([node_label[j] for j in graph.output_nodes] + ref_labels)
    return ProtocolRun(pattern, n_ref, transcript, ledger, system, dict(ledger.chain_t), deltas, outcomes_b, keys, secrets, None, output_state)


def _qubit_payload(system: QuantumSystem, label: str, base: dict, debug_secrets: bool) -> dict:
    """QubitTransfer payloads carry amplitudes only in trusted-debug mode."""
    payload = {**base, "label": label}
    if debug_secrets:
        comp = system._home.get(label)
        if comp is not None and len(system._labels[comp]) == 1:
            amps = system._states[comp].amps
            payload["amplitudes"] = [[float(z.real), float(z.imag)] for z in amps]
        else:
            payload["amplitudes"] = "entangled"
    return payload
