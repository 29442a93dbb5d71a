"""Empirical security harness.

Three kinds of evidence about the protocol, all on desk-scale instances:

- blindness: the server's complete view (its quantum registers plus every
  classical message it saw) is enumerated exactly, averaging over all
  client secrets, and compared between two scenarios as a trace distance.
- server-side simulation: the protocol is rewritten in steps (client
  rotations pushed through teleportation, then delayed past the server's
  actions, then split into a secret-free simulator plus an ideal resource)
  and each rewrite is checked to produce the same observable distributions
  and the same outputs.
- client-side simulation: a coalition of clients interacts with a
  simulator that knows nothing about the honest parties beyond the ideal
  resource's output, and the coalition's view is compared with a real run.

The exact view enumeration works with effective per-node secrets: each
prepared node carries one uniform pad angle theta, one uniform mask bit r,
and (for inputs) one uniform flip bit a, regardless of how many clients
contributed. The chain outcomes t and the honesty-test traffic (opened
uniform angles, outcome-0 measurements, survivor indices) are distributed
identically in every scenario and independently of the effective secrets,
so they drop out of every view distance; the preparation-equivalence tests
pin down exactly this reduction.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .brickwork import MeasurementPattern, compute_flow, corrected_angle, reference_execute
from .oracle import reconstruct, share_secret, verify_client
from .protocol import (
    ProtocolRun,
    QuantumSystem,
    ServerHandle,
    ServerStrategy,
    Transcript,
    run_full_protocol,
    share_payload,
)
from .quantum import PureState, flip, octant, plus_state, weighted_trace_norm
from .rsp import aux_chain_steps, input_chain_steps, theta_aux, theta_input

# ----------------------------------------------------------------------
# exact server view and blindness
# ----------------------------------------------------------------------

EXACT_VIEW_BUDGET = 2 ** 21


def exact_server_views(pattern: MeasurementPattern, input_state: PureState) -> dict[str, dict[tuple, np.ndarray]]:
    """Enumerate the server's averaged view at every checkpoint.

    Returns checkpoint -> classical label -> subnormalized density matrix
    of the server's remaining register (node qubits in label order). The
    label is the tuple of (delta, b) pairs announced so far; checkpoint
    "prepared" is right after entangling, "round:i" after the i-th
    measurement, "delivered" after the outputs left the server (classical
    label only, represented by 1x1 weight matrices).
    """
    graph, angles = pattern.graph, pattern.angles
    flow = compute_flow(graph)
    n = graph.n_wires
    measured = flow.order
    if not measured:
        raise ValueError("nothing is measured; the server view is empty")
    n_ref = input_state.num_qubits - n
    if n_ref < 0:
        raise ValueError("input register smaller than the number of wires")

    per_node = [(16 if j in graph.input_nodes else 8) * 2 for j in measured]
    cost = 2 ** len(measured)
    for c in per_node:
        cost *= c
    if cost > EXACT_VIEW_BUDGET:
        raise ValueError(f"exact enumeration needs {cost} branches, over the budget of {EXACT_VIEW_BUDGET}")

    options = []
    for j in measured:
        a_range = (0, 1) if j in graph.input_nodes else (0,)
        options.append([(theta, r, a) for theta in range(8) for r in (0, 1) for a in a_range])
    total = 1.0
    for opt in options:
        total *= len(opt)

    views: dict[str, dict[tuple, np.ndarray]] = {"prepared": {}}
    for i in range(1, len(measured) + 1):
        views[f"round:{i}"] = {}
    views["delivered"] = {}

    def accumulate(checkpoint: str, label: tuple, matrix: np.ndarray) -> None:
        bucket = views[checkpoint]
        if label in bucket:
            bucket[label] = bucket[label] + matrix
        else:
            bucket[label] = matrix

    for combo in product(*options):
        secret = dict(zip(measured, combo))
        weight = 1.0 / total

        state = input_state
        pos = {j: j - 1 for j in graph.input_nodes}
        ref_positions = list(range(n, n + n_ref))
        for j in range(n + 1, graph.num_nodes + 1):
            theta_j = secret[j][0] if j in secret else 0
            state = state.tensor(plus_state(theta_j))
            pos[j] = state.num_qubits - 1
        for j in graph.input_nodes:
            theta_j, _, a_j = secret[j]
            state = state.z_rot(pos[j], theta_j)
            if a_j:
                state = state.x(pos[j])
        for u, v in sorted(graph.edges):
            state = state.cz(pos[u], pos[v])

        node_positions = [pos[j] for j in range(1, graph.num_nodes + 1)]
        accumulate("prepared", (), weight * _reduced(state, node_positions))

        def a_of(j: int) -> int:
            return secret[j][2] if j in graph.input_nodes else 0

        def walk(state: PureState, pos: dict[int, int], idx: int, label: tuple, w: float, s_bits: dict[int, int]) -> None:
            if idx == len(measured):
                accumulate("delivered", label, np.array([[w]], dtype=complex))
                return
            j = measured[idx]
            theta_j, r_j, a_j = secret[j]
            s_x = 0
            for i in flow.s_x[j]:
                s_x ^= s_bits[i]
            s_z = 0
            for i in flow.s_z[j]:
                s_z ^= s_bits[i]
            pred = flow.f_inv.get(j)
            phi_c = corrected_angle(angles[j], a_j, a_of(pred) if pred is not None else 0, s_x, s_z)
            delta_j = octant(phi_c + 4 * r_j + flip(theta_j, a_j))
            q = pos[j]
            for b in (0, 1):
                p_branch, post = state.project_rotated(q, delta_j, b)
                if p_branch < 1e-14:
                    continue
                new_pos = {v: (i if i < q else i - 1) for v, i in pos.items() if v != j}
                new_label = label + ((delta_j, b),)
                remaining = [new_pos[v] for v in sorted(new_pos)]
                accumulate(f"round:{idx + 1}", new_label, w * p_branch * _reduced(post, remaining))
                walk(post, new_pos, idx + 1, new_label, w * p_branch, {**s_bits, j: b ^ r_j})

        walk(state, pos, 0, (), weight, {})

    return views


def _reduced(state: PureState, keep_positions: list[int]) -> np.ndarray:
    """Density matrix of the listed qubits (ascending positions), rest traced out."""
    if not keep_positions:
        return np.array([[1.0]], dtype=complex)
    return state.density().partial_trace(keep_positions).matrix


def view_distance(a: dict[tuple, np.ndarray], b: dict[tuple, np.ndarray]) -> float:
    """Trace distance between two labeled view ensembles at one checkpoint."""
    total = 0.0
    for label in set(a) | set(b):
        ma = a.get(label)
        mb = b.get(label)
        if ma is None:
            ma = np.zeros_like(mb)
        if mb is None:
            mb = np.zeros_like(ma)
        total += weighted_trace_norm(ma, mb)
    return total


def blindness_check(
    pattern_a: MeasurementPattern,
    input_a: PureState,
    pattern_b: MeasurementPattern,
    input_b: PureState,
) -> dict[str, float]:
    """Exact view distance per checkpoint between two scenarios.

    The scenarios must share the public interface: graph dimensions and
    input register size. Everything else (inputs, pattern angles) may
    differ; blindness means every returned distance is numerically zero.
    """
    ga, gb = pattern_a.graph, pattern_b.graph
    if (ga.n_wires, ga.n_columns) != (gb.n_wires, gb.n_columns):
        raise ValueError("scenarios expose different graph dimensions to the server")
    if input_a.num_qubits != input_b.num_qubits:
        raise ValueError("scenarios expose different input register sizes")
    va = exact_server_views(pattern_a, input_a)
    vb = exact_server_views(pattern_b, input_b)
    return {cp: view_distance(va[cp], vb[cp]) for cp in va}


def sampled_prepared_density(
    pattern: MeasurementPattern,
    input_state: PureState,
    trials: int,
    rng: np.random.Generator,
    m_copies: int = 2,
) -> np.ndarray:
    """Monte-Carlo estimate of the server's averaged post-entangling state.

    Runs the full physical protocol (chains, honesty tests and all), so it
    cross-checks the effective-secret reduction used by the exact views.
    """
    graph = pattern.graph
    nodes = list(range(1, graph.num_nodes + 1))
    acc = np.zeros((2 ** len(nodes), 2 ** len(nodes)), dtype=complex)

    def capture(handle) -> None:
        acc.__iadd__(handle.density(nodes).matrix)

    strategy = ServerStrategy(after_entangle=capture)
    for _ in range(trials):
        run = run_full_protocol(pattern, input_state, rng, m_copies=m_copies, server_strategy=strategy)
        if run.aborted:
            raise RuntimeError("honest run aborted")
    return acc / trials


# ----------------------------------------------------------------------
# intermediate protocol versions and the server-side simulator
# ----------------------------------------------------------------------


@dataclass
class IntermediateRun:
    version: str
    chain_t: dict[int, dict[int, int]]
    delta: dict[int, int]
    b: dict[int, int]
    keys: dict[int, tuple[int, int]]
    output_state: PureState
    n_ref: int


def run_intermediate_protocol(
    pattern: MeasurementPattern,
    input_state: PureState,
    rng: np.random.Generator,
    version: str,
    server_strategy: ServerStrategy | None = None,
) -> IntermediateRun:
    """Run one of the rewritten protocol versions.

    "teleport": every client contribution is delivered as an EPR half; the
    retained halves are rotated and measured during preparation, so the
    sent halves collapse to exactly the states the base protocol prepares
    (with the mask bits absorbed into the effective angles).

    "delayed": the retained halves stay untouched until after the server
    has measured; the announced angles are then fresh uniform octants, and
    the clients solve for the one rotation angle that makes their delayed
    measurements consistent with what the server already did.

    "simulator-resource": the delayed version with the actors split: the
    party facing the server uses no secret at all (EPR halves, uniform
    angles), and every secret-dependent step runs afterwards inside an
    ideal resource that also decrypts the outputs.
    """
    if version not in ("teleport", "delayed", "simulator-resource"):
        raise ValueError(f"unknown version {version!r}")
    delayed = version != "teleport"
    a_at_end = version == "simulator-resource"

    graph, angles = pattern.graph, pattern.angles
    flow = compute_flow(graph)
    n = graph.n_wires
    measured = flow.order
    n_ref = input_state.num_qubits - n
    if n_ref < 0:
        raise ValueError("input register smaller than the number of wires")
    strategy = server_strategy or ServerStrategy()

    system = QuantumSystem()
    in_labels = [f"in:{k}" for k in range(1, n + 1)]
    ref_labels = [f"ref:{i}" for i in range(1, n_ref + 1)]
    system.add_register(input_state, in_labels + ref_labels, [f"client:{k}" for k in range(1, n + 1)] + ["environment"] * n_ref)

    epr = PureState(np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2))
    for j in measured:
        for k in range(1, n + 1):
            system.add_register(epr, [f"keep:{j}:{k}", f"send:{j}:{k}"], [f"client:{k}"] * 2)
            system.transfer(f"send:{j}:{k}", "server")

    def retained(j: int, k: int) -> str:
        # the input's owner teleports the input qubit itself through its EPR
        # pair, after which the input register is the qubit still to measure
        return f"in:{j}" if (j in graph.input_nodes and k == j) else f"keep:{j}:{k}"

    a_bits: dict[int, int] = {}

    def extract_a(j: int) -> None:
        system.apply_cnot(f"in:{j}", f"keep:{j}:{j}")
        a_bits[j] = system.measure_computational(f"keep:{j}:{j}", rng)

    if not a_at_end:
        for j in graph.input_nodes:
            if j in measured:
                extract_a(j)

    theta_hat: dict[tuple[int, int], int] = {}
    r_bits: dict[tuple[int, int], int] = {}

    def reveal(j: int, k: int) -> None:
        lab = retained(j, k)
        system.apply_z_rot(lab, theta_hat[(j, k)])
        system.apply_h(lab)
        r_bits[(j, k)] = system.measure_computational(lab, rng)

    if not delayed:
        for j in measured:
            for k in range(1, n + 1):
                theta_hat[(j, k)] = int(rng.integers(8))
                reveal(j, k)

    # ------------------------------------------------- server-side actions
    chain_t: dict[int, dict[int, int]] = {}
    for j in measured:
        registers = {k: f"send:{j}:{k}" for k in range(1, n + 1)}
        steps = input_chain_steps(n, j) if j in graph.input_nodes else aux_chain_steps(n)
        t: dict[int, int] = {}
        for target, control in steps:
            system.apply_cnot(registers[control], registers[target])
            t[target] = system.measure_computational(registers[target], rng)
        chain_t[j] = t

    node_label: dict[int, str] = {}
    for j in measured:
        node_label[j] = f"send:{j}:{j if j in graph.input_nodes else n}"
    for j in graph.output_nodes:
        lab = f"node:{j}"
        system.add_register(plus_state(0), [lab], ["server"])
        node_label[j] = lab
    for u, v in sorted(graph.edges):
        system.apply_cz(node_label[u], node_label[v])

    handle = ServerHandle(system, node_label, {"t": chain_t, "delta": {}, "b": {}})
    if strategy.after_entangle:
        strategy.after_entangle(handle)

    def node_r(j: int) -> int:
        bit = 0
        for k in range(1, n + 1):
            bit ^= r_bits[(j, k)]
        return bit

    def s_bit(j: int) -> int:
        return b[j] ^ node_r(j)

    def phi_corrected(j: int) -> int:
        s_x = 0
        for i in flow.s_x[j]:
            s_x ^= s_bit(i)
        s_z = 0
        for i in flow.s_z[j]:
            s_z ^= s_bit(i)
        pred = flow.f_inv.get(j)
        a_pred = a_bits.get(pred, 0) if pred is not None else 0
        return corrected_angle(angles[j], a_bits.get(j, 0), a_pred, s_x, s_z)

    def solve_and_reveal(j: int) -> None:
        """Pick fresh uniform angles, solve the one that matches delta, measure."""
        is_input = j in graph.input_nodes
        target = j if is_input else n
        for k in range(1, n + 1):
            if k != target:
                theta_hat[(j, k)] = int(rng.integers(8))
        t = chain_t[j]

        def exponent(k: int) -> int:
            e = 0
            for i in range(k, n + 1):
                if i != target:
                    e ^= t[i]
            return e

        acc = delta[j] - phi_corrected(j)
        for k in range(1, n + 1):
            if k == target:
                continue
            acc -= (-1) ** exponent(k) * theta_hat[(j, k)]
        # the pad's X flip (input case) negates the angle the pad rotation
        # must hit, so the solved angle absorbs the same sign
        theta_hat[(j, target)] = flip(octant(acc), a_bits.get(j, 0) if is_input else 0)
        for k in range(1, n + 1):
            reveal(j, k)

    delta: dict[int, int] = {}
    b: dict[int, int] = {}
    for j in measured:
        if delayed:
            delta[j] = int(rng.integers(8))
        else:
            eff = [octant(theta_hat[(j, k)] + 4 * r_bits[(j, k)]) for k in range(1, n + 1)]
            if j in graph.input_nodes:
                pad = theta_input(eff, j, chain_t[j], a_bits[j])
            else:
                pad = theta_aux(eff, chain_t[j])
            delta[j] = octant(phi_corrected(j) + 4 * node_r(j) + flip(pad, a_bits.get(j, 0)))
        handle.classical["delta"][j] = delta[j]
        if strategy.before_measurement:
            strategy.before_measurement(handle, j)
        b[j] = system.measure_rotated(node_label[j], delta[j], rng)
        handle.classical["b"][j] = b[j]
        if delayed and not a_at_end:
            solve_and_reveal(j)

    if a_at_end:
        # ideal-resource phase: all secret-dependent work happens only now
        for j in graph.input_nodes:
            if j in measured:
                extract_a(j)
        for j in measured:
            solve_and_reveal(j)

    if strategy.before_output_send:
        strategy.before_output_send(handle)
    keys: dict[int, tuple[int, int]] = {}
    for j in graph.output_nodes:
        s_x = 0
        for i in flow.s_x[j]:
            s_x ^= s_bit(i)
        s_z = 0
        for i in flow.s_z[j]:
            s_z ^= s_bit(i)
        pred = flow.f_inv.get(j)
        if pred is not None:
            s_z ^= a_bits.get(pred, 0)
        keys[j] = (s_x, s_z)
        if s_x:
            system.apply_x(node_label[j])
        if s_z:
            system.apply_z(node_label[j])

    output_state = system.state_of([node_label[j] for j in graph.output_nodes] + ref_labels)
    return IntermediateRun(version, chain_t, delta, b, keys, output_state, n_ref)


def run_simulated_server_world(
    pattern: MeasurementPattern,
    input_state: PureState,
    rng: np.random.Generator,
    server_strategy: ServerStrategy | None = None,
) -> IntermediateRun:
    """The server faces a secret-free simulator; an ideal resource does the rest."""
    return run_intermediate_protocol(pattern, input_state, rng, "simulator-resource", server_strategy)


# ----------------------------------------------------------------------
# client-side simulator
# ----------------------------------------------------------------------


@dataclass
class SimClientRun:
    transcript: Transcript
    coalition: frozenset[int]
    chain_t: dict[int, dict[int, int]]
    delta: dict[int, int]
    b: dict[int, int]
    keys: dict[int, tuple[int, int]]
    output_state: PureState | None
    n_ref: int
    abort: bool


def run_simulated_client_world(
    pattern: MeasurementPattern,
    input_state: PureState,
    coalition: Iterable[int],
    rng: np.random.Generator,
    *,
    m_copies: int = 10,
    r_override: dict[tuple[int, int], int] | None = None,
) -> SimClientRun:
    """Simulate the coalition's protocol interface without honest secrets.

    The simulator plays the server, the oracle, and every honest client.
    It checks the coalition's test copies against their declared shares,
    announces uniform chain outcomes, couples each announced angle to the
    coalition's own mask shares (delta = fresh uniform + 4 * coalition
    mask, which keeps delta marginally uniform while preserving the
    pathwise effect of the coalition's choices), answers with uniform
    measurement outcomes, and finally undoes the coalition's input pad,
    hands the bare inputs to the ideal resource, and re-pads the resource's
    outputs to match the keys implied by the recorded outcomes and masks.

    The coalition itself is played honestly here; input_state carries the
    honest inputs, the coalition inputs, and optional reference qubits.
    """
    graph, angles = pattern.graph, pattern.angles
    del angles  # the simulator never touches the pattern angles
    flow = compute_flow(graph)
    n = graph.n_wires
    coalition = frozenset(int(c) for c in coalition)
    if not coalition or not coalition <= set(range(1, n + 1)):
        raise ValueError("coalition must be a nonempty subset of the clients")
    honest = [k for k in range(1, n + 1) if k not in coalition]
    if not honest:
        raise ValueError("at least one client must stay honest")
    measured = flow.order
    n_ref = input_state.num_qubits - n
    if n_ref < 0:
        raise ValueError("input register smaller than the number of wires")

    system = QuantumSystem()
    in_labels = [f"in:{k}" for k in range(1, n + 1)]
    ref_labels = [f"ref:{i}" for i in range(1, n_ref + 1)]
    owners = [f"client:{k}" if k in coalition else "simulator" for k in range(1, n + 1)]
    system.add_register(input_state, in_labels + ref_labels, owners + ["environment"] * n_ref)

    transcript = Transcript()
    record = transcript.record

    # -------------------------------------------------- coalition secrets
    pad_a: dict[int, int] = {}
    pad_theta: dict[int, int] = {}

    def distribute(owner: int, value: int, modulus: int, tag: tuple, context: dict) -> None:
        """A coalition client shares one secret; every piece reaches the simulator."""
        shares = share_secret(value, n, modulus, rng, tag)
        for piece in shares:
            if piece.owner != owner:
                record(f"client:{owner}", f"client:{piece.owner}", "ShareDistribution", {**context, "share": share_payload(piece)})
        for piece in shares:
            record(f"client:{piece.owner}", "oracle", "ShareDistribution", {**context, "share": share_payload(piece)})

    def fake_distribution(owner: int, modulus: int, tag: tuple, context: dict) -> None:
        """The simulator plays an honest client sharing a secret: the coalition
        only ever sees uniform pieces, so fresh uniform values are exact."""
        for c in sorted(coalition):
            piece_value = int(rng.integers(modulus))
            record(
                f"client:{owner}", f"client:{c}", "ShareDistribution",
                {**context, "share": {"owner": c, "tag": list(tag), "value": piece_value, "modulus": modulus}},
            )

    for k in range(1, n + 1):
        if k in coalition:
            pad_a[k] = int(rng.integers(2))
            distribute(k, pad_a[k], 2, ("a", k), {"kind": "pad-flip", "client": k})
        else:
            fake_distribution(k, 2, ("a", k), {"kind": "pad-flip", "client": k})

    def contributors(node: int) -> list[int]:
        return [k for k in range(1, n + 1) if not (node in graph.input_nodes and k == node)]

    # ----------------------------------------------------- preparation
    chain_t: dict[int, dict[int, int]] = {}
    aborted = False
    for j in measured:
        for k in contributors(j):
            if k in coalition:
                copy_angles = [int(rng.integers(8)) for _ in range(m_copies)]
                copy_shares = []
                for i, th in enumerate(copy_angles):
                    tag = ("theta", j, k, i)
                    shares = share_secret(th, n, 8, rng, tag)
                    copy_shares.append(shares)
                    for piece in shares:
                        if piece.owner != k:
                            record(f"client:{k}", f"client:{piece.owner}", "ShareDistribution", {"kind": "copy-angle", "node": j, "contributor": k, "copy": i, "share": share_payload(piece)})
                    system.add_register(plus_state(th), [f"copy:{j}:{k}:{i}"], [f"client:{k}"])
                    system.transfer(f"copy:{j}:{k}:{i}", "simulator")
                    record(f"client:{k}", "server", "QubitTransfer", {"node": j, "contributor": k, "copy": i, "purpose": "test-copy", "label": f"copy:{j}:{k}:{i}"})
                survivor = int(rng.integers(m_copies))
                record("server", "all", "OutcomeVector", {"kind": "survivor", "node": j, "contributor": k, "survivor": survivor})
                outcomes: dict[int, int] = {}
                for i in range(m_copies):
                    if i == survivor:
                        continue
                    for piece in copy_shares[i]:
                        record(f"client:{piece.owner}", "server", "ShareDistribution", {"kind": "opened-angle", "node": j, "contributor": k, "copy": i, "share": share_payload(piece)})
                    theta_i = reconstruct(copy_shares[i])
                    outcomes[i] = system.measure_rotated(f"copy:{j}:{k}:{i}", theta_i, rng)
                record("server", "all", "OutcomeVector", {"kind": "verification", "node": j, "contributor": k, "outcomes": sorted(outcomes.items())})
                if any(v != 0 for v in outcomes.values()):
                    record("server", "all", "Abort", {"stage": "verification", "node": j, "client": k, "reason": "test copy failed its declared basis"})
                    aborted = True
                    break
                for piece in copy_shares[survivor]:
                    record(f"client:{piece.owner}", "oracle", "ShareDistribution", {"kind": "survivor-angle", "node": j, "contributor": k, "copy": survivor, "share": share_payload(piece)})
                # the surviving coalition copy is absorbed by the simulator;
                # nothing downstream depends on it
                system.measure_computational(f"copy:{j}:{k}:{survivor}", rng)
            else:
                for i in range(m_copies):
                    tag = ("theta", j, k, i)
                    context = {"kind": "copy-angle", "node": j, "contributor": k, "copy": i}
                    fake_distribution(k, 8, tag, context)
                survivor = int(rng.integers(m_copies))
                record("server", "all", "OutcomeVector", {"kind": "survivor", "node": j, "contributor": k, "survivor": survivor})
                record("server", "all", "OutcomeVector", {"kind": "verification", "node": j, "contributor": k, "outcomes": [(i, 0) for i in range(m_copies) if i != survivor]})
        if aborted:
            break
        if j in graph.input_nodes and j in coalition:
            own_theta = int(rng.integers(8))
            pad_theta[j] = own_theta
            system.apply_z_rot(f"in:{j}", own_theta)
            if pad_a[j]:
                system.apply_x(f"in:{j}")
            distribute(j, own_theta, 8, ("theta", j, j, 0), {"kind": "pad-angle", "node": j})
            system.transfer(f"in:{j}", "simulator")
            record(f"client:{j}", "server", "QubitTransfer", {"node": j, "purpose": "padded-input"})
        # chain outcomes are uniform and carry no secret dependence
        t = {reg: int(rng.integers(2)) for reg in range(1, n + 1) if reg != (j if j in graph.input_nodes else n)}
        chain_t[j] = t
        record("server", "all", "OutcomeVector", {"kind": "chain", "node": j, "t": sorted(t.items())})

    if aborted:
        return SimClientRun(transcript, coalition, chain_t, {}, {}, {}, None, n_ref, True)

    # ------------------------------------------------------------ rounds
    delta: dict[int, int] = {}
    b: dict[int, int] = {}
    r_claims: dict[tuple[int, int], int] = {}
    for j in measured:
        for k in range(1, n + 1):
            if k in coalition:
                r_bit = int(rng.integers(2))
                if r_override is not None:
                    r_bit = r_override.get((j, k), r_bit)
                r_claims[(j, k)] = r_bit
                distribute(k, r_bit, 2, ("r", j, k), {"kind": "mask-bit", "node": j, "client": k})
            else:
                r_claims[(j, k)] = int(rng.integers(2))
                fake_distribution(k, 2, ("r", j, k), {"kind": "mask-bit", "node": j, "client": k})
        coalition_mask = 0
        for c in coalition:
            coalition_mask ^= r_claims[(j, c)]
        delta[j] = octant(int(rng.integers(8)) + 4 * coalition_mask)
        record("oracle", "server", "DeltaAnnounce", {"node": j, "delta": delta[j]})
        b[j] = int(rng.integers(2))
        record("server", "all", "ResultBroadcast", {"node": j, "b": b[j]})

    # ------------------------------------------------------------ outputs
    for c in sorted(coalition):
        if c in pad_theta:
            # undo the coalition's input pad before feeding the ideal resource
            if pad_a[c]:
                system.apply_x(f"in:{c}")
            system.apply_z_rot(f"in:{c}", -pad_theta[c])
    ideal_input = system.state_of(in_labels + ref_labels)
    resource_output = reference_execute(pattern, ideal_input, rng)

    def s_bit(i: int) -> int:
        bit = b[i]
        for k in range(1, n + 1):
            bit ^= r_claims[(i, k)]
        return bit

    keys: dict[int, tuple[int, int]] = {}
    out_state = resource_output
    for idx, j in enumerate(graph.output_nodes):
        s_x = 0
        for i in flow.s_x[j]:
            s_x ^= s_bit(i)
        s_z = 0
        for i in flow.s_z[j]:
            s_z ^= s_bit(i)
        pred = flow.f_inv.get(j)
        if pred is not None and pred in graph.input_nodes:
            s_z ^= pad_a.get(pred, int(rng.integers(2))) if pred in coalition else int(rng.integers(2))
        keys[j] = (s_x, s_z)
        c = graph.wire_of(j)
        if c in coalition:
            # corrupt the clean output so the coalition's decrypt restores it
            if s_z:
                out_state = out_state.z(idx)
            if s_x:
                out_state = out_state.x(idx)
            record("server", f"client:{c}", "OutputQubit", {"node": j})
            record("oracle", f"client:{c}", "OutputKeys", {"node": j, "s_x": s_x, "s_z": s_z})
            # coalition decrypts
            if s_x:
                out_state = out_state.x(idx)
            if s_z:
                out_state = out_state.z(idx)

    return SimClientRun(transcript, coalition, chain_t, delta, b, keys, out_state, n_ref, False)


def check_no_secret_leak(transcript: Transcript, coalition: Iterable[int], n_clients: int) -> None:
    """Structural invariant: the coalition never sees a complete share set
    of any honest secret, and no raw secret value travels in any message."""
    coalition = {int(c) for c in coalition}
    names = {f"client:{c}" for c in coalition}
    visible = transcript.visible_to(names)
    seen_owners: dict[tuple, set[int]] = {}
    for msg in visible:
        for key in ("theta", "a", "r", "pad_theta", "secret"):
            if key in msg.payload:
                raise AssertionError(f"raw secret field {key!r} in message {msg.seq}")
        if msg.variant != "ShareDistribution":
            continue
        share = msg.payload.get("share")
        if share is None:
            continue
        tag = tuple(share["tag"])
        holder = tag[2] if tag[0] in ("theta", "r") else tag[1]
        if holder in coalition:
            continue
        if msg.payload.get("kind") == "opened-angle":
            continue  # opened test angles are public by design; their qubits are dead
        seen_owners.setdefault(tag, set()).add(share["owner"])
    for tag, owners in seen_owners.items():
        if len(owners) >= n_clients:
            raise AssertionError(f"coalition saw a complete share set for honest secret {tag}")


# ----------------------------------------------------------------------
# observable summaries and distribution comparison
# ----------------------------------------------------------------------


def observable_summary(run: ProtocolRun | IntermediateRun | SimClientRun, rng: np.random.Generator) -> dict[str, int]:
    """Flatten a run into small discrete observables for distribution tests.

    Chain outcomes, announced angles, measurement results, output keys, and
    an X-basis readout of every output qubit (the reference qubits, if any,
    are read out too, pinning correlations with the outputs).
    """
    out: dict[str, int] = {}
    for j, t in sorted(run.chain_t.items()):
        for reg, bit in sorted(t.items()):
            out[f"t:{j}:{reg}"] = bit
    for j, d in sorted(run.delta.items()):
        out[f"delta:{j}"] = d
    for j, bit in sorted(run.b.items()):
        out[f"b:{j}"] = bit
    for j, (s_x, s_z) in sorted(run.keys.items()):
        out[f"key:{j}"] = 2 * s_z + s_x
    state = run.output_state
    if state is not None:
        for i in range(state.num_qubits):
            bit, state2 = state.measure_rotated(0, 0, rng)
            state = state2
            out[f"out:{i}"] = bit
    return out


def coalition_view_summary(
    run: ProtocolRun | SimClientRun,
    coalition: Iterable[int],
    rng: np.random.Generator,
) -> dict[str, int]:
    """The coalition's discrete view of one run: public announcements, its
    own output keys, and an X-basis readout of its output wires."""
    coalition = sorted(int(c) for c in coalition)
    out: dict[str, int] = {}
    for j, t in sorted(run.chain_t.items()):
        for reg, bit in sorted(t.items()):
            out[f"t:{j}:{reg}"] = bit
    for j, d in sorted(run.delta.items()):
        out[f"delta:{j}"] = d
    for j, bit in sorted(run.b.items()):
        out[f"b:{j}"] = bit
    outputs = sorted(run.keys)
    for idx, j in enumerate(outputs):
        wire = idx + 1
        if wire in coalition:
            s_x, s_z = run.keys[j]
            out[f"key:{j}"] = 2 * s_z + s_x
    state = run.output_state
    if state is not None:
        removed = 0
        for idx, j in enumerate(outputs):
            wire = idx + 1
            if wire not in coalition:
                continue
            bit, state = state.measure_rotated(idx - removed, 0, rng)
            removed += 1
            out[f"out:{wire}"] = bit
    return out


def empirical_tv(samples_a: Sequence, samples_b: Sequence) -> float:
    """Total-variation distance between two empirical distributions."""
    counts_a: dict = {}
    counts_b: dict = {}
    for v in samples_a:
        counts_a[v] = counts_a.get(v, 0) + 1
    for v in samples_b:
        counts_b[v] = counts_b.get(v, 0) + 1
    na, nb = len(samples_a), len(samples_b)
    total = 0.0
    for v in set(counts_a) | set(counts_b):
        total += abs(counts_a.get(v, 0) / na - counts_b.get(v, 0) / nb)
    return 0.5 * total


def marginal_distances(summaries_a: Sequence[dict], summaries_b: Sequence[dict]) -> dict[str, float]:
    """Per-field empirical TV distances between two summary collections."""
    fields = set()
    for s in summaries_a:
        fields.update(s)
    for s in summaries_b:
        fields.update(s)
    return {
        f: empirical_tv([s.get(f) for s in summaries_a], [s.get(f) for s in summaries_b])
        for f in sorted(fields)
    }


def clopper_pearson(successes: int, trials: int, alpha: float = 0.01) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    if trials <= 0:
        raise ValueError("no trials")
    lo = 0.0 if successes == 0 else float(beta_dist.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(beta_dist.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


@dataclass
class DistinguisherReport:
    advantage: float
    confidence_radius: float
    trials: int
    rate_a: float
    rate_b: float
    alpha: float = 0.01


def distinguisher_game(
    world_a: Callable[[np.random.Generator], object],
    world_b: Callable[[np.random.Generator], object],
    distinguisher: Callable[[object], int],
    trials: int,
    rng: np.random.Generator,
    alpha: float = 0.01,
) -> DistinguisherReport:
    """Estimate a distinguisher's advantage between two view samplers.

    Runs `trials` independent samples of each world, feeds each view to the
    distinguisher, and reports |P[guess=1 | A] - P[guess=1 | B]| with a
    combined exact confidence radius at level alpha.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials per world")
    hits_a = sum(int(bool(distinguisher(world_a(rng)))) for _ in range(trials))
    hits_b = sum(int(bool(distinguisher(world_b(rng)))) for _ in range(trials))
    pa, pb = hits_a / trials, hits_b / trials
    lo_a, hi_a = clopper_pearson(hits_a, trials, alpha)
    lo_b, hi_b = clopper_pearson(hits_b, trials, alpha)
    radius = (hi_a - lo_a) / 2 + (hi_b - lo_b) / 2
    return DistinguisherReport(advantage=abs(pa - pb), confidence_radius=radius, trials=trials, rate_a=pa, rate_b=pb)


# ----------------------------------------------------------------------
# copy-test detection rates
# ----------------------------------------------------------------------


def copy_test_rejection(deviation: int, trials: int, rng: np.random.Generator, n_clients: int = 2) -> tuple[int, int]:
    """(rejections, tested copies) for a client whose states are off by a fixed octant.

    Each trial shares a uniform angle honestly but prepares the qubit
    rotated `deviation` octants away from the declaration, then runs one
    test measurement against the declared angle.
    """
    rejections = 0
    tested = 0
    for _ in range(trials):
        theta = int(rng.integers(8))
        shares = [share_secret(theta, n_clients, 8, rng, ("theta", 0, 1, i)) for i in range(2)]
        qubits = [plus_state(octant(theta + deviation)) for _ in range(2)]
        result = verify_client(1, shares, qubits, rng)
        tested += len(result.outcomes)
        rejections += sum(result.outcomes.values())
    return rejections, tested
