import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpdqc.brickwork import MeasurementPattern, build_brickwork, corrected_angle
from mpdqc.oracle import (
    OracleLedger,
    SecretShare,
    a_tag,
    r_tag,
    reconstruct,
    share_secret,
    theta_tag,
    verify_client,
)
from mpdqc.quantum import flip, octant, plus_state
from mpdqc.rsp import theta_input

RNG = np.random.default_rng(31)


# ----------------------------------------------------------- secret shares


@settings(max_examples=60)
@given(st.integers(0, 7), st.integers(2, 6), st.sampled_from([2, 8]))
def test_share_and_reconstruct_round_trip(value, n, modulus):
    value %= modulus
    shares = share_secret(value, n, modulus, np.random.default_rng(0), tag=("x",))
    assert len(shares) == n
    assert sorted(s.owner for s in shares) == list(range(1, n + 1))
    assert reconstruct(shares) == value


def test_single_share_reveals_nothing():
    # every value of one share occurs across resharings of the same secret
    seen = set()
    for i in range(400):
        shares = share_secret(5, 3, 8, np.random.default_rng(i))
        seen.add(shares[0].value)
    assert seen == set(range(8))


def test_reconstruct_rejects_inconsistent_share_sets():
    good = share_secret(3, 3, 8, np.random.default_rng(1), tag=("t",))
    with pytest.raises(ValueError):
        reconstruct(good[:2] + [good[1]])  # owner 2 twice, owner 3 missing
    mixed = good[:2] + [SecretShare(owner=3, tag=("other",), value=0, modulus=8)]
    with pytest.raises(ValueError):
        reconstruct(mixed)
    wrong_mod = good[:2] + [SecretShare(owner=3, tag=("t",), value=0, modulus=2)]
    with pytest.raises(ValueError):
        reconstruct(wrong_mod)
    with pytest.raises(ValueError):
        reconstruct([])


def test_share_values_respect_the_modulus():
    for modulus in (2, 8):
        shares = share_secret(1, 4, modulus, np.random.default_rng(2))
        assert all(0 <= s.value < modulus for s in shares)


# ------------------------------------------------------------ verification


def _honest_copies(client: int, m: int, rng) -> tuple[list, list]:
    angle_shares, qubits = [], []
    for i in range(m):
        theta = int(rng.integers(8))
        angle_shares.append(share_secret(theta, 2, 8, rng, theta_tag(1, client, i)))
        qubits.append(plus_state(theta))
    return angle_shares, qubits


def test_honest_copies_always_pass():
    rng = np.random.default_rng(3)
    for _ in range(50):
        angle_shares, qubits = _honest_copies(1, 3, rng)
        result = verify_client(1, angle_shares, qubits, rng)
        assert result.accepted
        assert all(b == 0 for b in result.outcomes.values())


def test_opposite_angle_always_fails():
    rng = np.random.default_rng(4)
    for _ in range(30):
        angle_shares, qubits = _honest_copies(1, 2, rng)
        # the client lies by pi on every copy: the tested one is caught
        qubits = [q.z_rot(0, 4) for q in qubits]
        result = verify_client(1, angle_shares, qubits, rng)
        assert not result.accepted


def test_small_deviation_is_caught_at_the_expected_rate():
    rng = np.random.default_rng(5)
    rejections = 0
    trials = 3000
    for _ in range(trials):
        angle_shares, qubits = _honest_copies(1, 2, rng)
        qubits = [q.z_rot(0, 1) for q in qubits]
        if not verify_client(1, angle_shares, qubits, rng).accepted:
            rejections += 1
    rate = rejections / trials
    expected = np.sin(np.pi / 8) ** 2
    assert abs(rate - expected) < 0.03


def test_survivor_choice_is_uniformish():
    rng = np.random.default_rng(6)
    counts = {0: 0, 1: 0, 2: 0}
    for _ in range(600):
        angle_shares, qubits = _honest_copies(2, 3, rng)
        result = verify_client(2, angle_shares, qubits, rng)
        counts[result.survivor] += 1
        assert result.survivor not in result.outcomes
    for c in counts.values():
        assert 120 < c < 280


def test_verification_needs_at_least_two_copies():
    rng = np.random.default_rng(7)
    angle_shares, qubits = _honest_copies(1, 1, rng)
    with pytest.raises(ValueError):
        verify_client(1, angle_shares, qubits, rng)


# ----------------------------------------------------------------- ledger


def _filled_ledger(phi, a_bits, thetas, r_bits, t_bits, rng):
    """Build a two-client, two-column ledger with chosen secrets.

    thetas[(node, client)] is the angle contribution, r_bits[(node, client)]
    the personal output-mask bit, t_bits[node] the chain outcome of the one
    non-owner register.
    """
    graph = build_brickwork(2, 2)
    pattern = MeasurementPattern(graph, dict(phi))
    ledger = OracleLedger(pattern, n_clients=2)
    for client, a in a_bits.items():
        for piece in share_secret(a, 2, 2, rng, a_tag(client)):
            ledger.register_share(piece)
    for (node, client), theta in thetas.items():
        for piece in share_secret(theta, 2, 8, rng, theta_tag(node, client, copy=4)):
            ledger.register_share(piece)
    for (node, client), r in r_bits.items():
        for piece in share_secret(r, 2, 2, rng, r_tag(node, client)):
            ledger.register_share(piece)
    for node, t in t_bits.items():
        ledger.register_chain(node, t)
    return ledger


def test_ledger_reconstructs_node_secrets():
    rng = np.random.default_rng(8)
    thetas = {(1, 1): 3, (1, 2): 6, (2, 1): 1, (2, 2): 5}
    r_bits = {(1, 1): 1, (1, 2): 1, (2, 1): 0, (2, 2): 1}
    t_bits = {1: {2: 1}, 2: {1: 0}}
    ledger = _filled_ledger({1: 2, 2: 7}, {1: 1, 2: 0}, thetas, r_bits, t_bits, rng)
    assert ledger.a_bit(1) == 1 and ledger.a_bit(2) == 0
    assert ledger.node_r(1) == 0 and ledger.node_r(2) == 1
    assert ledger.node_theta(1) == theta_input([3, 6], 1, {2: 1}, 1)
    assert ledger.node_theta(2) == theta_input([1, 5], 2, {1: 0}, 0)


def test_ledger_delta_decomposition():
    rng = np.random.default_rng(9)
    thetas = {(1, 1): 3, (1, 2): 6, (2, 1): 1, (2, 2): 5}
    r_bits = {(1, 1): 1, (1, 2): 0, (2, 1): 0, (2, 2): 0}
    t_bits = {1: {2: 0}, 2: {1: 1}}
    phi = {1: 2, 2: 7}
    ledger = _filled_ledger(phi, {1: 1, 2: 0}, thetas, r_bits, t_bits, rng)

    # node 1 measures first: no corrections yet, a_1 = 1 flips the pattern
    # angle and conjugates the preparation angle
    theta_1 = ledger.node_theta(1)
    expect_1 = octant(corrected_angle(phi[1], 1, 0, 0, 0) + 4 * ledger.node_r(1) + flip(theta_1, 1))
    assert ledger.delta(1) == expect_1

    ledger.register_outcome(1, 1)
    # node 2 is measured next; node 1 feeds neither of its correction sets
    # on this graph, so its announced angle is independent of b_1
    theta_2 = ledger.node_theta(2)
    expect_2 = octant(corrected_angle(phi[2], 0, 0, 0, 0) + 4 * ledger.node_r(2) + flip(theta_2, 0))
    assert ledger.delta(2) == expect_2
    ledger.register_outcome(2, 0)

    # output keys: node 3 = f(1) takes its X key from s_1 and folds a_1
    # into its Z key through the predecessor pad flip
    s_1 = 1 ^ ledger.node_r(1)
    s_2 = 0 ^ ledger.node_r(2)
    keys_3 = ledger.output_keys(3)
    assert keys_3[0] == s_1
    flow_z = s_2 if 2 in ledger.flow.s_z[3] else 0
    assert keys_3[1] == flow_z ^ ledger.a_bit(1)


def test_ledger_rejects_duplicate_registration():
    rng = np.random.default_rng(10)
    graph = build_brickwork(2, 2)
    pattern = MeasurementPattern(graph, {1: 0, 2: 0})
    ledger = OracleLedger(pattern, n_clients=2)
    pieces = share_secret(1, 2, 2, rng, a_tag(1))
    ledger.register_share(pieces[0])
    with pytest.raises(ValueError):
        ledger.register_share(pieces[0])
    ledger.register_chain(1, {2: 0})
    with pytest.raises(ValueError):
        ledger.register_chain(1, {2: 1})
    ledger.register_outcome(1, 0)
    with pytest.raises(ValueError):
        ledger.register_outcome(1, 1)


def test_dump_secrets_reports_reconstructed_values():
    rng = np.random.default_rng(11)
    thetas = {(1, 1): 3, (1, 2): 6, (2, 1): 1, (2, 2): 5}
    r_bits = {(1, 1): 0, (1, 2): 0, (2, 1): 1, (2, 2): 0}
    t_bits = {1: {2: 0}, 2: {1: 0}}
    ledger = _filled_ledger({1: 0, 2: 0}, {1: 0, 2: 1}, thetas, r_bits, t_bits, rng)
    dump = ledger.dump_secrets()
    assert dump["a"] == {1: 0, 2: 1}
    assert dump["r"] == {1: 0, 2: 1}
    assert dump["theta"][1] == ledger.node_theta(1)
