import numpy as np
import pytest

from mpdqc.brickwork import MeasurementPattern, build_brickwork, random_pattern, reference_execute
from mpdqc.harness import (
    blindness_check,
    check_no_secret_leak,
    clopper_pearson,
    coalition_view_summary,
    copy_test_rejection,
    distinguisher_game,
    empirical_tv,
    exact_server_views,
    marginal_distances,
    observable_summary,
    run_intermediate_protocol,
    run_simulated_client_world,
    run_simulated_server_world,
    sampled_prepared_density,
    view_distance,
)
from mpdqc.oracle import share_secret, theta_tag
from mpdqc.protocol import Transcript, run_full_protocol, share_payload
from mpdqc.quantum import DensityMatrix, PureState, trace_distance

RNG = np.random.default_rng(77)


def random_state(n_qubits: int, rng=RNG) -> PureState:
    v = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
    return PureState(v / np.linalg.norm(v))


def small_pattern(seed=0, angles=None):
    g = build_brickwork(2, 2)
    if angles is None:
        return random_pattern(g, np.random.default_rng(seed))
    return MeasurementPattern(g, angles)


# ------------------------------------------------------------ exact views


def test_exact_views_conserve_probability():
    views = exact_server_views(small_pattern(angles={1: 3, 2: 5}), PureState.computational("10"))
    for checkpoint, buckets in views.items():
        total = sum(np.trace(m).real for m in buckets.values())
        assert total == pytest.approx(1.0, abs=1e-9), checkpoint


def test_exact_views_have_the_expected_checkpoints():
    views = exact_server_views(small_pattern(angles={1: 0, 2: 0}), PureState.computational("00"))
    assert set(views) == {"prepared", "round:1", "round:2", "delivered"}
    assert list(views["prepared"]) == [()]
    # after both rounds every label carries (delta, b) for two nodes
    assert all(len(label) == 2 for label in views["round:2"])


def test_input_differences_are_invisible_to_the_server():
    pattern = small_pattern(angles={1: 2, 2: 7})
    distances = blindness_check(pattern, PureState.computational("00"), pattern, PureState.computational("11"))
    assert max(distances.values()) <= 1e-9


def test_blindness_check_rejects_mismatched_interfaces():
    p_small = small_pattern(angles={1: 0, 2: 0})
    g_big = build_brickwork(2, 3)
    p_big = MeasurementPattern(g_big, {j: 0 for j in g_big.measured_nodes})
    with pytest.raises(ValueError):
        blindness_check(p_small, PureState.computational("00"), p_big, PureState.computational("00"))
    with pytest.raises(ValueError):
        blindness_check(p_small, PureState.computational("00"), p_small, PureState.computational("000"))


def test_exact_views_refuse_oversized_graphs():
    g = build_brickwork(4, 4)
    pattern = random_pattern(g, np.random.default_rng(1))
    with pytest.raises(ValueError):
        exact_server_views(pattern, PureState.computational("0000"))


def test_sampled_prepared_state_matches_the_enumeration():
    pattern = small_pattern(angles={1: 3, 2: 6})
    psi = PureState.computational("01")
    exact = exact_server_views(pattern, psi)["prepared"][()]
    sampled = sampled_prepared_density(pattern, psi, 1000, np.random.default_rng(2))
    assert trace_distance(DensityMatrix(exact), DensityMatrix(sampled)) < 0.05


def test_view_distance_of_identical_views_is_zero():
    views = exact_server_views(small_pattern(angles={1: 1, 2: 2}), PureState.computational("00"))
    for buckets in views.values():
        assert view_distance(buckets, buckets) == pytest.approx(0.0)


# --------------------------------------------------- intermediate versions


@pytest.mark.parametrize("version", ["teleport", "delayed", "simulator-resource"])
def test_rewritten_protocols_compute_the_same_thing(version):
    rng = np.random.default_rng(3)
    pattern = random_pattern(build_brickwork(2, 2), rng)
    psi = random_state(2, rng)
    expected = reference_execute(pattern, psi, np.random.default_rng(0))
    for seed in range(4):
        run = run_intermediate_protocol(pattern, psi, np.random.default_rng(seed), version)
        assert run.version == version
        assert run.output_state.fidelity(expected) >= 1 - 1e-9


def test_simulated_server_world_handles_references():
    rng = np.random.default_rng(4)
    pattern = random_pattern(build_brickwork(2, 2), rng)
    psi = random_state(3, rng)
    expected = reference_execute(pattern, psi, np.random.default_rng(0))
    run = run_simulated_server_world(pattern, psi, np.random.default_rng(9))
    assert run.output_state.fidelity(expected) >= 1 - 1e-9
    assert run.n_ref == 1


def test_observable_summary_fields():
    rng = np.random.default_rng(5)
    pattern = random_pattern(build_brickwork(2, 2), rng)
    run = run_full_protocol(pattern, random_state(2, rng), rng, m_copies=2)
    summary = observable_summary(run, rng)
    kinds = {k.split(":")[0] for k in summary}
    assert kinds == {"t", "delta", "b", "key", "out"}
    assert all(isinstance(v, int) for v in summary.values())


# ------------------------------------------------------ client simulation


def test_simulated_client_world_stays_honest():
    rng = np.random.default_rng(6)
    pattern = random_pattern(build_brickwork(2, 2), rng)
    psi = random_state(2, rng)
    for seed in range(5):
        run = run_simulated_client_world(pattern, psi, {2}, np.random.default_rng(seed), m_copies=2)
        assert not run.abort
        check_no_secret_leak(run.transcript, {2}, 2)
        summary = coalition_view_summary(run, {2}, np.random.default_rng(seed))
        assert "key:4" in summary and "out:2" in summary
        assert "key:3" not in summary and "out:1" not in summary


def test_simulated_outputs_decrypt_to_the_ideal_result():
    # corrupt-then-decrypt must cancel exactly, leaving the ideal resource
    # output on every wire
    rng = np.random.default_rng(7)
    pattern = random_pattern(build_brickwork(2, 2), rng)
    psi = random_state(2, rng)
    expected = reference_execute(pattern, psi, np.random.default_rng(0))
    for seed in range(6):
        run = run_simulated_client_world(pattern, psi, {1}, np.random.default_rng(seed), m_copies=2)
        assert not run.abort
        assert run.output_state.fidelity(expected) >= 1 - 1e-9


def test_simulator_rejects_improper_coalitions():
    pattern = small_pattern(angles={1: 0, 2: 0})
    psi = PureState.computational("00")
    with pytest.raises(ValueError):
        run_simulated_client_world(pattern, psi, {1, 2}, np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_simulated_client_world(pattern, psi, set(), np.random.default_rng(0))


def test_leak_checker_flags_raw_secret_fields():
    t = Transcript()
    t.record("client:1", "all", "ResultBroadcast", {"theta": 3})
    with pytest.raises(AssertionError):
        check_no_secret_leak(t, {2}, 2)


def test_leak_checker_flags_complete_honest_share_sets():
    t = Transcript()
    pieces = share_secret(5, 2, 8, np.random.default_rng(0), theta_tag(1, 1, 0))
    for piece in pieces:
        t.record("client:1", "client:2", "ShareDistribution", {"kind": "copy-angle", "share": share_payload(piece)})
    with pytest.raises(AssertionError):
        check_no_secret_leak(t, {2}, 2)
    # the same traffic is fine if the secret belongs to the coalition itself
    check_no_secret_leak(t, {1}, 2)


# -------------------------------------------------------------- statistics


def test_empirical_tv_known_values():
    assert empirical_tv([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(0.25)
    assert empirical_tv([0, 1], [0, 1]) == pytest.approx(0.0)
    assert empirical_tv([0, 0], [1, 1]) == pytest.approx(1.0)


def test_marginal_distances_union_of_fields():
    a = [{"x": 0, "y": 1}, {"x": 1, "y": 1}]
    b = [{"x": 0}, {"x": 1}]
    d = marginal_distances(a, b)
    assert set(d) == {"x", "y"}
    assert d["x"] == pytest.approx(0.0)
    assert d["y"] == pytest.approx(1.0)  # None vs 1


def test_clopper_pearson_properties():
    lo, hi = clopper_pearson(0, 100)
    assert lo == 0.0 and 0 < hi < 0.1
    lo, hi = clopper_pearson(100, 100)
    assert hi == 1.0 and 0.9 < lo < 1
    lo_small, hi_small = clopper_pearson(50, 100)
    lo_big, hi_big = clopper_pearson(5000, 10000)
    assert hi_big - lo_big < hi_small - lo_small
    assert lo_small < 0.5 < hi_small
    with pytest.raises(ValueError):
        clopper_pearson(1, 0)


def test_distinguisher_game_bounds():
    rng = np.random.default_rng(8)
    world_a = lambda r: {"v": 0}
    world_b = lambda r: {"v": 1}
    blind = distinguisher_game(world_a, world_b, lambda view: 0, 200, rng)
    assert blind.advantage == 0.0
    sharp = distinguisher_game(world_a, world_b, lambda view: view["v"], 200, rng)
    assert sharp.advantage == 1.0
    assert 0 < sharp.confidence_radius < 0.1
    with pytest.raises(ValueError):
        distinguisher_game(world_a, world_b, lambda v: 0, 50, rng)


def test_copy_test_rejection_extremes():
    rng = np.random.default_rng(9)
    rejections, tested = copy_test_rejection(0, 300, rng)
    assert (rejections, tested) == (0, 300)
    rejections, tested = copy_test_rejection(4, 300, rng)
    assert (rejections, tested) == (300, 300)
