"""Command-line experiment runner.

Every invocation reads a JSON config, runs one experiment mode, and writes
three artifacts into the output directory: transcript.jsonl (the message
log of a representative run, empty for modes that have none), report.json
(machine-readable result), and summary.txt (human-readable result).

Exit codes: 0 success, 1 bad config, 2 a security/correctness threshold
was violated, 3 the protocol aborted.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .brickwork import MeasurementPattern, build_brickwork, random_pattern, reference_execute
from .harness import (
    blindness_check,
    check_no_secret_leak,
    coalition_view_summary,
    copy_test_rejection,
    clopper_pearson,
    empirical_tv,
    marginal_distances,
    observable_summary,
    run_intermediate_protocol,
    run_simulated_client_world,
    run_simulated_server_world,
)
from .protocol import run_full_protocol
from .quantum import PureState

MODES = (
    "honest-run",
    "blindness",
    "server-sim-equiv",
    "client-sim-equiv",
    "protocol1-detection",
    "intermediate-equiv",
)

DEFAULT_THRESHOLDS = {
    "honest-run": 1e-6,        # max tolerated infidelity
    "blindness": 1e-9,         # max view distance at any checkpoint
    "server-sim-equiv": 0.02,  # max pooled marginal TV
    "client-sim-equiv": 0.02,
    "intermediate-equiv": 0.02,
    "protocol1-detection": 0.02,  # half-width of the acceptance band
}


def validate(config: dict) -> list[str]:
    """Pure config check; returns a list of problems (empty = valid)."""
    errors: list[str] = []
    mode = config.get("mode")
    if mode not in MODES:
        errors.append(f"mode must be one of {MODES}, got {mode!r}")
        return errors
    if not isinstance(config.get("seed"), int):
        errors.append("seed is required and must be an integer")

    if mode != "protocol1-detection":
        n_wires = config.get("n_wires")
        n_columns = config.get("n_columns")
        if not isinstance(n_wires, int) or n_wires < 2 or n_wires % 2:
            errors.append("n_wires must be an even integer >= 2")
        if not isinstance(n_columns, int) or n_columns < 1:
            errors.append("n_columns must be an integer >= 1")
    if mode in ("honest-run", "client-sim-equiv"):
        m = config.get("m_copies", 10)
        if not isinstance(m, int) or m < 2:
            errors.append("m_copies must be an integer >= 2")
    if mode in ("server-sim-equiv", "client-sim-equiv", "protocol1-detection", "intermediate-equiv"):
        trials = config.get("trials", 10000)
        if not isinstance(trials, int) or trials < 100:
            errors.append("trials must be an integer >= 100")
    if mode == "protocol1-detection":
        dev = config.get("deviation", 1)
        if not isinstance(dev, int) or not 0 <= dev <= 7:
            errors.append("deviation must be an octant count in 0..7")
    if mode == "client-sim-equiv":
        coalition = config.get("coalition")
        n_wires = config.get("n_wires", 0)
        if coalition is not None:
            if not isinstance(coalition, list) or not coalition:
                errors.append("coalition must be a nonempty list of client indices")
            elif not all(isinstance(c, int) and 1 <= c <= n_wires for c in coalition):
                errors.append("coalition members must be client indices in 1..n_wires")
            elif len(set(coalition)) >= n_wires:
                errors.append("at least one client must stay outside the coalition")
    if mode == "blindness":
        scenarios = config.get("scenarios")
        if not isinstance(scenarios, dict) or set(scenarios) != {"a", "b"}:
            errors.append('blindness needs "scenarios" with exactly the keys "a" and "b"')
    thr = config.get("threshold")
    if thr is not None and (not isinstance(thr, (int, float)) or thr <= 0):
        errors.append("threshold must be a positive number")
    return errors


def _build_input(spec, n_qubits: int, rng: np.random.Generator) -> PureState:
    if spec is None or spec == "random":
        v = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
        return PureState(v / np.linalg.norm(v))
    if spec == "zeros":
        return PureState.computational("0" * n_qubits)
    if spec == "ones":
        return PureState.computational("1" * n_qubits)
    amps = np.array([complex(re, im) for re, im in spec])
    return PureState(amps / np.linalg.norm(amps))


def _build_pattern(config: dict, angle_spec, rng: np.random.Generator) -> MeasurementPattern:
    graph = build_brickwork(config["n_wires"], config["n_columns"])
    if angle_spec is None or angle_spec == "random":
        return random_pattern(graph, rng)
    if angle_spec == "zeros":
        return MeasurementPattern(graph, {j: 0 for j in graph.measured_nodes})
    angles = {j: int(l) for j, l in zip(graph.measured_nodes, angle_spec)}
    if len(angles) != len(graph.measured_nodes):
        raise ValueError("angles list does not cover the measured nodes")
    return MeasurementPattern(graph, angles)


def _map_trials(worker, trials: int, jobs: int) -> list:
    """Run worker(i) for i in range(trials); the per-trial seeding makes the
    result independent of the job count."""
    if jobs <= 1:
        return [worker(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, range(trials)))


def _pool_distance(sum_a: list[dict], sum_b: list[dict]) -> dict[str, float]:
    """Pooled TV per message kind plus per-field TV for everything else."""
    kinds = ("t", "delta", "b", "key")
    pools_a: dict[str, list] = {k: [] for k in kinds}
    pools_b: dict[str, list] = {k: [] for k in kinds}
    rest_a: list[dict] = []
    rest_b: list[dict] = []
    for src, pools, rest in ((sum_a, pools_a, rest_a), (sum_b, pools_b, rest_b)):
        for s in src:
            row = {}
            for key, value in s.items():
                kind = key.split(":")[0]
                if kind in kinds:
                    pools[kind].append(value)
                else:
                    row[key] = value
            rest.append(row)
    result: dict[str, float] = {}
    for k in kinds:
        if pools_a[k] or pools_b[k]:
            result[k] = empirical_tv(pools_a[k], pools_b[k])
    result.update(marginal_distances(rest_a, rest_b))
    return result


# ---------------------------------------------------------------- modes


def _mode_honest_run(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    rng = np.random.default_rng([seed, 0])
    pattern = _build_pattern(config, config.get("angles"), rng)
    n_qubits = config["n_wires"] + config.get("reference_qubits", 0)
    input_state = _build_input(config.get("input"), n_qubits, rng)
    run = run_full_protocol(pattern, input_state, rng, m_copies=config.get("m_copies", 10), debug_secrets=debug)
    if run.aborted:
        return {
            "metric": "output fidelity vs direct pattern execution",
            "value": 0.0,
            "aborted": True,
            "abort": {"stage": run.abort.stage, "node": run.abort.node, "client": run.abort.client, "reason": run.abort.reason},
            "transcript": run.transcript,
            "details": {},
        }
    expected = reference_execute(pattern, input_state, np.random.default_rng([seed, 1]))
    fidelity = run.output_state.fidelity(expected)
    return {
        "metric": "output fidelity vs direct pattern execution",
        "value": fidelity,
        "passed": fidelity >= 1 - config.get("threshold", DEFAULT_THRESHOLDS["honest-run"]),
        "transcript": run.transcript,
        "details": {
            "messages": len(run.transcript.messages),
            "deltas": {str(k): v for k, v in sorted(run.delta.items())},
            "outcomes": {str(k): v for k, v in sorted(run.b.items())},
        },
    }


def _mode_blindness(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    rng = np.random.default_rng([seed, 0])
    sc = config["scenarios"]
    pattern_a = _build_pattern(config, sc["a"].get("angles"), rng)
    pattern_b = _build_pattern(config, sc["b"].get("angles"), rng)
    n_qubits = config["n_wires"] + config.get("reference_qubits", 0)
    input_a = _build_input(sc["a"].get("input"), n_qubits, rng)
    input_b = _build_input(sc["b"].get("input"), n_qubits, rng)
    distances = blindness_check(pattern_a, input_a, pattern_b, input_b)
    worst = max(distances.values())
    threshold = config.get("threshold", DEFAULT_THRESHOLDS["blindness"])
    return {
        "metric": "max exact server-view trace distance over checkpoints",
        "value": worst,
        "passed": worst <= threshold,
        "details": {"checkpoints": {k: float(v) for k, v in distances.items()}},
    }


def _mode_server_sim_equiv(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    trials = config.get("trials", 10000)
    rng0 = np.random.default_rng([seed, 0])
    pattern = _build_pattern(config, config.get("angles"), rng0)
    n_qubits = config["n_wires"] + config.get("reference_qubits", 0)
    input_state = _build_input(config.get("input"), n_qubits, rng0)
    expected = reference_execute(pattern, input_state, np.random.default_rng([seed, 1]))

    def real_worker(i: int) -> tuple[dict, float]:
        rng = np.random.default_rng([seed, 2, i])
        run = run_full_protocol(pattern, input_state, rng, m_copies=2)
        if run.aborted:
            raise RuntimeError("honest run aborted")
        return observable_summary(run, rng), run.output_state.fidelity(expected)

    def sim_worker(i: int) -> tuple[dict, float]:
        rng = np.random.default_rng([seed, 3, i])
        run = run_simulated_server_world(pattern, input_state, rng)
        return observable_summary(run, rng), run.output_state.fidelity(expected)

    real = _map_trials(real_worker, trials, jobs)
    sim = _map_trials(sim_worker, trials, jobs)
    distances = _pool_distance([s for s, _ in real], [s for s, _ in sim])
    worst = max(distances.values())
    min_fidelity = min(min(f for _, f in real), min(f for _, f in sim))
    threshold = config.get("threshold", DEFAULT_THRESHOLDS["server-sim-equiv"])
    return {
        "metric": "max pooled marginal TV, real vs simulated server world",
        "value": worst,
        "passed": worst <= threshold and min_fidelity >= 1 - 1e-6,
        "trials": trials,
        "details": {"marginals": distances, "min_output_fidelity": min_fidelity},
    }


def _mode_client_sim_equiv(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    trials = config.get("trials", 10000)
    n = config["n_wires"]
    coalition = frozenset(config.get("coalition", [n]))
    m = config.get("m_copies", 2)
    rng0 = np.random.default_rng([seed, 0])
    pattern = _build_pattern(config, config.get("angles"), rng0)
    n_qubits = n + config.get("reference_qubits", 0)
    input_state = _build_input(config.get("input"), n_qubits, rng0)

    def real_worker(i: int) -> dict:
        rng = np.random.default_rng([seed, 2, i])
        run = run_full_protocol(pattern, input_state, rng, m_copies=m)
        if run.aborted:
            raise RuntimeError("honest run aborted")
        check_no_secret_leak(run.transcript, coalition, n)
        return coalition_view_summary(run, coalition, rng)

    def sim_worker(i: int) -> dict:
        rng = np.random.default_rng([seed, 3, i])
        run = run_simulated_client_world(pattern, input_state, coalition, rng, m_copies=m)
        if run.abort:
            raise RuntimeError("simulated honest run aborted")
        check_no_secret_leak(run.transcript, coalition, n)
        return coalition_view_summary(run, coalition, rng)

    real = _map_trials(real_worker, trials, jobs)
    sim = _map_trials(sim_worker, trials, jobs)
    distances = _pool_distance(real, sim)
    worst = max(distances.values())
    threshold = config.get("threshold", DEFAULT_THRESHOLDS["client-sim-equiv"])
    return {
        "metric": "max pooled marginal TV, real vs simulated coalition view",
        "value": worst,
        "passed": worst <= threshold,
        "trials": trials,
        "details": {"marginals": distances, "coalition": sorted(coalition), "leak_checks": 2 * trials},
    }


def _mode_protocol1_detection(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    trials = config.get("trials", 10000)
    deviation = config.get("deviation", 1)

    def worker(i: int) -> tuple[int, int]:
        rng = np.random.default_rng([seed, 2, i])
        return copy_test_rejection(deviation, 1, rng)

    results = _map_trials(worker, trials, jobs)
    rejections = sum(r for r, _ in results)
    tested = sum(t for _, t in results)
    rate = rejections / tested
    expected = float(np.sin(deviation * np.pi / 8) ** 2)
    half_width = config.get("threshold", DEFAULT_THRESHOLDS["protocol1-detection"])
    lo, hi = clopper_pearson(rejections, tested)
    return {
        "metric": f"per-copy rejection rate at deviation {deviation}",
        "value": rate,
        "passed": abs(rate - expected) <= half_width,
        "trials": trials,
        "confidence_radius": (hi - lo) / 2,
        "details": {"expected": expected, "band": [expected - half_width, expected + half_width], "rejections": rejections, "tested": tested},
    }


def _mode_intermediate_equiv(config: dict, seed: int, jobs: int, debug: bool) -> dict:
    trials = config.get("trials", 10000)
    rng0 = np.random.default_rng([seed, 0])
    pattern = _build_pattern(config, config.get("angles"), rng0)
    n_qubits = config["n_wires"] + config.get("reference_qubits", 0)
    input_state = _build_input(config.get("input"), n_qubits, rng0)

    def base_worker(i: int) -> dict:
        rng = np.random.default_rng([seed, 2, i])
        run = run_full_protocol(pattern, input_state, rng, m_copies=2)
        if run.aborted:
            raise RuntimeError("honest run aborted")
        return observable_summary(run, rng)

    def version_worker(version: str, salt: int):
        def worker(i: int) -> dict:
            rng = np.random.default_rng([seed, salt, i])
            run = run_intermediate_protocol(pattern, input_state, rng, version)
            return observable_summary(run, rng)

        return worker

    base = _map_trials(base_worker, trials, jobs)
    worst = 0.0
    per_version: dict[str, dict[str, float]] = {}
    for salt, version in ((3, "teleport"), (4, "delayed")):
        samples = _map_trials(version_worker(version, salt), trials, jobs)
        distances = _pool_distance(base, samples)
        per_version[version] = distances
        worst = max(worst, max(distances.values()))
    threshold = config.get("threshold", DEFAULT_THRESHOLDS["intermediate-equiv"])
    return {
        "metric": "max pooled marginal TV, base protocol vs rewrites",
        "value": worst,
        "passed": worst <= threshold,
        "trials": trials,
        "details": {"marginals": {k: v for k, v in per_version.items()}},
    }


_MODE_RUNNERS = {
    "honest-run": _mode_honest_run,
    "blindness": _mode_blindness,
    "server-sim-equiv": _mode_server_sim_equiv,
    "client-sim-equiv": _mode_client_sim_equiv,
    "protocol1-detection": _mode_protocol1_detection,
    "intermediate-equiv": _mode_intermediate_equiv,
}


def run_experiment(config: dict, seed: int, out_dir: Path, jobs: int = 1, debug_secrets: bool = False) -> int:
    """Run one validated config and write the artifacts. Returns the exit code."""
    mode = config["mode"]
    result = _MODE_RUNNERS[mode](config, seed, jobs, debug_secrets)

    out_dir.mkdir(parents=True, exist_ok=True)
    transcript = result.pop("transcript", None)
    (out_dir / "transcript.jsonl").write_text(transcript.to_jsonl() if transcript is not None else "")

    aborted = bool(result.pop("aborted", False))
    passed = bool(result.get("passed", False)) and not aborted
    report = {
        "mode": mode,
        "scenario_ids": config.get("scenario_ids", _default_scenario_ids(mode)),
        "metric": result["metric"],
        "value": result["value"],
        "confidence_radius": result.get("confidence_radius"),
        "trials": result.get("trials"),
        "seed": seed,
        "threshold": config.get("threshold", DEFAULT_THRESHOLDS[mode]),
        "passed": passed,
        "details": result.get("details", {}),
    }
    if aborted:
        report["abort"] = result["abort"]
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    lines = [
        f"mode:      {mode}",
        f"seed:      {seed}",
        f"metric:    {report['metric']}",
        f"value:     {report['value']:.6g}",
        f"threshold: {report['threshold']:.6g}",
        f"result:    {'ABORT' if aborted else 'PASS' if passed else 'FAIL'}",
    ]
    if report["trials"]:
        lines.insert(4, f"trials:    {report['trials']}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    if aborted:
        return 3
    return 0 if passed else 2


def _default_scenario_ids(mode: str) -> list[str]:
    return {
        "honest-run": ["honest"],
        "blindness": ["a", "b"],
        "server-sim-equiv": ["real", "simulated"],
        "client-sim-equiv": ["real", "simulated"],
        "protocol1-detection": ["deviating-client"],
        "intermediate-equiv": ["base", "teleport", "delayed"],
    }[mode]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mpdqc", description="delegated multiparty blind computation experiments")
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
    parser.add_argument("--out", default="out", help="output directory for report/transcript/summary")
    parser.add_argument("--debug-secrets", action="store_true", help="include qubit amplitudes and reconstructed secrets in outputs")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for trial loops")
    args = parser.parse_args(argv)

    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config["seed"] = args.seed
    errors = validate(config)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return 1
    return run_experiment(config, config["seed"], Path(args.out), jobs=args.jobs, debug_secrets=args.debug_secrets)


if __name__ == "__main__":
    sys.exit(main())
