"""Acceptance gate: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one PASS/FAIL line
per criterion (the [PASS] prints pair with pytest's FAILED lines).
"""

import json
import os
import time

import numpy as np
import pytest

from subspace_shot.baselines import fit_prototypes, predict_cosine
from subspace_shot.cli import main
from subspace_shot.data_io import gen_synthetic, l2_normalize_columns, load_bank
from subspace_shot.decomposition import (
    EpisodeMatrices,
    SolverConfig,
    grad_basis,
    grad_coefficients,
    init_basis,
    init_coefficients,
    predict_labels,
    solve,
)
from subspace_shot.harness import (
    EpisodeSpec,
    confidence_interval,
    run_benchmark,
    sample_episode,
)
from subspace_shot.rng import SplitMix64

from oracles import central_diff_grad, grid_search_factorization, snap_to_grid

# recorded on first run of the transductive-benefit criterion (subspace mean
# minus nearest-class-mean baseline mean, setup pinned in the test below)
TRANSDUCTIVE_MARGIN = 0.23388000000000697


def _passed(name: str) -> None:
    print(f"\n[PASS] {name}")


def _random_episode(seed: int, dim: int, n_classes: int, k_shot: int, n_query: int):
    rng = SplitMix64(seed)
    cols = n_classes * k_shot + n_query
    emb = rng.floats(dim * cols).reshape(dim, cols)
    return EpisodeMatrices(
        embeddings=emb,
        n_classes=n_classes,
        n_support=n_classes * k_shot,
        n_query=n_query,
        support_labels=np.repeat(np.arange(n_classes), k_shot),
    )


def test_gradient_correctness():
    """Both analytic gradients match central finite differences (step 1e-6)
    within 1e-5 relative error on 20 seeded instances, in under a second."""
    start = time.perf_counter()
    rng = SplitMix64(101)
    for _ in range(20):
        dim = 2 + rng.next_below(7)  # p <= 8
        n_classes = 2 + rng.next_below(3)
        cols = n_classes + rng.next_below(11 - n_classes)  # M <= 10
        emb = rng.floats(dim * cols).reshape(dim, cols) * 2.0
        basis = rng.floats(dim * n_classes).reshape(dim, n_classes) + 0.1
        coeffs = rng.floats(n_classes * cols).reshape(n_classes, cols) + 0.1

        def f_basis(b):
            return 0.5 * float(((emb - b @ coeffs) ** 2).sum())

        def f_coeffs(c):
            return 0.5 * float(((emb - basis @ c) ** 2).sum())

        fd_b = central_diff_grad(f_basis, basis.copy(), step=1e-6)
        fd_c = central_diff_grad(f_coeffs, coeffs.copy(), step=1e-6)
        err_b = np.linalg.norm(grad_basis(emb, basis, coeffs) - fd_b)
        err_c = np.linalg.norm(grad_coefficients(emb, basis, coeffs) - fd_c)
        assert err_b / np.linalg.norm(fd_b) <= 1e-5
        assert err_c / np.linalg.norm(fd_c) <= 1e-5
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"gradient check took {elapsed:.2f}s"
    _passed(f"gradient correctness (20 instances, {elapsed:.2f}s)")


def test_monotone_descent():
    """On 50 seeded episodes (p=32, 5-way, 1-shot, 75 queries) the objective
    trace never increases beyond 1e-12 and both factors stay nonnegative."""
    start = time.perf_counter()
    for seed in range(50):
        ep = _random_episode(7000 + seed, dim=32, n_classes=5, k_shot=1, n_query=75)
        dec = solve(ep, SolverConfig())
        trace = np.asarray(dec.objective_trace)
        assert (np.diff(trace) <= 1e-12).all(), f"trace increased (seed {seed})"
        assert dec.basis.min() >= 0.0
        assert dec.coefficients.min() >= 0.0
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"descent check took {elapsed:.1f}s"
    _passed(f"monotone descent and feasibility (50 episodes, {elapsed:.1f}s)")


def _grid_instance(seed: int) -> EpisodeMatrices:
    # exactly factorizable: both true factors live on the 0.05 grid
    rng = SplitMix64(seed)
    while True:
        basis_true = np.array(
            [[0.05 * rng.next_below(41) for _ in range(2)] for _ in range(3)]
        )
        norms_ok = (np.linalg.norm(basis_true, axis=0) > 0.3).all()
        distinct = np.abs(basis_true[:, 0] - basis_true[:, 1]).sum() > 0.5
        if norms_ok and distinct:
            break
    coeffs_true = np.zeros((2, 4))
    coeffs_true[0, 0] = 1.0
    coeffs_true[1, 1] = 1.0
    coeffs_true[:, 2:] = np.array(
        [[0.05 * rng.next_below(21) for _ in range(2)] for _ in range(2)]
    )
    emb = basis_true @ coeffs_true
    return EpisodeMatrices(emb, 2, 2, 2, np.array([0, 1]))


def test_oracle_equivalence():
    """On 10 tiny instances (p=3, 2 classes, 4 columns) the solver's final
    objective lands within 1e-3 of a brute-force 0.05-grid search over every
    factor entry on [0, 2]."""
    start = time.perf_counter()
    cfg = SolverConfig()
    for seed in range(10):
        ep = _grid_instance(8800 + seed)
        oracle_best = grid_search_factorization(
            ep.embeddings,
            snap_to_grid(init_basis(ep, cfg), 0.05, 0.0, 2.0),
            snap_to_grid(init_coefficients(ep, cfg), 0.05, 0.0, 2.0),
            grid_step=0.05,
            lo=0.0,
            hi=2.0,
        )
        dec = solve(ep, cfg)
        gap = abs(dec.objective_trace[-1] - oracle_best)
        assert gap <= 1e-3, f"instance {seed}: solver/oracle gap {gap:.3e}"
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0, f"oracle comparison took {elapsed:.1f}s"
    _passed(f"grid-search oracle equivalence (10 instances, {elapsed:.1f}s)")


def test_noiseless_recovery():
    """A zero-noise block bank is classified perfectly: mean accuracy exactly
    100% with zero confidence halfwidth over 200 episodes."""
    bank = gen_synthetic(8, 16, 64, 0.0, "onehot_blocks", seed=31)
    spec = EpisodeSpec(n_way=5, k_shot=1, n_query_per_class=15, n_episodes=200, seed=17)
    report = run_benchmark(bank, spec, "subspace")
    assert report.mean_accuracy == 1.0
    assert report.ci95_halfwidth == 0.0
    assert report.n_failures == 0
    _passed("noiseless recovery (200 episodes at exactly 100.00% +/- 0.00)")


def test_prototypical_reduction_identity():
    """With zero sweeps, zero jitter, and a column-normalized bank, the
    subspace readout equals the cosine nearest-prototype prediction on every
    query of 100 seeded episodes."""
    bank = l2_normalize_columns(gen_synthetic(10, 16, 32, 0.6, "random_nonneg", seed=23))
    spec = EpisodeSpec(n_way=5, k_shot=1, n_query_per_class=15, n_episodes=100, seed=29)
    cfg = SolverConfig(max_iters=0, basis_jitter_eps=0.0)
    for index in range(spec.n_episodes):
        episode, _ = sample_episode(bank, spec, index)
        subspace_preds = predict_labels(solve(episode, cfg), episode)
        cosine_preds = predict_cosine(
            fit_prototypes(episode), episode.query_embeddings
        )
        assert np.array_equal(subspace_preds, cosine_preds), f"episode {index}"
    _passed("prototypical reduction identity (100 episodes, exact label equality)")


def test_transductive_benefit_at_desk_scale():
    """On a sigma=0.6 block bank (p=64) the transductive solver is at least
    as accurate as the nearest-class-mean baseline minus its confidence
    halfwidth over 1000 episodes; the margin is pinned as a regression
    value."""
    bank = gen_synthetic(10, 30, 64, 0.6, "onehot_blocks", seed=20250810)
    spec = EpisodeSpec(n_way=5, k_shot=1, n_query_per_class=15, n_episodes=1000, seed=424242)
    subspace = run_benchmark(bank, spec, "subspace")
    proto = run_benchmark(bank, spec, "proto_euclidean")
    assert (
        subspace.mean_accuracy
        >= proto.mean_accuracy - proto.ci95_halfwidth
    ), f"{subspace.summary_line()} vs {proto.summary_line()}"
    margin = subspace.mean_accuracy - proto.mean_accuracy
    assert abs(margin - TRANSDUCTIVE_MARGIN) < 1e-9, (
        f"margin drifted: {margin!r} (recorded {TRANSDUCTIVE_MARGIN!r})"
    )
    _passed(
        "transductive benefit at desk scale "
        f"({subspace.summary_line()} vs {proto.summary_line()}, "
        f"margin +{100 * margin:.2f} points)"
    )


@pytest.fixture(scope="module")
def protocol_bank(tmp_path_factory):
    path = tmp_path_factory.mktemp("protocol") / "bank.emb"
    argv = [
        "gen-synth", "--n-classes", "20", "--per-class", "25", "--dim", "32",
        "--noise-sigma", "0.6", "--seed", "5", "--out", str(path),
    ]
    assert main(argv) == 0
    return path


def test_protocol_fidelity(protocol_bank, tmp_path, capsys):
    """The CLI accepts the benchmark protocols exactly as published (5-way /
    1-shot / 15-query / 10000 episodes, and the 10-way / 10-query variant)
    and finishes both on a matching synthetic bank within 10 minutes; the
    confidence interval matches the hand-computed reference."""
    mean, halfwidth = confidence_interval([0.8, 1.0, 0.6])
    assert mean == pytest.approx(0.8, abs=1e-12)
    assert halfwidth == pytest.approx(0.2263, abs=5e-5)

    start = time.perf_counter()
    out5 = tmp_path / "five_way.json"
    argv5 = [
        "evaluate", "--bank", str(protocol_bank), "--method", "subspace",
        "--n-way", "5", "--k-shot", "1", "--n-query", "15",
        "--episodes", "10000", "--seed", "0", "--threads", "2",
        "--out", str(out5),
    ]
    assert main(argv5) == 0
    doc5 = json.loads(out5.read_text())
    assert len(doc5["runs"][0]["per_episode_accuracy"]) == 10000

    out10 = tmp_path / "ten_way.json"
    argv10 = [
        "evaluate", "--bank", str(protocol_bank), "--method", "subspace",
        "--n-way", "10", "--k-shot", "1", "--n-query", "10",
        "--episodes", "10000", "--seed", "0", "--threads", "2",
        "--out", str(out10),
    ]
    assert main(argv10) == 0
    doc10 = json.loads(out10.read_text())
    assert len(doc10["runs"][0]["per_episode_accuracy"]) == 10000

    elapsed = time.perf_counter() - start
    assert elapsed < 600.0, f"protocol runs took {elapsed:.0f}s"
    capsys.readouterr()
    _passed(
        "protocol fidelity (5-way and 10-way, 10000 episodes each, "
        f"{elapsed:.0f}s; CI formula matches 0.2263 reference)"
    )


def test_determinism_byte_identical(protocol_bank, tmp_path, capsys):
    """Two benchmark runs from identical manifests write byte-identical
    report JSON."""
    outputs = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        argv = [
            "evaluate", "--bank", str(protocol_bank), "--method", "subspace",
            "--n-way", "5", "--k-shot", "1", "--n-query", "15",
            "--episodes", "300", "--seed", "99", "--out", str(out),
        ]
        assert main(argv) == 0
        outputs.append(out.read_bytes())
    capsys.readouterr()
    assert outputs[0] == outputs[1]
    manifests = [json.loads(blob)["manifest"] for blob in outputs]
    assert manifests[0] == manifests[1]
    _passed("determinism (byte-identical reports from identical manifests)")


@pytest.mark.skipif(
    "SUBSPACE_SHOT_REAL_BANK" not in os.environ,
    reason="set SUBSPACE_SHOT_REAL_BANK to a bank exported from a real "
    "backbone to run the environment-dependent full-scale check (see README)",
)
def test_real_backbone_vicinity_optional():
    """Environment-dependent: with user-supplied backbone embeddings, the
    published full-scale protocol should land near its reported accuracy
    (e.g. about 81% for a ResNet-12 tiered split); checkpoint provenance
    makes exact reproduction impossible, so this only reports and sanity
    checks above chance."""
    bank = load_bank(os.environ["SUBSPACE_SHOT_REAL_BANK"], allow_negative=False)
    spec = EpisodeSpec(n_way=5, k_shot=1, n_query_per_class=15, n_episodes=10000, seed=0)
    report = run_benchmark(bank, spec, "subspace", threads=os.cpu_count() or 1)
    assert report.mean_accuracy > 1.0 / spec.n_way
    _passed(f"real-backbone protocol: {report.summary_line()}")
