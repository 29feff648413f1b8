"""Acceptance suite: every headline guarantee at its stated tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them on
success).  Runtime budgets are asserted alongside correctness.
"""

import json
import time

import numpy as np
import pytest

from anml import (DanmlConfig, EmbeddingBatch, LabeledDataset, LanmlConfig,
                  NeighborhoodSpec, QueryContext, SyntheticSpec, danml_loss,
                  gamma_for_k, log_exp_mean, membership_na, recall_at_k,
                  solve_lanml, toy_embedding_train, trimmed_radius)
from anml.checks import (check_danml_gradient, check_lanml_gradient,
                         check_lifted_gradient, check_ms_gradient,
                         check_npairs_gradient, check_pnca_gradient,
                         check_prop3_limit, check_prop6_limit,
                         check_prop7_identity)
from anml.cli import main as cli_main
from anml.geometry import min_l1_representation
from anml.linear import build_pair_sets, lanml_objective, pnca_per_query

from conftest import (l1_grid_oracle, nca_probability, projection_draws,
                      stays_inside_all_projections)


def report(name, ok, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"[{'PASS' if ok else 'FAIL'}] {name}{suffix}")
    assert ok, f"{name}{suffix}"


def random_psd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T / d + 0.05 * np.eye(d)


def synthetic_classes(rng, n=18, d=3, classes=3, shift=0.8):
    labels = 1 + (np.arange(n) % classes)
    X = rng.normal(size=(n, d)) + shift * labels[:, None]
    return LabeledDataset(X, labels)


def test_lemma1_limits():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        a = rng.uniform(-10, 10, size=n)
        spread = a.max() - a.min()
        assert abs(log_exp_mean(a, 1e-12) - a.mean()) <= 1e-8
        assert abs(log_exp_mean(a, 1e3) - a.min()) <= 1e-2 * spread
        assert abs(log_exp_mean(a, -1e3) - a.max()) <= 1e-2 * spread
    elapsed = time.perf_counter() - start
    report("lemma1 limits (100 series, gamma {1e-12, +-1e3})",
           elapsed < 1.0, f"{elapsed:.2f}s")


def test_lemma2_monotonicity():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        a = rng.uniform(-10, 10, size=n)
        constant = np.unique(a).size == 1
        for _ in range(10):
            g1, g2 = np.sort(rng.uniform(-30, 30, size=2))
            if g1 == g2:
                continue
            b1, b2 = log_exp_mean(a, g1), log_exp_mean(a, g2)
            assert b1 >= b2
            if not constant:
                assert b1 > b2
    elapsed = time.perf_counter() - start
    report("lemma2 monotonicity (100 series x 10 gamma pairs)",
           elapsed < 1.0, f"{elapsed:.2f}s")


def test_theorem3_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 11))
        a = np.sort(rng.uniform(-10, 10, size=n))
        while np.unique(a).size != n:
            a = np.sort(rng.uniform(-10, 10, size=n))
        for k in range(1, n + 1):
            for alpha in (1, -1):
                spec = NeighborhoodSpec(k, alpha)
                g = gamma_for_k(a, spec)
                assert abs(log_exp_mean(a, g) - trimmed_radius(a, spec)) <= 1e-8
    elapsed = time.perf_counter() - start
    report("theorem3 round trip (50 series, every K and sign)",
           elapsed < 5.0, f"{elapsed:.2f}s")


def test_theorem1_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(31)
    band = 2e-3
    disagreements = 0
    checked = 0
    inside_cases = []
    while checked < 200:
        s = int(rng.integers(1, 4))
        query = rng.normal(size=2)
        S = query + rng.normal(size=(s, 2))
        point = query + rng.normal(size=2) * rng.uniform(0.2, 1.5)
        r, l1 = min_l1_representation(S - query, point - query)
        oracle = l1_grid_oracle(S - query, point - query)
        checked += 1
        if oracle is None:
            assert r is None
            continue
        assert abs(l1 - oracle) <= band
        if abs(l1 - 1.0) > band:
            disagreements += (l1 < 1.0) != (oracle < 1.0)
        if l1 < 0.98:
            inside_cases.append((query, S, point))
    assert disagreements == 0

    Ls = projection_draws(np.random.default_rng(99), 2, n_draws=1000)
    assert len(inside_cases) >= 10
    for query, S, point in inside_cases:
        assert stays_inside_all_projections(Ls, query, S, point)
    elapsed = time.perf_counter() - start
    report("theorem1 oracle (200 LP-vs-grid instances + 1000-draw projections)",
           elapsed < 30.0,
           f"{elapsed:.2f}s, {len(inside_cases)} strictly-inside points")


def test_gradient_suite():
    start = time.perf_counter()
    results = [
        check_lanml_gradient(), check_pnca_gradient(), check_danml_gradient(),
        check_ms_gradient(), check_lifted_gradient(), check_npairs_gradient(),
    ]
    elapsed = time.perf_counter() - start
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"
    report("gradient suite (6 ops x 20 instances, relative 1e-4)",
           elapsed < 30.0, f"{elapsed:.2f}s")


def test_lemma3_convexity():
    rng = np.random.default_rng(13)
    data = synthetic_classes(rng)
    for kind in ("identity", "hinge"):
        cfg = LanmlConfig(gamma1=-0.8, gamma2=1.1, loss_kind=kind,
                          similars_per_query=3)
        pairs = build_pair_sets(data, cfg)
        for _ in range(100):
            M1, M2 = random_psd(rng, data.d), random_psd(rng, data.d)
            f1, _ = lanml_objective(M1, data, pairs, cfg)
            f2, _ = lanml_objective(M2, data, pairs, cfg)
            fm, _ = lanml_objective((M1 + M2) / 2, data, pairs, cfg)
            assert fm <= (f1 + f2) / 2 + 1e-9

    gaps = []
    for seed in range(5):
        d_rng = np.random.default_rng(100 + seed)
        data = synthetic_classes(d_rng, n=15)
        cfg = LanmlConfig(gamma1=-0.7, gamma2=0.9, reg_weight=0.3,
                          loss_kind="logistic", similars_per_query=3,
                          max_iters=4000, grad_tol=1e-9)
        l1 = solve_lanml(data, cfg, init=random_psd(d_rng, data.d)).trace[-1]["loss"]
        l2 = solve_lanml(data, cfg, init=random_psd(d_rng, data.d)).trace[-1]["loss"]
        assert abs(l1 - l2) <= 1e-4 * (1 + abs(l1))
        gaps.append(abs(l1 - l2))
    report("lemma3 convexity (200 midpoint pairs + 5 two-init runs)",
           True, f"max two-init gap {max(gaps):.2e}")


def test_prop4_pnca_equals_nca():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(20):
        data = synthetic_classes(rng, n=12)
        M = random_psd(rng, data.d)
        pairs = build_pair_sets(data, LanmlConfig(), mode="all_similars")
        mine = pnca_per_query(M, data, pairs, 1.0)
        for i in range(data.n):
            worst = max(worst, abs(
                mine[i] - nca_probability(M, data.features, data.labels, i)
            ))
    report("prop4 pnca(alpha=1) == nca probabilities (20 instances)",
           worst <= 1e-10, f"max deviation {worst:.2e}")


def test_prop7_ms_reduction():
    r = check_prop7_identity()
    report("prop7 danml->multi-similarity reduction", r.passed, r.detail)


def test_prop3_prop6_limits():
    r3 = check_prop3_limit()
    r6 = check_prop6_limit()
    report("prop3/prop6 hard limits at |gamma| = 1e3",
           r3.passed and r6.passed, f"{r3.detail}; {r6.detail}")


def test_table2_spot_check(tmp_path):
    start = time.perf_counter()
    results = {}
    for dataset in ("iris", "wine"):
        out = tmp_path / dataset
        code = cli_main([
            "train", "--dataset", dataset, "--learner", "lanml-minus",
            "--preset", "paper-uci", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        results[dataset] = json.loads((out / "summary.json").read_text())
    elapsed = time.perf_counter() - start
    iris_mean = results["iris"]["mean"]
    wine_mean = results["wine"]["mean"]
    ok = iris_mean >= 0.95 and wine_mean >= 0.92 and elapsed < 300.0
    report("table2 spot check (paper-uci preset, 30 trials)",
           ok, f"iris {iris_mean:.4f} (>=0.95), wine {wine_mean:.4f} (>=0.92), "
               f"{elapsed:.1f}s")


def test_deep_substitute_training():
    start = time.perf_counter()
    spec = SyntheticSpec(n_classes=2, n_per_class=10, dim=8, seed=0)
    before = recall_at_k(spec.sample(), [1]).recall_at[1]

    final, trace = toy_embedding_train(spec, "danml", steps=500, step_size=0.1)
    danml_ok = trace[-1] < trace[0] and \
        recall_at_k(final, [1]).recall_at[1] >= before

    final, trace2 = toy_embedding_train(spec, "triplet", steps=500,
                                        step_size=0.1)
    triplet_ok = trace2[-1] < trace2[0] and \
        recall_at_k(final, [1]).recall_at[1] >= before
    elapsed = time.perf_counter() - start
    report("synthetic embedding training (danml + triplet, 500 steps)",
           danml_ok and triplet_ok and elapsed < 60.0, f"{elapsed:.1f}s")


def test_determinism_byte_identical(tmp_path):
    args = ["train", "--dataset", "iris", "--learner", "lanml-minus",
            "--trials", "3", "--seed", "11", "--max-iters", "25"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli_main(args + ["--out", str(out1)]) == 0
    assert cli_main(args + ["--out", str(out2)]) == 0
    same = (out1 / "summary.json").read_bytes() == \
        (out2 / "summary.json").read_bytes()
    report("determinism: identical seeds give byte-identical summaries", same)
