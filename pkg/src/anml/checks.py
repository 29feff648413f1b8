"""Seeded self-checks: finite-difference gradient verification for every
loss/objective and the parameter-reduction identities tying the anchored
log-exp loss to the multi-similarity loss and to hard max/min margins.

Shared by the ``losscheck`` CLI command and the test suite.
"""

from dataclasses import dataclass

import numpy as np

from . import linear, losses
from .data import LabeledDataset
from .losses import DanmlConfig, EmbeddingBatch

FD_STEP = 1e-5
FD_RTOL = 1e-4
N_INSTANCES = 20

CHECK_NAMES = (
    "lanml_objective",
    "pnca_objective",
    "danml_loss",
    "ms_loss",
    "lifted_improved_loss",
    "npairs_improved_loss",
    "prop3",
    "prop6",
    "prop7",
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _perturbed_batch(batch, delta):
    # Bypass validation: finite differences nudge rows slightly off the
    # unit sphere, which is exactly what the gradient differentiates.
    out = EmbeddingBatch.__new__(EmbeddingBatch)
    out.vectors = batch.vectors + delta
    out.labels = batch.labels
    out.normalized = batch.normalized
    return out


def fd_gradient_matrix(fun, M, h=FD_STEP):
    """Central finite differences of a scalar function of a matrix."""
    G = np.zeros_like(M)
    for idx in np.ndindex(M.shape):
        E = np.zeros_like(M)
        E[idx] = h
        G[idx] = (fun(M + E) - fun(M - E)) / (2 * h)
    return G


def fd_gradient_batch(loss_fn, batch, h=FD_STEP):
    """Central finite differences with respect to the embedding rows."""
    F = batch.vectors
    G = np.zeros_like(F)
    for idx in np.ndindex(F.shape):
        E = np.zeros_like(F)
        E[idx] = h
        up = loss_fn(_perturbed_batch(batch, E)).loss
        down = loss_fn(_perturbed_batch(batch, -E)).loss
        G[idx] = (up - down) / (2 * h)
    return G


def relative_gradient_error(analytic, numeric):
    scale = max(1.0, float(np.abs(analytic).max(initial=0.0)))
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def _random_dataset(rng, n=12, d=3, classes=3):
    labels = 1 + (np.arange(n) % classes)
    X = rng.normal(size=(n, d)) + 0.5 * labels[:, None]
    return LabeledDataset(X, labels)


def _random_psd(rng, d):
    A = rng.normal(size=(d, d)) / np.sqrt(d)
    return A @ A.T + 0.05 * np.eye(d)


def _random_batch(rng, n=10, e=4, classes=3):
    labels = 1 + (np.arange(n) % classes)
    V = rng.normal(size=(n, e))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return EmbeddingBatch(V, labels, normalized=True)


def _fd_check(name, instances, corrupt=False, rtol=FD_RTOL):
    worst = 0.0
    for analytic, numeric in instances:
        if corrupt:
            analytic = analytic.copy()
            analytic.flat[0] += 1e-3
        worst = max(worst, relative_gradient_error(analytic, numeric))
    passed = worst <= rtol
    return CheckResult(name, passed, f"max relative gradient error {worst:.3e}")


def check_lanml_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n_instances):
        data = _random_dataset(rng)
        M = _random_psd(rng, data.d)
        cfg = linear.LanmlConfig(
            gamma1=float(rng.uniform(0.3, 2.0) * (-1 if i % 2 else 1)),
            gamma2=float(rng.uniform(0.3, 2.0)),
            reg_weight=0.5 if i % 3 == 0 else 0.0,
            loss_kind="logistic" if i % 2 else "identity",
            similars_per_query=3,
        )
        pairs = linear.build_pair_sets(data, cfg)
        _, g = linear.lanml_objective(M, data, pairs, cfg)
        fd = fd_gradient_matrix(
            lambda A: linear.lanml_objective(A, data, pairs, cfg)[0], M
        )
        instances.append((g, fd))
    return _fd_check("lanml_objective", instances, corrupt)


def check_pnca_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed + 1)
    instances = []
    for _ in range(n_instances):
        data = _random_dataset(rng)
        M = _random_psd(rng, data.d)
        alpha = float(rng.uniform(0.5, 2.0))
        cfg = linear.LanmlConfig(pair_mode="all_similars")
        pairs = linear.build_pair_sets(data, cfg, mode="all_similars")
        _, g = linear.pnca_objective(M, data, pairs, alpha)
        fd = fd_gradient_matrix(
            lambda A: linear.pnca_objective(A, data, pairs, alpha)[0], M
        )
        instances.append((g, fd))
    return _fd_check("pnca_objective", instances, corrupt)


def check_danml_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed + 2)
    instances = []
    for i in range(n_instances):
        batch = _random_batch(rng)
        cfg = DanmlConfig(
            gamma1=float(-rng.uniform(0.5, 3.0)),
            gamma2=float(rng.uniform(5.0, 40.0)),
            lambda1=float(rng.uniform(0.2, 0.8)),
            lambda2=float(rng.uniform(0.8, 1.5)),
            loss_kind="logistic" if i % 2 else "identity",
            similarity="sq_euclidean" if i % 2 else "neg_cosine",
        )
        res = losses.danml_loss(batch, cfg)
        fd = fd_gradient_batch(lambda b: losses.danml_loss(b, cfg), batch)
        instances.append((res.grad, fd))
    return _fd_check("danml_loss", instances, corrupt)


def check_ms_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed + 3)
    instances = []
    for _ in range(n_instances):
        batch = _random_batch(rng)
        alpha = float(rng.uniform(1.0, 3.0))
        beta = float(rng.uniform(10.0, 60.0))
        margin = float(rng.uniform(0.2, 0.8))
        res = losses.ms_loss(batch, alpha, beta, margin)
        fd = fd_gradient_batch(
            lambda b: losses.ms_loss(b, alpha, beta, margin), batch
        )
        instances.append((res.grad, fd))
    return _fd_check("ms_loss", instances, corrupt)


def _lifted_params_away_from_kink(batch, rng):
    """Pick a margin keeping every anchor's hinge argument clear of zero,
    so finite differences are valid."""
    g1 = float(rng.uniform(0.5, 2.0))
    g2 = float(rng.uniform(0.5, 2.0))
    l1 = float(rng.uniform(0.2, 0.8))
    l2 = float(rng.uniform(0.2, 0.8))
    margin = float(rng.uniform(0.3, 1.0))
    F = batch.vectors
    S = F @ F.T
    labels = batch.labels
    for _ in range(200):
        clear = True
        for i in range(batch.n):
            P = np.flatnonzero((labels == labels[i]) & (np.arange(batch.n) != i))
            N = np.flatnonzero(labels != labels[i])
            zp = np.concatenate(([-g1 * l1], -g1 * S[i, P]))
            zn = np.concatenate(([g2 * l2], g2 * S[i, N]))
            h = (
                (zp.max() + np.log(np.exp(zp - zp.max()).sum())) / g1
                + (zn.max() + np.log(np.exp(zn - zn.max()).sum())) / g2
                + margin
            )
            if abs(h) < 1e-3:
                clear = False
                break
        if clear:
            break
        margin += 3.3e-3
    return g1, g2, l1, l2, margin


def check_lifted_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed + 4)
    instances = []
    for _ in range(n_instances):
        batch = _random_batch(rng)
        g1, g2, l1, l2, margin = _lifted_params_away_from_kink(batch, rng)
        res = losses.lifted_improved_loss(batch, g1, g2, l1, l2, margin)
        fd = fd_gradient_batch(
            lambda b: losses.lifted_improved_loss(b, g1, g2, l1, l2, margin),
            batch,
        )
        instances.append((res.grad, fd))
    return _fd_check("lifted_improved_loss", instances, corrupt)


def check_npairs_gradient(seed=0, n_instances=N_INSTANCES, corrupt=False):
    rng = np.random.default_rng(seed + 5)
    instances = []
    for _ in range(n_instances):
        n_pairs = int(rng.integers(3, 6))
        labels = np.repeat(np.arange(1, n_pairs + 1), 2)
        V = rng.normal(size=(2 * n_pairs, 5))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        batch = EmbeddingBatch(V, labels, normalized=True)
        gamma = float(rng.uniform(0.5, 2.5))
        lam = float(rng.uniform(0.0, 0.5))
        res = losses.npairs_improved_loss(batch, gamma, lam)
        fd = fd_gradient_batch(
            lambda b: losses.npairs_improved_loss(b, gamma, lam), batch
        )
        instances.append((res.grad, fd))
    return _fd_check("npairs_improved_loss", instances, corrupt)


def check_prop3_limit(seed=0, n_instances=N_INSTANCES, tol=1e-2):
    """At gamma = -1e3 / +1e3 the per-query argument matches the hard
    max-similar minus min-dissimilar distance."""
    rng = np.random.default_rng(seed + 6)
    cfg = linear.LanmlConfig(gamma1=-1e3, gamma2=1e3, loss_kind="identity",
                             similars_per_query=3)
    worst = 0.0
    for _ in range(n_instances):
        data = _random_dataset(rng)
        M = _random_psd(rng, data.d)
        pairs = linear.build_pair_sets(data, cfg)
        D = linear.pairwise_sqmahalanobis(data.features, M)
        loss, _ = linear.lanml_objective(M, data, pairs, cfg)
        hard = sum(
            D[i, pairs.similars[i]].max() - D[i, pairs.dissimilars[i]].min()
            for i in range(data.n)
        )
        worst = max(worst, abs(loss - hard) / data.n)
    return CheckResult("prop3", worst <= tol,
                       f"max per-query deviation {worst:.3e}")


def check_prop6_limit(seed=0, n_instances=N_INSTANCES, tol=1e-2):
    """At |gamma| = 1e3 each anchor's argument matches max-positive-distance
    minus min-negative-distance, the hardest-triplet margin quantity."""
    rng = np.random.default_rng(seed + 7)
    worst = 0.0
    for _ in range(n_instances):
        batch = _random_batch(rng)
        # Anchor constants chosen not to clip the hard extremes.
        cfg = DanmlConfig(gamma1=-1e3, gamma2=1e3, lambda1=0.0, lambda2=8.0,
                          loss_kind="identity", similarity="sq_euclidean")
        res = losses.danml_loss(batch, cfg)
        D = losses._distances(batch, "sq_euclidean")
        pos, neg = losses._pair_index_lists(batch.labels)
        for i in range(batch.n):
            hard = D[i, pos[i]].max() - D[i, neg[i]].min()
            worst = max(worst, abs(res.per_anchor[i] - hard))
    return CheckResult("prop6", worst <= tol,
                       f"max per-anchor deviation {worst:.3e}")


def check_prop7_identity(seed=0, tol=1e-10):
    """The anchored log-exp loss with identity penalty, lambda1 = lambda2 = m
    and gammas (-alpha, beta) has exactly the multi-similarity gradient; the
    value gap is the batch-size constant sum_i [log(|P_i|+1)/alpha +
    log(|N_i|+1)/beta]."""
    rng = np.random.default_rng(seed + 8)
    alpha, beta, margin = 2.0, 40.0, 0.5
    cfg = DanmlConfig(gamma1=-alpha, gamma2=beta, lambda1=margin,
                      lambda2=margin, loss_kind="identity",
                      similarity="neg_cosine")
    worst_grad = 0.0
    gaps = []
    for _ in range(2):
        batch = _random_batch(rng, n=12, e=5, classes=3)
        danml = losses.danml_loss(batch, cfg)
        ms = losses.ms_loss(batch, alpha, beta, margin, neg_cosine=True)
        worst_grad = max(worst_grad, float(np.abs(danml.grad - ms.grad).max()))
        pos, neg = losses._pair_index_lists(batch.labels)
        expected_gap = sum(
            np.log(pos[i].size + 1) / alpha + np.log(neg[i].size + 1) / beta
            for i in range(batch.n)
        )
        gaps.append((ms.loss - danml.loss, expected_gap))
    gap_err = max(abs(g - e) for g, e in gaps)
    constant_err = abs(gaps[0][0] - gaps[1][0])
    passed = worst_grad <= tol and gap_err <= 1e-8 and constant_err <= 1e-8
    return CheckResult(
        "prop7", passed,
        f"max gradient gap {worst_grad:.3e}, value-gap error {gap_err:.3e}, "
        f"cross-batch constant drift {constant_err:.3e}",
    )


def run_checks(seed=0, only=None, corrupt=None):
    """Run the named checks (all by default).  ``corrupt`` injects an error
    into that check's analytic gradient, for fault-injection testing."""
    builders = {
        "lanml_objective": lambda: check_lanml_gradient(seed, corrupt=corrupt == "lanml_objective"),
        "pnca_objective": lambda: check_pnca_gradient(seed, corrupt=corrupt == "pnca_objective"),
        "danml_loss": lambda: check_danml_gradient(seed, corrupt=corrupt == "danml_loss"),
        "ms_loss": lambda: check_ms_gradient(seed, corrupt=corrupt == "ms_loss"),
        "lifted_improved_loss": lambda: check_lifted_gradient(seed, corrupt=corrupt == "lifted_improved_loss"),
        "npairs_improved_loss": lambda: check_npairs_gradient(seed, corrupt=corrupt == "npairs_improved_loss"),
        "prop3": lambda: check_prop3_limit(seed),
        "prop6": lambda: check_prop6_limit(seed),
        "prop7": lambda: check_prop7_identity(seed),
    }
    selected = [n for n in CHECK_NAMES if only is None or only in n]
    return [builders[name]() for name in selected]
