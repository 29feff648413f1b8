"""Shared independent oracles for the test suite.

These deliberately avoid the code paths they check: the L1 oracle
parametrizes the constraint set geometrically and grid-searches it, and the
projection oracle draws random linear maps.
"""

import numpy as np
import pytest


def l1_grid_oracle(diffs, target, step=1e-3):
    """Minimum coefficient L1-norm of ``diffs.T r = target`` by dense grid
    search over the (at most 1-D here) solution set.

    Returns None when target is outside the span of the rows.  Exact up to
    the grid resolution times the slope of the L1 norm along the line.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    s = diffs.shape[0]
    A = diffs.T  # d x s
    r0, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
    if np.linalg.norm(A @ r0 - target) > 1e-6 * (1.0 + np.linalg.norm(target)):
        return None
    null_dim = s - rank
    if null_dim == 0:
        return float(np.abs(r0).sum())
    assert null_dim == 1, "oracle only supports solution sets of dimension <= 1"
    _, _, Vt = np.linalg.svd(A)
    nvec = Vt[rank]
    nvec = nvec / np.abs(nvec).max()
    span = 2.0 * np.abs(r0).sum() / np.abs(nvec).sum() + 1.0
    ts = np.arange(-span, span + step, step)
    vals = np.abs(r0[None, :] + ts[:, None] * nvec[None, :]).sum(axis=1)
    return float(vals.min())


def projection_draws(rng, d, n_draws=1000):
    """Random full-rank-ish linear maps with standard normal entries."""
    return rng.normal(size=(n_draws, d, d))


def stays_inside_all_projections(Ls, query, similars, point):
    """True when the point lies inside the similarity neighborhood under
    every drawn map: there is always a similar sample farther away."""
    v = point - query
    y = np.linalg.norm(np.einsum("nij,i->nj", Ls, v), axis=1)
    dmax = np.zeros(len(Ls))
    for xj in similars:
        w = xj - query
        dmax = np.maximum(dmax, np.linalg.norm(np.einsum("nij,i->nj", Ls, w), axis=1))
    return bool(np.all(y < dmax))


def escapes_some_projection(Ls, query, similars, point):
    """True when at least one drawn map pushes the point outside the
    similarity neighborhood (no similar sample farther away)."""
    v = point - query
    y = np.linalg.norm(np.einsum("nij,i->nj", Ls, v), axis=1)
    dmax = np.zeros(len(Ls))
    for xj in similars:
        w = xj - query
        dmax = np.maximum(dmax, np.linalg.norm(np.einsum("nij,i->nj", Ls, w), axis=1))
    return bool(np.any(y >= dmax))


def nca_probability(M, X, y, i):
    """Independently coded NCA probability of query i being classified
    correctly: softmax of negated squared Mahalanobis distances over all
    other samples, summed over the same-class ones."""
    diffs = X - X[i]
    d = np.einsum("ij,jk,ik->i", diffs, M, diffs)
    d[i] = np.inf
    e = np.exp(-d)
    return float(e[y == y[i]].sum() / e.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
