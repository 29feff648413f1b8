"""Inseparable-region membership tests and class-gap diagnostics.

For a query ``x_i`` with similar samples ``S``, the region from which no
linear metric can exclude a point is exactly the set of points
``x = x_i + sum_j r_j (x_j - x_i)`` with ``sum_j |r_j| < 1``; the mirrored
region built from dissimilar differences with coefficient L1-norm above 1 is
the set no metric can bring inside every dissimilar-bounded neighborhood.
Membership therefore reduces to a minimum-L1-norm representation problem,
solved here as a linear program (split ``r = r+ - r-``) on a dense simplex.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels
from .exceptions import InvalidInputError, SolverError

TOL_BOUNDARY = 1e-6
TOL_LP = 1e-8


@dataclass(frozen=True)
class QueryContext:
    """A query point together with its similar and dissimilar samples."""

    query: np.ndarray
    similars: np.ndarray
    dissimilars: np.ndarray

    @staticmethod
    def build(query, similars=(), dissimilars=()):
        q = np.atleast_1d(np.asarray(query, dtype=np.float64))
        s = np.asarray(similars, dtype=np.float64).reshape(len(similars), -1) \
            if len(similars) else np.empty((0, q.size))
        d = np.asarray(dissimilars, dtype=np.float64).reshape(len(dissimilars), -1) \
            if len(dissimilars) else np.empty((0, q.size))
        if s.shape[1] != q.size or d.shape[1] != q.size:
            raise InvalidInputError("all vectors must share the query's dimension")
        return QueryContext(q, s, d)


@dataclass(frozen=True)
class RegionVerdict:
    """Outcome of a membership test.

    ``min_l1`` is None when the point is not in the span of the difference
    vectors; otherwise it is the minimum coefficient L1-norm and
    ``representation`` achieves it.  ``boundary`` marks verdicts within
    TOL_BOUNDARY of the critical value 1.
    """

    in_region: bool
    min_l1: Optional[float]
    representation: Optional[np.ndarray] = None
    boundary: bool = False

    @property
    def in_span(self):
        return self.min_l1 is not None


def min_l1_representation(diffs, target, tol=TOL_LP):
    """Minimum-L1 coefficients r with ``diffs.T @ r == target``.

    Parameters
    ----------
    diffs : (s, d) array
        Difference vectors, one per row.
    target : (d,) array

    Returns
    -------
    (r, l1) or (None, None) when target is outside the span of the rows.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    s, d = diffs.shape
    # Uniform rescaling leaves the coefficients r invariant and keeps the
    # tableau entries near unity regardless of the data's scale.
    amplitude = max(float(np.abs(diffs).max(initial=0.0)),
                    float(np.abs(target).max(initial=0.0)))
    if amplitude > 0.0:
        diffs = diffs / amplitude
        target = target / amplitude
    A = np.hstack([diffs.T, -diffs.T])  # d x 2s
    c = np.ones(2 * s)
    status, x = _kernels.simplex_min(A, target, c)
    if status == _kernels.INFEASIBLE:
        return None, None
    if status != _kernels.OPTIMAL:
        raise SolverError(f"simplex did not converge (status {status})")
    r = x[:s] - x[s:]
    scale = 1.0 + float(np.abs(target).max(initial=0.0))
    if np.abs(diffs.T @ r - target).max(initial=0.0) > tol * scale:
        raise SolverError("LP solution failed the residual check")
    return r, float(x.sum())


def _context_diffs(ctx, point, samples, side):
    point = np.asarray(point, dtype=np.float64)
    if point.shape != ctx.query.shape:
        raise InvalidInputError("point dimension does not match the query")
    if samples.shape[0] < 1:
        raise InvalidInputError(f"membership test needs at least one {side} sample")
    return samples - ctx.query, point - ctx.query


def membership_na(ctx, point):
    """Test whether ``point`` lies where no metric can exclude it.

    True membership means the point is a combination of similar-sample
    differences with coefficient L1-norm strictly below 1 (boundary band
    excluded).  Points outside the span are not members.
    """
    diffs, w = _context_diffs(ctx, point, ctx.similars, "similar")
    r, l1 = min_l1_representation(diffs, w)
    if r is None:
        return RegionVerdict(in_region=False, min_l1=None)
    boundary = abs(l1 - 1.0) <= TOL_BOUNDARY
    return RegionVerdict(
        in_region=bool(l1 < 1.0 - TOL_BOUNDARY),
        min_l1=l1,
        representation=r,
        boundary=boundary,
    )


def membership_nb(ctx, point):
    """Test whether ``point`` can never be brought inside every
    dissimilar-bounded neighborhood of the query.

    Membership holds when the minimum-L1 representation over dissimilar
    differences exceeds 1, and also when the point is outside their span
    (no linear map can bound such a point by the dissimilar samples).
    """
    diffs, w = _context_diffs(ctx, point, ctx.dissimilars, "dissimilar")
    r, l1 = min_l1_representation(diffs, w)
    if r is None:
        return RegionVerdict(in_region=True, min_l1=None)
    boundary = abs(l1 - 1.0) <= TOL_BOUNDARY
    return RegionVerdict(
        in_region=bool(l1 > 1.0 + TOL_BOUNDARY),
        min_l1=l1,
        representation=r,
        boundary=boundary,
    )


def class_gap(data):
    """Minimum cross-class Euclidean distance, per class pair and overall.

    Returns ``(delta, per_pair)`` where ``per_pair[(p, q)]`` with ``p < q``
    is the smallest distance between a class-p and a class-q sample.
    """
    X = data.features
    y = data.labels
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidInputError("class gap needs at least two classes")
    per_pair: Dict[Tuple[int, int], float] = {}
    for a_idx in range(classes.size):
        for b_idx in range(a_idx + 1, classes.size):
            p, q = int(classes[a_idx]), int(classes[b_idx])
            Xp = X[y == p]
            Xq = X[y == q]
            diff = Xp[:, None, :] - Xq[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            per_pair[(p, q)] = float(dist.min())
    delta = min(per_pair.values())
    return delta, per_pair


def lipschitz_lower_bound(delta_before, delta_after):
    """Lower bound on the Lipschitz constant of any map that turns a
    class gap of ``delta_before`` into ``delta_after``."""
    if not np.isfinite(delta_before) or delta_before <= 0:
        raise InvalidInputError("delta_before must be positive")
    if not np.isfinite(delta_after) or delta_after < 0:
        raise InvalidInputError("delta_after must be nonnegative")
    return float(delta_after) / float(delta_before)


@dataclass
class InseparabilityReport:
    """Dataset-level aggregation of the membership test."""

    per_query: List[dict] = field(default_factory=list)
    fraction: float = 0.0
    delta: float = 0.0

    def to_dict(self):
        return {
            "per_query": self.per_query,
            "fraction": self.fraction,
            "delta": self.delta,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def inseparability_report(data, similars_per_query):
    """Fraction of (query, dissimilar) pairs that no metric can separate.

    Each query's similar set is its ``similars_per_query`` Euclidean-nearest
    same-class samples; every dissimilar point is then tested for membership
    in the query's inseparable region.  Queries whose class has no other
    member are skipped (zero counts, excluded from the fraction).
    """
    if similars_per_query < 1:
        raise InvalidInputError("similars_per_query must be a positive integer")
    X = data.features
    y = data.labels
    if np.unique(y).size < 2:
        raise InvalidInputError("inseparability report needs at least two classes")
    n = X.shape[0]
    delta, _ = class_gap(data)

    report = InseparabilityReport(delta=delta)
    total = 0
    hits = 0
    for i in range(n):
        same = np.flatnonzero((y == y[i]) & (np.arange(n) != i))
        other = np.flatnonzero(y != y[i])
        if same.size == 0:
            report.per_query.append(
                {"index": int(i), "inseparable_count": 0, "dissimilar_count": 0}
            )
            continue
        d2 = np.einsum("ij,ij->i", X[same] - X[i], X[same] - X[i])
        order = np.lexsort((same, d2))
        chosen = same[order[: min(similars_per_query, same.size)]]
        ctx = QueryContext(X[i], X[chosen], X[other])
        count = 0
        for l in other:
            if membership_na(ctx, X[l]).in_region:
                count += 1
        report.per_query.append(
            {
                "index": int(i),
                "inseparable_count": int(count),
                "dissimilar_count": int(other.size),
            }
        )
        total += int(other.size)
        hits += count
    report.fraction = hits / total if total else 0.0
    return report
