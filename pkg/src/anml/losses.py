"""Batch losses on embedding sets, each returning loss and analytic gradient.

The central loss scores every anchor by the gap between two anchored log-exp
means: one over its positive distances extended with a constant radius
``lambda1``, one over its negative distances extended with ``lambda2``.  The
constants stabilize the neighborhood radius across randomly drawn batches.
Special parameter choices recover the multi-similarity loss, the improved
lifted-structure loss and (in the hard limit) the triplet loss; those
variants are implemented verbatim alongside for use as reductions and
baselines.

Distance conventions are explicit per loss to avoid sign bugs:
``sq_euclidean`` is the squared Euclidean distance (small = similar) and
``neg_cosine`` is the negated cosine similarity (small = similar, requires
unit-norm embeddings).  The multi-similarity loss works on raw cosine
similarities as published; pass ``neg_cosine=True`` to feed it negated
cosines instead (the convention under which it coincides with the anchored
log-exp loss).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import InvalidInputError, NumericError
from .linear import PairSets, _loss_terms

logger = logging.getLogger(__name__)

EMBEDDING_LOSS_KINDS = ("logistic", "hinge", "identity")
SIMILARITIES = ("neg_cosine", "sq_euclidean")


@dataclass
class EmbeddingBatch:
    """A batch of embedding vectors with integer labels.

    When ``normalized`` is true every row must have unit Euclidean norm
    within 1e-6 (losses built on cosine similarity require this).
    """

    vectors: np.ndarray
    labels: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise InvalidInputError("batch needs at least 2 embedding rows")
        if self.labels.shape != (self.vectors.shape[0],):
            raise InvalidInputError("labels must align with embedding rows")
        if not np.all(np.isfinite(self.vectors)):
            raise InvalidInputError("embeddings must be finite")
        if self.normalized:
            norms = np.linalg.norm(self.vectors, axis=1)
            if np.abs(norms - 1.0).max() > 1e-6:
                raise InvalidInputError("normalized batch has non-unit rows")

    @property
    def n(self):
        return self.vectors.shape[0]

    @classmethod
    def from_unnormalized(cls, vectors, labels):
        """Project rows onto the unit sphere and build a normalized batch."""
        v = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise InvalidInputError("cannot normalize a zero embedding row")
        return cls(v / norms, labels, normalized=True)


@dataclass
class DanmlConfig:
    """Parameters of the anchored log-exp batch loss.

    ``gamma1`` and ``gamma2`` must carry opposite signs: one side averages
    the hardest (largest) positive distances, the other the hardest
    (smallest) negative distances.  Use :meth:`from_tuning` to enter the
    published all-positive tuning grid; it maps ``gamma1`` onto the negative
    side and derives ``lambda2 = lambda1 + sigma``.
    """

    gamma1: float = -2.0
    gamma2: float = 30.0
    lambda1: float = 0.5
    lambda2: float = 0.52
    loss_kind: str = "logistic"
    hinge_margin: float = 1.0
    similarity: str = "sq_euclidean"

    def __post_init__(self):
        if not (np.isfinite(self.gamma1) and np.isfinite(self.gamma2)):
            raise InvalidInputError("gamma1 and gamma2 must be finite")
        if not self.gamma1 * self.gamma2 < 0:
            raise InvalidInputError("gamma1 and gamma2 must have opposite signs")
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise InvalidInputError("lambda1 and lambda2 must be finite")
        if self.loss_kind not in EMBEDDING_LOSS_KINDS:
            raise InvalidInputError(f"loss_kind must be one of {EMBEDDING_LOSS_KINDS}")
        if self.similarity not in SIMILARITIES:
            raise InvalidInputError(f"similarity must be one of {SIMILARITIES}")

    @classmethod
    def from_tuning(cls, gamma1, gamma2, lambda1, sigma, **kwargs):
        """Build a config from the all-positive tuning grid.

        ``gamma1`` is flipped to the negative side (it selects the farthest
        positives) and ``lambda2`` is set to ``lambda1 + sigma``.
        """
        if gamma1 <= 0 or gamma2 <= 0:
            raise InvalidInputError("tuning-grid gammas are positive")
        if sigma < 0:
            raise InvalidInputError("sigma must be >= 0 (lambda2 = lambda1 + sigma)")
        logger.info(
            "tuning-grid mapping: gamma1=%s -> %s, lambda2 = %s + %s",
            gamma1, -gamma1, lambda1, sigma,
        )
        return cls(gamma1=-gamma1, gamma2=gamma2, lambda1=lambda1,
                   lambda2=lambda1 + sigma, **kwargs)


@dataclass
class MiningConfig:
    """Hard-pair survivor selection with margin ``epsilon``."""

    enabled: bool = True
    epsilon: float = 0.1

    def __post_init__(self):
        if np.isnan(self.epsilon) or self.epsilon < 0:
            raise InvalidInputError("epsilon must be >= 0 (or +inf to keep all)")


@dataclass
class LossResult:
    """Loss value, gradient with respect to the embedding rows, and
    bookkeeping used by the JSON loss report."""

    loss: float
    grad: np.ndarray
    skipped_anchors: int = 0
    active_pairs: int = 0
    per_anchor: Optional[np.ndarray] = None

    def __iter__(self):
        return iter((self.loss, self.grad))

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.grad))

    def to_report(self):
        return {
            "loss": float(self.loss),
            "skipped_anchors": int(self.skipped_anchors),
            "active_pairs": int(self.active_pairs),
            "grad_norm": self.grad_norm,
        }


def _pair_index_lists(labels):
    n = labels.shape[0]
    idx = np.arange(n)
    same = labels[:, None] == labels[None, :]
    positives = [idx[same[i] & (idx != i)] for i in range(n)]
    negatives = [idx[~same[i]] for i in range(n)]
    return positives, negatives


def _distances(batch, similarity):
    F = batch.vectors
    if similarity == "neg_cosine":
        if not batch.normalized:
            raise InvalidInputError("neg_cosine similarity requires a normalized batch")
        return -(F @ F.T)
    diff_sq = np.einsum("ij,ij->i", F, F)
    D = diff_sq[:, None] + diff_sq[None, :] - 2.0 * (F @ F.T)
    return np.maximum(D, 0.0)


def _laplacian_rows(W, F):
    """Gradient of sum_ij W_ij ||f_i - f_j||^2 with respect to the rows."""
    S = W + W.T
    return 2.0 * (S.sum(axis=1)[:, None] * F - S @ F)


def _dot_rows(W, F):
    """Gradient of sum_ij W_ij (f_i . f_j) with respect to the rows."""
    return (W + W.T) @ F


def _grad_from_weights(W, batch, similarity):
    if similarity == "neg_cosine":
        return -_dot_rows(W, batch.vectors)
    return _laplacian_rows(W, batch.vectors)


def _anchored_logexp(dvals, lam, gamma):
    """Log-exp mean of ``dvals`` extended with the constant ``lam``.

    Returns the mean and the gradient weights of the data entries (the
    constant absorbs the remaining weight mass).
    """
    z = -gamma * np.concatenate(([lam], dvals))
    zmax = z.max()
    e = np.exp(z - zmax)
    s = e.sum()
    b = -(zmax + np.log(s / (dvals.size + 1))) / gamma
    return float(b), e[1:] / s


def _finite_or_raise(value, what):
    if not np.isfinite(value):
        raise NumericError(f"{what} is not finite")


def danml_loss(batch, cfg):
    """Anchored log-exp batch loss and its gradient.

    Anchors lacking in-batch positives or negatives are skipped and counted.
    ``per_anchor`` carries each anchor's argument (NaN when skipped), the
    quantity that approaches max-positive-distance minus
    min-negative-distance in the hard limit.
    """
    D = _distances(batch, cfg.similarity)
    positives, negatives = _pair_index_lists(batch.labels)
    n = batch.n
    W = np.zeros((n, n))
    args = np.full(n, np.nan)
    total = 0.0
    skipped = 0
    active = 0
    for i in range(n):
        P, N = positives[i], negatives[i]
        if P.size == 0 or N.size == 0:
            skipped += 1
            continue
        b1, w1 = _anchored_logexp(D[i, P], cfg.lambda1, cfg.gamma1)
        b2, w2 = _anchored_logexp(D[i, N], cfg.lambda2, cfg.gamma2)
        arg = b1 - b2
        args[i] = arg
        val, der = _loss_terms(cfg.loss_kind, arg, cfg.hinge_margin)
        total += val
        active += P.size + N.size
        if der != 0.0:
            W[i, P] += der * w1
            W[i, N] -= der * w2
    _finite_or_raise(total, "danml loss")
    grad = _grad_from_weights(W, batch, cfg.similarity)
    return LossResult(float(total), grad, skipped, active, args)


def ms_loss(batch, alpha, beta, margin, *, neg_cosine=False):
    """Multi-similarity loss on pairwise cosine similarities.

    Implemented as published: positives are penalized through
    ``exp(alpha * (D_ij - margin))`` and negatives through
    ``exp(beta * (margin - D_ik))`` with D the raw cosine similarity.  With
    ``neg_cosine=True`` the loss is evaluated on negated cosines, the
    convention under which it equals the anchored log-exp loss with identity
    penalty, ``lambda1 = lambda2 = margin`` and gammas ``(-alpha, beta)`` up
    to a batch-size constant.
    """
    if alpha <= 0 or beta <= 0:
        raise InvalidInputError("alpha and beta must be > 0")
    if not batch.normalized:
        raise InvalidInputError("ms_loss requires a normalized batch")
    F = batch.vectors
    D = F @ F.T
    if neg_cosine:
        D = -D
    positives, negatives = _pair_index_lists(batch.labels)
    n = batch.n
    W = np.zeros((n, n))
    total = 0.0
    active = 0
    for i in range(n):
        P, N = positives[i], negatives[i]
        if P.size:
            z = alpha * (D[i, P] - margin)
            zmax = max(0.0, z.max())
            lse = zmax + np.log(np.exp(-zmax) + np.exp(z - zmax).sum())
            total += lse / alpha
            W[i, P] += np.exp(z - lse)
            active += P.size
        if N.size:
            z = beta * (margin - D[i, N])
            zmax = max(0.0, z.max())
            lse = zmax + np.log(np.exp(-zmax) + np.exp(z - zmax).sum())
            total += lse / beta
            W[i, N] -= np.exp(z - lse)
            active += N.size
    _finite_or_raise(total, "ms loss")
    grad = _dot_rows(W, F)
    if neg_cosine:
        grad = -grad
    return LossResult(float(total), grad, 0, active)


def lifted_improved_loss(batch, gamma1, gamma2, lambda1, lambda2, margin,
                         mode="improved"):
    """Hinged lifted-structure loss over cosine similarities.

    ``mode="improved"`` anchors both log-sums with the constants ``lambda1``
    and ``lambda2`` and exposes the sharpness parameters; ``mode="original"``
    fixes ``gamma1 = gamma2 = 1`` and drops the constants, recovering the
    classical form (anchors lacking positives or negatives are then skipped).
    """
    if mode not in ("improved", "original"):
        raise InvalidInputError("mode must be 'improved' or 'original'")
    if not batch.normalized:
        raise InvalidInputError("lifted loss requires a normalized batch")
    if mode == "original":
        gamma1 = gamma2 = 1.0
    elif gamma1 == 0.0 or gamma2 == 0.0:
        raise InvalidInputError("gamma1 and gamma2 must be nonzero")
    F = batch.vectors
    S = F @ F.T
    positives, negatives = _pair_index_lists(batch.labels)
    n = batch.n
    W = np.zeros((n, n))
    total = 0.0
    skipped = 0
    active = 0
    for i in range(n):
        P, N = positives[i], negatives[i]
        if mode == "original" and (P.size == 0 or N.size == 0):
            skipped += 1
            continue
        zp = -gamma1 * S[i, P]
        zn = gamma2 * S[i, N]
        if mode == "improved":
            zp = np.concatenate(([-gamma1 * lambda1], zp))
            zn = np.concatenate(([gamma2 * lambda2], zn))
        mp = zp.max()
        ep = np.exp(zp - mp)
        sp = ep.sum()
        mn = zn.max()
        en = np.exp(zn - mn)
        sn = en.sum()
        h = (mp + np.log(sp)) / gamma1 + (mn + np.log(sn)) / gamma2 + margin
        if h > 0:
            total += h
            wp = ep / sp
            wn = en / sn
            if mode == "improved":
                wp, wn = wp[1:], wn[1:]
            W[i, P] -= wp
            W[i, N] += wn
            active += P.size + N.size
    _finite_or_raise(total, "lifted loss")
    return LossResult(float(total), _dot_rows(W, F), skipped, active)


def _npair_structure(labels):
    """Indices of (query, positive) per class for an N-pair batch.

    The batch must hold exactly two samples of each of N >= 2 distinct
    classes; within a class the earlier row is the query.
    """
    classes, first = np.unique(labels, return_index=True)
    if classes.size < 2 or labels.size != 2 * classes.size:
        raise InvalidInputError("batch is not in N-pair structure (2 per class)")
    order = np.argsort(first)
    queries = []
    partners = []
    for c in classes[order]:
        members = np.flatnonzero(labels == c)
        if members.size != 2:
            raise InvalidInputError("batch is not in N-pair structure (2 per class)")
        queries.append(members[0])
        partners.append(members[1])
    return np.array(queries), np.array(partners)


def npairs_improved_loss(batch, gamma, lam):
    """N-pair loss with a sharpness parameter and a radius shift.

    ``gamma = 1`` and ``lam = 0`` recover the original N-pair loss.  The
    batch must consist of N pairs from N distinct classes.
    """
    if gamma == 0.0 or not np.isfinite(gamma) or not np.isfinite(lam):
        raise InvalidInputError("gamma must be nonzero and parameters finite")
    q_idx, p_idx = _npair_structure(batch.labels)
    F = batch.vectors
    Q = F[q_idx]
    P = F[p_idx]
    n_pairs = q_idx.size
    G = Q @ P.T
    T = gamma * (-lam + G - np.diagonal(G)[:, None])
    np.fill_diagonal(T, -np.inf)

    Omega = np.zeros((n_pairs, n_pairs))
    total = 0.0
    for i in range(n_pairs):
        z = np.delete(T[i], i)
        zmax = max(0.0, z.max())
        lse = zmax + np.log(np.exp(-zmax) + np.exp(z - zmax).sum())
        total += lse / (n_pairs * gamma)
        w = np.exp(T[i] - lse)
        w[i] = 0.0
        Omega[i] = w / n_pairs
        Omega[i, i] = -w.sum() / n_pairs
    _finite_or_raise(total, "n-pair loss")

    grad = np.zeros_like(F)
    grad[q_idx] = Omega @ P
    grad[p_idx] = Omega.T @ Q
    return LossResult(float(total), grad, 0, n_pairs * (n_pairs - 1))


def triplet_loss(batch, margin):
    """Hinged triplet loss over all in-batch (anchor, positive, negative)
    triples under the squared Euclidean distance, averaged over the active
    (violating) triples."""
    D = _distances(batch, "sq_euclidean")
    positives, negatives = _pair_index_lists(batch.labels)
    n = batch.n
    W = np.zeros((n, n))
    total = 0.0
    n_active = 0
    skipped = 0
    for i in range(n):
        P, N = positives[i], negatives[i]
        if P.size == 0 or N.size == 0:
            skipped += 1
            continue
        viol = D[i, P][:, None] - D[i, N][None, :] + margin
        act = viol > 0
        if act.any():
            total += viol[act].sum()
            n_active += int(act.sum())
            W[i, P] += act.sum(axis=1)
            W[i, N] -= act.sum(axis=0)
    if n_active:
        total /= n_active
        W /= n_active
    _finite_or_raise(total, "triplet loss")
    grad = _laplacian_rows(W, batch.vectors)
    return LossResult(float(total), grad, skipped, n_active)


def mine_pairs(batch, cfg):
    """Keep the hard positives and negatives of every anchor.

    Cosine-similarity convention: a negative survives when it is more
    similar than the least-similar positive minus ``epsilon``; a positive
    survives when it is less similar than the most-similar negative plus
    ``epsilon``.  Anchors without positives yield empty sets; ``enabled =
    False`` (or an infinite epsilon) keeps every pair.
    """
    F = batch.vectors
    if not batch.normalized:
        norms = np.linalg.norm(F, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise InvalidInputError("cannot compute cosine of a zero row")
        F = F / norms
    D = F @ F.T
    positives, negatives = _pair_index_lists(batch.labels)
    eps = np.inf if not cfg.enabled else cfg.epsilon
    kept_pos: List[np.ndarray] = []
    kept_neg: List[np.ndarray] = []
    empty = np.array([], dtype=np.int64)
    for i in range(batch.n):
        P, N = positives[i], negatives[i]
        if P.size == 0:
            kept_pos.append(empty)
            kept_neg.append(empty)
            continue
        if np.isinf(eps):
            kept_neg.append(N)
            kept_pos.append(P)
            continue
        min_pos = D[i, P].min()
        kept_neg.append(N[D[i, N] > min_pos - eps] if N.size else empty)
        if N.size:
            max_neg = D[i, N].max()
            kept_pos.append(P[D[i, P] < max_neg + eps])
        else:
            kept_pos.append(empty)
    return PairSets(kept_pos, kept_neg, mode="mined")
