"""Linear metric learning on the PSD cone.

The objective scores each query by the gap between two smoothed neighborhood
radii: a log-exp mean of its similar-sample distances (parameter ``gamma1``)
minus a log-exp mean of its dissimilar-sample distances (``gamma2 > 0``),
both under the squared Mahalanobis distance ``d_M``.  With ``gamma1 < 0`` the
problem is convex in M and generalizes large-margin nearest neighbor; the
ratio form of the same objective is the parameterized NCA implemented by
:func:`pnca_objective`.  Optimization is projected gradient descent with
eigenvalue clipping and an Armijo backtracking line search.
"""

import json
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import InvalidInputError, NumericError
from .logexp import EPS_GAMMA

LOSS_KINDS = ("hinge", "logistic", "identity")
PAIR_MODES = ("knn_similars", "all_similars")


class MetricMatrix:
    """Symmetric positive semidefinite matrix defining a squared Mahalanobis
    distance.  Validation enforces symmetry within 1e-10 and eigenvalues
    above -1e-8."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, *, validate=True):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("metric matrix must be square")
        if validate:
            if not np.all(np.isfinite(m)):
                raise InvalidInputError("metric matrix must be finite")
            if np.abs(m - m.T).max(initial=0.0) > 1e-10:
                raise InvalidInputError("metric matrix must be symmetric")
            if m.shape[0] and np.linalg.eigvalsh(m)[0] < -1e-8:
                raise InvalidInputError("metric matrix must be PSD (within 1e-8)")
        self.matrix = (m + m.T) / 2.0

    @classmethod
    def identity(cls, d, scale=1.0):
        return cls(np.eye(d) * scale, validate=False)

    @property
    def d(self):
        return self.matrix.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def factor(self):
        """L with M = L @ L.T, so d_M(x, y) = ||L.T x - L.T y||^2."""
        w, V = np.linalg.eigh(self.matrix)
        return V * np.sqrt(np.clip(w, 0.0, None))

    def to_dict(self):
        return {"d": self.d, "values": [float(v) for v in self.matrix.ravel()]}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, payload):
        d = int(payload["d"])
        values = np.asarray(payload["values"], dtype=np.float64).reshape(d, d)
        return cls(values)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class LanmlConfig:
    """Hyperparameters of the linear learner and its solver."""

    gamma1: float = -1.0
    gamma2: float = 1.0
    reg_weight: float = 0.0
    loss_kind: str = "hinge"
    hinge_margin: float = 1.0
    similars_per_query: int = 10
    pair_mode: str = "knn_similars"
    max_iters: int = 200
    step_size: float = 1.0
    grad_tol: float = 1e-6

    def __post_init__(self):
        if not np.isfinite(self.gamma1):
            raise InvalidInputError("gamma1 must be finite")
        if not self.gamma2 > 0:
            raise InvalidInputError("gamma2 must be > 0")
        if self.reg_weight < 0:
            raise InvalidInputError("reg_weight must be >= 0")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.similars_per_query < 1:
            raise InvalidInputError("similars_per_query must be >= 1")
        if self.pair_mode not in PAIR_MODES:
            raise InvalidInputError(f"pair_mode must be one of {PAIR_MODES}")
        if self.max_iters < 1 or self.step_size <= 0 or self.grad_tol < 0:
            raise InvalidInputError("invalid solver controls")

    @property
    def convex_mode(self):
        return self.gamma1 < 0


@dataclass
class PairSets:
    """Per-query similar and dissimilar index lists."""

    similars: List[np.ndarray]
    dissimilars: List[np.ndarray]
    mode: str = ""
    truncated: bool = False

    def __len__(self):
        return len(self.similars)


def _matrix_of(m):
    return m.matrix if isinstance(m, MetricMatrix) else np.asarray(m, dtype=np.float64)


def mahalanobis_sq(m, x, y):
    """Squared Mahalanobis distance (x-y)^T M (x-y), clamped at zero when a
    tiny negative value (>= -1e-8) arises from rounding."""
    M = _matrix_of(m)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.shape[-1] != M.shape[0]:
        raise InvalidInputError("dimension mismatch in mahalanobis_sq")
    diff = x - y
    val = float(diff @ M @ diff)
    if -1e-8 <= val < 0.0:
        val = 0.0
    return val


def pairwise_sqmahalanobis(X, M):
    """All-pairs squared Mahalanobis distances of the rows of X."""
    G = X @ _matrix_of(M) @ X.T
    g = np.diagonal(G)
    D = g[:, None] + g[None, :] - G - G.T
    return np.maximum(D, 0.0)


def cross_sqmahalanobis(A, B, M):
    """Squared Mahalanobis distances between the rows of A and the rows of B."""
    M = _matrix_of(M)
    MB = B @ M
    ga = np.einsum("ij,ij->i", A @ M, A)
    gb = np.einsum("ij,ij->i", MB, B)
    D = ga[:, None] + gb[None, :] - 2.0 * (A @ MB.T)
    return np.maximum(D, 0.0)


def build_pair_sets(data, cfg, mode=None):
    """Construct per-query similar/dissimilar index lists.

    ``knn_similars`` takes each query's ``similars_per_query`` nearest
    same-class samples under the Euclidean metric (truncated with a warning
    when the class is too small); ``all_similars`` takes every same-class
    sample.  Dissimilars are always all samples of other classes.
    """
    mode = mode or cfg.pair_mode
    if mode not in PAIR_MODES:
        raise InvalidInputError(f"unknown pair mode {mode!r}")
    X = data.features
    y = data.labels
    n = X.shape[0]
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < 2:
        raise InvalidInputError("every class needs at least 2 samples")

    similars = []
    dissimilars = []
    truncated = False
    idx = np.arange(n)
    for i in range(n):
        same = idx[(y == y[i]) & (idx != i)]
        if mode == "all_similars":
            similars.append(same)
        else:
            k = cfg.similars_per_query
            if k > same.size:
                truncated = True
                k = same.size
            d2 = np.einsum("ij,ij->i", X[same] - X[i], X[same] - X[i])
            order = np.lexsort((same, d2))
            similars.append(same[order[:k]])
        dissimilars.append(idx[y != y[i]])
    if truncated:
        warnings.warn(
            "similars_per_query exceeds some class sizes; similar sets truncated",
            stacklevel=2,
        )
    return PairSets(similars, dissimilars, mode=mode, truncated=truncated)


def _logexp_mean_weights(values, gamma):
    """Log-exp mean of a distance list plus its softmax gradient weights."""
    n = values.size
    if abs(gamma) < EPS_GAMMA:
        return float(values.mean()), np.full(n, 1.0 / n)
    z = -gamma * values
    zmax = z.max()
    e = np.exp(z - zmax)
    s = e.sum()
    b = -(zmax + np.log(s / n)) / gamma
    return float(b), e / s


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _loss_terms(kind, arg, margin):
    """Value and derivative of the configured penalty at ``arg``."""
    if kind == "hinge":
        shifted = arg + margin
        return (shifted, 1.0) if shifted > 0 else (0.0, 0.0)
    if kind == "logistic":
        return float(np.logaddexp(0.0, arg)), _sigmoid(arg)
    return arg, 1.0  # identity


def _laplacian_quadratic(W, X):
    """Gradient sum_ij W_ij (x_i - x_j)(x_i - x_j)^T as X^T L X."""
    S = W + W.T
    L = -S
    np.fill_diagonal(L, L.diagonal() + S.sum(axis=1))
    grad = X.T @ L @ X
    return (grad + grad.T) / 2.0


def _check_pairs(pairs, n):
    if len(pairs.similars) != n or len(pairs.dissimilars) != n:
        raise InvalidInputError("pair sets do not match the dataset size")


def lanml_objective(m, data, pairs, cfg):
    """Loss and analytic gradient of the adaptive-neighborhood objective.

    For each query the argument is the log-exp mean of similar distances
    (``gamma1``) minus the log-exp mean of dissimilar distances (``gamma2``);
    the configured penalty is applied and the similarity regularizer
    ``reg_weight * mean_i mean_{j in S_i} d_M(x_i, x_j)`` added.  The gradient
    accumulates softmax-weighted difference outer products.
    """
    X = data.features
    n = X.shape[0]
    _check_pairs(pairs, n)
    D = pairwise_sqmahalanobis(X, m)

    W = np.zeros((n, n))
    total = 0.0
    reg = 0.0
    for i in range(n):
        S = pairs.similars[i]
        Dd = pairs.dissimilars[i]
        if S.size == 0 or Dd.size == 0:
            raise InvalidInputError(f"query {i} has an empty similar or dissimilar set")
        bs, ws = _logexp_mean_weights(D[i, S], cfg.gamma1)
        bd, wd = _logexp_mean_weights(D[i, Dd], cfg.gamma2)
        val, der = _loss_terms(cfg.loss_kind, bs - bd, cfg.hinge_margin)
        total += val
        if der != 0.0:
            W[i, S] += der * ws
            W[i, Dd] -= der * wd
        if cfg.reg_weight > 0.0:
            reg += D[i, S].mean()
            W[i, S] += cfg.reg_weight / (n * S.size)
    total += cfg.reg_weight * reg / n
    if not np.isfinite(total):
        raise NumericError("objective value is not finite")
    return float(total), _laplacian_quadratic(W, X)


def pnca_per_query(m, data, pairs, alpha):
    """Per-query summands of the parameterized-NCA objective.

    At ``alpha = 1`` each entry is the NCA probability of the query being
    classified correctly.
    """
    if not alpha > 0:
        raise InvalidInputError("alpha must be > 0")
    X = data.features
    n = X.shape[0]
    _check_pairs(pairs, n)
    D = pairwise_sqmahalanobis(X, m)
    out = np.empty(n)
    for i in range(n):
        zs = -alpha * D[i, pairs.similars[i]]
        zs_max = zs.max()
        log_s = (zs_max + np.log(np.exp(zs - zs_max).sum())) / alpha
        zd = -D[i, pairs.dissimilars[i]]
        zd_max = zd.max()
        log_q = zd_max + np.log(np.exp(zd - zd_max).sum())
        out[i] = _sigmoid(log_s - log_q)
    return out


def pnca_objective(m, data, pairs, alpha):
    """Parameterized-NCA objective (to be maximized) and its gradient.

    Each query contributes
    ``s_i / (q_i + s_i)`` with ``s_i = (sum_{j in S_i} exp(-alpha d))^(1/alpha)``
    and ``q_i = sum_{l in D_i} exp(-d)``; at ``alpha = 1`` this is the NCA
    probability of correct classification.  Expects all-similars pair sets.
    """
    if not alpha > 0:
        raise InvalidInputError("alpha must be > 0")
    X = data.features
    n = X.shape[0]
    _check_pairs(pairs, n)
    if pairs.mode and pairs.mode != "all_similars":
        raise InvalidInputError("pnca requires all_similars pair sets")
    D = pairwise_sqmahalanobis(X, m)

    W = np.zeros((n, n))
    total = 0.0
    for i in range(n):
        S = pairs.similars[i]
        Dd = pairs.dissimilars[i]
        zs = -alpha * D[i, S]
        zs_max = zs.max()
        es = np.exp(zs - zs_max)
        ss = es.sum()
        log_s = (zs_max + np.log(ss)) / alpha
        ws = es / ss

        zd = -D[i, Dd]
        zd_max = zd.max()
        ed = np.exp(zd - zd_max)
        sd = ed.sum()
        log_q = zd_max + np.log(sd)
        wd = ed / sd

        u = log_s - log_q
        p = _sigmoid(u)
        total += p
        coeff = p * _sigmoid(-u)  # q*s / (q+s)^2
        if coeff != 0.0:
            W[i, Dd] += coeff * wd
            W[i, S] -= coeff * ws
    if not np.isfinite(total):
        raise NumericError("objective value is not finite")
    return float(total), _laplacian_quadratic(W, X)


def psd_project(S):
    """Nearest PSD matrix: symmetrize, then clip negative eigenvalues to 0."""
    S = (S + S.T) / 2.0
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigendecomposition failed during projection") from exc
    if w[0] >= 0.0:
        return S
    out = (V * np.clip(w, 0.0, None)) @ V.T
    return (out + out.T) / 2.0


@dataclass
class SolveResult:
    metric: MetricMatrix
    trace: List[dict] = field(default_factory=list)

    def __iter__(self):
        return iter((self.metric, self.trace))

    def trace_csv(self):
        lines = ["iter,loss,step,grad_norm"]
        for row in self.trace:
            lines.append(
                f"{row['iter']},{row['loss']!r},{row['step']!r},{row['grad_norm']!r}"
            )
        return "\n".join(lines) + "\n"


def _minimize_psd(fun, M0, *, max_iters, step_size, grad_tol, callback=None):
    """Projected gradient descent with Armijo backtracking on the PSD cone."""
    M = psd_project(M0)
    f, g = fun(M)
    trace = [{
        "iter": 0,
        "loss": f,
        "step": 0.0,
        "grad_norm": float(np.linalg.norm(g)),
        "proj_step_norm": float("nan"),
    }]
    if callback is not None:
        callback(0, M)
    eta = step_size
    for t in range(1, max_iters + 1):
        eta = min(step_size, eta * 2.0)
        accepted = False
        while eta > 1e-18:
            M_new = psd_project(M - eta * g)
            f_new, g_new = fun(M_new)
            decrease = max(float(np.tensordot(g, M - M_new)), 0.0)
            if f_new <= f - 1e-4 * decrease and np.isfinite(f_new):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        step_norm = float(np.linalg.norm(M_new - M))
        M, f, g = M_new, f_new, g_new
        trace.append({
            "iter": t,
            "loss": f,
            "step": eta,
            "grad_norm": float(np.linalg.norm(g)),
            "proj_step_norm": step_norm,
        })
        if callback is not None:
            callback(t, M)
        if step_norm <= grad_tol:
            break
    return M, trace


def solve_lanml(data, cfg, init=None, *, pairs=None, callback=None):
    """Fit the metric by projected gradient descent.

    ``init`` defaults to I/sqrt(N); any PSD matrix is accepted (and in convex
    mode, gamma1 < 0, reaches the same optimum).  Returns a
    :class:`SolveResult` whose trace records the loss per iteration.
    """
    X = data.features
    n, d = X.shape
    if init is None:
        M0 = np.eye(d) / np.sqrt(n)
    else:
        M0 = _matrix_of(init)
        if M0.shape != (d, d):
            raise InvalidInputError("init has the wrong dimension")
        if np.linalg.eigvalsh((M0 + M0.T) / 2.0)[0] < -1e-8:
            raise InvalidInputError("init must be PSD")
    if pairs is None:
        pairs = build_pair_sets(data, cfg)

    def fun(M):
        return lanml_objective(M, data, pairs, cfg)

    M, trace = _minimize_psd(
        fun, M0, max_iters=cfg.max_iters, step_size=cfg.step_size,
        grad_tol=cfg.grad_tol, callback=callback,
    )
    return SolveResult(MetricMatrix(M, validate=False), trace)


def solve_pnca(data, alpha, cfg=None, init=None, *, callback=None):
    """Maximize the parameterized-NCA objective (minimizes its negation)."""
    cfg = cfg or LanmlConfig(pair_mode="all_similars")
    X = data.features
    n, d = X.shape
    if init is None:
        M0 = np.eye(d) / np.sqrt(n)
    else:
        M0 = _matrix_of(init)
        if np.linalg.eigvalsh((M0 + M0.T) / 2.0)[0] < -1e-8:
            raise InvalidInputError("init must be PSD")
    pairs = build_pair_sets(data, cfg, mode="all_similars")

    def fun(M):
        value, grad = pnca_objective(M, data, pairs, alpha)
        return -value, -grad

    M, trace = _minimize_psd(
        fun, M0, max_iters=cfg.max_iters, step_size=cfg.step_size,
        grad_tol=cfg.grad_tol, callback=callback,
    )
    return SolveResult(MetricMatrix(M, validate=False), trace)
