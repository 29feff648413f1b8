"""Log-exp mean machinery.

The log-exp mean ``b(gamma) = -(1/gamma) * log(mean(exp(-gamma * a)))``
interpolates smoothly between the minimum (``gamma -> +inf``), the arithmetic
mean (``gamma -> 0``) and the maximum (``gamma -> -inf``) of a number series.
It is strictly decreasing in ``gamma``, which makes every trimmed average of
the K smallest / K largest entries reachable by exactly one ``gamma`` -- the
correspondence implemented by :func:`gamma_for_k`.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConvergenceError, InvalidInputError

# Below this |gamma| the closed form degenerates to 0/0; return the mean.
EPS_GAMMA = 1e-8

# Absolute tolerance on b-values for the gamma search.
TOL_ROOT = 1e-10

_BRACKET_LO = 2.0**-20
_BRACKET_HI = 2.0**20
_MAX_ROOT_ITERS = 200


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Selects the K smallest (``alpha=+1``) or K largest (``alpha=-1``)
    entries of a series as the supporting samples of a neighborhood radius.

    ``gamma`` optionally carries the smoothing parameter that replaces the
    hard (K, alpha) selection.
    """

    k: int
    alpha: int = 1
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.alpha not in (-1, 1):
            raise InvalidInputError(f"alpha must be -1 or +1, got {self.alpha}")
        if self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")


def _as_series(values):
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 1:
        a = a.ravel()
    if a.size == 0:
        raise InvalidInputError("series must contain at least one value")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("series entries must be finite")
    return a


def log_exp_mean(values, gamma):
    """Evaluate the log-exp mean b(gamma) of a number series.

    Parameters
    ----------
    values : array-like of float
        Non-empty series of finite numbers.
    gamma : float
        Smoothing parameter.  ``|gamma| < EPS_GAMMA`` returns the arithmetic
        mean (the ``gamma -> 0`` limit).

    Returns
    -------
    float
        A value guaranteed to lie in ``[min(values), max(values)]``.

    Notes
    -----
    Computed in the shift-by-extremum form
    ``a* - log(mean(exp(-gamma * (a - a*)))) / gamma`` with ``a* = min(a)``
    for positive gamma and ``a* = max(a)`` for negative gamma, so the
    exponentials never overflow.
    """
    a = _as_series(values)
    gamma = float(gamma)
    if not np.isfinite(gamma):
        raise InvalidInputError("gamma must be finite")
    if abs(gamma) < EPS_GAMMA:
        return float(a.mean())
    shift = a.min() if gamma > 0 else a.max()
    z = -gamma * (a - shift)  # every entry <= 0
    return float(shift - np.log(np.mean(np.exp(z))) / gamma)


def sup_log_exp(values, gamma):
    """Evaluate the unnormalized bound ``g(gamma) = log(sum(exp(gamma*a)))/gamma``.

    For ``gamma > 0`` the result is >= max(values); for ``gamma < 0`` it is
    <= min(values).  ``gamma`` near zero is rejected: without the 1/n
    normalization the expression diverges from the mean there.
    """
    a = _as_series(values)
    gamma = float(gamma)
    if not np.isfinite(gamma) or abs(gamma) < EPS_GAMMA:
        raise InvalidInputError(f"gamma must satisfy |gamma| >= {EPS_GAMMA}")
    shift = a.max() if gamma > 0 else a.min()
    z = gamma * (a - shift)  # every entry <= 0
    return float(shift + np.log(np.sum(np.exp(z))) / gamma)


def trimmed_radius(values, spec):
    """Mean of the K smallest (``alpha=+1``) or K largest (``alpha=-1``)
    entries.  Ties are resolved by stable sort on the original index.
    """
    a = _as_series(values)
    if not 1 <= spec.k <= a.size:
        raise InvalidInputError(
            f"k={spec.k} out of range for a series of length {a.size}"
        )
    order = np.argsort(a, kind="stable")
    chosen = order[: spec.k] if spec.alpha == 1 else order[-spec.k:]
    return float(a[chosen].mean())


def _bisect_b(a, target, lo, hi, tol, max_iters):
    """Log-scale bisection of b(gamma) = target on a positive bracket.

    Assumes b is strictly decreasing with b(lo) >= target >= b(hi).
    """
    for _ in range(max_iters):
        mid = np.sqrt(lo * hi)
        val = log_exp_mean(a, mid)
        if abs(val - target) <= tol:
            return float(mid)
        if val > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps * hi:
            break
    raise ConvergenceError(
        f"gamma search did not reach |b - target| <= {tol} within {max_iters} iterations"
    )


def gamma_for_k(values, spec, *, tol=TOL_ROOT, max_iters=_MAX_ROOT_ITERS):
    """Find the gamma whose log-exp mean equals the trimmed radius.

    For a strictly increasing series and ``K < n`` there is exactly one such
    gamma: positive when ``alpha=+1`` (K smallest), negative when
    ``alpha=-1`` (K largest).  ``K = n`` corresponds to the arithmetic mean
    and returns 0.  The root is located by an expanding bracket followed by
    bisection, valid because b(gamma) is strictly monotone decreasing.
    """
    a = _as_series(values)
    n = a.size
    if not 1 <= spec.k <= n:
        raise InvalidInputError(f"k={spec.k} out of range for series of length {n}")
    if np.unique(a).size != n:
        raise InvalidInputError("series values must be distinct")
    if spec.k == n:
        return 0.0

    if spec.alpha == -1:
        # b_a(-g) == -b_{-a}(g) and the K-largest radius of a is the
        # negated K-smallest radius of -a, so mirror onto the positive branch.
        mirrored = gamma_for_k(-a, NeighborhoodSpec(k=spec.k, alpha=1),
                               tol=tol, max_iters=max_iters)
        return -mirrored

    target = trimmed_radius(a, spec)
    lo, hi = _BRACKET_LO, _BRACKET_HI

    # Expand until the bracket straddles the root: b(lo) >= target >= b(hi).
    expansions = 0
    while log_exp_mean(a, hi) > target:
        hi *= 4.0
        expansions += 1
        if expansions > max_iters:
            raise ConvergenceError("failed to bracket gamma from above")
    expansions = 0
    while log_exp_mean(a, lo) < target:
        lo *= 0.25
        expansions += 1
        if lo < 1e-300 or expansions > max_iters:
            raise ConvergenceError("failed to bracket gamma from below")

    return _bisect_b(a, target, lo, hi, tol, max_iters)
