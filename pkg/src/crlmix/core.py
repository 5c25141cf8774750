"""Continuation-ratio logits mathematics.

A multinomial over ``C`` ordered categories is written as a sequence of
``C - 1`` binomial decisions: ``theta[j]`` is the logit of
``Pr(Y = j | Y >= j)``.  Everything here is deterministic and vectorised over
leading axes, with the category axis last.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import DataError, DomainError, InvalidArgument

__all__ = [
    "OrdinalDataset",
    "CumLogitParams",
    "sigmoid",
    "log_sigmoid",
    "log1m_sigmoid",
    "theta_to_pi",
    "log_theta_to_pi",
    "pi_to_theta",
    "kernel_log_pmf",
    "crl_to_cumlogit",
    "cumlogit_to_pi",
]


def sigmoid(x):
    return expit(x)


def log_sigmoid(x):
    """``log(phi(x))`` without overflow for large ``|x|``."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def log1m_sigmoid(x):
    """``log(1 - phi(x))``."""
    return -np.logaddexp(0.0, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class OrdinalDataset:
    """Ordinal responses with a design matrix.

    Parameters
    ----------
    y : array of int, shape (n,)
        Categories coded ``1..C``.
    X : array, shape (n, p)
        Design matrix whose first column is identically one.
    C : int
        Number of categories (>= 2).

    Notes
    -----
    ``n = 0`` is accepted so prior-only chains can be run through the same
    sampler code path.
    """

    y: np.ndarray
    X: np.ndarray
    C: int

    def __post_init__(self):
        y = np.asarray(self.y)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 1)
        if X.ndim != 2:
            raise InvalidArgument("X must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidArgument(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if int(self.C) < 2:
            raise InvalidArgument("C must be at least 2")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("responses must be integers")
        y = y.astype(np.int64)
        if y.size and (y.min() < 1 or y.max() > self.C):
            bad = int(np.flatnonzero((y < 1) | (y > self.C))[0])
            raise DataError(f"response {y[bad]} outside 1..{self.C}", row=bad)
        if X.shape[1] < 1 or (X.shape[0] and not np.all(X[:, 0] == 1.0)):
            raise InvalidArgument("first column of X must be the intercept (all ones)")
        if not np.all(np.isfinite(X)):
            raise DataError("design matrix contains non-finite values")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "C", int(self.C))

    @classmethod
    def empty(cls, C, p):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, p)), C)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @cached_property
    def onehot(self):
        """Binary expansion, shape (n, C)."""
        Y = np.zeros((self.n, self.C))
        Y[np.arange(self.n), self.y - 1] = 1.0
        return Y

    @cached_property
    def masses(self):
        """Binomial trial counts ``m_ij`` for ``j = 1..C-1``, shape (n, C-1).

        ``m_i1 = 1`` and ``m_ij = 1 - sum_{k<j} Y_ik``; equivalently
        ``m_ij = 1`` iff ``y_i >= j``.
        """
        j = np.arange(1, self.C)
        return (self.y[:, None] >= j[None, :]).astype(float)

    @cached_property
    def upsilon(self):
        """PG offsets ``Y_ij - m_ij / 2`` (zero where ``m_ij = 0``)."""
        return self.onehot[:, :-1] - 0.5 * self.masses

    @cached_property
    def trial_rows(self):
        """Per logit ``j``, the indices of rows with ``m_ij = 1``."""
        return tuple(np.flatnonzero(self.masses[:, j] > 0) for j in range(self.C - 1))


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] < 1:
        raise InvalidArgument("theta must have a trailing axis of length C-1 >= 1")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgument("theta must be finite")
    return theta


def log_theta_to_pi(theta):
    """Log category probabilities; trailing axis goes from C-1 to C."""
    theta = np.asarray(theta, dtype=float)
    ls = log_sigmoid(theta)
    l1m = log1m_sigmoid(theta)
    # survivor log-mass before step j
    surv = np.cumsum(l1m, axis=-1)
    head = np.zeros(theta.shape[:-1] + (1,))
    before = np.concatenate([head, surv[..., :-1]], axis=-1)
    return np.concatenate([ls + before, surv[..., -1:]], axis=-1)


def theta_to_pi(theta):
    """Map continuation-ratio logits to category probabilities.

    ``pi_1 = phi(theta_1)``, ``pi_j = phi(theta_j) prod_{k<j} (1 - phi(theta_k))``
    and ``pi_C = prod_k (1 - phi(theta_k))``.

    >>> theta_to_pi([0.0, 0.0])
    array([0.5 , 0.25, 0.25])
    """
    theta = _check_theta(theta)
    return np.exp(log_theta_to_pi(theta))


def pi_to_theta(pi):
    """Inverse of :func:`theta_to_pi`.

    Uses tail sums, ``theta_j = log pi_j - log sum_{k>j} pi_k``, which keeps
    precision when the leading categories carry most of the mass.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim == 0 or pi.shape[-1] < 2:
        raise InvalidArgument("pi must have a trailing axis of length C >= 2")
    if not np.all(np.isfinite(pi)):
        raise InvalidArgument("pi must be finite")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise DomainError("every category probability must lie strictly inside (0, 1)")
    if np.any(np.abs(pi.sum(axis=-1) - 1.0) > 1e-9):
        raise DomainError("category probabilities must sum to one")
    tail = np.flip(np.cumsum(np.flip(pi, axis=-1), axis=-1), axis=-1)
    rest = tail[..., 1:]
    if np.any(rest <= 0.0):
        raise DomainError("partial sums reach one before the last category")
    return np.log(pi[..., :-1]) - np.log(rest)


def kernel_log_pmf(y, theta):
    """Log of the continuation-ratio kernel ``K(y | theta)``.

    ``y`` holds categories in ``1..C`` and broadcasts against the leading
    axes of ``theta``.  Accumulates log-sigmoid terms over the binomial
    factors that are actually reached (``m_j = 1``).
    """
    theta = _check_theta(theta)
    y = np.asarray(y)
    C = theta.shape[-1] + 1
    if np.any(y < 1) or np.any(y > C):
        raise InvalidArgument(f"categories must lie in 1..{C}")
    j = np.arange(1, C)
    yb = y[..., None]
    hit = (yb == j).astype(float)
    reached = (yb >= j).astype(float)
    return np.sum(hit * log_sigmoid(theta) + (reached - hit) * log1m_sigmoid(theta), axis=-1)


@dataclass(frozen=True)
class CumLogitParams:
    """Cumulative-logit parameters: location ``vartheta`` and cut-offs.

    ``kappa`` holds ``kappa_2..kappa_{C-1}``; ``kappa_1 = 0`` by convention.
    """

    vartheta: float
    kappa: np.ndarray

    @property
    def cutoffs(self):
        return np.concatenate([[0.0], self.kappa])


def crl_to_cumlogit(theta):
    """Cumulative-logit parameters reproducing a continuation-ratio pmf.

    ``vartheta = -theta_1`` and
    ``kappa_j = log(exp(kappa_{j-1}) + exp(kappa_{j-1} + theta_j) + exp(theta_j - theta_1))``.
    """
    theta = _check_theta(theta)
    if theta.ndim != 1:
        raise InvalidArgument("crl_to_cumlogit expects a single theta vector")
    kap = [0.0]
    for t in theta[1:]:
        prev = kap[-1]
        kap.append(float(np.logaddexp.reduce([prev, prev + t, t - theta[0]])))
    return CumLogitParams(vartheta=float(-theta[0]), kappa=np.array(kap[1:]))


def cumlogit_to_pi(params):
    """Category probabilities under ``Pr(Y <= j) = phi(kappa_j - vartheta)``."""
    cdf = sigmoid(params.cutoffs - params.vartheta)
    cdf = np.concatenate([[0.0], cdf, [1.0]])
    return np.diff(cdf)
