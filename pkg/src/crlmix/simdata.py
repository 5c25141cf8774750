"""Synthetic ordinal-regression designs with known response curves.

Three generators are provided:

``example1``
    One covariate on (-10, 10), ``C = 3``, data from a three-component
    mixture of continuation-ratio kernels with linear logits and probit
    stick-breaking weights.
``example2``
    One covariate on (-10, 10), ``C = 3``, a cumulative probit model.
``example3``
    Two covariates on (0, 1)^2, ``C = 3``, continuation-ratio logits that
    are non-linear and non-additive in the covariates.

The numeric constants below are our own choices, picked so the response
curves have non-standard shapes; every one of them can be overridden.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from .core import OrdinalDataset, theta_to_pi
from .errors import InvalidArgument
from .priorspec import Variant, baseline_prior
from .randvar import _as_generator

__all__ = [
    "SimTruth",
    "EXAMPLE1_DEFAULTS",
    "EXAMPLE2_DEFAULTS",
    "EXAMPLE3_DEFAULTS",
    "gen_example1",
    "gen_example2",
    "gen_example3",
    "generate",
    "design_grid",
    "example_prior",
    "sample_mixture_responses",
]

EXAMPLE1_DEFAULTS = {
    # b[j][k] = (intercept, slope) of logit j in component k
    "b": [[[-4.0, -0.8], [2.0, 0.8], [-1.0, -0.3]],
          [[0.5, 0.0], [-1.0, -0.5], [1.0, -0.2]]],
    # a[j] = (intercept, slope) of the probit stick j
    "a": [[-5.0, -1.0], [0.0, -1.0]],
    "x_range": [-10.0, 10.0],
}

EXAMPLE2_DEFAULTS = {
    "beta": [0.0, 0.3],
    "cutoffs": [-1.5, 1.5],
    "x_range": [-10.0, 10.0],
}

EXAMPLE3_DEFAULTS = {
    # theta_1 = c11 + c12 sin(a11 x1 + a12 x2); theta_2 = c21 + c22 exp(a21 x1 + a22 x2)
    "c": [[0.0, 2.0], [-1.0, 0.5]],
    "a": [[3.0, 2.0], [1.5, 1.0]],
}

# baseline stick prior for the first design, kept explicit so it can be tuned
EXAMPLE1_WEIGHT_PRIOR = {"gamma0": [0.0, 0.0], "Gamma0": [[100.0, 0.0], [0.0, 100.0]]}


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Simulated dataset with its generating curves.

    ``truth(grid)`` maps design rows (intercept first) of shape ``(G, p)`` to
    true category probabilities of shape ``(G, C)``.
    """

    name: str
    params: dict
    truth: Callable
    data: OrdinalDataset
    x: np.ndarray = field(repr=False, default=None)


def _merge(defaults, params):
    out = {k: v for k, v in defaults.items()}
    if params:
        unknown = set(params) - set(defaults)
        if unknown:
            raise InvalidArgument(f"unknown parameters: {sorted(unknown)}")
        out.update(params)
    return out


def design_grid(x_range=(-10.0, 10.0), num=50):
    """Evenly spaced design rows ``(1, x)`` over a closed interval."""
    xs = np.linspace(x_range[0], x_range[1], num)
    return np.column_stack([np.ones(num), xs])


def sample_mixture_responses(pi, gen):
    """One category (1-based) per row of the probability matrix ``pi``."""
    cdf = np.cumsum(pi, axis=1)
    u = gen.random(pi.shape[0])[:, None] * cdf[:, -1:]
    return 1 + np.minimum((cdf < u).sum(axis=1), pi.shape[1] - 1)


# -- example 1 ---------------------------------------------------------------

def _ex1_weights(P, xs):
    a = np.asarray(P["a"], dtype=float)
    p1 = norm.cdf(a[0, 0] + a[0, 1] * xs)
    p2 = norm.cdf(a[1, 0] + a[1, 1] * xs)
    return np.column_stack([p1, (1 - p1) * p2, (1 - p1) * (1 - p2)])


def _ex1_truth(P):
    b = np.asarray(P["b"], dtype=float)

    def truth(grid):
        grid = np.atleast_2d(grid)
        xs = grid[:, 1]
        w = _ex1_weights(P, xs)
        # theta (G, K, C-1)
        th = b[None, :, :, 0].transpose(0, 2, 1) + xs[:, None, None] * b[None, :, :, 1].transpose(0, 2, 1)
        return np.einsum("gk,gkc->gc", w, theta_to_pi(th))

    return truth


def gen_example1(n=800, params=None, rng=None):
    """Three-component mixture with probit stick-breaking weights.

    Component ``k`` has logits ``theta_jk(x) = b_jk0 + b_jk1 x``; weights are
    ``(p1, (1 - p1) p2, (1 - p1)(1 - p2))`` with ``p_j = Phi(a_j0 + a_j1 x)``.
    """
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    P = _merge(EXAMPLE1_DEFAULTS, params)
    b = np.asarray(P["b"], dtype=float)
    if b.shape != (2, 3, 2) or np.shape(P["a"]) != (2, 2):
        raise InvalidArgument("example1 needs b of shape (2, 3, 2) and a of shape (2, 2)")
    gen = _as_generator(rng)
    lo, hi = P["x_range"]
    xs = gen.uniform(lo, hi, n)
    w = _ex1_weights(P, xs)
    comp = sample_mixture_responses(w, gen) - 1
    th = b[:, comp, 0].T + xs[:, None] * b[:, comp, 1].T
    y = sample_mixture_responses(theta_to_pi(th), gen)
    data = OrdinalDataset(y, np.column_stack([np.ones(n), xs]), 3)
    return SimTruth("example1", P, _ex1_truth(P), data, xs)


# -- example 2 ---------------------------------------------------------------

def _ex2_truth(P):
    beta = np.asarray(P["beta"], dtype=float)
    cut = np.concatenate([[-np.inf], np.asarray(P["cutoffs"], dtype=float), [np.inf]])

    def truth(grid):
        grid = np.atleast_2d(grid)
        m = grid @ beta
        cdf = norm.cdf(cut[None, :] - m[:, None])
        return np.diff(cdf, axis=1)

    return truth


def gen_example2(n=100, params=None, rng=None):
    """Cumulative probit data: ``y~ ~ N(beta0 + beta1 x, 1)`` cut at ordered
    cut-offs."""
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    P = _merge(EXAMPLE2_DEFAULTS, params)
    cut = np.asarray(P["cutoffs"], dtype=float)
    if cut.ndim != 1 or cut.size < 1 or np.any(np.diff(cut) <= 0):
        raise InvalidArgument("cut-offs must be strictly increasing")
    beta = np.asarray(P["beta"], dtype=float)
    gen = _as_generator(rng)
    lo, hi = P["x_range"]
    xs = gen.uniform(lo, hi, n)
    X = np.column_stack([np.ones(n), xs])
    latent = X @ beta + gen.standard_normal(n)
    y = 1 + np.searchsorted(cut, latent, side="left")
    data = OrdinalDataset(y, X, cut.size + 1)
    return SimTruth("example2", P, _ex2_truth(P), data, xs)


# -- example 3 ---------------------------------------------------------------

def _ex3_theta(P, x1, x2):
    c = np.asarray(P["c"], dtype=float)
    a = np.asarray(P["a"], dtype=float)
    t1 = c[0, 0] + c[0, 1] * np.sin(a[0, 0] * x1 + a[0, 1] * x2)
    t2 = c[1, 0] + c[1, 1] * np.exp(a[1, 0] * x1 + a[1, 1] * x2)
    return np.stack([t1, t2], axis=-1)


def gen_example3(n=3000, params=None, rng=None):
    """Two uniform covariates with sine and exponential logits."""
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    P = _merge(EXAMPLE3_DEFAULTS, params)
    if np.shape(P["c"]) != (2, 2) or np.shape(P["a"]) != (2, 2):
        raise InvalidArgument("example3 needs c and a of shape (2, 2)")
    gen = _as_generator(rng)
    x = gen.uniform(0.0, 1.0, (n, 2))
    y = sample_mixture_responses(theta_to_pi(_ex3_theta(P, x[:, 0], x[:, 1])), gen)
    data = OrdinalDataset(y, np.column_stack([np.ones(n), x]), 3)

    def truth(grid):
        grid = np.atleast_2d(grid)
        return theta_to_pi(_ex3_theta(P, grid[:, 1], grid[:, 2]))

    return SimTruth("example3", P, truth, data, x)


_GENERATORS = {"example1": gen_example1, "example2": gen_example2, "example3": gen_example3}


def generate(name, n=None, params=None, rng=None):
    """Dispatch by design name (``example1``, ``example2``, ``example3``)."""
    try:
        fn = _GENERATORS[name]
    except KeyError:
        raise InvalidArgument(f"unknown design {name!r}; choose from {sorted(_GENERATORS)}")
    return fn(params=params, rng=rng) if n is None else fn(n, params=params, rng=rng)


def example_prior(name, variant, L=50):
    """Prior used for a design: baseline atoms plus design-specific sticks."""
    v = Variant.parse(variant)
    p = 3 if name == "example3" else 2
    spec = baseline_prior(3, p, v, L=L)
    if name == "example1" and v.lsbp_weights:
        spec = spec.replace(**EXAMPLE1_WEIGHT_PRIOR)
    return spec
