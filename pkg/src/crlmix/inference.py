"""Posterior functionals computed from retained draws.

Response curves are evaluated draw by draw over a grid of
design rows, then summarised by their posterior mean and quantile band.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import theta_to_pi
from .errors import InvalidArgument
from .randvar import _as_generator
from .sampler import lsbp_weights, stick_weights

__all__ = [
    "CurveEstimate",
    "draw_weights",
    "draw_kernel_probs",
    "curve_draws",
    "marginal_curves",
    "conditional_curves",
    "conditional_curves_weighted",
    "posterior_predictive",
    "replicate_responses",
    "weight_profile",
    "diagnostics",
    "effective_sample_size",
    "build_grid",
]


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    """Posterior summary of a probability response curve.

    Attributes
    ----------
    grid : (G, p) array
        Design rows (intercept first).
    mean, lo, hi : (G, C) arrays
        Posterior mean and lower/upper quantiles per grid point and category.
    draws : (T, G, C) array
        Per-draw curve values.
    level : tuple of float
        Quantile probabilities of ``lo`` and ``hi``.
    """

    grid: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    draws: np.ndarray
    level: tuple = (0.025, 0.975)
    kind: str = "marginal"

    @property
    def C(self):
        return self.mean.shape[1]

    def to_csv(self, path, x_names=None):
        """Flat table with one row per grid point and category."""
        G, p = self.grid.shape
        names = list(x_names) if x_names is not None else [f"x{k}" for k in range(1, p)]
        if len(names) != p - 1:
            raise InvalidArgument(f"need {p - 1} covariate names")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["category", "mean", "lo", "hi"])
            for g in range(G):
                xs = [repr(float(v)) for v in self.grid[g, 1:]]
                for c in range(self.C):
                    w.writerow(xs + [c + 1, repr(float(self.mean[g, c])),
                                     repr(float(self.lo[g, c])), repr(float(self.hi[g, c]))])


def _check_grid(draws, grid):
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != draws.spec.p:
        raise InvalidArgument(f"grid rows must have length p = {draws.spec.p}, got {grid.shape[1]}")
    return grid


def draw_weights(draws, t, grid):
    """Mixture weights ``(G, L)`` of retained draw ``t`` at the grid rows."""
    grid = np.atleast_2d(grid)
    if draws.variant.lsbp_weights:
        return lsbp_weights(grid, draws.gamma[t])
    return np.broadcast_to(stick_weights(draws.V[t]), (grid.shape[0], draws.spec.L))


def draw_kernel_probs(draws, t, grid):
    """Kernel category probabilities ``(G, L, C)`` of draw ``t``."""
    grid = np.atleast_2d(grid)
    if draws.variant.regression_atoms:
        eta = np.einsum("gp,jlp->glj", grid, draws.beta[t])
        return theta_to_pi(eta)
    pi = theta_to_pi(draws.theta[t].T)
    return np.broadcast_to(pi, (grid.shape[0],) + pi.shape)


def curve_draws(draws, grid, kind="marginal"):
    """Per-draw response curves ``(T, G, C)``."""
    grid = _check_grid(draws, grid)
    T = len(draws)
    out = np.empty((T, grid.shape[0], draws.spec.C))
    for t in range(T):
        w = draw_weights(draws, t, grid)
        k = draw_kernel_probs(draws, t, grid)
        if kind == "marginal":
            out[t] = np.einsum("gl,glc->gc", w, k)
        elif kind == "conditional":
            out[t] = _ratio_conditional(np.einsum("gl,glc->gc", w, k))
        else:
            raise InvalidArgument("kind must be 'marginal' or 'conditional'")
    return out


def _ratio_conditional(m):
    surv = np.flip(np.cumsum(np.flip(m, axis=-1), axis=-1), axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = m / surv
    c[..., -1] = 1.0
    return np.where(np.isfinite(c), c, 0.0)


def _summarise(grid, vals, level, kind):
    if vals.shape[0] == 0:
        raise InvalidArgument("no retained draws")
    mean = vals.mean(axis=0)
    lo, hi = np.quantile(vals, level, axis=0)
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    return CurveEstimate(grid=grid, mean=mean, lo=lo, hi=hi, draws=vals, level=tuple(level), kind=kind)


def marginal_curves(draws, grid, level=(0.025, 0.975)):
    """Posterior summary of ``Pr(Y = j | G_x)`` over the grid.

    For every draw the mixture ``sum_l w_l(x) K(j | theta_l(x))`` is
    evaluated, then averaged and bracketed by the requested quantiles.
    """
    grid = _check_grid(draws, grid)
    return _summarise(grid, curve_draws(draws, grid, "marginal"), level, "marginal")


def conditional_curves(draws, grid, level=(0.025, 0.975)):
    """Posterior summary of ``Pr(Y = j | Y >= j, G_x)``.

    Computed per draw as the marginal probability of ``j`` over the marginal
    survivor mass of ``{j, ..., C}``; the last category is identically one.
    """
    grid = _check_grid(draws, grid)
    return _summarise(grid, curve_draws(draws, grid, "conditional"), level, "conditional")


def conditional_curves_weighted(draws, t, grid):
    """Conditional curves of draw ``t`` via component-reweighted logits.

    ``sum_l w_jl(x) phi(theta_jl(x))`` with ``w_jl`` proportional to
    ``w_l(x) prod_{k<j} (1 - phi(theta_kl(x)))``.  Returns ``(G, C)``.
    """
    grid = _check_grid(draws, grid)
    w = draw_weights(draws, t, grid)
    k = draw_kernel_probs(draws, t, grid)
    # survivor mass of each component before category j
    surv = np.flip(np.cumsum(np.flip(k, axis=-1), axis=-1), axis=-1)
    out = np.empty((grid.shape[0], draws.spec.C))
    J = draws.spec.J
    for j in range(J):
        wj = w * surv[:, :, j]
        wj = wj / wj.sum(axis=1, keepdims=True)
        phi = k[:, :, j] / surv[:, :, j]
        out[:, j] = (wj * phi).sum(axis=1)
    out[:, -1] = 1.0
    return out


def _sample_rows(p, u):
    cdf = np.cumsum(p, axis=-1)
    idx = (cdf < u[..., None] * cdf[..., -1:]).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def posterior_predictive(draws, x_new, rng):
    """One predictive category (1-based) per retained draw at ``x_new``.

    For draw ``t`` a component is sampled from the weights at ``x_new``,
    then a category from that component's kernel.
    """
    x_new = _check_grid(draws, x_new)
    if x_new.shape[0] != 1:
        raise InvalidArgument("x_new must be a single design row")
    gen = _as_generator(rng)
    T = len(draws)
    u = gen.random((T, 2))
    out = np.empty(T, dtype=np.int64)
    for t in range(T):
        w = draw_weights(draws, t, x_new)[0]
        l = _sample_rows(w, u[t, :1])[0]
        k = draw_kernel_probs(draws, t, x_new)[0, l]
        out[t] = 1 + _sample_rows(k, u[t, 1:])[0]
    return out


def replicate_responses(draws, X, rng):
    """Replicated responses ``(n, T)`` at the design rows ``X``.

    Each draw gives one replicate per row by the same two-stage sampling as
    :func:`posterior_predictive`.
    """
    X = _check_grid(draws, X)
    gen = _as_generator(rng)
    T, n = len(draws), X.shape[0]
    out = np.empty((n, T), dtype=np.int64)
    for t in range(T):
        u = gen.random((n, 2))
        w = draw_weights(draws, t, X)
        l = _sample_rows(w, u[:, 0])
        k = draw_kernel_probs(draws, t, X)[np.arange(n), l]
        out[:, t] = 1 + _sample_rows(k, u[:, 1])
    return out


def weight_profile(draws, grid, k, quantiles=(0.025, 0.25, 0.5, 0.75, 0.975)):
    """Ordered largest mixture weights across the grid.

    Returns
    -------
    top : (T, G, k) array
        Per draw and grid point, the ``k`` largest weights in decreasing
        order.
    summary : (G, k, len(quantiles)) array
        Box-plot quantiles of ``top`` over draws.
    """
    grid = _check_grid(draws, grid)
    if not 1 <= k <= draws.spec.L:
        raise InvalidArgument(f"k must lie in 1..{draws.spec.L}")
    T = len(draws)
    top = np.empty((T, grid.shape[0], k))
    for t in range(T):
        w = draw_weights(draws, t, grid)
        top[t] = -np.sort(-w, axis=1)[:, :k]
    summary = np.moveaxis(np.quantile(top, quantiles, axis=0), 0, -1)
    return top, summary


def diagnostics(draws):
    """Label-invariant trace series.

    Returns a dictionary with

    ``n_distinct``
        Number of occupied components per draw.
    ``atom_mean``
        ``sum_i beta_{j L_i} / n`` (or the scalar-atom analogue) per draw,
        shape ``(T, C-1, p)`` or ``(T, C-1)``.
    ``largest_weight``
        Largest DP weight for CommonWeights; for stick-breaking weights,
        the largest share of observations held by one component.
    """
    counts = draws.label_counts
    n = max(int(draws.n_obs), 1)
    frac = counts / n
    atoms = draws.atoms()
    if draws.variant.regression_atoms:
        atom_mean = np.einsum("tl,tjlp->tjp", frac, atoms)
    else:
        atom_mean = np.einsum("tl,tjl->tj", frac, atoms)
    if draws.variant.lsbp_weights:
        largest = frac.max(axis=1)
    else:
        largest = stick_weights(draws.V).max(axis=-1)
    return {
        "n_distinct": (counts > 0).sum(axis=1),
        "atom_mean": atom_mean,
        "largest_weight": largest,
    }


def effective_sample_size(x):
    """Effective sample size of a scalar trace (initial positive sequence)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var == 0.0:
        return float(n)
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    s = 0.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        s += pair
    tau = max(2.0 * s - 1.0, 1e-12)
    return float(n / tau)


def build_grid(X, column=1, num=50, values=None):
    """First-order effect grid for covariate ``column`` of the design ``X``.

    The chosen covariate runs over ``num`` evenly spaced values across its
    observed range (or over ``values``); every other covariate is fixed at
    its observed average and the intercept at one.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not 1 <= column < X.shape[1]:
        raise InvalidArgument(f"column must lie in 1..{X.shape[1] - 1}")
    if values is None:
        values = np.linspace(X[:, column].min(), X[:, column].max(), num)
    values = np.asarray(values, dtype=float)
    grid = np.tile(X.mean(axis=0), (values.size, 1))
    grid[:, 0] = 1.0
    grid[:, column] = values
    return grid
