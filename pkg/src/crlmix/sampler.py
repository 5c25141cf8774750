"""Blocked Gibbs samplers for mixtures of continuation-ratio logits kernels.

Three variants share one sweep skeleton:

* ``General``: regression atoms ``beta[j, l]`` and logit stick-breaking
  weights with covariate-dependent sticks ``gamma[l]``.
* ``CommonWeights``: regression atoms, covariate-free Dirichlet-process
  sticks ``V`` with total mass ``alpha``.
* ``CommonAtoms``: scalar atoms ``theta[j, l]`` and logit stick-breaking
  weights.

Each sweep updates atoms, weights, labels and centring hyperparameters in
that order.  Polya-Gamma latents are refreshed immediately before the
Gaussian update that consumes them, so the labels are always drawn with the
latents integrated out.

Labels are stored 0-based (``0..L-1``).  Random streams are addressed by
``(iteration, step, category)``; the result does not depend on how many
threads process the categories.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import expit

from .core import OrdinalDataset
from .errors import CrlmixError, InvalidArgument, NumericFailure, SamplerError
from .priorspec import ModelSpec, Variant
from .randvar import (
    RngStream,
    _as_generator,
    cholesky_jitter,
    sample_inverse_wishart,
    sample_mvn_precision,
    sample_pg1,
)
from .randvar import _pg1_draw

__all__ = [
    "ChainState",
    "RunConfig",
    "PosteriorDraws",
    "STICK_CLAMP",
    "init_state",
    "lsbp_log_weights",
    "lsbp_weights",
    "stick_weights",
    "step_atoms_general",
    "step_atoms_common",
    "step_weights_lsbp",
    "step_weights_dp",
    "step_labels",
    "step_hyper_general",
    "step_hyper_common",
    "sweep",
    "run_chain",
    "check_state",
]

STICK_CLAMP = 1e-12
_LOG_LO = math.log(STICK_CLAMP)
_LOG_HI = math.log1p(-STICK_CLAMP)

# step identifiers used in stream keys
_S_ATOMS, _S_WEIGHTS, _S_LABELS, _S_HYPER = 1, 2, 3, 4


# ---------------------------------------------------------------------------
# State and schedule
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """Full parameter set of one Gibbs iteration.

    Attributes
    ----------
    beta : (C-1, L, p) array or None
        Regression atoms (General, CommonWeights).
    theta : (C-1, L) array or None
        Scalar atoms (CommonAtoms).
    gamma : (L-1, p) array or None
        LSBP stick coefficients (General, CommonAtoms).
    V : (L-1,) array or None
        DP stick proportions (CommonWeights).
    alpha : float or None
        DP total mass (CommonWeights).
    labels : (n,) int array
        Component index of every observation, 0-based.
    zeta : (n, C-1) array
        Kernel PG latents; NaN where the binomial has no trial.
    xi : (n, L-1) array or None
        Weight PG latents; NaN outside the at-risk set.
    mu : (C-1, p) or (C-1,) array
        Centring means.
    Sigma : (C-1, p, p) array or None
        Centring covariances (regression atoms).
    sigma2 : (C-1,) array or None
        Centring variances (CommonAtoms).
    """

    variant: Variant
    labels: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    beta: np.ndarray = None
    theta: np.ndarray = None
    gamma: np.ndarray = None
    V: np.ndarray = None
    alpha: float = None
    xi: np.ndarray = None
    Sigma: np.ndarray = None
    sigma2: np.ndarray = None

    @property
    def L(self):
        atoms = self.beta if self.beta is not None else self.theta
        return atoms.shape[1]

    def copy(self):
        kw = {}
        for k, v in self.__dict__.items():
            kw[k] = v.copy() if isinstance(v, np.ndarray) else v
        return ChainState(**kw)

    def label_counts(self):
        return np.bincount(self.labels, minlength=self.L)


@dataclass(frozen=True)
class RunConfig:
    """Chain schedule.

    ``n_iter`` sweeps are run; after the first ``burn_in`` every ``thin``-th
    state is kept.  ``threads`` only controls how many categories are updated
    concurrently and never changes the output.
    """

    n_iter: int = 30_000
    burn_in: int = 10_000
    thin: int = 5
    seed: int = 0
    parallel_categories: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1 or self.burn_in < 0:
            raise InvalidArgument("n_iter and thin must be positive, burn_in non-negative")
        if self.burn_in >= self.n_iter:
            raise InvalidArgument("burn_in must be smaller than n_iter")
        if self.threads < 1:
            raise InvalidArgument("threads must be at least 1")

    @property
    def n_kept(self):
        return (self.n_iter - self.burn_in) // self.thin

    def keep(self, t):
        """Whether sweep ``t`` (1-based) is retained."""
        return t > self.burn_in and (t - self.burn_in) % self.thin == 0


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _softplus(x):
    if x > 30.0:
        return x
    if x < -30.0:
        return math.exp(x)
    return math.log(1.0 + math.exp(x))


@numba.njit(cache=True, nogil=True)
def _lsbp_log_weights_kernel(X, gamma, lo, hi, out):
    n, p = X.shape
    K = gamma.shape[0]
    for i in range(n):
        before = 0.0
        for l in range(K):
            eta = 0.0
            for k in range(p):
                eta += X[i, k] * gamma[l, k]
            sp = _softplus(eta)
            # log phi(eta) = eta - softplus(eta); log(1 - phi(eta)) = -softplus(eta)
            ls = min(max(eta - sp, lo), hi)
            l1m = min(max(-sp, lo), hi)
            out[i, l] = ls + before
            before += l1m
        out[i, K] = before


def lsbp_log_weights(X, gamma):
    """Log mixture weights ``(n, L)`` from logit stick-breaking coefficients."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    out = np.empty((X.shape[0], gamma.shape[0] + 1))
    _lsbp_log_weights_kernel(X, np.ascontiguousarray(gamma, dtype=float), _LOG_LO, _LOG_HI, out)
    return out


def _stick_break(v):
    # v (..., L-1) stick proportions in (0, 1); weights (..., L) summing to 1
    shape = v.shape[:-1] + (v.shape[-1] + 1,)
    w = np.empty(shape)
    rest = np.ones(v.shape[:-1])
    for l in range(v.shape[-1]):
        w[..., l] = v[..., l] * rest
        rest = rest * (1.0 - v[..., l])
    w[..., -1] = 1.0 - w[..., :-1].sum(axis=-1)
    np.maximum(w, 0.0, out=w)
    return w


def lsbp_weights(X, gamma):
    """Mixture weights ``(n, L)`` from logit stick-breaking coefficients."""
    X = np.atleast_2d(X)
    if gamma.shape[0] == 0:
        return np.ones((X.shape[0], 1))
    v = np.clip(expit(X @ gamma.T), STICK_CLAMP, 1.0 - STICK_CLAMP)
    return _stick_break(v)


def stick_weights(V):
    """DP weights ``(L,)`` from stick proportions ``V`` of length ``L-1``."""
    V = np.asarray(V, dtype=float)
    if V.shape[-1] == 0:
        return np.ones(V.shape[:-1] + (1,))
    return _stick_break(np.clip(V, STICK_CLAMP, 1.0 - STICK_CLAMP))


def _dp_log_weights(V):
    if V.size == 0:
        return np.zeros(1)
    Vc = np.clip(V, STICK_CLAMP, 1.0 - STICK_CLAMP)
    l1m = np.log1p(-Vc)
    before = np.concatenate([[0.0], np.cumsum(l1m)])
    return np.concatenate([np.log(Vc), [0.0]]) + before


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def _check_dims(data, spec):
    if data.C != spec.C:
        raise InvalidArgument(f"data has C = {data.C} but spec has C = {spec.C}")
    if data.p != spec.p:
        raise InvalidArgument(f"data has p = {data.p} but spec has p = {spec.p}")


def _draw_hyper_prior(spec, gen):
    J, p = spec.J, spec.p
    if spec.variant.regression_atoms:
        Sigma = np.empty((J, p, p))
        mu = np.empty((J, p))
        for j in range(J):
            Sigma[j] = sample_inverse_wishart(spec.nu0[j], spec.Lambda0[j], gen)
            L = cholesky_jitter(Sigma[j] / spec.kappa0[j])
            mu[j] = spec.mu0[j] + L @ gen.standard_normal(p)
        return mu, Sigma
    sigma2 = spec.b0 / gen.gamma(spec.a0)
    mu = spec.mu0 + np.sqrt(sigma2 / spec.nu0) * gen.standard_normal(J)
    return mu, sigma2


def init_state(data, spec, rng):
    """Draw a starting state from the prior.

    Hyperparameters come from their priors, atoms and weights from the
    centring laws, labels uniformly on ``0..L-1``, and the Polya-Gamma
    latents from ``PG(1, 0)`` where they exist.
    """
    _check_dims(data, spec)
    gen = _as_generator(rng)
    J, L, p, n = spec.J, spec.L, spec.p, data.n
    mu, disp = _draw_hyper_prior(spec, gen)
    st = ChainState(variant=spec.variant, labels=gen.integers(0, L, size=n),
                    zeta=np.full((n, J), np.nan), mu=mu)
    if spec.variant.regression_atoms:
        st.Sigma = disp
        Lc = np.stack([cholesky_jitter(S) for S in disp])
        st.beta = mu[:, None, :] + np.einsum("jpq,jlq->jlp", Lc, gen.standard_normal((J, L, p)))
    else:
        st.sigma2 = disp
        st.theta = mu[:, None] + np.sqrt(disp)[:, None] * gen.standard_normal((J, L))
    if spec.variant.lsbp_weights:
        Lg = cholesky_jitter(spec.Gamma0)
        st.gamma = spec.gamma0 + gen.standard_normal((L - 1, p)) @ Lg.T
        st.xi = np.full((n, L - 1), np.nan)
        risk = st.labels[:, None] >= np.arange(L - 1)[None, :]
        st.xi[risk] = sample_pg1(np.zeros(int(risk.sum())), gen)
    else:
        st.alpha = float(gen.gamma(spec.a_alpha) / spec.b_alpha)
        st.V = gen.beta(1.0, st.alpha, size=L - 1)
    m = data.masses > 0
    st.zeta[m] = sample_pg1(np.zeros(int(m.sum())), gen)
    return st


# ---------------------------------------------------------------------------
# Step 1 / 1*: atoms
# ---------------------------------------------------------------------------

def _map_categories(fn, J, threads):
    if threads > 1 and J > 1:
        with ThreadPoolExecutor(max_workers=min(threads, J)) as ex:
            return list(ex.map(fn, range(J)))
    return [fn(j) for j in range(J)]


@numba.njit(cache=True, nogil=True)
def _accumulate_atoms(X, rows, lab, beta_j, ups_j, gen, z_out, P, h):
    # draw zeta at the current atoms and add each row to its component's
    # precision and information vector
    p = X.shape[1]
    for r in range(rows.shape[0]):
        i = rows[r]
        l = lab[i]
        eta = 0.0
        for a in range(p):
            eta += X[i, a] * beta_j[l, a]
        z = _pg1_draw(eta, gen)
        z_out[r] = z
        u = ups_j[i]
        for a in range(p):
            h[l, a] += u * X[i, a]
            for b in range(p):
                P[l, a, b] += z * X[i, a] * X[i, b]


def _atoms_general_one(j, state, data, spec, rng):
    gen = rng.spawn(j).generator()
    L, p = spec.L, spec.p
    rows = data.trial_rows[j]
    Sinv = np.linalg.inv(state.Sigma[j])
    Sinv = 0.5 * (Sinv + Sinv.T)
    P = np.zeros((L, p, p))
    h = np.zeros((L, p))
    z = np.empty(rows.size)
    _accumulate_atoms(data.X, rows, state.labels, np.ascontiguousarray(state.beta[j]),
                      np.ascontiguousarray(data.upsilon[:, j]), gen, z, P, h)
    P += Sinv
    h += Sinv @ state.mu[j]
    beta = sample_mvn_precision(P, h, gen)
    return j, rows, z, beta


def step_atoms_general(state, data, spec, rng, threads=1):
    """Regression-atom update for every category and component.

    For category ``j`` the latents ``zeta_ij ~ PG(1, x_i^T beta_{j, L_i})`` are
    drawn for rows with a trial, then every ``beta_{jl}`` is drawn from
    ``N(S (X_l^T upsilon_l + Sigma_j^{-1} mu_j), S)`` with
    ``S = (X_l^T Omega_l X_l + Sigma_j^{-1})^{-1}``.  Components without
    observations reduce to draws from ``N(mu_j, Sigma_j)``.  The state is
    updated in place and returned.
    """
    res = _map_categories(lambda j: _atoms_general_one(j, state, data, spec, rng),
                          spec.J, threads)
    for j, rows, z, beta in res:
        state.zeta[rows, j] = z
        state.beta[j] = beta
    return state


def _atoms_common_one(j, state, data, spec, rng):
    gen = rng.spawn(j).generator()
    L = spec.L
    rows = data.trial_rows[j]
    lab = state.labels[rows]
    z = sample_pg1(state.theta[j, lab], gen)
    zsum = np.bincount(lab, weights=z, minlength=L)
    usum = np.bincount(lab, weights=data.upsilon[rows, j], minlength=L)
    s2 = state.sigma2[j]
    v = s2 / (s2 * zsum + 1.0)
    m = v * (usum + state.mu[j] / s2)
    theta = m + np.sqrt(v) * gen.standard_normal(L)
    return j, rows, z, theta


def step_atoms_common(state, data, spec, rng, threads=1):
    """Scalar-atom update: ``theta_{jl} ~ N(v (sum upsilon + mu_j / s2), v)``,
    ``v = s2 / (s2 sum zeta + 1)``, after refreshing the latents."""
    res = _map_categories(lambda j: _atoms_common_one(j, state, data, spec, rng),
                          spec.J, threads)
    for j, rows, z, theta in res:
        state.zeta[rows, j] = z
        state.theta[j] = theta
    return state


# ---------------------------------------------------------------------------
# Step 2 / 2*: weights
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _accumulate_sticks(X, labels, gamma, gen, xi, P, h):
    # stick l is a Bernoulli regression of 1[L_i = l] on rows with L_i >= l
    n, p = X.shape
    K = gamma.shape[0]
    for i in range(n):
        top = min(labels[i], K - 1)
        for l in range(top + 1):
            eta = 0.0
            for a in range(p):
                eta += X[i, a] * gamma[l, a]
            z = _pg1_draw(eta, gen)
            xi[i, l] = z
            iota = 0.5 if labels[i] == l else -0.5
            for a in range(p):
                h[l, a] += iota * X[i, a]
                for b in range(p):
                    P[l, a, b] += z * X[i, a] * X[i, b]


def step_weights_lsbp(state, data, spec, rng):
    """Logit stick-breaking coefficient update.

    Stick ``l`` is a logistic regression of ``1[L_i = l]`` on the at-risk set
    ``{i : L_i >= l}``.  Latents ``xi_il ~ PG(1, x_i^T gamma_l)`` are drawn on
    that set, then ``gamma_l`` from ``N(G (X_l^T iota_l + Gamma0^{-1} gamma0), G)``
    with ``G = (X_l^T Xi_l X_l + Gamma0^{-1})^{-1}``.
    """
    gen = _as_generator(rng)
    L, p, n = spec.L, spec.p, data.n
    if L == 1:
        return state
    xi = np.full((n, L - 1), np.nan)
    P = np.zeros((L - 1, p, p))
    h = np.zeros((L - 1, p))
    _accumulate_sticks(data.X, state.labels, np.ascontiguousarray(state.gamma), gen, xi, P, h)
    Ginv = np.linalg.inv(spec.Gamma0)
    Ginv = 0.5 * (Ginv + Ginv.T)
    P += Ginv
    h += Ginv @ spec.gamma0
    state.gamma = sample_mvn_precision(P, h, gen)
    state.xi = xi
    return state


def step_weights_dp(state, spec, rng):
    """Dirichlet-process stick update and total-mass update.

    ``V_l ~ Beta(1 + M_l, alpha + sum_{h>l} M_h)``, then
    ``alpha ~ Gamma(a_alpha + L - 1, rate = b_alpha - sum log(1 - V_l))``.
    """
    gen = _as_generator(rng)
    L = spec.L
    if L == 1:
        state.alpha = float(gen.gamma(spec.a_alpha) / spec.b_alpha)
        return state
    M = state.label_counts().astype(float)
    tail = np.cumsum(M[::-1])[::-1]
    after = tail[1:]
    V = gen.beta(1.0 + M[:-1], state.alpha + after)
    V = np.clip(V, STICK_CLAMP, 1.0 - STICK_CLAMP)
    rate = spec.b_alpha - np.log1p(-V).sum()
    state.V = V
    state.alpha = float(gen.gamma(spec.a_alpha + L - 1) / rate)
    return state


# ---------------------------------------------------------------------------
# Step 3: labels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _draw_labels_general(X, y, beta, logw, u, out):
    n, p = X.shape
    J, L = beta.shape[0], beta.shape[1]
    lp = np.empty(L)
    for i in range(n):
        reach = min(y[i], J)
        mx = -np.inf
        for l in range(L):
            s = logw[i, l]
            for j in range(reach):
                eta = 0.0
                for k in range(p):
                    eta += X[i, k] * beta[j, l, k]
                s -= _softplus(eta)
                if j == y[i] - 1:
                    s += eta
            lp[l] = s
            if s > mx:
                mx = s
        tot = 0.0
        for l in range(L):
            lp[l] = math.exp(lp[l] - mx)
            tot += lp[l]
        target = u[i] * tot
        acc = 0.0
        pick = L - 1
        for l in range(L):
            acc += lp[l]
            if acc > target:
                pick = l
                break
        out[i] = pick


@numba.njit(cache=True, nogil=True)
def _draw_labels_table(y, table, logw, u, out):
    # table[c, l]: log-likelihood of category c (0-based) under component l
    n = y.shape[0]
    L = table.shape[1]
    lp = np.empty(L)
    for i in range(n):
        mx = -np.inf
        for l in range(L):
            s = logw[i, l] + table[y[i] - 1, l]
            lp[l] = s
            if s > mx:
                mx = s
        tot = 0.0
        for l in range(L):
            lp[l] = math.exp(lp[l] - mx)
            tot += lp[l]
        target = u[i] * tot
        acc = 0.0
        pick = L - 1
        for l in range(L):
            acc += lp[l]
            if acc > target:
                pick = l
                break
        out[i] = pick


def _log_weights(state, data, spec):
    if spec.variant.lsbp_weights:
        return lsbp_log_weights(data.X, state.gamma)
    return np.broadcast_to(_dp_log_weights(state.V), (data.n, spec.L))


def label_log_probs(state, data, spec):
    """Unnormalised log label probabilities ``(n, L)`` (for testing)."""
    from .core import kernel_log_pmf

    logw = _log_weights(state, data, spec)
    if spec.variant.regression_atoms:
        eta = np.einsum("ip,jlp->ilj", data.X, state.beta)
    else:
        eta = np.broadcast_to(state.theta.T[None], (data.n, spec.L, spec.J))
    return logw + kernel_log_pmf(data.y[:, None], eta)


def step_labels(state, data, spec, rng):
    """Configuration update: ``Pr(L_i = l)`` proportional to the weight times
    the kernel likelihood, normalised in log space."""
    gen = _as_generator(rng)
    n = data.n
    if n == 0:
        return state
    logw = np.ascontiguousarray(_log_weights(state, data, spec))
    u = gen.random(n)
    out = np.empty(n, dtype=np.int64)
    if spec.variant.regression_atoms:
        _draw_labels_general(data.X, data.y, np.ascontiguousarray(state.beta), logw, u, out)
    else:
        th = state.theta
        sp = np.logaddexp(0.0, th)
        # log pmf of category c under component l: theta_c - sum_{j<=c} softplus
        cum = np.cumsum(sp, axis=0)
        table = np.vstack([th - cum, -cum[-1:]])
        _draw_labels_table(data.y, table, logw, u, out)
    state.labels = out
    return state


# ---------------------------------------------------------------------------
# Step 4 / 4*: centring hyperparameters
# ---------------------------------------------------------------------------

def _hyper_general_one(j, state, spec, occ, rng):
    gen = rng.spawn(j).generator()
    b = state.beta[j, occ]
    ns = b.shape[0]
    k0, v0, m0, L0 = spec.kappa0[j], spec.nu0[j], spec.mu0[j], spec.Lambda0[j]
    if ns:
        bbar = b.mean(axis=0)
        d = b - bbar
        S = d.T @ d
        dm = bbar - m0
        Lstar = L0 + S + (ns * k0 / (ns + k0)) * np.outer(dm, dm)
        mstar = (k0 * m0 + ns * bbar) / (k0 + ns)
    else:
        Lstar, mstar = L0, m0
    Lstar = 0.5 * (Lstar + Lstar.T)
    kstar, vstar = k0 + ns, v0 + ns
    Sig = sample_inverse_wishart(vstar, Lstar, gen)
    mu = mstar + cholesky_jitter(Sig / kstar) @ gen.standard_normal(spec.p)
    return j, mu, Sig


def step_hyper_general(state, spec, rng, threads=1):
    """Normal-inverse-Wishart update of ``(mu_j, Sigma_j)`` from the occupied
    atoms only: ``Sigma_j ~ IW(nu*, Lambda*)`` then
    ``mu_j ~ N(mu*, Sigma_j / kappa*)``."""
    occ = np.flatnonzero(state.label_counts() > 0)
    res = _map_categories(lambda j: _hyper_general_one(j, state, spec, occ, rng),
                          spec.J, threads)
    for j, mu, Sig in res:
        state.mu[j] = mu
        state.Sigma[j] = Sig
    return state


def step_hyper_common(state, spec, rng):
    """Normal-inverse-gamma update of ``(mu_j, sigma2_j)`` from the occupied
    scalar atoms: ``sigma2_j ~ IG(a*, b*)`` then ``mu_j ~ N(mu*, sigma2_j / nu*)``."""
    gen = _as_generator(rng)
    occ = np.flatnonzero(state.label_counts() > 0)
    th = state.theta[:, occ]
    ns = th.shape[1]
    a0, b0, m0, v0 = spec.a0, spec.b0, spec.mu0, spec.nu0
    if ns:
        tbar = th.mean(axis=1)
        ss = ((th - tbar[:, None]) ** 2).sum(axis=1)
        bstar = b0 + 0.5 * ss + (ns * v0 / (ns + v0)) * (tbar - m0) ** 2 / 2.0
        mstar = (v0 * m0 + ns * tbar) / (v0 + ns)
    else:
        bstar, mstar = b0, m0
    astar, vstar = a0 + ns / 2.0, v0 + ns
    s2 = bstar / gen.gamma(astar)
    state.sigma2 = s2
    state.mu = mstar + np.sqrt(s2 / vstar) * gen.standard_normal(spec.J)
    return state


# ---------------------------------------------------------------------------
# Sweeps and chains
# ---------------------------------------------------------------------------

def sweep(state, data, spec, rng, threads=1):
    """One full systematic scan; ``rng`` is the stream of this iteration."""
    if spec.variant.regression_atoms:
        step_atoms_general(state, data, spec, rng.spawn(_S_ATOMS), threads)
    else:
        step_atoms_common(state, data, spec, rng.spawn(_S_ATOMS), threads)
    if spec.variant.lsbp_weights:
        step_weights_lsbp(state, data, spec, rng.spawn(_S_WEIGHTS))
    else:
        step_weights_dp(state, spec, rng.spawn(_S_WEIGHTS))
    step_labels(state, data, spec, rng.spawn(_S_LABELS))
    if spec.variant.regression_atoms:
        step_hyper_general(state, spec, rng.spawn(_S_HYPER), threads)
    else:
        step_hyper_common(state, spec, rng.spawn(_S_HYPER))
    return state


def check_state(state, data, spec):
    """Raise ``AssertionError`` if ``state`` violates a structural invariant."""
    L = spec.L
    assert state.labels.shape == (data.n,)
    assert np.all((state.labels >= 0) & (state.labels < L))
    m = data.masses > 0
    assert np.all(state.zeta[m] > 0) and np.all(np.isnan(state.zeta[~m]))
    if spec.variant.regression_atoms:
        assert state.beta.shape == (spec.J, L, spec.p) and np.all(np.isfinite(state.beta))
        for S in state.Sigma:
            assert np.array_equal(S, S.T)
            np.linalg.cholesky(S)
    else:
        assert state.theta.shape == (spec.J, L) and np.all(np.isfinite(state.theta))
        assert np.all(state.sigma2 > 0)
    if spec.variant.lsbp_weights:
        w = lsbp_weights(data.X, state.gamma) if data.n else np.ones((0, L))
        # xi belongs to the labels of the weight step, which the label step
        # may since have changed; each row must still be a positive prefix
        drawn = ~np.isnan(state.xi)
        assert np.all(state.xi[drawn] > 0)
        assert np.all(drawn[:, 1:] <= drawn[:, :-1]) and np.all(drawn[:, :1])
    else:
        assert state.alpha > 0
        w = stick_weights(state.V)[None]
    assert np.all(w >= 0) and np.allclose(w.sum(axis=-1), 1.0, atol=1e-12, rtol=0)


@dataclass
class PosteriorDraws:
    """Retained draws of one chain plus run metadata.

    Per-observation latents and labels are not stored; ``label_counts``
    keeps the occupancy of every component.
    """

    spec: ModelSpec
    run: RunConfig
    iters: np.ndarray
    label_counts: np.ndarray
    mu: np.ndarray
    beta: np.ndarray = None
    theta: np.ndarray = None
    gamma: np.ndarray = None
    V: np.ndarray = None
    alpha: np.ndarray = None
    Sigma: np.ndarray = None
    sigma2: np.ndarray = None
    n_obs: int = 0
    timings: list = field(default_factory=list)

    _STATE_KEYS = ("beta", "theta", "gamma", "V", "alpha", "mu", "Sigma", "sigma2")

    @property
    def variant(self):
        return self.spec.variant

    def __len__(self):
        return self.iters.shape[0]

    def atoms(self):
        return self.beta if self.beta is not None else self.theta

    def draw(self, t):
        """Dictionary of the parameters of retained draw ``t``."""
        out = {}
        for k in self._STATE_KEYS:
            v = getattr(self, k)
            if v is not None:
                out[k] = v[t]
        out["label_counts"] = self.label_counts[t]
        return out

    @classmethod
    def from_states(cls, spec, run, iters, states, n_obs, timings=()):
        kw = {}
        for k in cls._STATE_KEYS:
            v0 = getattr(states[0], k) if states else None
            if v0 is None and states:
                continue
            if not states:
                continue
            kw[k] = np.array([getattr(s, k) for s in states], dtype=float)
        counts = np.array([s.label_counts() for s in states], dtype=np.int64).reshape(len(states), spec.L)
        if not states:
            kw["mu"] = np.zeros((0,) + ((spec.J, spec.p) if spec.variant.regression_atoms else (spec.J,)))
        return cls(spec=spec, run=run, iters=np.asarray(iters, dtype=np.int64),
                   label_counts=counts, n_obs=n_obs, timings=list(timings), **kw)

    # -- line-delimited serialisation --------------------------------------

    def header(self):
        r = self.run
        return {
            "type": "header",
            "format": "crlmix-draws/1",
            "seed": r.seed,
            "L": self.spec.L,
            "variant": self.spec.variant.value,
            "n_iter": r.n_iter,
            "burn_in": r.burn_in,
            "thin": r.thin,
            "n_obs": self.n_obs,
            "spec_hash": self.spec.spec_hash(),
            "spec": self.spec.to_dict(),
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for t in range(len(self)):
                rec = {"type": "draw", "iter": int(self.iters[t])}
                for k, v in self.draw(t).items():
                    rec[k] = v.tolist() if isinstance(v, np.ndarray) else float(v)
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first:
                raise InvalidArgument(f"{path}: empty draws file")
            head = json.loads(first)
            if head.get("type") != "header":
                raise InvalidArgument(f"{path}: first record is not a header")
            spec = ModelSpec.from_dict(head["spec"])
            if spec.spec_hash() != head["spec_hash"]:
                raise InvalidArgument(f"{path}: spec hash mismatch")
            run = RunConfig(n_iter=head["n_iter"], burn_in=head["burn_in"],
                            thin=head["thin"], seed=head["seed"])
            cols = {k: [] for k in cls._STATE_KEYS + ("label_counts", "iter")}
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                for k in cols:
                    if k in rec:
                        cols[k].append(rec[k])
        kw = {k: np.array(v, dtype=float) for k, v in cols.items()
              if v and k not in ("label_counts", "iter")}
        n = len(cols["iter"])
        if "mu" not in kw:
            kw["mu"] = np.zeros((0,) + ((spec.J, spec.p) if spec.variant.regression_atoms else (spec.J,)))
        return cls(spec=spec, run=run, iters=np.array(cols["iter"], dtype=np.int64),
                   label_counts=np.array(cols["label_counts"], dtype=np.int64).reshape(n, spec.L),
                   n_obs=head["n_obs"], **kw)


def run_chain(data, spec, run, rng=None, progress=None):
    """Run ``run.n_iter`` sweeps and return the retained draws.

    Parameters
    ----------
    data : OrdinalDataset
    spec : ModelSpec
    run : RunConfig
    rng : RngStream, optional
        Root stream; defaults to ``RngStream(run.seed)``.
    progress : callable, optional
        Called as ``progress(t, n_iter)`` after every 1,000 sweeps.

    Raises
    ------
    SamplerError
        If a step fails; the message carries the sweep index.
    """
    _check_dims(data, spec)
    root = rng if rng is not None else RngStream(run.seed)
    threads = run.threads if run.parallel_categories else 1
    state = init_state(data, spec, root.spawn(0))
    kept, iters, timings = [], [], []
    tick = time.perf_counter()
    for t in range(1, run.n_iter + 1):
        try:
            sweep(state, data, spec, root.spawn(t), threads)
        except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise SamplerError(str(exc), t) from exc
        if run.keep(t):
            kept.append(state.copy())
            iters.append(t)
        if t % 1000 == 0:
            now = time.perf_counter()
            timings.append(now - tick)
            tick = now
            if progress is not None:
                progress(t, run.n_iter)
    return PosteriorDraws.from_states(spec, run, iters, kept, data.n, timings)
