"""Seeded random variates used by the Gibbs samplers.

All randomness flows through :class:`RngStream`, a counter-based (Philox)
stream addressed by a seed and a tuple key.  Streams for different keys are
independent, so work can be split across threads without changing results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit

from .errors import InvalidArgument, NumericFailure

__all__ = [
    "RngStream",
    "LogitNormalParams",
    "sample_pg",
    "sample_pg1",
    "cholesky_jitter",
    "sample_mvn",
    "sample_mvn_precision",
    "sample_inverse_wishart",
    "sample_categorical_log",
    "logit_normal_mean_mc",
    "logit_normal_mean_bounds",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream.

    Parameters
    ----------
    seed : int
        Root seed (reduced modulo 2**64).
    key : tuple of int
        Stream address.  ``RngStream(s, (3, 1))`` and ``RngStream(s, (3, 2))``
        are independent; equal ``(seed, key)`` pairs replay identical draws.

    Examples
    --------
    >>> root = RngStream(7)
    >>> a = root.spawn(0, 1).generator().random()
    >>> b = root.spawn(0, 1).generator().random()
    >>> a == b
    True
    """

    seed: int
    key: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "key", tuple(int(k) & _MASK64 for k in self.key))

    def spawn(self, *keys):
        return RngStream(self.seed, self.key + tuple(keys))

    def generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidArgument("rng must be an RngStream or numpy Generator")


# ---------------------------------------------------------------------------
# Polya-Gamma PG(1, c): exact alternating-series rejection sampler
# ---------------------------------------------------------------------------

_TRUNC = 0.64
_PI = math.pi


@numba.njit(cache=True, nogil=True)
def _log_norm_cdf(x):
    v = 0.5 * math.erfc(-x / math.sqrt(2.0))
    if v <= 0.0:
        return -np.inf
    return math.log(v)


@numba.njit(cache=True, nogil=True)
def _series_coef(n, x):
    k = (n + 0.5) * _PI
    if x > _TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        expnt = -1.5 * (math.log(0.5 * _PI) + math.log(x)) + math.log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x
        return math.exp(expnt)
    return 0.0


@numba.njit(cache=True, nogil=True)
def _mass_texpon(z):
    t = _TRUNC
    fz = 0.125 * _PI * _PI + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_norm_cdf(b)
    xa = x0 + z + _log_norm_cdf(a)
    qdivp = 4.0 / _PI * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@numba.njit(cache=True, nogil=True)
def _rtigauss(z, gen):
    # inverse Gaussian truncated to (0, t)
    t = _TRUNC
    x = t + 1.0
    if 1.0 / t > z:
        alpha = 0.0
        while gen.random() > alpha:
            e1 = gen.standard_exponential()
            e2 = gen.standard_exponential()
            while e1 * e1 > 2.0 * e2 / t:
                e1 = gen.standard_exponential()
                e2 = gen.standard_exponential()
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            y = gen.standard_normal()
            y *= y
            half_mu = 0.5 * mu
            mu_y = mu * y
            x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
            if gen.random() > mu / (mu + x):
                x = mu * mu / x
    return x


@numba.njit(cache=True, nogil=True)
def _pg1_draw(c, gen):
    z = 0.5 * abs(c)
    fz = 0.125 * _PI * _PI + 0.5 * z * z
    mass = _mass_texpon(z)
    while True:
        if gen.random() < mass:
            x = _TRUNC + gen.standard_exponential() / fz
        else:
            x = _rtigauss(z, gen)
        s = _series_coef(0, x)
        y = gen.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


@numba.njit(cache=True, nogil=True)
def _pg_fill(b, c, gen, out):
    for i in range(c.shape[0]):
        acc = 0.0
        for _ in range(b[i]):
            acc += _pg1_draw(c[i], gen)
        out[i] = acc


def sample_pg(b, c, rng):
    """Draw from the Polya-Gamma law ``PG(b, c)`` for integer ``b >= 1``.

    ``PG(1, c)`` uses the exact alternating-series rejection sampler with
    truncation point 0.64; integer ``b`` sums ``b`` independent ``PG(1, c)``
    draws.  ``b`` and ``c`` broadcast; a scalar is returned for scalar input.

    Parameters
    ----------
    b : int or array of int
        Shape parameter, every entry >= 1.
    c : float or array
        Tilting parameter.
    rng : RngStream or numpy.random.Generator

    Returns
    -------
    float or ndarray
        Strictly positive draws.
    """
    b_arr, c_arr = np.broadcast_arrays(np.asarray(b), np.asarray(c, dtype=float))
    if b_arr.size and (np.any(b_arr < 1) or np.any(b_arr != np.floor(b_arr))):
        raise InvalidArgument("PG shape b must be a positive integer")
    if not np.all(np.isfinite(c_arr)):
        raise InvalidArgument("PG tilting c must be finite")
    gen = _as_generator(rng)
    out = np.empty(c_arr.size)
    _pg_fill(np.ascontiguousarray(b_arr, dtype=np.int64).ravel(),
             np.ascontiguousarray(c_arr).ravel(), gen, out)
    if np.ndim(b) == 0 and np.ndim(c) == 0:
        return float(out[0])
    return out.reshape(c_arr.shape)


def sample_pg1(c, gen):
    """Vector of ``PG(1, c_i)`` draws from a raw Generator (hot path)."""
    c = np.ascontiguousarray(c, dtype=float).ravel()
    out = np.empty(c.size)
    _pg_fill(np.ones(c.size, dtype=np.int64), c, gen, out)
    return out


# ---------------------------------------------------------------------------
# Gaussian and inverse-Wishart
# ---------------------------------------------------------------------------

def cholesky_jitter(A):
    """Lower Cholesky factor of ``A`` (or a stack of matrices).

    Tries the plain factorisation first, then adds ``eps * trace / p`` to the
    diagonal for ``eps`` in 1e-10, 1e-9, ..., 1e-4 before giving up.
    """
    A = np.asarray(A, dtype=float)
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    if A.ndim > 2:
        flat = A.reshape(-1, A.shape[-2], A.shape[-1])
        return np.stack([cholesky_jitter(a) for a in flat]).reshape(A.shape)
    p = A.shape[-1]
    scale = np.trace(A) / p
    if not np.isfinite(scale) or scale <= 0.0:
        raise NumericFailure(f"matrix not positive definite (trace/p = {scale:.3g})")
    eye = np.eye(p)
    for k in range(-10, -3):
        try:
            return np.linalg.cholesky(A + (10.0 ** k) * scale * eye)
        except np.linalg.LinAlgError:
            continue
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    raise NumericFailure(
        "Cholesky failed after jitter up to 1e-4*trace/p; "
        f"eigenvalue range [{w[0]:.3g}, {w[-1]:.3g}]"
    )


def sample_mvn(mean, cov, rng, size=None):
    """Multivariate normal draw via a (jittered) Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise InvalidArgument("cov must be a p x p matrix matching mean")
    gen = _as_generator(rng)
    L = cholesky_jitter(cov)
    shape = (mean.size,) if size is None else (size, mean.size)
    z = gen.standard_normal(shape)
    return mean + z @ L.T


def sample_mvn_precision(P, h, gen):
    """Batched draws from ``N(P^{-1} h, P^{-1})``.

    Parameters
    ----------
    P : array, shape (K, p, p)
        Precision matrices.
    h : array, shape (K, p)
        Canonical (information) vectors.
    gen : numpy.random.Generator

    Returns
    -------
    draws : array, shape (K, p)
    """
    L = cholesky_jitter(P)
    K, p = h.shape
    z = gen.standard_normal((K, p))
    # P = L L^T: mean solves L L^T m = h, noise solves L^T e = z
    Lt = np.swapaxes(L, -1, -2)
    w = np.linalg.solve(L, h[..., None])
    return np.linalg.solve(Lt, w + z[..., None])[..., 0]


def sample_inverse_wishart(nu, scale, rng, size=None):
    """Inverse-Wishart draw with mean ``scale / (nu - p - 1)``.

    Uses the Bartlett decomposition of the Wishart law of the inverse.  The
    result is symmetrised exactly.  With ``size`` a stack of independent
    draws of shape ``(size, p, p)`` is returned.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    p = scale.shape[0]
    if scale.shape != (p, p):
        raise InvalidArgument("scale must be square")
    if not nu > p - 1:
        raise InvalidArgument(f"nu must exceed p - 1 = {p - 1}, got {nu}")
    gen = _as_generator(rng)
    R = cholesky_jitter(scale)
    k = 1 if size is None else int(size)
    A = np.zeros((k, p, p))
    di = np.diag_indices(p)
    li = np.tril_indices(p, -1)
    A[:, di[0], di[1]] = np.sqrt(gen.chisquare(nu - np.arange(p), size=(k, p)))
    A[:, li[0], li[1]] = gen.standard_normal((k, p * (p - 1) // 2))
    # Sigma^{-1} = R^{-T} A A^T R^{-1}, so Sigma = B B^T with B = R A^{-T}
    B = np.swapaxes(np.linalg.solve(A, np.broadcast_to(R.T, (k, p, p))), -1, -2)
    S = B @ np.swapaxes(B, -1, -2)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    return S[0] if size is None else S


def sample_categorical_log(logp, gen):
    """One index per row of ``logp`` (unnormalised log-probabilities)."""
    logp = np.asarray(logp, dtype=float)
    mx = logp.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        raise NumericFailure("all categorical log-probabilities are -inf")
    w = np.exp(logp - mx)
    cdf = np.cumsum(w, axis=-1)
    u = gen.random(logp.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf < u).sum(axis=-1)
    return np.minimum(idx, logp.shape[-1] - 1)


# ---------------------------------------------------------------------------
# Logit-normal expectations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogitNormalParams:
    """``phi(Z)`` with ``Z ~ N(mu, sigma2)``."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma2)):
            raise InvalidArgument("logit-normal parameters must be finite")
        if self.sigma2 <= 0.0:
            raise InvalidArgument("sigma2 must be positive")


def logit_normal_mean_mc(params, n_mc=100_000, rng=None):
    """Monte-Carlo estimate of ``E phi(Z)`` for ``Z ~ N(mu, sigma2)``.

    Antithetic pairs ``mu +/- sigma z`` are used, which makes the estimate
    exactly 1/2 (up to rounding) whenever ``mu = 0``.

    Returns
    -------
    (estimate, standard_error) : tuple of float
    """
    if n_mc < 1:
        raise InvalidArgument("n_mc must be at least 1")
    gen = _as_generator(rng if rng is not None else RngStream(0))
    half = max(1, (int(n_mc) + 1) // 2)
    z = gen.standard_normal(half) * math.sqrt(params.sigma2)
    pair = 0.5 * (expit(params.mu + z) + expit(params.mu - z))
    est = float(pair.mean())
    se = float(pair.std(ddof=1) / math.sqrt(half)) if half > 1 else float("nan")
    return est, se


def logit_normal_mean_bounds(params):
    """Bracket ``phi(mu - sigma2/2) <= E phi(Z) <= phi(mu + sigma2/2)``."""
    h = 0.5 * params.sigma2
    return float(expit(params.mu - h)), float(expit(params.mu + h))
