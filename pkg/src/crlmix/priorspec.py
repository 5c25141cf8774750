"""Model specifications and hyperparameter construction.

A :class:`ModelSpec` bundles the variant tag with every prior
hyperparameter.  Atom hyperparameters are stored per category ``j = 1..C-1``
along the leading axis.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import theta_to_pi
from .errors import InvalidArgument
from .randvar import (
    LogitNormalParams,
    RngStream,
    _as_generator,
    logit_normal_mean_mc,
    sample_inverse_wishart,
)

__all__ = [
    "Variant",
    "Direction",
    "ModelSpec",
    "CONSERVATIVE_TRUNCATION",
    "baseline_prior",
    "monotone_prior_solve",
    "choose_truncation",
    "atom_logit_normal",
    "prior_expected_curves",
]

CONSERVATIVE_TRUNCATION = 50


class Variant(str, enum.Enum):
    GENERAL = "General"
    COMMON_WEIGHTS = "CommonWeights"
    COMMON_ATOMS = "CommonAtoms"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for v in cls:
            if v.value.lower() == key:
                return v
        raise InvalidArgument(f"unknown variant {value!r}; expected one of "
                              + ", ".join(v.value for v in cls))

    @property
    def lsbp_weights(self):
        return self is not Variant.COMMON_WEIGHTS

    @property
    def regression_atoms(self):
        return self is not Variant.COMMON_ATOMS


class Direction(str, enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"direction must be 'increasing' or 'decreasing', got {value!r}")


def _arr(x, shape=None):
    if x is None:
        return None
    a = np.array(x, dtype=float)
    if shape is not None:
        a = np.broadcast_to(a, shape).copy()
    a.setflags(write=False)
    return a


def _is_pd(M):
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return np.allclose(M, np.swapaxes(M, -1, -2))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Variant tag plus all prior hyperparameters.

    Regression-atom variants (General, CommonWeights) use ``mu0`` of shape
    ``(C-1, p)``, ``Lambda0`` of shape ``(C-1, p, p)`` and per-category
    ``kappa0`` and ``nu0``.  CommonAtoms uses scalar per-category ``mu0``,
    ``nu0``, ``a0`` and ``b0``.  LSBP-weight variants (General, CommonAtoms)
    use ``gamma0`` and ``Gamma0``; CommonWeights uses ``a_alpha`` and
    ``b_alpha`` for the Dirichlet-process total mass.

    ``Lambda0`` is the inverse-Wishart scale: ``E(Sigma_j) = Lambda0_j /
    (nu0_j - p - 1)``.
    """

    variant: Variant
    C: int
    p: int
    L: int = CONSERVATIVE_TRUNCATION
    mu0: np.ndarray = None
    Lambda0: np.ndarray = None
    kappa0: np.ndarray = None
    nu0: np.ndarray = None
    a0: np.ndarray = None
    b0: np.ndarray = None
    gamma0: np.ndarray = None
    Gamma0: np.ndarray = None
    a_alpha: float = None
    b_alpha: float = None

    def __post_init__(self):
        v = Variant.parse(self.variant)
        object.__setattr__(self, "variant", v)
        C, p, L = int(self.C), int(self.p), int(self.L)
        if C < 2:
            raise InvalidArgument("C must be at least 2")
        if p < 1:
            raise InvalidArgument("p must be at least 1")
        if L < 1:
            raise InvalidArgument("truncation level L must be at least 1")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "L", L)
        J = C - 1
        if v.regression_atoms:
            self._set("mu0", (J, p))
            self._set("Lambda0", (J, p, p))
            self._set("kappa0", (J,))
            self._set("nu0", (J,))
            if np.any(self.kappa0 <= 0):
                raise InvalidArgument("kappa0 must be positive")
            if np.any(self.nu0 <= p + 1):
                raise InvalidArgument(f"nu0 must exceed p + 1 = {p + 1}")
            if not _is_pd(self.Lambda0):
                raise InvalidArgument("Lambda0 must be symmetric positive definite")
            self._forbid("a0", "b0")
        else:
            self._set("mu0", (J,))
            self._set("nu0", (J,))
            self._set("a0", (J,))
            self._set("b0", (J,))
            if np.any(self.nu0 <= 0) or np.any(self.b0 <= 0):
                raise InvalidArgument("nu0 and b0 must be positive")
            if np.any(self.a0 <= 1):
                raise InvalidArgument("a0 must exceed 1")
            self._forbid("Lambda0", "kappa0")
        if v.lsbp_weights:
            self._set("gamma0", (p,))
            self._set("Gamma0", (p, p))
            if not _is_pd(self.Gamma0):
                raise InvalidArgument("Gamma0 must be symmetric positive definite")
            self._forbid("a_alpha", "b_alpha")
        else:
            if self.a_alpha is None or self.b_alpha is None:
                raise InvalidArgument("CommonWeights requires a_alpha and b_alpha")
            if self.a_alpha <= 0 or self.b_alpha <= 0:
                raise InvalidArgument("a_alpha and b_alpha must be positive")
            object.__setattr__(self, "a_alpha", float(self.a_alpha))
            object.__setattr__(self, "b_alpha", float(self.b_alpha))
            self._forbid("gamma0", "Gamma0")
        for name in ("mu0", "Lambda0", "kappa0", "nu0", "a0", "b0", "gamma0", "Gamma0"):
            a = getattr(self, name)
            if a is not None and not np.all(np.isfinite(a)):
                raise InvalidArgument(f"{name} must be finite")

    def _set(self, name, shape):
        val = getattr(self, name)
        if val is None:
            raise InvalidArgument(f"{self.variant.value} requires {name}")
        try:
            object.__setattr__(self, name, _arr(val, shape))
        except ValueError:
            raise InvalidArgument(f"{name} has shape {np.shape(val)}, expected {shape}")

    def _forbid(self, *names):
        for name in names:
            if getattr(self, name) is not None:
                raise InvalidArgument(f"{name} is not a {self.variant.value} hyperparameter")

    @property
    def J(self):
        """Number of continuation-ratio logits, ``C - 1``."""
        return self.C - 1

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in _FIELDS}
        d.update(changes)
        return ModelSpec(**d)

    def to_dict(self):
        out = {"variant": self.variant.value, "C": self.C, "p": self.p, "L": self.L}
        for k in _FIELDS[4:]:
            v = getattr(self, k)
            if v is None:
                continue
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(_FIELDS)
        if unknown:
            raise InvalidArgument(f"unknown ModelSpec keys: {sorted(unknown)}")
        return cls(**d)

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELDS = ("variant", "C", "p", "L", "mu0", "Lambda0", "kappa0", "nu0",
           "a0", "b0", "gamma0", "Gamma0", "a_alpha", "b_alpha")


def baseline_prior(C, p, variant=Variant.GENERAL, L=CONSERVATIVE_TRUNCATION):
    """Default hyperparameters centring every response curve on ``2^{-j}``.

    Regression atoms and LSBP weights get zero means, ``10^2 I`` scale
    matrices and ``kappa0 = nu0 = p + 2``.  The DP total mass of
    CommonWeights gets a ``Gamma(2, 1)`` prior; CommonAtoms gets
    ``mu0 = 0, nu0 = 2, a0 = 2, b0 = 5``.

    Examples
    --------
    >>> spec = baseline_prior(3, 2)
    >>> spec.kappa0.tolist(), spec.nu0.tolist()
    ([4.0, 4.0], [4.0, 4.0])
    """
    v = Variant.parse(variant)
    J = C - 1
    kw = {}
    if v.regression_atoms:
        kw.update(mu0=np.zeros((J, p)), Lambda0=np.broadcast_to(100.0 * np.eye(p), (J, p, p)),
                  kappa0=np.full(J, p + 2.0), nu0=np.full(J, p + 2.0))
    else:
        kw.update(mu0=np.zeros(J), nu0=np.full(J, 2.0), a0=np.full(J, 2.0), b0=np.full(J, 5.0))
    if v.lsbp_weights:
        kw.update(gamma0=np.zeros(p), Gamma0=100.0 * np.eye(p))
    else:
        kw.update(a_alpha=2.0, b_alpha=1.0)
    return ModelSpec(variant=v, C=C, p=p, L=L, **kw)


def monotone_prior_solve(a1, a2, a3, a4, direction, kappa0, nu0, p=2):
    """Atom centring hyperparameters forcing a monotone prior curve.

    The prior expected curve ``E phi(x^T beta)`` is squeezed between the two
    logit-normal bounds, whose inner parabolas have symmetry axes at
    ``x = -a1`` and ``x = a1``, maximal gap ``a2`` and vertices ``-a3`` and
    ``a4``.

    Parameters
    ----------
    a1, a2, a3, a4 : float
        Positive shape constants with ``a2 > a3 + a4``.
    direction : {"increasing", "decreasing"}
    kappa0, nu0 : float
        NIW hyperparameters of the category, ``nu0 > p + 1``.
    p : int
        Must be 2 (intercept plus one covariate).

    Returns
    -------
    mu0 : ndarray, shape (2,)
    Lambda0 : ndarray, shape (2, 2)
        Diagonal.

    Examples
    --------
    >>> mu0, Lam = monotone_prior_solve(10, 10, 6, 2, "decreasing", 4, 4)
    >>> mu0.tolist(), np.diag(Lam).tolist()
    ([-2.0, -0.9], [0.8, 0.072])
    """
    d = Direction.parse(direction)
    if p != 2:
        raise InvalidArgument("monotone_prior_solve handles one covariate plus intercept (p = 2)")
    if min(a1, a2, a3, a4) <= 0:
        raise InvalidArgument("a1, a2, a3, a4 must all be positive")
    if not a2 > a3 + a4:
        raise InvalidArgument(f"constraint a2 > a3 + a4 violated: {a2} <= {a3 + a4}")
    if kappa0 <= 0 or nu0 <= p + 1:
        raise InvalidArgument("need kappa0 > 0 and nu0 > p + 1")
    s = a2 + a3 + a4
    slope = -s / (2 * a1)
    if d is Direction.INCREASING:
        slope = -slope
    mu0 = np.array([(a4 - a3) / 2, slope])
    # lambda_s = c * Lambda_s with c = (kappa0 + 1) / (2 kappa0 (nu0 - p - 1));
    # each entry is formed with a single division to avoid compounding rounding
    k = 2 * kappa0 * (nu0 - p - 1)
    lam0 = (a2 - a3 - a4) * k / (4 * (kappa0 + 1))
    lam1 = s * k / (4 * a1 * a1 * (kappa0 + 1))
    return mu0, np.diag([lam0, lam1])


def atom_logit_normal(mu0, Lambda0, kappa0, nu0, x):
    """Moment-matched logit-normal law of ``x^T beta`` under the NIW prior.

    Mean ``x^T mu0`` and variance
    ``(kappa0 + 1) / (kappa0 (nu0 - p - 1)) x^T Lambda0 x``.
    """
    x = np.asarray(x, dtype=float)
    p = x.size
    var = (kappa0 + 1) / (kappa0 * (nu0 - p - 1)) * float(x @ Lambda0 @ x)
    return LogitNormalParams(float(x @ mu0), var)


def choose_truncation(gamma0, Gamma0, x_reps, target_mass=None, n_mc=100_000, rng=None):
    """Smallest truncation level with enough prior expected weight mass.

    The expected mass of the first ``L`` sticks at ``x`` is
    ``1 - (1 - E phi(x^T gamma))^L``; the minimum over ``x_reps`` must reach
    ``target_mass``.  The result is never below 2.  ``target_mass=None``
    returns the conservative default of 50.
    """
    if target_mass is None:
        return CONSERVATIVE_TRUNCATION
    if not 0.0 < target_mass < 1.0:
        raise InvalidArgument("target_mass must lie in (0, 1)")
    xs = np.atleast_2d(np.asarray(x_reps, dtype=float))
    if xs.shape[0] == 0:
        raise InvalidArgument("at least one representative x is required")
    gamma0 = np.asarray(gamma0, dtype=float)
    Gamma0 = np.asarray(Gamma0, dtype=float)
    root = rng if rng is not None else RngStream(0)
    worst = 1.0
    for i, x in enumerate(xs):
        ln = LogitNormalParams(float(x @ gamma0), float(x @ Gamma0 @ x))
        sub = root.spawn(i) if isinstance(root, RngStream) else root
        e, _ = logit_normal_mean_mc(ln, n_mc, sub)
        worst = min(worst, e)
    # solve 1 - (1 - e)^L >= target for the smallest integer L
    if worst >= 1.0:
        return 2
    L = math.ceil(math.log1p(-target_mass) / math.log1p(-worst))
    while L > 1 and 1.0 - (1.0 - worst) ** (L - 1) >= target_mass:
        L -= 1
    while 1.0 - (1.0 - worst) ** L < target_mass:
        L += 1
    return max(2, L)


def _prior_atom_logits(spec, grid, n, gen):
    """``n`` prior draws of the kernel logits at every grid point, (n, G, C-1)."""
    G = grid.shape[0]
    out = np.empty((n, G, spec.J))
    for j in range(spec.J):
        if spec.variant.regression_atoms:
            Sig = sample_inverse_wishart(spec.nu0[j], spec.Lambda0[j], gen, size=n)
            Lc = np.linalg.cholesky(Sig)
            z1 = gen.standard_normal((n, spec.p, 1))
            z2 = gen.standard_normal((n, spec.p, 1))
            mu = spec.mu0[j] + (Lc @ z1)[..., 0] / math.sqrt(spec.kappa0[j])
            beta = mu + (Lc @ z2)[..., 0]
            out[:, :, j] = beta @ grid.T
        else:
            s2 = spec.b0[j] / gen.gamma(spec.a0[j], size=n)
            mu = spec.mu0[j] + np.sqrt(s2 / spec.nu0[j]) * gen.standard_normal(n)
            theta = mu + np.sqrt(s2) * gen.standard_normal(n)
            out[:, :, j] = theta[:, None]
    return out


def prior_expected_curves(spec, grid, n_mc=100_000, rng=None, chunk=10_000):
    """Monte-Carlo prior expectation of the marginal response curves.

    Because the mixture weights sum to one and atoms are exchangeable, the
    prior mean of ``Pr(Y = j | G_x)`` equals the expected kernel probability
    under a single atom drawn from its centring hierarchy.

    Returns
    -------
    mean, se : ndarray, shape (G, C)
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != spec.p:
        raise InvalidArgument(f"grid rows must have length p = {spec.p}")
    gen = _as_generator(rng if rng is not None else RngStream(0))
    s1 = np.zeros((grid.shape[0], spec.C))
    s2 = np.zeros_like(s1)
    done = 0
    while done < n_mc:
        n = min(chunk, n_mc - done)
        pi = theta_to_pi(_prior_atom_logits(spec, grid, n, gen))
        s1 += pi.sum(axis=0)
        s2 += (pi * pi).sum(axis=0)
        done += n
    mean = s1 / n_mc
    var = np.maximum(s2 / n_mc - mean * mean, 0.0)
    return mean, np.sqrt(var / max(n_mc - 1, 1))
