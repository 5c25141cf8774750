"""Model-comparison and curve-estimation metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = ["GGResult", "gelfand_ghosh", "curve_metrics", "CurveMetrics",
           "comparison_rows", "write_comparison_csv"]


@dataclass(frozen=True, eq=False)
class GGResult:
    """Posterior predictive loss split per category.

    ``G[j]`` is the squared distance between the observed indicators and
    their replicate means, ``P[j]`` the summed replicate variance.
    """

    G: np.ndarray
    P: np.ndarray

    @property
    def total(self):
        return float(self.G.sum() + self.P.sum())


def _onehot_replicates(replicates, C):
    rep = np.asarray(replicates)
    if rep.ndim == 3:
        if rep.shape[2] != C:
            raise InvalidArgument(f"one-hot replicates need {C} categories")
        return rep.astype(float)
    if rep.ndim != 2:
        raise InvalidArgument("replicates must be (n, T) categories or (n, T, C) indicators")
    if rep.size and (rep.min() < 1 or rep.max() > C):
        raise InvalidArgument(f"replicate categories must lie in 1..{C}")
    return (rep[..., None] == np.arange(1, C + 1)).astype(float)


def gelfand_ghosh(replicates, observed):
    """Goodness-of-fit and penalty terms per category.

    Parameters
    ----------
    replicates : array, shape (n, T) or (n, T, C)
        Replicate categories (1-based) or their one-hot indicators, one per
        observation and retained draw.
    observed : OrdinalDataset

    Returns
    -------
    GGResult
        ``G_j = sum_i (Y_ij - mean_t Y*_ijt)^2`` and
        ``P_j = sum_i var_t Y*_ijt`` with the divide-by-T variance.
    """
    Ystar = _onehot_replicates(replicates, observed.C)
    if Ystar.shape[0] != observed.n:
        raise InvalidArgument(f"replicates cover {Ystar.shape[0]} rows, data has {observed.n}")
    if Ystar.shape[1] < 2:
        raise InvalidArgument("at least two draws are needed for the penalty term")
    m = Ystar.mean(axis=1)
    v = Ystar.var(axis=1)
    G = ((observed.onehot - m) ** 2).sum(axis=0)
    return GGResult(G=G, P=v.sum(axis=0))


@dataclass(frozen=True, eq=False)
class CurveMetrics:
    """Per-category root mean square error, mean band length and coverage."""

    rmse: np.ndarray
    length: np.ndarray
    coverage: np.ndarray


def curve_metrics(truth, estimate):
    """Compare a curve estimate with the true curves on its grid.

    ``rmse_j = sqrt(sum_g (pi*_j - mean_j)^2) / N``, ``length_j`` the average
    band width and ``coverage_j`` the fraction of grid points whose band
    contains the truth.  ``truth`` is a callable on the grid or an array of
    shape ``(N, C)``.
    """
    pi = truth(estimate.grid) if callable(truth) else np.asarray(truth, dtype=float)
    if pi.shape != estimate.mean.shape:
        raise InvalidArgument(f"truth has shape {pi.shape}, estimate has {estimate.mean.shape}")
    N = pi.shape[0]
    rmse = np.sqrt(((pi - estimate.mean) ** 2).sum(axis=0)) / N
    length = (estimate.hi - estimate.lo).mean(axis=0)
    cover = ((estimate.lo <= pi) & (pi <= estimate.hi)).mean(axis=0)
    return CurveMetrics(rmse=rmse, length=length, coverage=cover)


def comparison_rows(results):
    """Table rows ``[model, G_1, P_1, ..., G_C, P_C]`` from ``{model: GGResult}``."""
    rows = []
    C = None
    for name, r in results.items():
        C = r.G.size if C is None else C
        if r.G.size != C:
            raise InvalidArgument("all results must share the category count")
        row = [name]
        for j in range(C):
            row += [float(r.G[j]), float(r.P[j])]
        rows.append(row)
    header = ["model"]
    for j in range(1, (C or 0) + 1):
        header += [f"G{j}", f"P{j}"]
    return header, rows


def write_comparison_csv(path, results):
    header, rows = comparison_rows(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
