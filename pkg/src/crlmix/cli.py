"""Command-line front end.

Every job reads an optional YAML config (flat sections, see
``crlmix print-config``), applies command-line overrides, validates the
result before any sampling, and writes its artefacts into one output
directory together with a ``manifest.json``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .core import OrdinalDataset
from .errors import ConfigError, DataError, DomainError, InvalidArgument, NumericFailure
from .evalmetrics import curve_metrics, gelfand_ghosh, write_comparison_csv
from .inference import (
    CurveEstimate,
    build_grid,
    conditional_curves,
    diagnostics,
    effective_sample_size,
    marginal_curves,
    replicate_responses,
)
from .priorspec import ModelSpec, Variant, baseline_prior, monotone_prior_solve
from .randvar import RngStream
from .sampler import PosteriorDraws, RunConfig, run_chain
from .simdata import EXAMPLE1_DEFAULTS, EXAMPLE2_DEFAULTS, example_prior, generate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# stream keys under the job seed
KEY_DATA = (1,)
KEY_CHAIN = (2,)
KEY_REPLICATE = (3,)
KEY_COMPARE = 4
KEY_COMPARE_REP = 5

VARIANTS = tuple(v.value for v in Variant)

_RUN = RunConfig()

DEFAULTS = {
    "data": {
        "path": None,            # CSV with a header row and a "y" column
        "y_column": "y",
        "standardize": False,    # centre/scale non-binary covariates
        "design": None,          # simulate example1/2/3 instead of reading a CSV
    },
    "model": {
        "variant": "General",    # General | CommonWeights | CommonAtoms
        "L": 50,
        "baseline": True,        # start from the baseline prior
        "hyper": {},             # hyperparameter overrides (all of them if baseline is false)
    },
    "run": {
        "n_iter": _RUN.n_iter,
        "burn_in": _RUN.burn_in,
        "thin": _RUN.thin,
    },
    "grid": {
        "column": 1,             # design column varied by the curves (1 = first covariate)
        "num": 50,
        "values": None,          # explicit values in original units
        "level": [0.025, 0.975],
    },
    "curves": {"draws": None, "kind": "both"},   # marginal | conditional | both
    "predict": {"draws": None, "x": None},       # x: list of covariate rows, original units
    "compare": {"variants": list(VARIANTS)},
    "simulate": {"design": "example2", "n": None, "params": {}},
    "elicit": {
        "mode": "baseline",      # baseline | monotone
        "variant": "General",
        "C": 3,
        "p": 2,
        "L": 50,
        "categories": None,      # 1-based logits to elicit (monotone); default all
        "a1": 10.0, "a2": 10.0, "a3": 6.0, "a4": 2.0,
        "direction": "decreasing",
        "kappa0": 4.0,
        "nu0": 4.0,
    },
}

_DESIGN_DOMAIN = {
    "example1": tuple(EXAMPLE1_DEFAULTS["x_range"]),
    "example2": tuple(EXAMPLE2_DEFAULTS["x_range"]),
    "example3": (0.0, 1.0),
}


# -- data ingestion ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CsvData:
    """A dataset read from CSV together with the transforms applied to it.

    ``relabel`` maps each observed response value to its category ``1..C``;
    ``center`` and ``scale`` give the covariate standardisation (identity for
    columns left untouched) so grids in original units can be mapped in.
    """

    data: OrdinalDataset
    columns: tuple
    relabel: dict
    center: np.ndarray
    scale: np.ndarray

    def to_model_units(self, values, column):
        return (np.asarray(values, dtype=float) - self.center[column - 1]) / self.scale[column - 1]

    def to_original_units(self, grid):
        out = np.array(grid, dtype=float)
        out[:, 1:] = out[:, 1:] * self.scale + self.center
        return out

    def meta(self):
        return {
            "columns": list(self.columns),
            "relabel": {str(k): v for k, v in self.relabel.items()},
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
        }


def _parse_float(text, row, column):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not np.isfinite(v):
        raise DataError(f"non-finite value {text!r}", row=row, column=column)
    return v


def ingest_csv(path, y_column="y", standardize=False):
    """Read an ordinal dataset from a CSV file.

    The file needs a header row and a response column (``y`` by default);
    all other columns are numeric covariates and an intercept is prepended.
    Response values are relabelled to ``1..C`` preserving their order.
    With ``standardize`` every covariate taking more than two distinct
    values is centred and scaled to unit standard deviation.

    Rows in error messages are file line numbers (the header is line 1).

    Raises
    ------
    DataError
        Empty file, missing response column, non-integer response,
        non-numeric covariate or a single observed category.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if y_column not in header:
            raise DataError(f"{path}: missing response column {y_column!r}", column=y_column)
        yi = header.index(y_column)
        covs = [h for k, h in enumerate(header) if k != yi]
        ys, xs = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(rec)}", row=line)
            yv = _parse_float(rec[yi].strip(), line, y_column)
            if yv != int(yv):
                raise DataError(f"non-integer response {rec[yi].strip()!r}", row=line, column=y_column)
            ys.append(int(yv))
            xs.append([_parse_float(rec[k].strip(), line, h) for k, h in enumerate(header) if k != yi])
    if not ys:
        raise DataError(f"{path}: no data rows")
    levels = sorted(set(ys))
    if len(levels) < 2:
        raise DataError(f"only one response category ({levels[0]}) observed", column=y_column)
    relabel = {v: k + 1 for k, v in enumerate(levels)}
    y = np.array([relabel[v] for v in ys], dtype=np.int64)
    Xc = np.array(xs, dtype=float).reshape(len(ys), len(covs))
    center = np.zeros(len(covs))
    scale = np.ones(len(covs))
    if standardize:
        for k in range(len(covs)):
            col = Xc[:, k]
            sd = col.std()
            if np.unique(col).size > 2 and sd > 0:
                center[k], scale[k] = col.mean(), sd
        Xc = (Xc - center) / scale
    X = np.column_stack([np.ones(len(ys)), Xc])
    return CsvData(OrdinalDataset(y, X, len(levels)), tuple(covs), relabel, center, scale)


def write_dataset_csv(path, data, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + list(columns))
        for i in range(data.n):
            w.writerow([int(data.y[i])] + [repr(float(v)) for v in data.X[i, 1:]])


# -- configuration -------------------------------------------------------------

def _merge(base, over, where=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict) and k != "hyper" and k != "params":
            if not isinstance(v, dict):
                raise ConfigError(f"config section {where}{k!r} must be a mapping")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config(path=None):
    """Defaults overlaid with a YAML document."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of sections")
    return _merge(DEFAULTS, doc)


@dataclass
class JobConfig:
    """Validated job description."""

    command: str
    cfg: dict
    seed: int
    threads: int
    output: Path
    run: RunConfig = None
    extra: dict = field(default_factory=dict)


def _run_config(cfg, seed, threads):
    r = cfg["run"]
    try:
        return RunConfig(n_iter=int(r["n_iter"]), burn_in=int(r["burn_in"]), thin=int(r["thin"]),
                         seed=seed, parallel_categories=threads > 1, threads=threads)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"run: {exc}") from None


def _check_variant(name, where):
    try:
        return Variant.parse(name)
    except (InvalidArgument, ValueError):
        raise ConfigError(f"{where}: unknown variant {name!r}; choose from {list(VARIANTS)}") from None


def validate(command, cfg, seed, threads, output):
    """Check a merged config for the given command before any compute."""
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    job = JobConfig(command, cfg, seed, threads, Path(output))
    if command in ("fit", "compare"):
        d = cfg["data"]
        if (d["path"] is None) == (d["design"] is None):
            raise ConfigError("data: give exactly one of path and design")
        if d["path"] is not None and not Path(d["path"]).is_file():
            raise ConfigError(f"data.path {d['path']} does not exist")
        if d["design"] is not None and d["design"] not in _DESIGN_DOMAIN:
            raise ConfigError(f"data.design must be one of {sorted(_DESIGN_DOMAIN)}")
        job.run = _run_config(cfg, seed, threads)
        if command == "fit":
            _check_variant(cfg["model"]["variant"], "model.variant")
        else:
            vs = cfg["compare"]["variants"]
            if not vs:
                raise ConfigError("compare.variants is empty")
            for v in vs:
                _check_variant(v, "compare.variants")
        if not isinstance(cfg["model"]["hyper"], dict):
            raise ConfigError("model.hyper must be a mapping")
    if command in ("curves", "predict"):
        draws = cfg[command]["draws"]
        if draws is None or not Path(draws).is_file():
            raise ConfigError(f"{command}.draws must name an existing draws file (got {draws!r})")
        if command == "curves" and cfg["curves"]["kind"] not in ("marginal", "conditional", "both"):
            raise ConfigError("curves.kind must be marginal, conditional or both")
        if command == "predict" and not cfg["predict"]["x"]:
            raise ConfigError("predict.x needs at least one covariate row")
    if command == "simulate" and cfg["simulate"]["design"] not in _DESIGN_DOMAIN:
        raise ConfigError(f"simulate.design must be one of {sorted(_DESIGN_DOMAIN)}")
    if command == "elicit" and cfg["elicit"]["mode"] not in ("baseline", "monotone"):
        raise ConfigError("elicit.mode must be baseline or monotone")
    lv = cfg["grid"]["level"]
    if len(lv) != 2 or not 0 <= lv[0] < lv[1] <= 1:
        raise ConfigError("grid.level must be two increasing probabilities")
    return job


# -- shared pieces -----------------------------------------------------------------

def versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(job, extra=None):
    man = {
        "command": job.command,
        "seed": job.seed,
        "threads": job.threads,
        "config": job.cfg,
        "versions": versions(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    man.update(extra or {})
    with open(job.output / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def load_data(job):
    """Dataset, data metadata and (for simulated designs) the truth."""
    d = job.cfg["data"]
    if d["path"] is not None:
        ing = ingest_csv(d["path"], d["y_column"], bool(d["standardize"]))
        return ing, None
    sim = generate(d["design"], job.cfg["simulate"]["n"], job.cfg["simulate"]["params"] or None,
                   RngStream(job.seed, KEY_DATA))
    p = sim.data.p
    ing = CsvData(sim.data, tuple(f"x{k}" for k in range(1, p)), {k: k for k in range(1, sim.data.C + 1)},
                  np.zeros(p - 1), np.ones(p - 1))
    return ing, sim


def model_spec(cfg, data, variant=None, design=None):
    m = cfg["model"]
    v = Variant.parse(variant or m["variant"])
    try:
        if m["baseline"]:
            if design is not None:
                spec = example_prior(design, v, L=int(m["L"]))
            else:
                spec = baseline_prior(data.C, data.p, v, L=int(m["L"]))
            return spec.replace(**m["hyper"]) if m["hyper"] else spec
        return ModelSpec(variant=v, C=data.C, p=data.p, L=int(m["L"]), **m["hyper"])
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None


def _grid(cfg, meta, x_mean, x_min, x_max, domain=None):
    """Model-unit grid and its original-unit twin."""
    g = cfg["grid"]
    col = int(g["column"])
    p = len(x_mean)
    if not 1 <= col < p:
        raise ConfigError(f"grid.column must lie in 1..{p - 1}")
    center = np.asarray(meta["center"], dtype=float)
    scale = np.asarray(meta["scale"], dtype=float)
    if g["values"] is not None:
        values = (np.asarray(g["values"], dtype=float) - center[col - 1]) / scale[col - 1]
    elif domain is not None:
        values = (np.linspace(domain[0], domain[1], int(g["num"])) - center[col - 1]) / scale[col - 1]
    else:
        values = np.linspace(x_min[col], x_max[col], int(g["num"]))
    grid = build_grid(np.vstack([x_mean, x_mean]), col, values=values)
    orig = grid.copy()
    orig[:, 1:] = orig[:, 1:] * scale + center
    return grid, orig


def _data_meta(ing, design=None):
    X = ing.data.X
    meta = ing.meta()
    meta.update(x_mean=X.mean(axis=0).tolist(), x_min=X.min(axis=0).tolist(),
                x_max=X.max(axis=0).tolist(), n=ing.data.n, C=ing.data.C, design=design)
    return meta


def _write_curves(path_stem, est, orig, columns):
    replace(est, grid=orig).to_csv(f"{path_stem}.csv", x_names=columns)


def _write_diagnostics(path, draws):
    diag = diagnostics(draws)
    am = diag["atom_mean"].reshape(len(draws), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "n_distinct", "largest_weight"] + [f"atom_mean{k}" for k in range(am.shape[1])])
        for t in range(len(draws)):
            w.writerow([int(draws.iters[t]), int(diag["n_distinct"][t]), repr(float(diag["largest_weight"][t]))]
                       + [repr(float(v)) for v in am[t]])
    return {
        "ess_n_distinct": effective_sample_size(diag["n_distinct"]),
        "ess_largest_weight": effective_sample_size(diag["largest_weight"]),
        "median_n_distinct": float(np.median(diag["n_distinct"])) if len(draws) else None,
    }


def _fit_one(data, spec, run, rng):
    return run_chain(data, spec, run, rng=rng)


# -- subcommands ---------------------------------------------------------------------

def cmd_fit(job):
    ing, sim = load_data(job)
    design = job.cfg["data"]["design"]
    spec = model_spec(job.cfg, ing.data, design=design)
    meta = _data_meta(ing, design)
    draws = _fit_one(ing.data, spec, job.run, RngStream(job.seed, KEY_CHAIN))
    draws.write(job.output / "draws.jsonl")
    summary = _write_diagnostics(job.output / "diagnostics.csv", draws)
    if len(draws) >= 2:
        gg = gelfand_ghosh(replicate_responses(draws, ing.data.X, RngStream(job.seed, KEY_REPLICATE)), ing.data)
        write_comparison_csv(job.output / "gelfand_ghosh.csv", {spec.variant.value: gg})
    if sim is not None:
        write_dataset_csv(job.output / "data.csv", ing.data, ing.columns)
    write_manifest(job, {"data": meta, "summary": summary, "spec": spec.to_dict()})
    print(f"fit: {len(draws)} draws of {spec.variant.value} written to {job.output}")
    return EXIT_OK


def _read_fit_manifest(draws_path):
    man = Path(draws_path).parent / "manifest.json"
    if not man.is_file():
        raise ConfigError(f"no manifest.json next to {draws_path}; curves need the fit's data summary")
    with open(man, encoding="utf-8") as fh:
        return json.load(fh)


def _load_draws(path):
    try:
        return PosteriorDraws.read(path)
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: malformed draws file ({exc})") from None
    except InvalidArgument as exc:
        raise DataError(str(exc)) from None


def cmd_curves(job):
    path = job.cfg["curves"]["draws"]
    draws = _load_draws(path)
    meta = _read_fit_manifest(path)["data"]
    domain = _DESIGN_DOMAIN.get(meta.get("design")) if meta.get("design") else None
    grid, orig = _grid(job.cfg, meta, meta["x_mean"], meta["x_min"], meta["x_max"], domain)
    level = tuple(job.cfg["grid"]["level"])
    kind = job.cfg["curves"]["kind"]
    written = []
    if kind in ("marginal", "both"):
        _write_curves(job.output / "marginal", marginal_curves(draws, grid, level), orig, meta["columns"])
        written.append("marginal.csv")
    if kind in ("conditional", "both"):
        _write_curves(job.output / "conditional", conditional_curves(draws, grid, level), orig, meta["columns"])
        written.append("conditional.csv")
    write_manifest(job, {"outputs": written})
    print(f"curves: wrote {', '.join(written)} to {job.output}")
    return EXIT_OK


def cmd_predict(job):
    path = job.cfg["predict"]["draws"]
    draws = _load_draws(path)
    meta = _read_fit_manifest(path)["data"]
    center = np.asarray(meta["center"], dtype=float)
    scale = np.asarray(meta["scale"], dtype=float)
    rows = np.atleast_2d(np.asarray(job.cfg["predict"]["x"], dtype=float))
    if rows.shape[1] != center.size:
        raise ConfigError(f"predict.x rows need {center.size} covariates, got {rows.shape[1]}")
    grid = np.column_stack([np.ones(rows.shape[0]), (rows - center) / scale])
    est = marginal_curves(draws, grid, tuple(job.cfg["grid"]["level"]))
    inverse = {v: k for k, v in meta["relabel"].items()}
    with open(job.output / "predict.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + meta["columns"] + ["category", "label", "prob", "lo", "hi"])
        for r in range(rows.shape[0]):
            for c in range(est.C):
                w.writerow([r + 1] + [repr(float(v)) for v in rows[r]]
                           + [c + 1, inverse.get(c + 1, c + 1), repr(float(est.mean[r, c])),
                              repr(float(est.lo[r, c])), repr(float(est.hi[r, c]))])
    write_manifest(job)
    print(f"predict: predictive pmf at {rows.shape[0]} rows written to {job.output / 'predict.csv'}")
    return EXIT_OK


def compare_variants(data, specs, run, seed, threads=1):
    """Fit several variants concurrently, each on its own stream.

    Chain ``k`` uses the stream ``(seed, (4, k))`` where ``k`` is the
    position of the variant in :data:`VARIANTS`, so results do not depend on
    which subset is compared or on the thread count.
    """
    def one(spec):
        k = VARIANTS.index(spec.variant.value)
        return spec.variant.value, _fit_one(data, spec, run, RngStream(seed, (KEY_COMPARE, k)))

    with ThreadPoolExecutor(max_workers=min(len(specs), max(threads, 1))) as pool:
        return dict(pool.map(one, specs))


def cmd_compare(job):
    ing, sim = load_data(job)
    design = job.cfg["data"]["design"]
    specs = [model_spec(job.cfg, ing.data, v, design) for v in job.cfg["compare"]["variants"]]
    by_name = {s.variant.value: s for s in specs}
    meta = _data_meta(ing, design)
    fits = compare_variants(ing.data, specs, job.run, job.seed, job.threads)
    domain = _DESIGN_DOMAIN.get(design) if design else None
    grid, orig = _grid(job.cfg, meta, meta["x_mean"], meta["x_min"], meta["x_max"], domain)
    level = tuple(job.cfg["grid"]["level"])
    results, metrics = {}, []
    for name, draws in fits.items():
        sub = job.output / name
        sub.mkdir(exist_ok=True)
        draws.write(sub / "draws.jsonl")
        _write_diagnostics(sub / "diagnostics.csv", draws)
        k = VARIANTS.index(name)
        rep = replicate_responses(draws, ing.data.X, RngStream(job.seed, (KEY_COMPARE_REP, k)))
        results[name] = gelfand_ghosh(rep, ing.data)
        est = marginal_curves(draws, grid, level)
        _write_curves(sub / "marginal", est, orig, ing.columns)
        if sim is not None:
            cm = curve_metrics(sim.truth, est)
            for c in range(ing.data.C):
                metrics.append([name, c + 1, cm.rmse[c], cm.length[c], cm.coverage[c]])
        with open(sub / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump({"data": meta, "spec": by_name[name].to_dict(),
                       "seed": job.seed}, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
    write_comparison_csv(job.output / "gelfand_ghosh.csv", results)
    if metrics:
        with open(job.output / "curve_metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "category", "rmse", "length", "coverage"])
            for row in metrics:
                w.writerow(row[:2] + [repr(float(v)) for v in row[2:]])
    if sim is not None:
        write_dataset_csv(job.output / "data.csv", ing.data, ing.columns)
    write_manifest(job, {"data": meta})
    for name, r in results.items():
        print(f"{name:14s} G={r.G.sum():9.3f} P={r.P.sum():9.3f} total={r.total:9.3f}")
    return EXIT_OK


def cmd_simulate(job):
    s = job.cfg["simulate"]
    try:
        sim = generate(s["design"], s["n"], s["params"] or None, RngStream(job.seed, KEY_DATA))
    except InvalidArgument as exc:
        raise ConfigError(f"simulate: {exc}") from None
    p = sim.data.p
    columns = [f"x{k}" for k in range(1, p)]
    write_dataset_csv(job.output / "data.csv", sim.data, columns)
    lo, hi = _DESIGN_DOMAIN[s["design"]]
    X = sim.data.X
    for col in range(1, p):
        values = job.cfg["grid"]["values"]
        values = np.linspace(lo, hi, int(job.cfg["grid"]["num"])) if values is None else values
        grid = build_grid(X, col, values=values)
        pi = sim.truth(grid)
        est = CurveEstimate(grid=grid, mean=pi, lo=pi, hi=pi, draws=pi[None], kind="truth")
        est.to_csv(job.output / f"truth_{columns[col - 1]}.csv", x_names=columns)
    write_manifest(job, {"params": sim.params})
    print(f"simulate: {s['design']} with n = {sim.data.n} written to {job.output}")
    return EXIT_OK


def cmd_elicit(job):
    e = job.cfg["elicit"]
    v = _check_variant(e["variant"], "elicit.variant")
    try:
        spec = baseline_prior(int(e["C"]), int(e["p"]), v, L=int(e["L"]))
        if e["mode"] == "monotone":
            if not v.regression_atoms:
                raise ConfigError("monotone elicitation needs a regression-atom variant")
            cats = e["categories"] or list(range(1, spec.C))
            mu0, Lam0 = spec.mu0.copy(), spec.Lambda0.copy()
            kap, nu = spec.kappa0.copy(), spec.nu0.copy()
            m, L = monotone_prior_solve(e["a1"], e["a2"], e["a3"], e["a4"], e["direction"],
                                        e["kappa0"], e["nu0"], p=spec.p)
            for j in cats:
                if not 1 <= int(j) < spec.C:
                    raise ConfigError(f"elicit.categories entries must lie in 1..{spec.C - 1}")
                mu0[j - 1], Lam0[j - 1] = m, L
                kap[j - 1], nu[j - 1] = e["kappa0"], e["nu0"]
            spec = spec.replace(mu0=mu0, Lambda0=Lam0, kappa0=kap, nu0=nu)
    except InvalidArgument as exc:
        raise ConfigError(f"elicit: {exc}") from None
    doc = {"model": {"variant": spec.variant.value, "L": spec.L, "baseline": False,
                     "hyper": {k: v for k, v in spec.to_dict().items()
                               if k not in ("variant", "C", "p", "L")}}}
    text = yaml.safe_dump(doc, sort_keys=False)
    sys.stdout.write(text)
    with open(job.output / "model.yaml", "w", encoding="utf-8") as fh:
        fh.write(text)
    write_manifest(job, {"spec": spec.to_dict()})
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "curves": cmd_curves,
    "predict": cmd_predict,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "elicit": cmd_elicit,
}


# -- argument parsing ------------------------------------------------------------

def _defaults_text():
    lines = ["config defaults (YAML sections):"]
    for sec, body in DEFAULTS.items():
        for k, v in body.items():
            lines.append(f"  {sec}.{k} = {v!r}")
    return "\n".join(lines)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML job config")
    common.add_argument("--seed", type=int, default=0, help="root seed, unsigned 64-bit (default 0)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; never changes numeric output (default 1)")
    common.add_argument("--output", default=None, help="output directory (default crlmix-out/<command>)")

    ap = argparse.ArgumentParser(prog="crlmix", description="Mixtures of continuation-ratio logits models.",
                                 epilog=_defaults_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="run one chain and write draws plus diagnostics")
    p.add_argument("--data", help="CSV file (overrides data.path)")
    p.add_argument("--design", help="simulated design instead of a CSV (data.design)")
    p.add_argument("--variant", help="model variant (model.variant)")

    p = sub.add_parser("curves", parents=[common], help="marginal/conditional curve tables from a draws file")
    p.add_argument("--draws", help="draws file written by fit (curves.draws)")
    p.add_argument("--kind", choices=["marginal", "conditional", "both"])

    p = sub.add_parser("predict", parents=[common], help="predictive pmf at covariate rows")
    p.add_argument("--draws", help="draws file written by fit (predict.draws)")
    p.add_argument("--x", action="append", help="comma-separated covariate row (repeatable)")

    p = sub.add_parser("compare", parents=[common], help="fit all variants and tabulate Gelfand-Ghosh losses")
    p.add_argument("--data", help="CSV file (overrides data.path)")
    p.add_argument("--design", help="simulated design instead of a CSV (data.design)")

    p = sub.add_parser("simulate", parents=[common], help="write a simulated dataset and its true curves")
    p.add_argument("--design", help="example1, example2 or example3 (simulate.design)")
    p.add_argument("--n", type=int, help="sample size (simulate.n)")

    p = sub.add_parser("elicit", parents=[common], help="print a baseline or monotone prior as a model section")
    p.add_argument("--mode", choices=["baseline", "monotone"])

    sub.add_parser("print-config", help="dump the default config as YAML")
    return ap


def _apply_flags(cfg, args):
    c = args.command
    if getattr(args, "data", None):
        cfg["data"]["path"], cfg["data"]["design"] = args.data, None
    if getattr(args, "design", None):
        if c == "simulate":
            cfg["simulate"]["design"] = args.design
        else:
            cfg["data"]["design"], cfg["data"]["path"] = args.design, None
    if getattr(args, "variant", None):
        cfg["model"]["variant"] = args.variant
    if getattr(args, "draws", None):
        cfg[c]["draws"] = args.draws
    if getattr(args, "kind", None):
        cfg["curves"]["kind"] = args.kind
    if getattr(args, "x", None):
        try:
            cfg["predict"]["x"] = [[float(v) for v in row.split(",")] for row in args.x]
        except ValueError:
            raise ConfigError("--x rows must be comma-separated numbers") from None
    if getattr(args, "n", None) is not None:
        cfg["simulate"]["n"] = args.n
    if getattr(args, "mode", None):
        cfg["elicit"]["mode"] = args.mode
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "print-config":
        sys.stdout.write(yaml.safe_dump(DEFAULTS, sort_keys=False))
        return EXIT_OK
    try:
        cfg = _apply_flags(load_config(args.config), args)
        output = args.output or f"crlmix-out/{args.command}"
        job = validate(args.command, cfg, args.seed, args.threads, output)
        job.output.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](job)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgument, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
