"""Batch front end: dataset ingestion, multi-chain runs, file outputs.

Two subcommands.  ``run`` fits the mixture model to a CSV dataset and
writes every analysis product (traces, density and CDF summaries,
quantiles, predictive scores, clustering, convergence diagnostics, a run
manifest) into an output directory.  ``elicit`` tabulates the prior
distribution of the number of clusters for the Dirichlet and stable
special cases, the main tool for choosing process parameters.

Exit codes: 0 on success, 2 on validation errors, 3 on runtime sampling
failures.  Failures print a one-line JSON object ``{"error": kind,
"message": text}`` to stdout; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .base_measures import DEFAULT_PSI, BaseMeasureSpec, ScalePrior
from .cluster_priors import cluster_count_table
from .clustering import cdf_overlay_table, minimize_loss
from .datasets import read_observation_csv
from .diagnostics import psrf, scalar_trace_set, pp_table, qq_table
from .kernels import KernelSpec
from .posterior import (
    cdf_estimate,
    cpo,
    default_grid,
    density_estimate,
    predictive_cdf,
    predictive_quantile,
    quantile_estimate,
)
from .observations import prepare_observations
from .process import NggParams, TruncationPolicy
from .sampler import SamplerConfig, _check_support, merge_traces, run_chains

__all__ = ["main", "parse_dataset"]

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

# CLI kernel names; the double-exponential goes by its common short name
_KERNELS = {
    "normal": "normal",
    "laplace": "double_exponential",
    "gamma": "gamma",
    "lognormal": "lognormal",
    "beta": "beta",
}

_MODELS = {"semi": "semiparametric", "full": "fully_nonparametric"}


def parse_dataset(path, fmt: str = "auto"):
    """Read observations from a CSV file.

    ``fmt`` "auto" accepts either layout (bound pairs under a left,right
    header, or a single column of exact values); "bounds" and "values"
    insist on one of them.
    """
    if fmt not in ("auto", "bounds", "values"):
        raise ValueError("format must be auto, bounds, or values")
    observations = read_observation_csv(path)
    if fmt != "auto":
        with open(path, newline="") as fh:
            first = fh.readline()
        has_header = [c.strip().lower() for c in first.split(",")] == ["left", "right"]
        if fmt == "bounds" and not has_header:
            raise ValueError(f"{path} lacks the left,right header required by format=bounds")
        if fmt == "values" and has_header:
            raise ValueError(f"{path} holds bound pairs, not a single value column")
    return observations


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors come out as machine-readable JSON."""

    def error(self, message):
        _emit_error("validation", message)
        raise SystemExit(EXIT_VALIDATION)


def _parse_scale_prior(text: str) -> ScalePrior:
    """Parse 'family:p1,p2,...' such as gamma:2,2 or uniform:0,5."""
    family, sep, rest = text.partition(":")
    if not sep:
        raise ValueError(
            "scale prior must look like family:params, for example gamma:2,2"
        )
    try:
        params = tuple(float(p) for p in rest.split(",") if p.strip())
    except ValueError:
        raise ValueError(f"non-numeric scale prior parameters in {text!r}") from None
    return ScalePrior(family.strip(), params)


# effective defaults applied after merging flags with the config file
_RUN_DEFAULTS = {
    "format": "auto",
    "model": "semi",
    "kernel": "normal",
    "alpha": 1.0,
    "kappa": 0.0,
    "gamma": 0.4,
    "scale_prior": "gamma:2,2",
    "nit": 1500,
    "burnin": 150,
    "thin": 10,
    "chains": 1,
    "seed": 0,
    "grid_points": 200,
    "quantiles": [],
    "clustering": "vi",
    "adaptive_u": False,
    "truncation_ell": 0.01,
    "sequential": False,
    "output": "nggmix_output",
}

_RUN_CONVERTERS = {
    "format": str,
    "model": str,
    "kernel": str,
    "alpha": float,
    "kappa": float,
    "gamma": float,
    "scale_prior": str,
    "nit": int,
    "burnin": int,
    "thin": int,
    "chains": int,
    "seed": int,
    "grid_points": int,
    "quantiles": lambda text: [float(p) for p in str(text).split(",") if p.strip()],
    "clustering": str,
    "adaptive_u": lambda text: str(text).strip().lower() in ("1", "true", "yes", "on"),
    "truncation_ell": float,
    "sequential": lambda text: str(text).strip().lower() in ("1", "true", "yes", "on"),
    "output": str,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="nggmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nggmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fit the mixture model to a dataset")
    run.add_argument("dataset", help="CSV file of observations")
    run.add_argument("--format", choices=("auto", "bounds", "values"), default=None)
    run.add_argument("--model", choices=tuple(_MODELS), default=None)
    run.add_argument("--kernel", choices=tuple(_KERNELS), default=None)
    run.add_argument("--alpha", type=float, default=None, help="process total mass")
    run.add_argument("--kappa", type=float, default=None, help="process rate shift")
    run.add_argument("--gamma", type=float, default=None, help="process stability index")
    run.add_argument(
        "--scale-prior", dest="scale_prior", default=None, metavar="FAMILY:PARAMS",
        help="for example gamma:2,2 or uniform:0,5",
    )
    run.add_argument("--nit", type=int, default=None, help="total sweeps")
    run.add_argument("--burnin", type=int, default=None)
    run.add_argument("--thin", type=int, default=None)
    run.add_argument("--chains", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    run.add_argument(
        "--quantiles", type=float, nargs="+", default=None, metavar="P",
        help="probability levels to estimate, for example 0.05",
    )
    run.add_argument("--clustering", choices=("none", "binder", "vi"), default=None)
    run.add_argument(
        "--adaptive-u", dest="adaptive_u", action="store_const", const=True, default=None,
        help="adaptive proposal for the latent tilt",
    )
    run.add_argument(
        "--truncation-ell", dest="truncation_ell", type=float, default=None,
        help="relative moment-matching error bound for the series truncation",
    )
    run.add_argument(
        "--sequential", action="store_const", const=True, default=None,
        help="run chains in-process instead of a worker pool",
    )
    run.add_argument("--config", default=None, help="key=value file merged under the flags")
    run.add_argument("-o", "--output", default=None, help="output directory")

    elicit = sub.add_parser("elicit", help="tabulate the prior on the number of clusters")
    elicit.add_argument("-n", type=int, required=True, help="sample size")
    elicit.add_argument("--alpha", type=float, default=1.0, help="Dirichlet concentration")
    elicit.add_argument("--gamma", type=float, default=0.4, help="stable index")
    elicit.add_argument("-o", "--output", default="-", help="CSV file, - for stdout")
    return parser


def _read_config_file(path) -> dict:
    """key=value lines; blank lines and # comments ignored."""
    settings = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path} line {lineno}: expected key=value, got {raw.strip()!r}")
            key = key.strip().replace("-", "_")
            if key not in _RUN_DEFAULTS:
                raise ValueError(f"{path} line {lineno}: unknown setting {key!r}")
            try:
                settings[key] = _RUN_CONVERTERS[key](value.strip())
            except ValueError:
                raise ValueError(
                    f"{path} line {lineno}: invalid value for {key}: {value.strip()!r}"
                ) from None
    return settings


def _effective_settings(ns) -> dict:
    """Merge flags over the config file over the defaults."""
    from_file = _read_config_file(ns.config) if ns.config else {}
    settings = {}
    for key, default in _RUN_DEFAULTS.items():
        flag = getattr(ns, key)
        if flag is not None:
            settings[key] = flag
        elif key in from_file:
            settings[key] = from_file[key]
        else:
            settings[key] = default
    if settings["model"] not in _MODELS:
        raise ValueError(f"model must be one of {tuple(_MODELS)}")
    if settings["kernel"] not in _KERNELS:
        raise ValueError(f"kernel must be one of {tuple(_KERNELS)}")
    if settings["clustering"] not in ("none", "binder", "vi"):
        raise ValueError("clustering must be none, binder, or vi")
    if settings["chains"] < 1:
        raise ValueError("chains must be positive")
    if settings["grid_points"] < 2:
        raise ValueError("grid_points must be at least 2")
    for p in settings["quantiles"]:
        if not 0.0 < p < 1.0:
            raise ValueError(f"quantile levels must lie in (0, 1), got {p}")
    return settings


def _sampler_config(settings: dict, observations) -> SamplerConfig:
    kernel = KernelSpec(_KERNELS[settings["kernel"]])
    scale_prior = _parse_scale_prior(settings["scale_prior"])
    base = _default_base(kernel.family, observations, scale_prior)
    return SamplerConfig(
        model=_MODELS[settings["model"]],
        kernel=kernel,
        base=base,
        ngg=NggParams(settings["alpha"], settings["kappa"], settings["gamma"]),
        iterations=settings["nit"],
        burnin=settings["burnin"],
        thinning=settings["thin"],
        adaptive_u=settings["adaptive_u"],
        truncation=TruncationPolicy(target_index=settings["truncation_ell"]),
        seed=settings["seed"],
    )


def _default_base(kernel_family, observations, scale_prior) -> BaseMeasureSpec:
    """Base measure matching the kernel's support.

    Real-line kernels get the normal location family with its conjugate
    hyperprior; the gamma kernel gets a gamma location prior whose mean
    follows the data scale; the beta kernel gets a uniform location prior.
    """
    if kernel_family == "beta":
        return BaseMeasureSpec("beta", (1.0, 1.0), scale_prior, None)
    if kernel_family == "gamma":
        mids = [o.midpoint for o in observations]
        center = float(np.mean(mids)) if mids else 1.0
        rate = 2.0 / center if center > 0 else 1.0
        return BaseMeasureSpec("gamma", (2.0, rate), scale_prior, None)
    return BaseMeasureSpec("normal", (0.0, 1.0), scale_prior, DEFAULT_PSI)


# ---------------------------------------------------------------------------
# output writers


def _fmt(value) -> str:
    """Full-precision decimal text: repr round-trips floats bit for bit."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _trace_rows(traces, semi: bool):
    quantities = ["n_components", "latent_u", "log_likelihood"]
    if semi:
        quantities.append("common_scale")
    for chain, trace in enumerate(traces):
        series = {
            "n_components": trace.n_components,
            "latent_u": trace.latent_u,
            "log_likelihood": trace.log_likelihood,
        }
        if semi:
            series["common_scale"] = trace.common_scale
        for iteration in range(trace.num_kept):
            for name in quantities:
                yield chain, iteration, name, series[name][iteration]


def _atom_rows(traces):
    for chain, trace in enumerate(traces):
        for iteration in range(trace.num_kept):
            w = trace.weights[iteration]
            mu = trace.atom_mu[iteration]
            sigma = trace.atom_sigma[iteration]
            for index in range(w.size):
                yield chain, iteration, index, w[index], mu[index], sigma[index]


def _psrf_payload(traces) -> dict:
    if len(traces) < 2:
        return {
            "univariate": None,
            "multivariate": None,
            "note": "potential scale reduction needs at least two chains",
        }
    summary = psrf(scalar_trace_set(traces))

    def result(r):
        if r.degenerate:
            return {"point": None, "upper": None, "degenerate": True}
        return {"point": float(r.point), "upper": float(r.upper), "degenerate": False}

    return {
        "univariate": {name: result(r) for name, r in summary.univariate.items()},
        "multivariate": result(summary.multivariate),
    }


def _progress_printer(total: int):
    step = max(1, total // 10)

    def report(chain: int, sweep: int, _total: int) -> None:
        if sweep % step == 0 or sweep == _total:
            print(f"chain {chain}: sweep {sweep} of {_total}", file=sys.stderr, flush=True)

    return report


# ---------------------------------------------------------------------------
# commands


def _cmd_run(ns) -> int:
    started = time.perf_counter()
    settings = _effective_settings(ns)
    observations = parse_dataset(ns.dataset, settings["format"])
    config = _sampler_config(settings, observations)
    # surface data/kernel mismatches as validation failures, not chain crashes
    _check_support(prepare_observations(observations), config.kernel)

    outdir = Path(settings["output"])
    outdir.mkdir(parents=True, exist_ok=True)

    chains = settings["chains"]
    parallel = not settings["sequential"] and chains > 1
    progress = None if parallel else _progress_printer(config.iterations)
    if parallel:
        print(f"running {chains} chains in parallel", file=sys.stderr, flush=True)

    sampling_started = time.perf_counter()
    run = run_chains(observations, config, chains, parallel=parallel, progress=progress)
    try:
        traces = run.require_all()
    except RuntimeError as err:
        raise _SamplingError(str(err)) from err
    sampling_seconds = time.perf_counter() - sampling_started

    pooled = merge_traces(traces)
    semi = config.model == "semiparametric"

    written = ["manifest.json"]

    _write_csv(
        outdir / "trace.csv",
        ["chain", "iteration", "quantity", "value"],
        _trace_rows(traces, semi),
    )
    written.append("trace.csv")

    _write_csv(
        outdir / "atoms.csv",
        ["chain", "iteration", "atom", "weight", "mu", "sigma"],
        _atom_rows(traces),
    )
    written.append("atoms.csv")

    grid = default_grid(observations, config.kernel, size=settings["grid_points"])
    density = density_estimate(pooled, grid)
    _write_csv(
        outdir / "density.csv",
        ["grid", "mean", "lower", "upper"],
        zip(density.grid, density.mean, density.lower, density.upper),
    )
    written.append("density.csv")

    cdf_mean = cdf_estimate(pooled, grid)
    _write_csv(outdir / "cdf.csv", ["grid", "mean"], zip(grid, cdf_mean))
    written.append("cdf.csv")

    quantiles = {}
    for p in settings["quantiles"]:
        point, lower, upper = quantile_estimate(pooled, p)
        quantiles[str(p)] = {"point": point, "lower": lower, "upper": upper}
    _write_json(outdir / "quantiles.json", quantiles)
    written.append("quantiles.json")

    scores = cpo(pooled)
    _write_csv(
        outdir / "cpo.csv",
        ["observation", "cpo"],
        ((i, v) for i, v in enumerate(scores.values)),
    )
    written.append("cpo.csv")

    _write_json(outdir / "psrf.json", _psrf_payload(traces))
    written.append("psrf.json")

    if settings["clustering"] != "none":
        partition = minimize_loss(pooled.allocations, loss=settings["clustering"])
        locations = np.array([o.midpoint for o in observations])
        order = np.argsort(locations, kind="stable")
        overlay = cdf_overlay_table(locations, partition)
        _write_csv(
            outdir / "clustering.csv",
            ["observation", "value", "ecdf", "label"],
            (
                (int(order[k]), overlay[k, 0], overlay[k, 1], int(overlay[k, 2]))
                for k in range(overlay.shape[0])
            ),
        )
        written.append("clustering.csv")

    _write_csv(
        outdir / "gof_pp.csv",
        ["empirical", "model"],
        pp_table(observations, predictive_cdf(pooled)),
    )
    written.append("gof_pp.csv")

    _write_csv(
        outdir / "gof_qq.csv",
        ["empirical", "model"],
        qq_table(observations, predictive_quantile(pooled)),
    )
    written.append("gof_qq.csv")

    censored = sum(1 for o in observations if o.kind != "exact")
    manifest = {
        "version": __version__,
        "command": "run",
        "dataset": str(ns.dataset),
        "observations": len(observations),
        "censored": censored,
        "config": {
            **{k: settings[k] for k in _RUN_DEFAULTS},
            "model": _MODELS[settings["model"]],
            "kernel": _KERNELS[settings["kernel"]],
        },
        "seeds": [config.seed + i for i in range(chains)],
        "kept_iterations": pooled.num_kept,
        "timings": {
            "total_seconds": time.perf_counter() - started,
            "sampling_seconds": sampling_seconds,
        },
        "outputs": sorted(written),
    }
    _write_json(outdir / "manifest.json", manifest)
    print(f"wrote {len(written)} files to {outdir}", file=sys.stderr, flush=True)
    return EXIT_OK


def _cmd_elicit(ns) -> int:
    table = cluster_count_table(ns.n, ns.alpha, ns.gamma)
    rows = ((int(k), pd, ps) for k, pd, ps in table)
    header = ["clusters", "dirichlet_pmf", "stable_pmf"]
    if ns.output == "-":
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    else:
        _write_csv(Path(ns.output), header, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


class _SamplingError(RuntimeError):
    """A chain failed after configuration validated."""


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), flush=True)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    try:
        if ns.command == "run":
            return _cmd_run(ns)
        return _cmd_elicit(ns)
    except _SamplingError as err:
        _emit_error("runtime", str(err))
        return EXIT_RUNTIME
    except (ValueError, FileNotFoundError, IsADirectoryError, PermissionError) as err:
        _emit_error("validation", str(err))
        return EXIT_VALIDATION
    except OSError as err:
        _emit_error("runtime", str(err))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
