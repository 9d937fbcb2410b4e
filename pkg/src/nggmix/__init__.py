"""Bayesian density estimation with normalized generalized gamma mixtures.

The package fits infinite mixture models whose mixing measure is a
normalized generalized gamma process, by a conditional Gibbs sampler
built on the Ferguson-Klass series representation.  It supports exact
and censored observations, semiparametric and fully nonparametric
variants, clustering point estimation, prior elicitation for the number
of components, convergence diagnostics, and posterior summaries
(density and distribution bands, quantiles, predictive scores).

Typical use::

    from nggmix import (
        Observation, SamplerConfig, run_chain, density_estimate, default_grid,
    )

    observations = [Observation.exact(v) for v in values]
    trace = run_chain(observations, SamplerConfig(seed=1))
    grid = default_grid(observations, trace.config.kernel)
    estimate = density_estimate(trace, grid)
"""

from .base_measures import BaseMeasureSpec, ScalePrior
from .cluster_priors import (
    ClusterCountPrior,
    cluster_count_table,
    dirichlet_cluster_pmf,
    dirichlet_expected_clusters,
    stable_cluster_pmf,
    stable_expected_clusters,
)
from .clustering import (
    Partition,
    cdf_overlay_table,
    minimize_loss,
    posterior_similarity,
)
from .datasets import (
    load_acidity,
    load_ecotox_sample,
    read_observation_csv,
    serialize_observations,
)
from .diagnostics import (
    PsrfSummary,
    pp_table,
    psrf,
    qq_table,
    scalar_trace_set,
    turnbull,
)
from .kernels import KernelSpec
from .observations import Observation, prepare_observations
from .posterior import (
    CpoVector,
    DensityEstimate,
    cdf_estimate,
    cpo,
    default_grid,
    density_estimate,
    predictive_cdf,
    predictive_quantile,
    quantile_estimate,
)
from .process import NggParams, TruncationPolicy
from .sampler import (
    ChainTrace,
    MultiChainRun,
    SamplerConfig,
    merge_traces,
    run_chain,
    run_chains,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BaseMeasureSpec",
    "ScalePrior",
    "ClusterCountPrior",
    "cluster_count_table",
    "dirichlet_cluster_pmf",
    "dirichlet_expected_clusters",
    "stable_cluster_pmf",
    "stable_expected_clusters",
    "Partition",
    "cdf_overlay_table",
    "minimize_loss",
    "posterior_similarity",
    "load_acidity",
    "load_ecotox_sample",
    "read_observation_csv",
    "serialize_observations",
    "PsrfSummary",
    "pp_table",
    "psrf",
    "qq_table",
    "scalar_trace_set",
    "turnbull",
    "KernelSpec",
    "Observation",
    "prepare_observations",
    "CpoVector",
    "DensityEstimate",
    "cdf_estimate",
    "cpo",
    "default_grid",
    "density_estimate",
    "predictive_cdf",
    "predictive_quantile",
    "quantile_estimate",
    "NggParams",
    "TruncationPolicy",
    "ChainTrace",
    "MultiChainRun",
    "SamplerConfig",
    "merge_traces",
    "run_chain",
    "run_chains",
]
