"""Conditional Gibbs sampler for mixtures driven by a normalized jump measure.

One sweep alternates a Metropolis move on the latent mass tilt, a full
redraw of the jump measure given the allocations, a Gumbel-max redraw of
the allocations given the measure, a Metropolis refresh of the distinct
atom parameters, and conjugate or Metropolis updates of the remaining
scalars.  The infinite unfixed part of the measure is kept through its
largest jumps, with the count chosen by the truncation policy at the
current tilt.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .base_measures import (
    BaseMeasureSpec,
    location_logpdf,
    location_sample,
    sample_hyperparameters,
    scale_prior_logpdf,
    scale_prior_median,
    scale_prior_sample,
)
from .kernels import KernelSpec, atom_params_valid, observation_loglik_matrix
from .observations import Observation, PreparedData, prepare_observations
from .process import (
    JumpSeries,
    NggParams,
    TruncationPolicy,
    sample_unfixed_jumps,
    truncation_level_for,
)

__all__ = [
    "MODELS",
    "AdaptiveStep",
    "AllocationState",
    "ChainTrace",
    "GibbsState",
    "MeasureState",
    "MultiChainRun",
    "SamplerConfig",
    "accelerate_unique_values",
    "gibbs_step",
    "log_latent_u_target",
    "merge_traces",
    "refresh_measure",
    "resample_allocations",
    "run_chain",
    "run_chains",
    "sample_common_scale",
    "sample_latent_u",
    "sample_latent_u_adaptive",
    "update_hyperparameters",
]

MODELS = ("semiparametric", "fully_nonparametric")

# Random-walk scale for log-sigma moves (unique values and common scale).
LOG_SIGMA_STEP = 0.3
# Unique-value location proposals walk at this fraction of the data spread.
MU_STEP_FRACTION = 0.1
# Robbins-Monro target acceptance rate for the adaptive tilt walk.
ADAPT_TARGET = 0.44
ADAPT_DECAY = 0.6


def _log_uniform(rng: np.random.Generator) -> float:
    v = rng.uniform()
    return math.log(v) if v > 0.0 else -math.inf


def _log_uniform_vector(rng: np.random.Generator, size: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(rng.uniform(size=size))


# ---------------------------------------------------------------------------
# latent tilt


def log_latent_u_target(u, params: NggParams, n: int, num_clusters: int):
    """Unnormalized log density of the latent tilt given the allocation.

    Parameters
    ----------
    u : float or array_like
        Evaluation points; nonpositive points get ``-inf``.
    params : NggParams
        Process parameters (alpha, kappa, gamma).
    n : int
        Sample size.
    num_clusters : int
        Number of occupied components, between 1 and ``n``.

    Notes
    -----
    The density is proportional to
    ``u^(n-1) (u+kappa)^(r*gamma - n) exp{-(alpha/gamma)((u+kappa)^gamma
    - kappa^gamma)}`` with the ``gamma = 0`` case taken as the limit
    ``u^(n-1) (u+kappa)^(-n) (1 + u/kappa)^(-alpha)``.  The constant
    ``kappa^gamma`` inside the exponent keeps the two branches continuous;
    it does not depend on ``u`` so acceptance ratios are unaffected.  With
    ``kappa = 0`` the exponent is likewise shifted by the constant
    ``alpha/gamma``, which would otherwise overflow for tiny ``gamma``.
    """
    n = int(n)
    num_clusters = int(num_clusters)
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not 1 <= num_clusters <= n:
        raise ValueError("num_clusters must lie in 1..n")
    x = np.asarray(u, dtype=float)
    alpha, kappa, gamma = params.alpha, params.kappa, params.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        log_x = np.log(x)
        log_xk = np.log(x + kappa)
        if gamma == 0.0:
            # kappa > 0 is guaranteed when gamma == 0; the log difference
            # is log1p(x / kappa) without the overflow-prone quotient
            out = (n - 1.0) * log_x - n * log_xk - alpha * (log_xk - math.log(kappa))
        else:
            # (x+kappa)^gamma - kappa^gamma as a difference of expm1 terms:
            # immune to cancellation for small gamma and to intermediate
            # overflow for extreme kappa, with the division by gamma last
            if kappa > 0.0:
                powers = np.expm1(gamma * log_xk) - math.expm1(gamma * math.log(kappa))
            else:
                # drops the u-free constant alpha/gamma, which could overflow
                # on its own for tiny gamma; acceptance ratios are unchanged
                powers = np.expm1(gamma * log_x)
            out = (n - 1.0) * log_x + (num_clusters * gamma - n) * log_xk - alpha * powers / gamma
        out = np.where(x > 0.0, out, -np.inf)
    return float(out) if np.ndim(u) == 0 else out


def _gamma_proposal_logpdf(x: float, center: float, shape: float) -> float:
    """Log density of a gamma proposal with mean ``center`` and given shape."""
    rate = shape / center
    return (
        shape * math.log(rate)
        - math.lgamma(shape)
        + (shape - 1.0) * math.log(x)
        - rate * x
    )


def sample_latent_u(
    u: float,
    params: NggParams,
    n: int,
    num_clusters: int,
    rng: np.random.Generator,
    proposal_shape: float = 2.0,
) -> tuple[float, bool]:
    """One Metropolis-Hastings move of the latent tilt.

    The proposal is a gamma distribution with mean at the current value
    and the given shape; smaller shapes propose bolder moves.  Returns the
    new value and whether the proposal was accepted.
    """
    if not u > 0.0:
        raise ValueError("current tilt must be positive")
    prop = float(rng.gamma(proposal_shape, u / proposal_shape))
    if not (prop > 0.0 and math.isfinite(prop)):
        return u, False
    log_ratio = (
        log_latent_u_target(prop, params, n, num_clusters)
        - log_latent_u_target(u, params, n, num_clusters)
        + _gamma_proposal_logpdf(u, prop, proposal_shape)
        - _gamma_proposal_logpdf(prop, u, proposal_shape)
    )
    if _log_uniform(rng) < log_ratio:
        return prop, True
    return u, False


@dataclass
class AdaptiveStep:
    """Robbins-Monro step-size state for the log-scale tilt walk.

    The log step size moves toward the target acceptance rate with gain
    ``t^-0.6``; once ``frozen`` the size stays fixed so the chain is a
    plain Metropolis walk again.
    """

    log_step: float = 0.0
    updates: int = 0
    frozen: bool = False

    @property
    def step(self) -> float:
        return math.exp(self.log_step)

    def observe(self, accept_prob: float) -> None:
        if self.frozen:
            return
        self.updates += 1
        self.log_step += (accept_prob - ADAPT_TARGET) / self.updates**ADAPT_DECAY


def sample_latent_u_adaptive(
    u: float,
    params: NggParams,
    n: int,
    num_clusters: int,
    rng: np.random.Generator,
    step: AdaptiveStep,
) -> tuple[float, bool]:
    """Random-walk tilt move on the log scale with adaptive step size.

    Proposes ``u * exp(s z)`` with ``z`` standard normal; the extra
    ``log(prop) - log(u)`` term in the acceptance ratio is the change of
    variables back from the log scale.  The step state records the
    acceptance probability of every proposal until frozen.
    """
    if not u > 0.0:
        raise ValueError("current tilt must be positive")
    z = rng.standard_normal()
    prop = u * math.exp(step.step * z)
    if not (prop > 0.0 and math.isfinite(prop)):
        step.observe(0.0)
        return u, False
    log_ratio = (
        log_latent_u_target(prop, params, n, num_clusters)
        - log_latent_u_target(u, params, n, num_clusters)
        + math.log(prop)
        - math.log(u)
    )
    accepted = _log_uniform(rng) < log_ratio
    step.observe(math.exp(min(0.0, log_ratio)))
    return (prop, True) if accepted else (u, False)


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class SamplerConfig:
    """Everything a chain needs besides the data.

    Parameters
    ----------
    model : str
        "semiparametric" shares one kernel scale across all components and
        gives it the scale prior; "fully_nonparametric" draws a scale per
        component from the base measure.
    kernel, base, ngg, truncation
        Component specifications; see their classes.
    iterations, burnin, thinning : int
        Sweep count, discarded prefix, and keep-every-k rule.  At least
        one sweep must survive (``burnin + thinning <= iterations``).
    u_proposal_shape : float
        Shape of the gamma proposal for the tilt move (ignored when
        ``adaptive_u``).
    adaptive_u : bool
        Use the adaptive log-scale walk for the tilt instead.
    initial_jitter : float
        Multiplicative log-normal jitter applied to the initial tilt and
        scale, so chains with different seeds start apart.  Zero gives the
        deterministic initial state exactly.
    seed : int
        Seed of the chain generator; multi-chain runs shift it per chain.
    """

    model: str = "semiparametric"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    base: BaseMeasureSpec = field(default_factory=BaseMeasureSpec)
    ngg: NggParams = field(default_factory=lambda: NggParams(1.0, 0.0, 0.4))
    iterations: int = 1500
    burnin: int = 150
    thinning: int = 10
    u_proposal_shape: float = 2.0
    adaptive_u: bool = False
    initial_jitter: float = 0.1
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        for name in ("iterations", "burnin", "thinning", "seed"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must lie in [0, iterations)")
        if self.thinning < 1:
            raise ValueError("thinning must be positive")
        if self.burnin + self.thinning > self.iterations:
            raise ValueError("no sweep survives burn-in and thinning")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not (self.u_proposal_shape > 0 and math.isfinite(self.u_proposal_shape)):
            raise ValueError("u_proposal_shape must be positive and finite")
        if not (self.initial_jitter >= 0 and math.isfinite(self.initial_jitter)):
            raise ValueError("initial_jitter must be nonnegative and finite")
        lo, hi = self.base.location_support
        if self.kernel.family == "gamma" and lo < 0.0:
            raise ValueError(
                "gamma kernel needs positive locations; use a gamma or beta "
                "base measure"
            )
        if self.kernel.family == "beta" and (lo < 0.0 or hi > 1.0):
            raise ValueError("beta kernel needs locations in (0, 1); use a beta base measure")


@dataclass(eq=False)
class AllocationState:
    """Component labels together with the occupied atoms.

    ``labels`` indexes into the atom arrays; ``counts[j]`` is the number of
    observations allocated to atom ``j`` and every atom has at least one.
    """

    labels: np.ndarray
    atom_mu: np.ndarray
    atom_sigma: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        r = self.atom_mu.size
        if not (self.atom_sigma.size == r and self.counts.size == r and r >= 1):
            raise ValueError("atom arrays must share a positive length")
        if self.counts.sum() != self.labels.size:
            raise ValueError("multiplicities must add up to the number of labels")

    @property
    def num_atoms(self) -> int:
        return self.atom_mu.size


@dataclass(eq=False)
class MeasureState:
    """A draw of the jump measure at a fixed tilt.

    The fixed jumps align with the allocation's atoms; the unfixed part
    carries its own atoms drawn fresh from the base measure.
    """

    u: float
    fixed_jumps: np.ndarray
    unfixed: JumpSeries
    unfixed_mu: np.ndarray
    unfixed_sigma: np.ndarray


@dataclass(eq=False)
class GibbsState:
    """Mutable sweep state owned by a single chain."""

    allocation: AllocationState
    u: float
    phi: tuple
    common_sigma: float | None
    adaptive: AdaptiveStep | None
    mu_step: float
    counters: dict


@dataclass(eq=False)
class _TraceRow:
    weights: np.ndarray
    atom_mu: np.ndarray
    atom_sigma: np.ndarray
    u: float
    log_likelihood: float
    n_components: int
    labels: np.ndarray
    obs_log_density: np.ndarray
    common_sigma: float | None
    phi: tuple


@dataclass(frozen=True, eq=False)
class ChainTrace:
    """Kept draws of one chain.

    ``weights``, ``atom_mu`` and ``atom_sigma`` are per-sweep ragged arrays
    covering occupied and unoccupied atoms alike, with weights normalized
    to one; the scalar series align with them row by row.
    ``obs_log_density[t, i]`` is the log mixture density (or censoring
    probability) of observation ``i`` under the sweep-``t`` measure, the
    ingredient for predictive scores.  ``common_scale`` is None for the
    fully nonparametric model.
    """

    config: SamplerConfig
    weights: tuple
    atom_mu: tuple
    atom_sigma: tuple
    latent_u: np.ndarray
    log_likelihood: np.ndarray
    n_components: np.ndarray
    allocations: np.ndarray
    obs_log_density: np.ndarray
    common_scale: np.ndarray | None
    location_hyper: np.ndarray
    acceptance: dict

    def __post_init__(self) -> None:
        t = len(self.weights)
        if t == 0:
            raise ValueError("a trace needs at least one kept sweep")
        sizes = (
            len(self.atom_mu),
            len(self.atom_sigma),
            self.latent_u.size,
            self.log_likelihood.size,
            self.n_components.size,
            self.allocations.shape[0],
            self.obs_log_density.shape[0],
            self.location_hyper.shape[0],
        )
        if any(s != t for s in sizes):
            raise ValueError("trace series must share the kept-sweep count")
        for w, m, s in zip(self.weights, self.atom_mu, self.atom_sigma):
            if not (w.size == m.size == s.size):
                raise ValueError("per-sweep atom arrays must share a length")
            if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0.0):
                raise ValueError("weights must be a probability vector (tolerance 1e-10)")
        if np.any(self.latent_u <= 0.0):
            raise ValueError("the latent tilt must stay positive")
        for k in range(t):
            if np.unique(self.allocations[k]).size != self.n_components[k]:
                raise ValueError("n_components must count distinct labels")
        semi = self.config.model == "semiparametric"
        if semi != (self.common_scale is not None):
            raise ValueError("common_scale must be recorded exactly for the semiparametric model")

    @property
    def num_kept(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class MultiChainRun:
    """Per-chain outcomes of a multi-chain run; failures stay isolated."""

    traces: tuple
    errors: tuple

    @property
    def completed(self) -> list:
        return [t for t in self.traces if t is not None]

    def require_all(self) -> tuple:
        bad = [(i, e) for i, e in enumerate(self.errors) if e is not None]
        if bad:
            detail = "; ".join(f"chain {i}: {e}" for i, e in bad)
            raise RuntimeError(f"{len(bad)} chain(s) failed: {detail}")
        return self.traces


# ---------------------------------------------------------------------------
# sweep operations


def refresh_measure(
    allocation: AllocationState,
    config: SamplerConfig,
    u: float,
    phi: tuple,
    common_sigma: float | None,
    rng: np.random.Generator,
) -> MeasureState:
    """Redraw the jump measure given the allocation and the tilt.

    Fixed jumps are conditionally gamma with shape ``count - gamma`` and
    rate ``kappa + u``; the unfixed part keeps its largest jumps down to
    the truncation policy's index, each dressed with fresh atoms from the
    base measure.
    """
    params = config.ngg
    level = truncation_level_for(config.truncation, params, u)
    unfixed = sample_unfixed_jumps(level, params, u, rng)
    mu, sigma = _draw_unfixed_atoms(level, config, phi, common_sigma, rng)
    fixed = rng.gamma(allocation.counts - params.gamma, 1.0 / (params.kappa + u))
    return MeasureState(
        u=u, fixed_jumps=fixed, unfixed=unfixed, unfixed_mu=mu, unfixed_sigma=sigma
    )


def _draw_unfixed_atoms(count, config, phi, common_sigma, rng):
    mu = np.atleast_1d(
        np.asarray(location_sample(config.base, phi, rng, size=count), dtype=float)
    )
    if config.model == "semiparametric":
        sigma = np.full(count, float(common_sigma))
    else:
        sigma = np.atleast_1d(
            np.asarray(scale_prior_sample(config.base.scale_prior, rng, size=count), dtype=float)
        )
    if config.kernel.family != "beta":
        return mu, sigma
    # Beta atoms must satisfy sigma^2 < mu(1 - mu); restrict the base
    # measure to that set by redrawing the offending pairs.
    for _ in range(200):
        bad = ~atom_params_valid(config.kernel, mu, sigma)
        if not bad.any():
            return mu, sigma
        k = int(bad.sum())
        mu[bad] = location_sample(config.base, phi, rng, size=k)
        if config.model != "semiparametric":
            sigma[bad] = scale_prior_sample(config.base.scale_prior, rng, size=k)
    raise RuntimeError("could not draw admissible beta-kernel atoms from the base measure")


def resample_allocations(
    data: PreparedData,
    kernel: KernelSpec,
    allocation: AllocationState,
    measure: MeasureState,
    rng: np.random.Generator,
) -> tuple[AllocationState, np.ndarray]:
    """Redraw every label from its discrete conditional in one shot.

    Each observation picks among all atoms (fixed first, then unfixed)
    with log masses ``log jump + log likelihood``; the draw adds standard
    Gumbel noise and takes the argmax, which samples exactly from the
    normalized masses.  Returns the fresh allocation plus each
    observation's log predictive density under the normalized measure,
    a free by-product of the same score matrix.
    """
    mu = np.concatenate([allocation.atom_mu, measure.unfixed_mu])
    sigma = np.concatenate([allocation.atom_sigma, measure.unfixed_sigma])
    jumps = np.concatenate([measure.fixed_jumps, measure.unfixed.jumps])
    loglik = observation_loglik_matrix(data, kernel, mu, sigma)
    with np.errstate(divide="ignore"):
        scores = loglik + np.log(jumps)[None, :]
    finite = np.isfinite(scores.max(axis=1))
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise ValueError(
            f"observation {i} has zero likelihood under every mixture atom; "
            "check the kernel support against the data"
        )
    pick = np.argmax(scores + rng.gumbel(size=scores.shape), axis=1)
    kept, labels = np.unique(pick, return_inverse=True)
    state = AllocationState(
        labels=labels,
        atom_mu=mu[kept],
        atom_sigma=sigma[kept],
        counts=np.bincount(labels),
    )
    log_pred = special.logsumexp(scores, axis=1) - math.log(jumps.sum())
    return state, log_pred


def accelerate_unique_values(
    data: PreparedData,
    allocation: AllocationState,
    config: SamplerConfig,
    phi: tuple,
    mu_step: float,
    rng: np.random.Generator,
) -> tuple[AllocationState, int]:
    """Metropolis refresh of the distinct atom parameters.

    Resampling the measure alone never moves an occupied atom, so mixing
    over the unique values needs this extra step.  Each atom gets an
    independent random-walk proposal (locations on the natural scale,
    scales on the log scale) accepted against its members' likelihood
    times the base density.  The semiparametric model moves locations
    only.  Returns the updated state and the number of accepted atoms.
    """
    kernel, base = config.kernel, config.base
    r = allocation.num_atoms
    semi = config.model == "semiparametric"
    mu_prop = allocation.atom_mu + mu_step * rng.standard_normal(r)
    if semi:
        sigma_prop = allocation.atom_sigma.copy()
    else:
        sigma_prop = allocation.atom_sigma * np.exp(LOG_SIGMA_STEP * rng.standard_normal(r))
    valid = atom_params_valid(kernel, mu_prop, sigma_prop)
    # Evaluate invalid proposals at the current atom so the matrix stays
    # finite, then force-reject them below.
    mu_eval = np.where(valid, mu_prop, allocation.atom_mu)
    sigma_eval = np.where(valid, sigma_prop, allocation.atom_sigma)

    rows = np.arange(len(data))
    lab = allocation.labels
    curr_ll = observation_loglik_matrix(data, kernel, allocation.atom_mu, allocation.atom_sigma)
    prop_ll = observation_loglik_matrix(data, kernel, mu_eval, sigma_eval)
    curr_sum = np.zeros(r)
    prop_sum = np.zeros(r)
    np.add.at(curr_sum, lab, curr_ll[rows, lab])
    np.add.at(prop_sum, lab, prop_ll[rows, lab])

    log_ratio = prop_sum - curr_sum
    log_ratio += location_logpdf(mu_eval, base, phi) - location_logpdf(
        allocation.atom_mu, base, phi
    )
    if not semi:
        log_ratio += scale_prior_logpdf(sigma_eval, base.scale_prior) - scale_prior_logpdf(
            allocation.atom_sigma, base.scale_prior
        )
        # change of variables for the log-scale walk
        log_ratio += np.log(sigma_eval) - np.log(allocation.atom_sigma)
    log_ratio = np.where(valid, log_ratio, -np.inf)
    # -inf minus -inf: a current atom outside the base support stays put
    log_ratio = np.nan_to_num(log_ratio, nan=-np.inf)

    accept = _log_uniform_vector(rng, r) < log_ratio
    state = AllocationState(
        labels=allocation.labels,
        atom_mu=np.where(accept, mu_prop, allocation.atom_mu),
        atom_sigma=np.where(accept, sigma_prop, allocation.atom_sigma),
        counts=allocation.counts,
    )
    return state, int(accept.sum())


def update_hyperparameters(
    atom_mu: np.ndarray,
    phi: tuple,
    base: BaseMeasureSpec,
    rng: np.random.Generator,
) -> tuple:
    """One conjugate sweep over the location hyperparameters, if enabled."""
    if base.hyper_psi is None:
        return phi
    return sample_hyperparameters(atom_mu, phi, base.hyper_psi, rng)


def sample_common_scale(
    data: PreparedData,
    allocation: AllocationState,
    config: SamplerConfig,
    sigma: float,
    rng: np.random.Generator,
) -> tuple[float, bool]:
    """Metropolis move of the shared kernel scale (semiparametric model).

    Random walk on the log scale, accepted against the scale prior times
    the likelihood of every observation under its own atom.
    """
    kernel = config.kernel
    prior = config.base.scale_prior
    prop = sigma * math.exp(LOG_SIGMA_STEP * rng.standard_normal())
    r = allocation.num_atoms
    if not bool(np.all(atom_params_valid(kernel, allocation.atom_mu, np.full(r, prop)))):
        return sigma, False
    rows = np.arange(len(data))
    lab = allocation.labels
    curr = observation_loglik_matrix(data, kernel, allocation.atom_mu, np.full(r, sigma))
    propl = observation_loglik_matrix(data, kernel, allocation.atom_mu, np.full(r, prop))
    log_ratio = (
        propl[rows, lab].sum()
        - curr[rows, lab].sum()
        + float(scale_prior_logpdf(prop, prior))
        - float(scale_prior_logpdf(sigma, prior))
        + math.log(prop)
        - math.log(sigma)
    )
    if _log_uniform(rng) < log_ratio:
        return float(prop), True
    return sigma, False


# ---------------------------------------------------------------------------
# sweeps and chains


def gibbs_step(
    data: PreparedData,
    state: GibbsState,
    config: SamplerConfig,
    rng: np.random.Generator,
    record: bool = False,
) -> _TraceRow | None:
    """One full sweep over all conditionals, mutating ``state`` in place.

    Update order: latent tilt, jump measure, allocations, unique values,
    location hyperparameters, common scale.  When ``record`` is set the
    returned row snapshots the refreshed measure together with the
    allocation that produced it, so the pair is a coherent joint draw;
    recording consumes no randomness.
    """
    n = len(data)
    r = state.allocation.num_atoms
    if config.adaptive_u:
        state.u, accepted = sample_latent_u_adaptive(
            state.u, config.ngg, n, r, rng, state.adaptive
        )
    else:
        state.u, accepted = sample_latent_u(
            state.u, config.ngg, n, r, rng, config.u_proposal_shape
        )
    _tally(state.counters, "latent_u", accepted, 1)

    measure = refresh_measure(
        state.allocation, config, state.u, state.phi, state.common_sigma, rng
    )
    previous = state.allocation
    state.allocation, log_pred = resample_allocations(
        data, config.kernel, previous, measure, rng
    )

    row = None
    if record:
        jumps = np.concatenate([measure.fixed_jumps, measure.unfixed.jumps])
        row = _TraceRow(
            weights=jumps / jumps.sum(),
            atom_mu=np.concatenate([previous.atom_mu, measure.unfixed_mu]),
            atom_sigma=np.concatenate([previous.atom_sigma, measure.unfixed_sigma]),
            u=state.u,
            log_likelihood=float(log_pred.sum()),
            n_components=previous.num_atoms,
            labels=previous.labels.copy(),
            obs_log_density=log_pred,
            common_sigma=state.common_sigma,
            phi=state.phi,
        )

    state.allocation, accepted_atoms = accelerate_unique_values(
        data, state.allocation, config, state.phi, state.mu_step, rng
    )
    _tally(state.counters, "unique_values", accepted_atoms, state.allocation.num_atoms)

    state.phi = update_hyperparameters(state.allocation.atom_mu, state.phi, config.base, rng)

    if config.model == "semiparametric":
        state.common_sigma, accepted = sample_common_scale(
            data, state.allocation, config, state.common_sigma, rng
        )
        _tally(state.counters, "common_scale", accepted, 1)
        if accepted:
            state.allocation.atom_sigma = np.full(
                state.allocation.num_atoms, state.common_sigma
            )
    return row


def _tally(counters: dict, name: str, accepted, attempts: int) -> None:
    pair = counters[name]
    pair[0] += int(accepted)
    pair[1] += attempts


def _check_support(data: PreparedData, kernel: KernelSpec) -> None:
    lo, hi = kernel.support
    exact = data.exact_mask
    bad = np.zeros(len(data), dtype=bool)
    bad[exact] = (data.values[exact] <= lo) | (data.values[exact] >= hi)
    cens = ~exact
    bad[cens] = (data.upper[cens] <= lo) | (data.lower[cens] >= hi)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"observation {i} lies outside the support of the "
            f"{kernel.family!r} kernel"
        )


def _location_prior_mean(base: BaseMeasureSpec, phi: tuple) -> float:
    if base.location_family == "normal":
        return phi[0]
    if base.location_family == "gamma":
        return phi[0] / phi[1]
    return phi[0] / (phi[0] + phi[1])


def _initial_state(
    data: PreparedData, config: SamplerConfig, rng: np.random.Generator
) -> GibbsState:
    """Deterministic single-cluster start, optionally jittered."""
    n = len(data)
    mids = data.midpoints
    if config.base.hyper_psi is not None:
        psi = config.base.hyper_psi
        phi = (psi[0], psi[2] / psi[3])
    else:
        phi = config.base.location_params
    mu0 = float(np.median(mids))
    lo, hi = config.base.location_support
    if not lo < mu0 < hi:
        mu0 = _location_prior_mean(config.base, phi)
    sigma0 = scale_prior_median(config.base.scale_prior)
    u0 = 1.0
    if config.initial_jitter > 0.0:
        u0 *= math.exp(config.initial_jitter * rng.standard_normal())
        sigma0 *= math.exp(config.initial_jitter * rng.standard_normal())
    if not bool(np.all(atom_params_valid(config.kernel, mu0, sigma0))):
        # only the beta kernel can reject a positive scale: cap it under
        # the variance bound at mu0
        sigma0 = 0.9 * math.sqrt(mu0 * (1.0 - mu0))
    spread = float(np.ptp(mids))
    mu_step = MU_STEP_FRACTION * (spread if spread > 0.0 else max(sigma0, 1.0))
    allocation = AllocationState(
        labels=np.zeros(n, dtype=np.int64),
        atom_mu=np.array([mu0]),
        atom_sigma=np.array([sigma0]),
        counts=np.array([n]),
    )
    return GibbsState(
        allocation=allocation,
        u=u0,
        phi=phi,
        common_sigma=sigma0 if config.model == "semiparametric" else None,
        adaptive=AdaptiveStep() if config.adaptive_u else None,
        mu_step=mu_step,
        counters={"latent_u": [0, 0], "unique_values": [0, 0], "common_scale": [0, 0]},
    )


def run_chain(
    observations,
    config: SamplerConfig,
    progress=None,
) -> ChainTrace:
    """Run one chain end to end.

    Parameters
    ----------
    observations : sequence of Observation
        The data; censored entries are handled through their interval
        probabilities.
    config : SamplerConfig
        Model, prior, and schedule choices.
    progress : callable, optional
        Called as ``progress(sweep, total)`` after every sweep.

    Returns
    -------
    ChainTrace
        Kept draws on the ``burnin + k * thinning`` lattice.
    """
    data = prepare_observations(list(observations))
    _check_support(data, config.kernel)
    rng = np.random.default_rng(config.seed)
    state = _initial_state(data, config, rng)
    rows: list[_TraceRow] = []
    for sweep in range(1, config.iterations + 1):
        if state.adaptive is not None and sweep == config.burnin + 1:
            state.adaptive.frozen = True
        past = sweep - config.burnin
        record = past > 0 and past % config.thinning == 0
        row = gibbs_step(data, state, config, rng, record=record)
        if row is not None:
            rows.append(row)
        if progress is not None:
            progress(sweep, config.iterations)
    return _assemble_trace(rows, state, config)


def _assemble_trace(
    rows: list[_TraceRow], state: GibbsState, config: SamplerConfig
) -> ChainTrace:
    semi = config.model == "semiparametric"
    return ChainTrace(
        config=config,
        weights=tuple(r.weights for r in rows),
        atom_mu=tuple(r.atom_mu for r in rows),
        atom_sigma=tuple(r.atom_sigma for r in rows),
        latent_u=np.array([r.u for r in rows]),
        log_likelihood=np.array([r.log_likelihood for r in rows]),
        n_components=np.array([r.n_components for r in rows], dtype=np.int64),
        allocations=np.array([r.labels for r in rows]),
        obs_log_density=np.array([r.obs_log_density for r in rows]),
        common_scale=np.array([r.common_sigma for r in rows]) if semi else None,
        location_hyper=np.array([r.phi for r in rows]),
        acceptance={k: (int(v[0]), int(v[1])) for k, v in state.counters.items()},
    )


def _chain_outcome(observations, config: SamplerConfig, progress=None):
    try:
        return run_chain(observations, config, progress), None
    except Exception as exc:  # keep sibling chains alive
        return None, f"{type(exc).__name__}: {exc}"


def run_chains(
    observations,
    config: SamplerConfig,
    num_chains: int,
    parallel: bool = True,
    progress=None,
) -> MultiChainRun:
    """Run several chains with shifted seeds.

    Chain ``i`` uses ``config.seed + i``; the initial jitter then starts
    the chains apart.  With ``parallel`` the chains run in separate
    processes, and because each chain owns its generator the results are
    identical to a sequential run of the same configs.  A chain that
    raises is reported in ``errors`` without disturbing its siblings.

    Parameters
    ----------
    observations : sequence of Observation
    config : SamplerConfig
        Template configuration; only the seed varies across chains.
    num_chains : int
    parallel : bool
        Use a process pool (progress callbacks are sequential-only).
    progress : callable, optional
        Called as ``progress(chain_index, sweep, total)``.
    """
    if num_chains < 1:
        raise ValueError("num_chains must be positive")
    configs = [replace(config, seed=config.seed + i) for i in range(num_chains)]
    if parallel and num_chains > 1:
        workers = min(num_chains, _worker_count())
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_chain_outcome, observations, c) for c in configs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = []
        for i, c in enumerate(configs):
            cb = None
            if progress is not None:
                cb = lambda sweep, total, _i=i: progress(_i, sweep, total)
            outcomes.append(_chain_outcome(observations, c, cb))
    return MultiChainRun(
        traces=tuple(o[0] for o in outcomes),
        errors=tuple(o[1] for o in outcomes),
    )


def _worker_count() -> int:
    """Process-pool size, overridable through NGGMIX_WORKERS."""
    override = os.environ.get("NGGMIX_WORKERS", "").strip()
    if override:
        try:
            workers = int(override)
        except ValueError:
            raise ValueError(f"NGGMIX_WORKERS must be an integer, got {override!r}") from None
        if workers < 1:
            raise ValueError("NGGMIX_WORKERS must be positive")
        return workers
    return os.cpu_count() or 1


def merge_traces(traces) -> ChainTrace:
    """Pool the kept sweeps of several chains into one trace.

    The chains must share their configuration apart from the seed, as the
    chains of one :func:`run_chains` call do.  The merged trace carries the
    first chain's config, row-concatenated series, and summed acceptance
    counters; posterior summaries computed from it then use every chain's
    draws.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to merge")
    first = traces[0]
    for trace in traces[1:]:
        if replace(trace.config, seed=first.config.seed) != first.config:
            raise ValueError("traces disagree on configuration beyond the seed")
    if len(traces) == 1:
        return first
    acceptance = {
        key: (
            sum(t.acceptance[key][0] for t in traces),
            sum(t.acceptance[key][1] for t in traces),
        )
        for key in first.acceptance
    }
    semi = first.config.model == "semiparametric"
    return ChainTrace(
        config=first.config,
        weights=tuple(w for t in traces for w in t.weights),
        atom_mu=tuple(m for t in traces for m in t.atom_mu),
        atom_sigma=tuple(s for t in traces for s in t.atom_sigma),
        latent_u=np.concatenate([t.latent_u for t in traces]),
        log_likelihood=np.concatenate([t.log_likelihood for t in traces]),
        n_components=np.concatenate([t.n_components for t in traces]),
        allocations=np.concatenate([t.allocations for t in traces], axis=0),
        obs_log_density=np.concatenate([t.obs_log_density for t in traces], axis=0),
        common_scale=np.concatenate([t.common_scale for t in traces]) if semi else None,
        location_hyper=np.concatenate([t.location_hyper for t in traces], axis=0),
        acceptance=acceptance,
    )
