# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Metropolis-within-Gibbs sampler on the union of the model subspaces.

The posterior is a mixture of mutually singular distributions: the state
``(gamma, beta, mu, sigma2, g)`` lives in the subspace where every excluded
coefficient is exactly zero. A between-model move flips one indicator: an add
move draws the new coefficient from a random walk centered at zero, a delete
move sets it to zero (a deterministic proposal, whose density is one).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple
from warnings import warn

import torch
import torch.distributions as D
from scipy import special
from torch import Tensor

from momsjump.config import SamplerConfig
from momsjump.errors import CorruptedStateError, RankDeficiencyError
from momsjump.linmodel import ModelCache, ModelIndicator, RegressionData
from momsjump.tuning import (
    accept_prob,
    AcceptanceRule,
    ProposalScales,
    rm_update,
)
from momsjump.utils import DTYPE, LOG_2PI, normal_logpdf, seeded, timeit

D.Distribution.set_default_validate_args(False)

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-300
_LOG_GAMMA_HALF = float(special.gammaln(0.5))

FLIP_TYPING = Callable[["ChainState", int, float, float], "ChainState"]


@dataclass
class ChainState:
    """Joint state of a chain.

    ``beta`` has one entry per predictor; entries of excluded predictors are
    exactly zero. Random draws come from the torch generator of the process,
    which :func:`run_chain` seeds with ``seed``.
    """

    gamma: ModelIndicator
    beta: Tensor
    mu: float
    sigma2: float
    g: float
    seed: int = 0
    iteration: int = 0

    def check(self) -> None:
        excluded = ~self.gamma.to_tensor()
        if bool((self.beta[excluded] != 0).any()):
            raise CorruptedStateError(
                f"excluded coefficients of model {self.gamma} are not zero: {self.beta}."
            )
        if not (self.sigma2 > 0 and self.g > 0):
            raise CorruptedStateError(
                f"sigma2={self.sigma2} and g={self.g} must be positive."
            )


@dataclass
class ChainOutput:
    """Post-warmup draws of one chain (or of several merged chains).

    ``chain_lengths`` records the number of draws of every merged chain, in
    order, so that transition-based diagnostics never count a transition
    across two chains.
    """

    gamma_draws: Tensor
    beta_draws: Tensor
    mu_draws: Tensor
    sigma2_draws: Tensor
    g_draws: Tensor
    accept_counts: Tensor
    propose_counts: Tensor
    wall_time: float
    seed: int
    method: str
    names: Tuple[str, ...]
    tau: Optional[Tensor] = None
    chain_lengths: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.chain_lengths:
            self.chain_lengths = (self.gamma_draws.shape[0],)

    @property
    def iterations(self) -> int:
        return self.gamma_draws.shape[0]

    @property
    def acceptance_rate(self) -> Tensor:
        return self.accept_counts.to(DTYPE) / self.propose_counts.to(DTYPE)

    def split_gamma(self) -> List[Tensor]:
        return list(torch.split(self.gamma_draws, list(self.chain_lengths)))


def initial_state(
    data: RegressionData,
    cache: ModelCache,
    gamma: Optional[ModelIndicator] = None,
    seed: int = 0,
) -> ChainState:
    """Least-squares starting point in the given model (full model by default)."""
    if gamma is None:
        gamma = (
            ModelIndicator.full(data.p)
            if data.full_rank
            else ModelIndicator.null(data.p)
        )
    fit = cache.fit(gamma)
    beta = torch.zeros(data.p, dtype=DTYPE)
    beta[fit.index] = fit.beta_hat
    dof = data.n - gamma.size - 1
    sigma2 = fit.rss / dof if dof > 0 and fit.rss > 0 else data.yty / data.n
    return ChainState(
        gamma=gamma, beta=beta, mu=data.y_mean, sigma2=sigma2, g=float(data.n), seed=seed
    )


def log_joint(state: ChainState, data: RegressionData, cache: ModelCache) -> float:
    """Unnormalized log-posterior density of a state.

    Includes the model-dependent normalizing constant of the g-prior
    ``beta_gamma ~ Normal(0, g * sigma2 * inv(X_gamma' X_gamma))``, the
    Jeffreys prior ``1 / sigma2``, the ``Inv-Gamma(1/2, n/2)`` hyper-prior on
    ``g`` and a flat prior on the intercept. The uniform model prior is a
    constant and is left out.
    """
    logdet = cache.fit(state.gamma).logdet
    beta, n = state.beta, data.n
    q = float(beta @ (data.XtX @ beta))
    rss = data.yty - 2.0 * float(beta @ data.Xty) + q
    resid = rss + n * (data.y_mean - state.mu) ** 2
    sigma2, g = state.sigma2, state.g
    log_sigma2, log_g = math.log(sigma2), math.log(g)
    loglik = -0.5 * n * (LOG_2PI + log_sigma2) - 0.5 * resid / sigma2
    log_prior_beta = (
        0.5 * logdet
        - 0.5 * state.gamma.size * (LOG_2PI + log_g + log_sigma2)
        - 0.5 * q / (g * sigma2)
    )
    log_prior_g = (
        0.5 * math.log(0.5 * n) - _LOG_GAMMA_HALF - 1.5 * log_g - 0.5 * n / g
    )
    return loglik + log_prior_beta - log_sigma2 + log_prior_g


def flip_log_ratio(
    state: ChainState,
    data: RegressionData,
    cache: ModelCache,
    index: int,
    beta_prop: Tensor,
    log_q_forward: float,
    log_q_reverse: float,
) -> Tuple[float, ChainState]:
    """Log acceptance ratio of the move flipping indicator ``index`` to ``beta_prop``.

    ``log_q_forward`` / ``log_q_reverse`` are the log proposal densities of the
    forward and reverse moves (zero for a deterministic move). A proposed
    model whose Gram submatrix is singular is rejected with a ``-inf`` ratio.
    """
    current = log_joint(state, data, cache)
    if not math.isfinite(current):
        raise CorruptedStateError(
            f"the log-posterior of model {state.gamma} at iteration {state.iteration} is {current}."
        )
    candidate = replace(state, gamma=state.gamma.flip(index), beta=beta_prop)
    try:
        proposed = log_joint(candidate, data, cache)
    except RankDeficiencyError as err:
        logger.debug("rejecting a move to a singular model: %s", err)
        return -math.inf, candidate
    return proposed - current + log_q_reverse - log_q_forward, candidate


def moms_flip_log_ratio(
    state: ChainState,
    data: RegressionData,
    scales: ProposalScales,
    index: int,
    z: float,
    cache: ModelCache,
) -> Tuple[float, ChainState]:
    """Log-ratio of the add/delete move on ``index`` for a standard normal draw ``z``.

    The add move proposes ``beta[index] + tau[index] * z``; a proposal of
    exactly ``0.0`` lies outside the support of the add move and is rejected.
    """
    tau = float(scales.tau[index])
    current = float(state.beta[index])
    beta_prop = state.beta.clone()
    if not state.gamma[index]:
        value = current + tau * z
        if value == 0.0:
            return -math.inf, state
        beta_prop[index] = value
        return flip_log_ratio(
            state, data, cache, index, beta_prop, normal_logpdf(value, current, tau), 0.0
        )
    beta_prop[index] = 0.0
    return flip_log_ratio(
        state, data, cache, index, beta_prop, 0.0, normal_logpdf(current, 0.0, tau)
    )


def moms_flip_step(
    state: ChainState,
    data: RegressionData,
    scales: ProposalScales,
    rule: AcceptanceRule,
    index: int,
    cache: Optional[ModelCache] = None,
    z: Optional[float] = None,
    u: Optional[float] = None,
) -> ChainState:
    """Proposes to flip indicator ``index`` and accepts or rejects the move.

    Args:
        state (ChainState): current state.
        data (RegressionData): the data.
        scales (ProposalScales): random-walk scales of the add moves.
        rule (AcceptanceRule): acceptance rule.
        index (int): predictor whose indicator is flipped.
        cache (ModelCache, optional): per-chain model cache.
        z (float, optional): standard normal draw of the add proposal.
        u (float, optional): uniform draw of the accept/reject decision.
            ``z`` and ``u`` are drawn from the torch generator when omitted.

    Returns:
        the new state, ``state`` itself when the move is rejected.

    """
    cache = cache if cache is not None else ModelCache(data)
    if z is None:
        z = torch.randn((), dtype=DTYPE).item()
    if u is None:
        u = torch.rand((), dtype=DTYPE).item()
    log_ratio, candidate = moms_flip_log_ratio(state, data, scales, index, z, cache)
    if u < accept_prob(rule, log_ratio):
        return candidate
    return state


def _scalar(value: float) -> Tensor:
    return torch.tensor(value, dtype=DTYPE)


def _floor_variance(value: float, name: str) -> float:
    if not value > 0:
        warn(
            f"sampled {name}={value} is not positive (numerical underflow), "
            f"flooring it to {VARIANCE_FLOOR}."
        )
        return VARIANCE_FLOOR
    return value


def within_model_gibbs(
    state: ChainState, data: RegressionData, cache: Optional[ModelCache] = None
) -> ChainState:
    """Gibbs updates of the intercept, the coefficients, the error variance and g.

    Given ``gamma``, draws in turn::

        mu | sigma2         ~ Normal(y_mean, sigma2 / n)
        beta_gamma | ...    ~ Normal(s * beta_hat, sigma2 * s * inv(X_gamma' X_gamma)), s = g / (1 + g)
        sigma2 | ...        ~ Inv-Gamma((n + p_gamma) / 2, (resid + beta' X'X beta / g) / 2)
        g | ...             ~ Inv-Gamma((p_gamma + 1) / 2, n / 2 + beta' X'X beta / (2 sigma2))

    Excluded coefficients stay exactly zero.
    """
    cache = cache if cache is not None else ModelCache(data)
    fit = cache.fit(state.gamma)
    n, k = data.n, state.gamma.size
    sigma2, g = state.sigma2, state.g

    mu = D.Normal(_scalar(data.y_mean), _scalar(math.sqrt(sigma2 / n))).sample()
    mu = mu.item()
    beta = torch.zeros(data.p, dtype=DTYPE)
    if k:
        s = g / (1.0 + g)
        z = torch.randn(k, 1, dtype=DTYPE)
        noise = torch.linalg.solve_triangular(fit.chol.T, z, upper=True).squeeze(-1)
        beta[fit.index] = s * fit.beta_hat + math.sqrt(sigma2 * s) * noise

    q = float(beta @ (data.XtX @ beta))
    rss = data.yty - 2.0 * float(beta @ data.Xty) + q
    resid = rss + n * (data.y_mean - mu) ** 2
    sigma2 = D.InverseGamma(
        _scalar(0.5 * (n + k)), _scalar(0.5 * (resid + q / g))
    ).sample().item()
    sigma2 = _floor_variance(sigma2, "sigma2")
    g = D.InverseGamma(
        _scalar(0.5 * (k + 1)), _scalar(0.5 * n + 0.5 * q / sigma2)
    ).sample().item()
    g = _floor_variance(g, "g")
    return replace(state, beta=beta, mu=mu, sigma2=sigma2, g=g)


def _scan(p: int, scan_order: str) -> List[int]:
    if scan_order == "random":
        return torch.randperm(p).tolist()
    return list(range(p))


def adapt_scales(
    state: ChainState,
    data: RegressionData,
    scales: ProposalScales,
    rule: AcceptanceRule,
    warmup: int,
    cache: ModelCache,
    scan_order: str = "systematic",
) -> Tuple[ChainState, ProposalScales]:
    """Warmup on the full model: random-walk coefficient updates with Robbins-Monro tuning.

    Between-model moves are disabled. The returned scales are frozen.
    """
    full = ModelIndicator.full(data.p)
    if warmup and rule.variant == "barker":
        warn(
            f"adapting the proposal scales to a {scales.target_rate} acceptance rate under "
            "the Barker rule, whose acceptance rates are lower than Metropolis rates."
        )
    if warmup and data.p:
        try:
            cache.fit(full)
        except RankDeficiencyError:
            warn(
                "the full model is singular, proposal scales are not adapted and keep their initial value."
            )
            warmup = 0
    if warmup and data.p:
        state = initial_state(data, cache, full, state.seed)
    for t in range(warmup if data.p else 0):
        z = torch.randn(data.p, dtype=DTYPE).tolist()
        u = torch.rand(data.p, dtype=DTYPE).tolist()
        current = log_joint(state, data, cache)
        for i in _scan(data.p, scan_order):
            beta_prop = state.beta.clone()
            beta_prop[i] += float(scales.tau[i]) * z[i]
            candidate = replace(state, beta=beta_prop)
            proposed = log_joint(candidate, data, cache)
            accepted = u[i] < accept_prob(rule, proposed - current)
            if accepted:
                state, current = candidate, proposed
            scales = rm_update(scales, i, t, accepted)
        state = within_model_gibbs(state, data, cache)
    return state, scales.freeze()


def run_chain(
    data: RegressionData,
    config: SamplerConfig,
    method: str,
    make_flip: Callable[[ProposalScales, AcceptanceRule, ModelCache], FLIP_TYPING],
    adapt: bool,
    chain: int = 0,
) -> ChainOutput:
    """Shared sweep loop of the samplers.

    Every sweep proposes one flip per predictor (systematic or random scan)
    and ends with :func:`within_model_gibbs`. With ``adapt=True`` the warmup
    tunes the proposal scales on the full model, otherwise warmup sweeps are
    ordinary sweeps whose draws are discarded.
    """
    config.validate()
    seed = config.seed + chain
    rule = config.acceptance()
    p, T = data.p, config.iterations
    gamma_draws = torch.zeros(T, p, dtype=torch.bool)
    beta_draws = torch.zeros(T, p, dtype=DTYPE)
    scalars = torch.zeros(3, T, dtype=DTYPE)
    accepts, proposals = [0] * p, [0] * p

    logger.info("chain %d (%s, seed %d) started", chain, method, seed)
    with seeded(seed), timeit(f"{method}.sample") as timer:
        cache = ModelCache(data, config.cond_cap)
        state = initial_state(data, cache, seed=seed)
        scales = config.initial_scales(p)
        if adapt:
            state, scales = adapt_scales(
                state, data, scales, rule, config.warmup, cache, config.scan_order
            )
            burn = 0
        else:
            scales = scales.freeze()
            burn = config.warmup
        flip = make_flip(scales, rule, cache)
        for t in range(burn + T):
            z = torch.randn(p, dtype=DTYPE).tolist()
            u = torch.rand(p, dtype=DTYPE).tolist()
            record = t >= burn
            for i in _scan(p, config.scan_order):
                new = flip(state, i, z[i], u[i])
                if record:
                    proposals[i] += 1
                    accepts[i] += new.gamma.key != state.gamma.key
                state = new
            state = within_model_gibbs(state, data, cache)
            state.iteration += 1
            if record:
                r = t - burn
                gamma_draws[r] = state.gamma.to_tensor()
                beta_draws[r] = state.beta
                scalars[:, r] = torch.tensor(
                    [state.mu, state.sigma2, state.g], dtype=DTYPE
                )
    logger.info(
        "chain %d (%s) finished %d sweeps in %.2f sec",
        chain,
        method,
        burn + T,
        timer.elapsed,
    )
    return ChainOutput(
        gamma_draws=gamma_draws,
        beta_draws=beta_draws,
        mu_draws=scalars[0],
        sigma2_draws=scalars[1],
        g_draws=scalars[2],
        accept_counts=torch.tensor(accepts, dtype=torch.long),
        propose_counts=torch.tensor(proposals, dtype=torch.long),
        wall_time=timer.elapsed,
        seed=seed,
        method=method,
        names=data.column_names,
        tau=scales.tau,
    )


def run_moms(data: RegressionData, config: SamplerConfig, chain: int = 0) -> ChainOutput:
    """Runs one MoMS chain with seed ``config.seed + chain``.

    Examples:
        >>> from momsjump.linmodel import load_data
        >>> data = load_data("diabetes", "Y")
        >>> out = run_moms(data, SamplerConfig(iterations=100, warmup=50, seed=1))
        >>> out.gamma_draws.shape
        torch.Size([100, 10])

    """

    def make_flip(scales, rule, cache):
        def flip(state, i, z, u):
            return moms_flip_step(state, data, scales, rule, i, cache, z, u)

        return flip

    return run_chain(data, config, "moms", make_flip, adapt=True, chain=chain)


def merge_chain_outputs(outputs: Sequence[ChainOutput]) -> ChainOutput:
    """Concatenates the draws of independent chains of the same sampler."""
    if not len(outputs):
        raise ValueError("cannot merge an empty sequence of chain outputs.")
    first = outputs[0]
    for out in outputs[1:]:
        if out.names != first.names or out.method != first.method:
            raise ValueError(
                f"cannot merge chains of different samplers or predictors: "
                f"{first.method}{list(first.names)} and {out.method}{list(out.names)}."
            )
    return ChainOutput(
        gamma_draws=torch.cat([out.gamma_draws for out in outputs]),
        beta_draws=torch.cat([out.beta_draws for out in outputs]),
        mu_draws=torch.cat([out.mu_draws for out in outputs]),
        sigma2_draws=torch.cat([out.sigma2_draws for out in outputs]),
        g_draws=torch.cat([out.g_draws for out in outputs]),
        accept_counts=sum(out.accept_counts for out in outputs),
        propose_counts=sum(out.propose_counts for out in outputs),
        wall_time=sum(out.wall_time for out in outputs),
        seed=first.seed,
        method=first.method,
        names=first.names,
        tau=None,
        chain_lengths=tuple(n for out in outputs for n in out.chain_lengths),
    )
