# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Diagnostics of indicator chains.

An inclusion indicator is treated as a two-state Markov chain with switch
probabilities ``a = P(0 -> 1)`` and ``b = P(1 -> 0)``. Its lag-k
autocorrelation is ``(1 - a - b) ** k``, so the integrated autocorrelation
time is the geometric sum ``(2 - (a + b)) / (a + b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd
import torch
from torch import Tensor

from momsjump.errors import InsufficientDataError
from momsjump.exact import PosteriorSummary
from momsjump.linmodel import ModelIndicator
from momsjump.moms import ChainOutput
from momsjump.utils import as_tensor, DTYPE

CONSTANT_CHAIN = "no variation in the indicator sequence"
ONE_SIDED_CHAIN = "one of the two states is never left"
TOO_SHORT = "fewer than 2 draws"

MCSE_BATCHES = 50

CHAIN_TYPING = Union[Tensor, Sequence[Tensor]]


@dataclass
class IndicatorChainStats:
    """Transition counts and effective sample size of one indicator.

    ``defined`` is ``False`` when a switch probability cannot be estimated
    (in particular for a constant chain); ``tau_int``, ``ess`` and ``mcse``
    are then ``None`` and ``reason`` says why.
    """

    n00: int
    n01: int
    n10: int
    n11: int
    a_hat: Optional[float]
    b_hat: Optional[float]
    tau_int: Optional[float]
    ess: Optional[float]
    pip_hat: float
    mcse: Optional[float]
    defined: bool
    draws: int
    super_efficient: bool = False
    reason: Optional[str] = None


class InclusionBayesFactor(NamedTuple):
    bf: float
    log_bf: float
    saturated: bool


def _as_chains(chain: CHAIN_TYPING) -> List[Tensor]:
    if isinstance(chain, Tensor):
        if chain.ndimension() == 1:
            return [chain]
        if chain.ndimension() == 2:
            return list(chain.unbind(0))
        raise ValueError(
            f"expected a chain of shape [T] or [chains, T], got {tuple(chain.shape)}."
        )
    return [as_tensor(c) if not isinstance(c, Tensor) else c for c in chain]


def indicator_ess(chain: CHAIN_TYPING) -> IndicatorChainStats:
    """Effective sample size of a binary chain from its transition counts.

    Several chains (a list or the rows of a 2d tensor) are pooled: their
    transition counts are summed and ``T`` is the total number of draws.

    Examples:
        >>> stats = indicator_ess(torch.tensor([0, 1, 1, 0, 0, 1, 0, 1]))
        >>> stats.n01, stats.n10
        (3, 2)
        >>> indicator_ess(torch.ones(10)).defined
        False

    """
    chains = _as_chains(chain)
    n00 = n01 = n10 = n11 = 0
    T = ones = 0
    for c in chains:
        if c.shape[0] < 2:
            raise InsufficientDataError(
                f"the effective sample size needs at least 2 draws per chain, got {c.shape[0]}."
            )
        x = c.to(torch.bool)
        prev, nxt = x[:-1], x[1:]
        n00 += int((~prev & ~nxt).sum())
        n01 += int((~prev & nxt).sum())
        n10 += int((prev & ~nxt).sum())
        n11 += int((prev & nxt).sum())
        T += x.shape[0]
        ones += int(x.sum())
    pip_hat = ones / T
    a_hat = n01 / (n00 + n01) if n00 + n01 else None
    b_hat = n10 / (n10 + n11) if n10 + n11 else None
    stats = IndicatorChainStats(
        n00, n01, n10, n11, a_hat, b_hat, None, None, pip_hat, None, False, T
    )
    if a_hat is None or b_hat is None:
        stats.reason = CONSTANT_CHAIN if ones in (0, T) else ONE_SIDED_CHAIN
        return stats
    switch = a_hat + b_hat
    if switch == 0.0:
        stats.reason = ONE_SIDED_CHAIN
        return stats
    stats.defined = True
    stats.tau_int = (2.0 - switch) / switch
    if stats.tau_int == 0.0:
        stats.ess = float(T)
        stats.super_efficient = True
    else:
        stats.ess = T / stats.tau_int
    stats.mcse = math.sqrt(pip_hat * (1.0 - pip_hat) / stats.ess)
    return stats


def brute_force_tau_int(a: float, b: float, max_lag: int = 10000) -> float:
    """Integrated autocorrelation time as the truncated series ``1 + 2 * sum_k rho_k``.

    ``rho_k = (1 - a - b) ** k`` is the lag-k autocorrelation of a two-state
    chain with switch probabilities ``a`` and ``b``. The series converges for
    ``0 < a + b < 2``.
    """
    if not (0.0 < a + b < 2.0):
        raise ValueError(f"the series diverges for a + b = {a + b}.")
    lags = torch.arange(1, max_lag + 1, dtype=DTYPE)
    rho = torch.full_like(lags, 1.0 - a - b).pow(lags)
    return float(1.0 + 2.0 * rho.sum())


def inclusion_bayes_factor(pip: float, prior_incl: float = 0.5) -> InclusionBayesFactor:
    """Posterior inclusion odds over prior inclusion odds.

    A posterior inclusion probability of exactly 0 or 1 gives a saturated
    Bayes factor (``0`` or ``inf``, with ``log_bf = -inf`` or ``inf``).

    Examples:
        >>> round(inclusion_bayes_factor(0.661).bf, 3)
        1.95

    """
    if not 0.0 <= pip <= 1.0:
        raise ValueError(f"pip must lie in [0, 1], got {pip}.")
    if not 0.0 < prior_incl < 1.0:
        raise ValueError(f"prior_incl must lie in (0, 1), got {prior_incl}.")
    if pip == 1.0:
        return InclusionBayesFactor(math.inf, math.inf, True)
    if pip == 0.0:
        return InclusionBayesFactor(0.0, -math.inf, True)
    log_prior_odds = math.log(prior_incl) - math.log1p(-prior_incl)
    log_bf = math.log(pip) - math.log1p(-pip) - log_prior_odds
    bf = (pip / (1.0 - pip)) / (prior_incl / (1.0 - prior_incl))
    return InclusionBayesFactor(bf, log_bf, False)


def median_probability_model(pips: Union[Tensor, Sequence[float]]) -> ModelIndicator:
    """Model made of the predictors with an inclusion probability strictly above 1/2."""
    pips = as_tensor(pips)
    if bool(((pips < 0) | (pips > 1)).any()):
        raise ValueError(f"inclusion probabilities must lie in [0, 1], got {pips}.")
    return ModelIndicator(tuple((pips > 0.5).tolist()))


def model_visit_frequencies(
    gamma_draws: Tensor, top_k: Optional[int] = None
) -> List[Tuple[ModelIndicator, float]]:
    """Empirical posterior model probabilities, most visited first."""
    T = gamma_draws.shape[0]
    if T == 0:
        return []
    if gamma_draws.shape[1] == 0:
        return [(ModelIndicator.null(0), 1.0)]
    models, counts = torch.unique(gamma_draws, dim=0, return_counts=True)
    visits = [
        (ModelIndicator(tuple(m.tolist())), int(c)) for m, c in zip(models, counts)
    ]
    visits.sort(key=lambda item: (-item[1], item[0]))
    if top_k is not None:
        visits = visits[:top_k]
    return [(gamma, count / T) for gamma, count in visits]


def batch_means_mcse(draws: CHAIN_TYPING, batches: int = 50) -> Tensor:
    """Monte Carlo standard error of column means by non-overlapping batch means.

    ``draws`` is a ``[T]`` or ``[T, k]`` tensor, or a sequence of those (one per
    chain). Each chain is cut into ``batches`` batches; leftover draws at the
    end of a chain are dropped.
    """
    chains = [draws] if isinstance(draws, Tensor) else list(draws)
    means = []
    for c in chains:
        c = c.to(DTYPE)
        if c.ndimension() == 1:
            c = c.unsqueeze(-1)
        size = c.shape[0] // batches
        if size < 1:
            raise InsufficientDataError(
                f"{c.shape[0]} draws cannot be split into {batches} batches."
            )
        means.append(c[: size * batches].reshape(batches, size, c.shape[-1]).mean(1))
    means = torch.cat(means)
    return means.std(0) / math.sqrt(means.shape[0])


def split_rhat(chains: Sequence[Tensor]) -> float:
    """Split-chain potential scale reduction factor of a scalar quantity.

    Chains are truncated to a common even length and cut in halves. Returns
    NaN when the within-chain variance is zero.
    """
    length = min(c.shape[0] for c in chains) // 2 * 2
    if length < 4:
        raise InsufficientDataError(
            f"split R-hat needs at least 4 draws per chain, got {length}."
        )
    halves = torch.stack(
        [h for c in chains for h in c[:length].to(DTYPE).chunk(2)]
    )
    n = halves.shape[1]
    within = halves.var(1).mean()
    between_over_n = halves.mean(1).var()
    if float(within) == 0.0:
        return math.nan
    var_plus = (n - 1) / n * within + between_over_n
    return float((var_plus / within).sqrt())


@dataclass
class ChainSummary:
    """Posterior summary of a chain, or of merged chains, with indicator diagnostics."""

    summary: PosteriorSummary
    stats: List[IndicatorChainStats]
    ess_per_iter: List[Optional[float]]
    ess_per_sec: List[Optional[float]]
    bf_incl: List[InclusionBayesFactor]
    mean_mcse: List[Optional[float]]
    rhat: List[Optional[float]]
    median_model: ModelIndicator
    acceptance_rate: Tensor
    iterations: int
    chains: int
    wall_time: float
    method: str

    def to_records(self, include_timing: bool = True) -> List[Dict[str, Any]]:
        records = []
        for j, name in enumerate(self.summary.names):
            st = self.stats[j]
            bf = self.bf_incl[j]
            records.append(
                {
                    "name": name,
                    "pip": float(self.summary.pip[j]),
                    "bma_mean": float(self.summary.bma_mean[j]),
                    "bma_sd": float(self.summary.bma_sd[j]),
                    "bma_mean_mcse": self.mean_mcse[j],
                    "ess": st.ess,
                    "ess_per_iter": self.ess_per_iter[j],
                    "ess_per_sec": self.ess_per_sec[j],
                    "mcse": st.mcse,
                    "bf_incl": None if bf.saturated else bf.bf,
                    "log_bf_incl": None if bf.saturated else bf.log_bf,
                    "bf_saturated": bf.saturated,
                    "super_efficient": st.super_efficient,
                    "rhat": self.rhat[j],
                    "acceptance_rate": float(self.acceptance_rate[j]),
                    "reason": st.reason,
                }
            )
            if not include_timing:
                del records[-1]["ess_per_sec"]
        return records

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.to_records())


def summarize_chain(
    output: ChainOutput, prior_incl: float = 0.5, top_k: int = 10
) -> ChainSummary:
    """Monte Carlo posterior summary of sampler output.

    Inclusion probabilities are the column means of the indicator draws and
    the model-averaged moments are the column means and standard deviations of
    the coefficient draws, zeros included. Merged chains are diagnosed by
    pooling their transition counts.
    """
    T = output.iterations
    if T == 0:
        raise InsufficientDataError("the chain output has no draw.")
    gammas = output.split_gamma()
    pip = output.gamma_draws.to(DTYPE).mean(0)
    summary = PosteriorSummary(
        pip=pip,
        bma_mean=output.beta_draws.mean(0),
        bma_sd=output.beta_draws.std(0, correction=0),
        top_models=model_visit_frequencies(output.gamma_draws, top_k),
        names=output.names,
    )
    stats, ess_per_iter, ess_per_sec, bf_incl, rhat = [], [], [], [], []
    betas = list(torch.split(output.beta_draws, list(output.chain_lengths)))
    if min(output.chain_lengths) >= MCSE_BATCHES:
        mean_mcse = batch_means_mcse(betas, MCSE_BATCHES).tolist()
    else:
        mean_mcse = [None] * len(output.names)
    for j in range(len(output.names)):
        try:
            st = indicator_ess([g[:, j] for g in gammas])
        except InsufficientDataError:
            st = IndicatorChainStats(
                0, 0, 0, 0, None, None, None, None, float(pip[j]), None, False, T,
                reason=TOO_SHORT,
            )
        stats.append(st)
        ess_per_iter.append(st.ess / T if st.defined else None)
        ess_per_sec.append(
            st.ess / output.wall_time if st.defined and output.wall_time > 0 else None
        )
        bf_incl.append(inclusion_bayes_factor(float(pip[j]), prior_incl))
        if len(betas) > 1 and min(output.chain_lengths) >= 4:
            value = split_rhat([b[:, j] for b in betas])
            rhat.append(None if math.isnan(value) else value)
        else:
            rhat.append(None)
    return ChainSummary(
        summary=summary,
        stats=stats,
        ess_per_iter=ess_per_iter,
        ess_per_sec=ess_per_sec,
        bf_incl=bf_incl,
        mean_mcse=mean_mcse,
        rhat=rhat,
        median_model=median_probability_model(pip),
        acceptance_rate=output.acceptance_rate,
        iterations=T,
        chains=len(output.chain_lengths),
        wall_time=output.wall_time,
        method=output.method,
    )
