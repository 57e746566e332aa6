# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Reversible-jump sampler with Forster-style add/delete proposals.

Adding predictor ``i`` to model ``gamma`` draws an auxiliary ``u`` from a
Gaussian built from the full-model fit and maps ``(beta_gamma, u)`` to

.. code-block::

    beta*_gamma = beta_gamma - c * u
    beta*_i     = u,            c = inv(X_gamma' X_gamma) X_gamma' x_i

which is a unit upper-triangular linear map, so no Jacobian term enters the
acceptance ratio. Deleting ``i`` applies the inverse map and recovers ``u``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import Tensor

from momsjump.config import SamplerConfig
from momsjump.errors import AnchorError, DegenerateProposalError, RankDeficiencyError
from momsjump.linmodel import fit_model, ModelCache, ModelIndicator, RegressionData
from momsjump.moms import ChainOutput, ChainState, flip_log_ratio, run_chain
from momsjump.tuning import accept_prob, AcceptanceRule, ProposalScales
from momsjump.utils import DTYPE, KeyDependentDefaultDict, normal_logpdf

logger = logging.getLogger(__name__)

ADD = "add"
DELETE = "delete"


@dataclass(frozen=True)
class FullModelAnchor:
    """Full-model least-squares fit anchoring the proposals.

    ``gram_eta`` caches ``X' eta_hat``, from which every residual projection
    of the proposals is computed without touching the ``n``-dimensional data.
    """

    beta_star_hat: Tensor
    eta_hat: Tensor
    sigma2_star_hat: float
    gram_eta: Tensor


@dataclass(frozen=True)
class AddDeleteProposal:
    index: int
    direction: str
    mu_prop: float
    v_prop: float
    u: float


@dataclass(frozen=True)
class ForsterTerms:
    """Proposal quantities of predictor ``index`` given the smaller model ``gamma``."""

    gamma: ModelIndicator
    index: int
    shift: Tensor
    mu: float
    v: float
    scale: float


def compute_anchor(data: RegressionData) -> FullModelAnchor:
    """Least-squares fit of the full model, with residual variance ``rss / (n - p - 1)``."""
    dof = data.n - data.p - 1
    if dof <= 0:
        raise AnchorError(
            f"the full model has {data.p} predictors for n={data.n} observations, its residual "
            "variance is undefined; Forster proposals are unavailable, use the moms sampler."
        )
    try:
        fit = fit_model(data, ModelIndicator.full(data.p))
    except RankDeficiencyError as err:
        raise AnchorError(
            f"the full-model Gram matrix is singular ({err}); Forster proposals are "
            "unavailable, use the moms sampler."
        ) from err
    sigma2 = fit.rss / dof
    if not sigma2 > 0:
        raise AnchorError(
            f"the full model fits the data exactly (rss={fit.rss}), the proposal variance is undefined."
        )
    beta = fit.beta_hat if data.p else data.Xty.new_zeros(0)
    return FullModelAnchor(
        beta_star_hat=beta,
        eta_hat=data.X_centered @ beta,
        sigma2_star_hat=sigma2,
        gram_eta=data.XtX @ beta,
    )


def _forster_terms(
    data: RegressionData,
    cache: ModelCache,
    anchor: FullModelAnchor,
    gamma: ModelIndicator,
    index: int,
) -> ForsterTerms:
    fit = cache.fit(gamma)
    b = data.XtX[fit.index, index]
    if gamma.size:
        shift = torch.cholesky_solve(b.unsqueeze(-1), fit.chol).squeeze(-1)
    else:
        shift = b
    srs = float(data.XtX[index, index]) - float(b @ shift)
    if not srs > 1e-12 * float(data.XtX[index, index]):
        raise DegenerateProposalError(
            f"predictor '{data.column_names[index]}' is collinear with model {gamma} "
            f"{list(gamma.names(data.column_names))}: s'r = {srs:.3e}."
        )
    sre = float(anchor.gram_eta[index]) - float(shift @ anchor.gram_eta[fit.index])
    v = anchor.sigma2_star_hat / srs
    return ForsterTerms(
        gamma=gamma, index=index, shift=shift, mu=sre / srs, v=v, scale=math.sqrt(v)
    )


def forster_proposal_params(
    data: RegressionData,
    gamma_current: ModelIndicator,
    index: int,
    anchor: FullModelAnchor,
    cache: Optional[ModelCache] = None,
) -> Tuple[float, float]:
    """Mean and variance of the auxiliary proposal for flipping predictor ``index``.

    The conditioning model is ``gamma_current`` without ``index``. With ``s``
    the candidate column and ``r(.)`` the residual of a projection onto the
    conditioning columns, ``v = sigma2_star / (s' r(s))`` and
    ``mu = s' r(eta_hat) / s' r(s)``.

    Examples:
        >>> from momsjump.linmodel import load_data
        >>> data = load_data("diabetes", "Y")
        >>> anchor = compute_anchor(data)
        >>> mu, v = forster_proposal_params(data, ModelIndicator.null(data.p), 2, anchor)

    """
    cache = cache if cache is not None else ModelCache(data)
    gamma = gamma_current.flip(index) if gamma_current[index] else gamma_current
    terms = _forster_terms(data, cache, anchor, gamma, index)
    return terms.mu, terms.v


def add_transform_matrix(
    data: RegressionData, gamma: ModelIndicator, index: int
) -> Tensor:
    """Matrix mapping ``(beta_gamma, u)`` to ``(beta*_gamma, beta*_index)`` for an add move.

    Rows and columns follow ``gamma.included`` then ``index``; the matrix is
    unit upper-triangular.
    """
    if gamma[index]:
        raise ValueError(f"predictor {index} is already included in model {gamma}.")
    fit = fit_model(data, gamma)
    k = gamma.size
    matrix = torch.eye(k + 1, dtype=DTYPE)
    if k:
        b = data.XtX[fit.index, index]
        matrix[:k, k] = -torch.cholesky_solve(b.unsqueeze(-1), fit.chol).squeeze(-1)
    return matrix


def delete_transform_matrix(
    data: RegressionData, gamma: ModelIndicator, index: int
) -> Tensor:
    """Inverse of :func:`add_transform_matrix` (``gamma`` is the smaller model)."""
    matrix = add_transform_matrix(data, gamma, index)
    k = gamma.size
    matrix[:k, k] = -matrix[:k, k]
    return matrix


def transform_log_det(matrix: Tensor) -> float:
    """Log absolute determinant of a triangular transformation matrix."""
    if not bool((matrix.tril(-1) == 0).all()):
        raise ValueError("the transformation matrix is not upper-triangular.")
    return float(matrix.diagonal().abs().log().sum())


class _TermsCache(KeyDependentDefaultDict):
    def __init__(self, data, cache, anchor):
        super().__init__(
            lambda key: _forster_terms(
                data, cache, anchor, ModelIndicator.from_key(key[0], data.p), key[1]
            ),
            cache.max_size,
        )


def rj_flip_log_ratio(
    state: ChainState,
    data: RegressionData,
    anchor: Optional[FullModelAnchor],
    index: int,
    z: float,
    cache: ModelCache,
    transform: str = "forster",
    scales: Optional[ProposalScales] = None,
    terms_cache: Optional[KeyDependentDefaultDict] = None,
) -> Tuple[float, ChainState, AddDeleteProposal]:
    """Log-ratio of the reversible-jump add/delete move on ``index``.

    ``z`` is a standard normal draw; the add move uses ``u = mu + sqrt(v) * z``.
    With ``transform="identity"`` the coefficients of the smaller model are
    left unchanged and ``u ~ Normal(0, tau[index] ** 2)`` as in the MoMS
    sampler.

    Raises:
        DegenerateProposalError: the candidate column is collinear with the
            smaller model.

    """
    adding = not state.gamma[index]
    smaller = state.gamma if adding else state.gamma.flip(index)
    if transform == "identity":
        if scales is None:
            raise ValueError("the identity transform needs proposal scales.")
        shift, mu, scale = None, 0.0, float(scales.tau[index])
    elif transform == "forster":
        if anchor is None:
            raise ValueError("Forster proposals need a full-model anchor.")
        if terms_cache is not None:
            terms = terms_cache[(smaller.key, index)]
        else:
            terms = _forster_terms(data, cache, anchor, smaller, index)
        shift, mu, scale = terms.shift, terms.mu, terms.scale
    else:
        raise ValueError(f"unknown transform '{transform}'.")

    beta_prop = state.beta.clone()
    index_smaller = cache.fit(smaller).index
    if adding:
        u = mu + scale * z
        proposal = AddDeleteProposal(index, ADD, mu, scale * scale, u)
        if u == 0.0:
            return -math.inf, state, proposal
        if shift is not None:
            beta_prop[index_smaller] -= shift * u
        beta_prop[index] = u
        log_ratio, candidate = flip_log_ratio(
            state, data, cache, index, beta_prop, normal_logpdf(u, mu, scale), 0.0
        )
        return log_ratio, candidate, proposal
    u = float(state.beta[index])
    proposal = AddDeleteProposal(index, DELETE, mu, scale * scale, u)
    if shift is not None:
        beta_prop[index_smaller] += shift * u
    beta_prop[index] = 0.0
    log_ratio, candidate = flip_log_ratio(
        state, data, cache, index, beta_prop, 0.0, normal_logpdf(u, mu, scale)
    )
    return log_ratio, candidate, proposal


def rj_flip_step(
    state: ChainState,
    data: RegressionData,
    anchor: Optional[FullModelAnchor],
    rule: AcceptanceRule,
    index: int,
    cache: Optional[ModelCache] = None,
    z: Optional[float] = None,
    u: Optional[float] = None,
    transform: str = "forster",
    scales: Optional[ProposalScales] = None,
    terms_cache: Optional[KeyDependentDefaultDict] = None,
) -> ChainState:
    """Reversible-jump add/delete step on predictor ``index``.

    A degenerate Forster proposal counts as a rejection.
    """
    cache = cache if cache is not None else ModelCache(data)
    if z is None:
        z = torch.randn((), dtype=DTYPE).item()
    if u is None:
        u = torch.rand((), dtype=DTYPE).item()
    try:
        log_ratio, candidate, _ = rj_flip_log_ratio(
            state, data, anchor, index, z, cache, transform, scales, terms_cache
        )
    except DegenerateProposalError as err:
        logger.debug("rejecting a degenerate proposal: %s", err)
        return state
    if u < accept_prob(rule, log_ratio):
        return candidate
    return state


def run_rjmcmc(
    data: RegressionData, config: SamplerConfig, chain: int = 0
) -> ChainOutput:
    """Runs one reversible-jump chain with seed ``config.seed + chain``.

    With ``rj_transform="forster"`` the warmup sweeps are ordinary sweeps
    whose draws are discarded. With ``rj_transform="identity"`` the moves use
    the MoMS random-walk proposal, whose scales are adapted during warmup.
    """
    transform = config.rj_transform
    anchor = compute_anchor(data) if transform == "forster" else None

    def make_flip(scales, rule, cache):
        terms_cache = (
            _TermsCache(data, cache, anchor) if anchor is not None else None
        )

        def flip(state, i, z, u):
            return rj_flip_step(
                state, data, anchor, rule, i, cache, z, u, transform, scales, terms_cache
            )

        return flip

    return run_chain(
        data,
        config,
        "rjmcmc",
        make_flip,
        adapt=transform == "identity",
        chain=chain,
    )
