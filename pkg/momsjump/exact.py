# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Exact enumeration under the JZS prior.

The Bayes factor of a model against the intercept-only model is a one
dimensional integral over ``g``. It is computed on ``t = g / (1 + g)`` in
``(0, 1)``, where the integrand is smooth and bounded, by adaptive
Gauss-Kronrod quadrature around the located mode.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import pandas as pd
import torch
from scipy import integrate, optimize, special
from torch import Tensor

from momsjump.errors import (
    EnumerationRefusedError,
    InconsistentEnumerationError,
    InsufficientDataError,
    QuadratureError,
)
from momsjump.linmodel import (
    DEFAULT_COND_CAP,
    fit_model,
    ModelFit,
    ModelIndicator,
    RegressionData,
)
from momsjump.utils import DTYPE, timeit

logger = logging.getLogger(__name__)

MAX_ENUMERATION_P = 25
_MIN_EPSREL = 1e-13
# modes closer than this to 0 or 1 are endpoints, not breakpoints
_INTERIOR_MARGIN = 1e-6


@dataclass(frozen=True)
class QuadratureConfig:
    """Accuracy settings of the Bayes factor integrals.

    Args:
        tolerance (float): maximum relative error of the integrals, that is the
            absolute error of their logarithm. Defaults to 1e-8.
        max_subdivisions (int): maximum number of adaptive subintervals.
            Defaults to 200.

    """

    tolerance: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(
                f"quadrature tolerance must be positive, got {self.tolerance}."
            )
        if self.max_subdivisions < 1:
            raise ValueError(
                f"max_subdivisions must be >= 1, got {self.max_subdivisions}."
            )


@dataclass(frozen=True)
class GPriorSpec:
    """Inverse-Gamma hyper-prior on the g-prior scale ``g``.

    The JZS prior uses ``Inv-Gamma(1/2, n/2)``, see :meth:`for_data`.
    """

    prior_shape: float
    prior_scale: float

    def __post_init__(self):
        if not (self.prior_shape > 0 and self.prior_scale > 0):
            raise ValueError(
                f"the Inverse-Gamma hyper-prior needs positive shape and scale, "
                f"got ({self.prior_shape}, {self.prior_scale})."
            )

    @classmethod
    def for_n(cls, n: int) -> GPriorSpec:
        return cls(prior_shape=0.5, prior_scale=0.5 * n)

    @classmethod
    def for_data(cls, data: RegressionData) -> GPriorSpec:
        return cls.for_n(data.n)

    @property
    def log_normalizer(self) -> float:
        return self.prior_shape * math.log(self.prior_scale) - float(
            special.gammaln(self.prior_shape)
        )

    def log_prob(self, g: float) -> float:
        a, b = self.prior_shape, self.prior_scale
        return self.log_normalizer - (a + 1.0) * math.log(g) - b / g


@dataclass(frozen=True)
class ModelScore:
    gamma: ModelIndicator
    log_bf_vs_null: float
    log_post_prob: float
    R2: float
    dim: int


@dataclass
class PosteriorSummary:
    """Model-averaged summary of the predictors.

    ``bma_mean`` and ``bma_sd`` average over all models, excluded coefficients
    counting as a point mass at zero.
    """

    pip: Tensor
    bma_mean: Tensor
    bma_sd: Tensor
    top_models: List[Tuple[ModelIndicator, float]]
    names: Tuple[str, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "name": list(self.names),
                "pip": self.pip.tolist(),
                "bma_mean": self.bma_mean.tolist(),
                "bma_sd": self.bma_sd.tolist(),
            }
        )


class GPosterior(NamedTuple):
    """Log Bayes factor and posterior shrinkage moments ``E[s]``, ``E[s**2]``, ``s = g/(1+g)``."""

    log_bf: float
    shrinkage_mean: float
    shrinkage_sq_mean: float


def _log_integrand(t: float, n: int, dim: int, R2: float, prior: GPriorSpec) -> float:
    # (1+g)^((n-1-dim)/2) (1+(1-R2)g)^(-(n-1)/2) pi(g) dg/dt, with g = t/(1-t)
    if t <= 0.0 or t >= 1.0:
        return -math.inf
    a, b = prior.prior_shape, prior.prior_scale
    return (
        prior.log_normalizer
        + (0.5 * dim + a - 1.0) * math.log1p(-t)
        - (a + 1.0) * math.log(t)
        - 0.5 * (n - 1) * math.log1p(-R2 * t)
        - b * (1.0 - t) / t
    )


def _locate_mode(n: int, dim: int, R2: float, prior: GPriorSpec) -> Tuple[float, float]:
    def objective(x):
        return -_log_integrand(float(special.expit(x)), n, dim, R2, prior)

    res = optimize.minimize_scalar(
        objective, bounds=(-35.0, 35.0), method="bounded", options={"xatol": 1e-10}
    )
    t_mode = float(special.expit(res.x))
    return t_mode, _log_integrand(t_mode, n, dim, R2, prior)


def _integrate(fun, t_mode: float, quad: QuadratureConfig, what: str) -> float:
    # one-predictor models keep a nonzero integrand at t = 1, where their mode sits
    interior = _INTERIOR_MARGIN < t_mode < 1.0 - _INTERIOR_MARGIN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                fun,
                0.0,
                1.0,
                points=[t_mode] if interior else None,
                epsabs=0.0,
                # QUADPACK rejects relative tolerances below 50 machine epsilons
                epsrel=max(0.1 * quad.tolerance, _MIN_EPSREL),
                limit=quad.max_subdivisions,
            )
        except ValueError as err:
            raise QuadratureError(
                f"{what}: adaptive quadrature rejected its settings "
                f"(max_subdivisions={quad.max_subdivisions}): {err}"
            ) from err
    if not value > 0 or not abserr / value <= quad.tolerance:
        raise QuadratureError(
            f"{what}: adaptive quadrature did not converge, achieved relative error "
            f"{abserr / value if value > 0 else math.inf:.3e} > tolerance {quad.tolerance:.1e} "
            f"(max_subdivisions={quad.max_subdivisions})."
        )
    return value


def posterior_g_moments(
    n: int,
    dim: int,
    R2: float,
    quad: Optional[QuadratureConfig] = None,
    prior: Optional[GPriorSpec] = None,
    moments: bool = True,
) -> GPosterior:
    """Integrates the JZS Bayes factor and the posterior moments of the shrinkage factor.

    Args:
        n (int): number of observations.
        dim (int): number of predictors of the model.
        R2 (float): coefficient of determination of the model.
        quad (QuadratureConfig, optional): accuracy settings.
        prior (GPriorSpec, optional): hyper-prior of g. Defaults to
            ``Inv-Gamma(1/2, n/2)``.
        moments (bool, optional): if ``False``, only the Bayes factor is
            integrated and the moments are returned as NaN. Defaults to ``True``.

    """
    quad = quad if quad is not None else QuadratureConfig()
    prior = prior if prior is not None else GPriorSpec.for_n(n)
    what = f"model of size {dim} with R2={R2:.6g}"
    t_mode, h_mode = _locate_mode(n, dim, R2, prior)

    def weight(power):
        def fun(t):
            return t**power * math.exp(_log_integrand(t, n, dim, R2, prior) - h_mode)

        return fun

    total = _integrate(weight(0), t_mode, quad, what)
    log_bf = h_mode + math.log(total)
    if not moments:
        return GPosterior(log_bf, math.nan, math.nan)
    first = _integrate(weight(1), t_mode, quad, what) / total
    second = _integrate(weight(2), t_mode, quad, what) / total
    return GPosterior(log_bf, first, second)


def log_bf_vs_null(
    data: RegressionData,
    gamma: ModelIndicator,
    quad: Optional[QuadratureConfig] = None,
    prior: Optional[GPriorSpec] = None,
    fit: Optional[ModelFit] = None,
) -> float:
    """Log Bayes factor of a model against the intercept-only model under the JZS prior.

    Examples:
        >>> from momsjump.linmodel import load_data
        >>> data = load_data("diabetes", "Y")
        >>> log_bf_vs_null(data, ModelIndicator.null(data.p))
        0.0

    """
    if gamma.size == 0:
        return 0.0
    if fit is None:
        fit = fit_model(data, gamma)
    return posterior_g_moments(data.n, gamma.size, fit.R2, quad, prior, moments=False).log_bf


def _score_keys(args) -> List[Tuple[int, float, float]]:
    data, keys, quad, prior, cond_cap = args
    out = []
    for key in keys:
        gamma = ModelIndicator.from_key(key, data.p)
        fit = fit_model(data, gamma, cond_cap)
        out.append((key, log_bf_vs_null(data, gamma, quad, prior, fit=fit), fit.R2))
    return out


def enumerate_models(
    data: RegressionData,
    quad: Optional[QuadratureConfig] = None,
    prior: Optional[GPriorSpec] = None,
    workers: Optional[int] = None,
    max_p: int = MAX_ENUMERATION_P,
    cond_cap: float = DEFAULT_COND_CAP,
) -> List[ModelScore]:
    """Scores every model of the space under a uniform model prior.

    Args:
        data (RegressionData): the data.
        quad (QuadratureConfig, optional): accuracy settings.
        prior (GPriorSpec, optional): hyper-prior of g.
        workers (int, optional): if greater than 1, models are scored on a
            process pool. The result does not depend on this value.
        max_p (int, optional): refuse to enumerate beyond this many predictors.
            Defaults to 25.
        cond_cap (float, optional): condition number cap of :func:`fit_model`.

    Returns:
        one :class:`ModelScore` per model, in canonical order, with normalized
        log posterior probabilities.

    """
    if data.p > max_p:
        raise EnumerationRefusedError(
            f"{data.p} predictors span 2**{data.p} models; enumeration is limited to "
            f"p <= {max_p}. Use the moms or rjmcmc samplers instead."
        )
    quad = quad if quad is not None else QuadratureConfig()
    num_models = 1 << data.p
    with timeit("exact.enumerate") as timer:
        if workers is not None and workers > 1 and num_models > 1:
            chunks = [list(range(num_models))[i::workers] for i in range(workers)]
            ctx = torch.multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                results = [
                    item
                    for chunk in pool.map(
                        _score_keys,
                        [(data, chunk, quad, prior, cond_cap) for chunk in chunks],
                    )
                    for item in chunk
                ]
        else:
            results = _score_keys((data, range(num_models), quad, prior, cond_cap))
    results.sort(key=lambda item: item[0])

    log_bfs = torch.tensor([item[1] for item in results], dtype=DTYPE)
    log_post = log_bfs - torch.logsumexp(log_bfs, 0)
    logger.info("scored %d models in %.2f sec", num_models, timer.elapsed)
    return [
        ModelScore(
            gamma=ModelIndicator.from_key(key, data.p),
            log_bf_vs_null=log_bf,
            log_post_prob=float(lp),
            R2=R2,
            dim=bin(key).count("1"),
        )
        for (key, log_bf, R2), lp in zip(results, log_post)
    ]


def model_conditional_moments(
    data: RegressionData,
    gamma: ModelIndicator,
    quad: Optional[QuadratureConfig] = None,
    prior: Optional[GPriorSpec] = None,
    fit: Optional[ModelFit] = None,
) -> Tuple[Tensor, Tensor]:
    """Posterior mean and standard deviation of the coefficients of one model.

    With ``s = g / (1 + g)`` and the intercept and error variance integrated
    out, ``E[beta | y, g] = s * beta_hat`` and
    ``Cov[beta | y, g] = s * yty * (1 - s * R2) / (n - 3) * inv(X'X)``. The
    moments over ``g`` follow from ``E[s]`` and ``E[s**2]`` by the law of total
    variance.

    Returns:
        a ``(mean, sd)`` pair of tensors of length ``gamma.size`` (empty for the
        null model).

    """
    if fit is None:
        fit = fit_model(data, gamma)
    if gamma.size == 0:
        return fit.beta_hat.clone(), fit.beta_hat.clone()
    if data.n <= 3:
        raise InsufficientDataError(
            f"posterior coefficient variances need n > 3 observations, got n={data.n}."
        )
    post = posterior_g_moments(data.n, gamma.size, fit.R2, quad, prior)
    s1, s2 = post.shrinkage_mean, post.shrinkage_sq_mean
    mean = s1 * fit.beta_hat
    within = data.yty * (s1 - fit.R2 * s2) / (data.n - 3) * fit.XtX_sub_inv.diagonal()
    between = fit.beta_hat.pow(2) * max(s2 - s1 * s1, 0.0)
    return mean, (within + between).sqrt()


def _check_coverage(scores: Sequence[ModelScore], p: int) -> None:
    num_models = 1 << p
    keys = [score.gamma.key for score in scores if len(score.gamma) == p]
    if len(keys) != len(scores):
        raise InconsistentEnumerationError(
            f"some model scores do not have {p} indicators."
        )
    unique = set(keys)
    if len(unique) != len(keys):
        raise InconsistentEnumerationError(
            f"{len(keys) - len(unique)} duplicated model(s) in the enumeration."
        )
    if len(unique) != num_models:
        raise InconsistentEnumerationError(
            f"{num_models - len(unique)} model(s) missing from the enumeration of {num_models} models."
        )


def summarize_exact(
    scores: Sequence[ModelScore],
    data: RegressionData,
    quad: Optional[QuadratureConfig] = None,
    prior: Optional[GPriorSpec] = None,
    top_k: int = 10,
) -> PosteriorSummary:
    """Posterior inclusion probabilities and model-averaged moments.

    Examples:
        >>> from momsjump.linmodel import load_data
        >>> data = load_data("diabetes", "Y")
        >>> summary = summarize_exact(enumerate_models(data), data)
        >>> round(float(summary.pip[data.column_index("BMI")]), 3)
        1.0

    """
    _check_coverage(scores, data.p)
    probs = torch.tensor([math.exp(s.log_post_prob) for s in scores], dtype=DTYPE)
    incl = torch.stack([s.gamma.to_tensor() for s in scores]).to(DTYPE)
    means = torch.zeros(len(scores), data.p, dtype=DTYPE)
    second = torch.zeros(len(scores), data.p, dtype=DTYPE)
    for j, score in enumerate(scores):
        if score.dim == 0:
            continue
        index = list(score.gamma.included)
        mean, sd = model_conditional_moments(data, score.gamma, quad, prior)
        means[j, index] = mean
        second[j, index] = sd.pow(2) + mean.pow(2)
    pip = probs @ incl
    bma_mean = probs @ means
    bma_sd = (probs @ second - bma_mean.pow(2)).clamp_min(0.0).sqrt()

    ranked = sorted(scores, key=lambda s: (-s.log_post_prob, s.gamma))
    top_models = [(s.gamma, math.exp(s.log_post_prob)) for s in ranked[:top_k]]
    return PosteriorSummary(
        pip=pip.clamp(0.0, 1.0),
        bma_mean=bma_mean,
        bma_sd=bma_sd,
        top_models=top_models,
        names=data.column_names,
    )
