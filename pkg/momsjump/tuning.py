# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import torch
from torch import Tensor

from momsjump.errors import AdaptationFrozenError, InvalidRatioError
from momsjump.utils import DTYPE

ACCEPTANCE_RULES = ("metropolis", "barker")


@dataclass(frozen=True)
class AcceptanceRule:
    """Maps a Metropolis-Hastings log-ratio to an acceptance probability.

    ``"metropolis"`` accepts with ``min(1, R)``, ``"barker"`` with
    ``R / (1 + R)``. Both satisfy ``alpha(R) = R * alpha(1 / R)``.
    """

    variant: str = "metropolis"

    def __post_init__(self):
        if self.variant not in ACCEPTANCE_RULES:
            raise ValueError(
                f"unknown acceptance rule '{self.variant}', expected one of {ACCEPTANCE_RULES}."
            )


def accept_prob(rule: AcceptanceRule, log_ratio: float) -> float:
    """Acceptance probability of a move with the given log-ratio.

    Examples:
        >>> accept_prob(AcceptanceRule("metropolis"), 0.0)
        1.0
        >>> accept_prob(AcceptanceRule("barker"), 0.0)
        0.5

    """
    if math.isnan(log_ratio):
        raise InvalidRatioError(
            "the Metropolis-Hastings log-ratio is NaN, the log-posterior or the "
            "proposal density is ill-defined."
        )
    if rule.variant == "metropolis":
        return 1.0 if log_ratio >= 0.0 else math.exp(log_ratio)
    # logistic, evaluated on the side where exp cannot overflow
    if log_ratio >= 0.0:
        return 1.0 / (1.0 + math.exp(-log_ratio))
    e = math.exp(log_ratio)
    return e / (1.0 + e)


def step_size(t: int, step_exponent: float) -> float:
    return (t + 1.0) ** (-step_exponent)


@dataclass(frozen=True)
class ProposalScales:
    """Per-predictor random-walk standard deviations and their adaptation state.

    Scales are adapted on the log scale during warmup (so they stay positive),
    then frozen with :meth:`freeze`.

    Args:
        tau (Tensor): positive standard deviations, one per predictor.
        step_exponent (float): Robbins-Monro exponent ``phi`` in ``(1/2, 1]``.
        target_rate (float): target acceptance rate in ``(0, 1)``.
        adapting (bool): whether :func:`rm_update` may still be called.

    """

    tau: Tensor
    step_exponent: float = 0.75
    target_rate: float = 0.44
    adapting: bool = True

    def __post_init__(self):
        if not 0.5 < self.step_exponent <= 1.0:
            raise ValueError(
                f"step_exponent must lie in (1/2, 1], got {self.step_exponent}."
            )
        if not 0.0 < self.target_rate < 1.0:
            raise ValueError(
                f"target_rate must lie in (0, 1), got {self.target_rate}."
            )
        if not bool((self.tau > 0).all()):
            raise ValueError(f"proposal scales must be positive, got {self.tau}.")

    @classmethod
    def initial(
        cls,
        p: int,
        tau_init: float = 1.0,
        step_exponent: float = 0.75,
        target_rate: float = 0.44,
    ) -> ProposalScales:
        return cls(
            tau=torch.full((p,), float(tau_init), dtype=DTYPE),
            step_exponent=step_exponent,
            target_rate=target_rate,
        )

    def freeze(self) -> ProposalScales:
        return replace(self, adapting=False)


def rm_update(
    scales: ProposalScales, index: int, t: int, accepted: bool
) -> ProposalScales:
    """Robbins-Monro update of one proposal scale.

    ``log tau[index] += (t + 1) ** -phi * (1{accepted} - target_rate)``.

    Examples:
        >>> scales = ProposalScales.initial(1)
        >>> round(float(rm_update(scales, 0, 0, True).tau[0]), 4)
        1.7507

    """
    if not scales.adapting:
        raise AdaptationFrozenError(
            "proposal scales are frozen once warmup ends; rm_update cannot be called anymore."
        )
    if t < 0:
        raise ValueError(f"the warmup iteration must be non-negative, got {t}.")
    tau = scales.tau.clone()
    delta = step_size(t, scales.step_exponent) * (
        float(accepted) - scales.target_rate
    )
    tau[index] = math.exp(math.log(float(tau[index])) + delta)
    return replace(scales, tau=tau)


class RandomWalkTrace(NamedTuple):
    tau: float
    acceptance_rate: float
    last: float


def adapt_random_walk(
    log_target: Callable[[float], float],
    x0: float,
    iterations: int,
    scales: Optional[ProposalScales] = None,
    rule: Optional[AcceptanceRule] = None,
) -> RandomWalkTrace:
    """Adaptive univariate random-walk Metropolis on an arbitrary log-density.

    Runs ``iterations`` adapting steps and reports the final scale and the
    empirical acceptance rate over the whole run. Draws come from the global
    torch generator.
    """
    scales = scales if scales is not None else ProposalScales.initial(1)
    rule = rule if rule is not None else AcceptanceRule()
    z = torch.randn(iterations, dtype=DTYPE).tolist()
    u = torch.rand(iterations, dtype=DTYPE).tolist()
    x, lp = x0, log_target(x0)
    accepted_total = 0
    for t in range(iterations):
        x_new = x + float(scales.tau[0]) * z[t]
        lp_new = log_target(x_new)
        accepted = u[t] < accept_prob(rule, lp_new - lp)
        if accepted:
            x, lp = x_new, lp_new
            accepted_total += 1
        scales = rm_update(scales, 0, t, accepted)
    return RandomWalkTrace(
        float(scales.tau[0]), accepted_total / max(iterations, 1), x
    )
