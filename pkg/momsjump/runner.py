# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List

import torch

from momsjump.config import SamplerConfig
from momsjump.linmodel import RegressionData
from momsjump.moms import ChainOutput, run_moms
from momsjump.rjmcmc import run_rjmcmc

logger = logging.getLogger(__name__)

SAMPLERS: Dict[str, Callable[[RegressionData, SamplerConfig, int], ChainOutput]] = {
    "moms": run_moms,
    "rjmcmc": run_rjmcmc,
}


def _init_worker() -> None:
    torch.set_num_threads(1)


def _run_one(data: RegressionData, config: SamplerConfig, chain: int) -> ChainOutput:
    try:
        return SAMPLERS[config.method](data, config, chain)
    except Exception as err:
        # keep the exception type, prefix the chain id
        try:
            wrapped = type(err)(f"chain {chain}: {err}")
        except Exception:
            raise err
        raise wrapped from err


def run_chains(data: RegressionData, config: SamplerConfig) -> List[ChainOutput]:
    """Runs ``config.chains`` independent chains, seeds ``seed, seed + 1, ...``.

    Chains run on a process pool of ``config.num_workers`` workers (no pool if
    a single worker is requested). Outputs are returned in chain order and do
    not depend on the number of workers.
    """
    config.validate()
    if config.method not in SAMPLERS:
        raise ValueError(
            f"method '{config.method}' is not a sampler, expected one of {list(SAMPLERS)}."
        )
    workers = min(config.num_workers, config.chains)
    chains = list(range(config.chains))
    if workers <= 1:
        return [_run_one(data, config, chain) for chain in chains]
    ctx = torch.multiprocessing.get_context("spawn")
    logger.info("dispatching %d chains on %d workers", config.chains, workers)
    with ProcessPoolExecutor(
        max_workers=workers, mp_context=ctx, initializer=_init_worker
    ) as pool:
        futures = [pool.submit(_run_one, data, config, chain) for chain in chains]
        return [future.result() for future in futures]
