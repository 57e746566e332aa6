# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from .config import SamplerConfig
from .diagnostics import (
    indicator_ess,
    inclusion_bayes_factor,
    median_probability_model,
    summarize_chain,
)
from .exact import enumerate_models, log_bf_vs_null, summarize_exact
from .linmodel import fit_model, load_data, ModelIndicator, RegressionData
from .moms import merge_chain_outputs, run_moms
from .rjmcmc import compute_anchor, forster_proposal_params, run_rjmcmc
from .runner import run_chains

try:
    from .version import __version__
except ImportError:
    __version__ = None

__all__ = [
    "ModelIndicator",
    "RegressionData",
    "SamplerConfig",
    "compute_anchor",
    "enumerate_models",
    "fit_model",
    "forster_proposal_params",
    "inclusion_bayes_factor",
    "indicator_ess",
    "load_data",
    "log_bf_vs_null",
    "median_probability_model",
    "merge_chain_outputs",
    "run_chains",
    "run_moms",
    "run_rjmcmc",
    "summarize_chain",
    "summarize_exact",
]
