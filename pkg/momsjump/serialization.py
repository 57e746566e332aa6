# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Result files of a run directory.

Chain files hold one row per post-warmup draw with columns ``iteration``,
``gamma_<name>`` (0/1), ``beta_<name>``, ``mu``, ``sigma2`` and ``g``, preceded
by a ``# method=<m> seed=<s> accept=<counts> propose=<counts>`` comment line. Floats are written with 17
significant digits so that files read back to the exact same values.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from momsjump.diagnostics import (
    ChainSummary,
    inclusion_bayes_factor,
    median_probability_model,
)
from momsjump.errors import DataError
from momsjump.exact import PosteriorSummary
from momsjump.linmodel import ModelIndicator
from momsjump.moms import ChainOutput
from momsjump.utils import DTYPE

FLOAT_FORMAT = "%.17g"


def _clean(value: Any) -> Any:
    """Replaces non-finite floats by ``None`` so that the output is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_json(obj: Any, path: str) -> None:
    with open(path, "w") as f:
        json.dump(_clean(obj), f, indent=2, allow_nan=False)
        f.write("\n")


def chain_path(out_dir: str, chain: int) -> str:
    return os.path.join(out_dir, f"chain_{chain}.csv")


def write_chain_csv(output: ChainOutput, path: str) -> None:
    names = output.names
    frame = pd.DataFrame({"iteration": np.arange(output.iterations)})
    gammas = output.gamma_draws.to(torch.int64).numpy()
    betas = output.beta_draws.numpy()
    for j, name in enumerate(names):
        frame[f"gamma_{name}"] = gammas[:, j]
    for j, name in enumerate(names):
        frame[f"beta_{name}"] = betas[:, j]
    frame["mu"] = output.mu_draws.numpy()
    frame["sigma2"] = output.sigma2_draws.numpy()
    frame["g"] = output.g_draws.numpy()
    with open(path, "w", newline="") as f:
        accept = ",".join(str(c) for c in output.accept_counts.tolist())
        propose = ",".join(str(c) for c in output.propose_counts.tolist())
        f.write(
            f"# method={output.method} seed={output.seed} accept={accept} propose={propose}\n"
        )
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT)


def _parse_header(line: str, path: str) -> Dict[str, str]:
    if not line.startswith("#"):
        return {}
    meta = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DataError(f"{path}, line 1: malformed header token {token!r}.")
        meta[key] = value
    return meta


def _parse_counts(value: Optional[str], p: int, path: str) -> torch.Tensor:
    if not value:
        return torch.zeros(p, dtype=torch.long)
    try:
        counts = [int(c) for c in value.split(",")]
    except ValueError:
        raise DataError(f"{path}, line 1: malformed counts {value!r}.")
    if len(counts) != p:
        raise DataError(f"{path}, line 1: expected {p} counts, got {len(counts)}.")
    return torch.tensor(counts, dtype=torch.long)


def read_chain_csv(path: str, wall_time: float = 0.0) -> ChainOutput:
    """Reads a chain file back into a :class:`ChainOutput`.

    Acceptance counts missing from the header come back as zeros.
    """
    try:
        with open(path) as f:
            meta = _parse_header(f.readline(), path)
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise DataError(f"could not parse chain file {path}: {err}") from err
    names = tuple(c[len("gamma_"):] for c in frame.columns if c.startswith("gamma_"))
    expected = ["iteration"]
    expected += [f"gamma_{n}" for n in names] + [f"beta_{n}" for n in names]
    expected += ["mu", "sigma2", "g"]
    if list(frame.columns) != expected:
        raise DataError(
            f"{path}: unexpected columns {list(frame.columns)}, expected {expected}."
        )
    first_data_line = 3 if meta else 2
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if len(bad):
            raise DataError(
                f"{path}, line {int(bad[0]) + first_data_line}: column '{column}' "
                f"holds a non-numeric value {frame[column].iloc[bad[0]]!r}."
            )
        frame[column] = values
    gamma_columns = [f"gamma_{n}" for n in names]
    gammas = frame[gamma_columns].to_numpy()
    bad_rows = np.flatnonzero(~np.isin(gammas, (0, 1)).all(1))
    if len(bad_rows):
        raise DataError(
            f"{path}, line {int(bad_rows[0]) + first_data_line}: indicators must be 0 or 1."
        )
    betas = frame[[f"beta_{n}" for n in names]].to_numpy(dtype=np.float64)
    p = len(names)
    accept_counts = _parse_counts(meta.get("accept"), p, path)
    propose_counts = _parse_counts(meta.get("propose"), p, path)
    return ChainOutput(
        gamma_draws=torch.as_tensor(gammas.astype(bool)).reshape(len(frame), p),
        beta_draws=torch.as_tensor(betas, dtype=DTYPE).reshape(len(frame), p),
        mu_draws=torch.as_tensor(frame["mu"].to_numpy(dtype=np.float64)),
        sigma2_draws=torch.as_tensor(frame["sigma2"].to_numpy(dtype=np.float64)),
        g_draws=torch.as_tensor(frame["g"].to_numpy(dtype=np.float64)),
        accept_counts=accept_counts,
        propose_counts=propose_counts,
        wall_time=wall_time,
        seed=int(meta.get("seed", 0)),
        method=meta.get("method", "unknown"),
        names=names,
    )


def write_predictors_csv(
    summary: PosteriorSummary, path: str, chain_summary: Optional[ChainSummary] = None
) -> None:
    if chain_summary is not None:
        frame = chain_summary.to_frame().reindex(
            columns=["name", "pip", "bma_mean", "bma_sd", "ess", "mcse", "bf_incl"]
        )
    else:
        frame = summary.to_frame()
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=".")


def top_models_records(
    top_models: Sequence[Tuple[ModelIndicator, float]], names: Sequence[str]
) -> List[Dict[str, Any]]:
    return [
        {
            "rank": rank + 1,
            "model": str(gamma),
            "predictors": list(gamma.names(names)),
            "probability": prob,
        }
        for rank, (gamma, prob) in enumerate(top_models)
    ]


def write_top_models_json(summary: PosteriorSummary, path: str) -> None:
    write_json(top_models_records(summary.top_models, summary.names), path)


def chain_summary_dict(chain_summary: ChainSummary) -> Dict[str, Any]:
    """Summary JSON document: run-level fields and one record per predictor.

    Wall-clock dependent fields are left to :func:`timing_dict` so that the
    document only depends on the draws.
    """
    names = chain_summary.summary.names
    return {
        "method": chain_summary.method,
        "chains": chain_summary.chains,
        "iterations": chain_summary.iterations,
        "median_probability_model": list(chain_summary.median_model.names(names)),
        "predictors": chain_summary.to_records(include_timing=False),
        "top_models": top_models_records(chain_summary.summary.top_models, names),
    }


def exact_summary_dict(summary: PosteriorSummary, num_models: int) -> Dict[str, Any]:
    records = []
    for j, name in enumerate(summary.names):
        bf = inclusion_bayes_factor(float(summary.pip[j]))
        records.append(
            {
                "name": name,
                "pip": float(summary.pip[j]),
                "bma_mean": float(summary.bma_mean[j]),
                "bma_sd": float(summary.bma_sd[j]),
                "bf_incl": None if bf.saturated else bf.bf,
            }
        )
    median = median_probability_model(summary.pip)
    return {
        "method": "enumerate",
        "models": num_models,
        "median_probability_model": list(median.names(summary.names)),
        "predictors": records,
        "top_models": top_models_records(summary.top_models, summary.names),
    }


def timing_dict(
    chain_summary: ChainSummary, chain_wall_times: Sequence[float]
) -> Dict[str, Any]:
    return {
        "method": chain_summary.method,
        "chain_wall_times": list(chain_wall_times),
        "wall_time": chain_summary.wall_time,
        "ess_per_sec": {
            name: chain_summary.ess_per_sec[j]
            for j, name in enumerate(chain_summary.summary.names)
        },
    }


def read_timing_json(path: str) -> List[float]:
    """Per-chain wall times stored by :func:`timing_dict`."""
    try:
        with open(path) as f:
            values = json.load(f)["chain_wall_times"]
        return [float(v) for v in values]
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise DataError(f"could not parse timing file {path}: {err}") from err
