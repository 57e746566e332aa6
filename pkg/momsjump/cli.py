# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Command-line front end.

.. code-block:: bash

    momsjump enumerate --data diabetes --out runs/exact
    momsjump sample --data diabetes --method rjmcmc --seed 1 --out runs/rj
    momsjump diagnose runs/rj
    momsjump bench --data diabetes --iterations 50000 --out runs/bench

A run directory holds ``config.json``, ``summary.json``, ``predictors.csv`` and
``top_models.json``; sampling runs add ``chain_<k>.csv`` and ``timing.json``.
Every file but ``timing.json`` and the bench report only depends on the data,
the configuration and the seed. For that reason the per-predictor ESS per
second is not a ``summary.json`` field: it is written to ``timing.json``
(``ess_per_sec``, keyed by predictor name) next to the chain wall times, and
``diagnose`` puts it back under the ``timing`` key of ``diagnostics.json``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error, 4
numerical error.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import re
import sys
from typing import Any, Dict, List, Optional, Sequence

from momsjump.config import SamplerConfig
from momsjump.diagnostics import ChainSummary, summarize_chain
from momsjump.errors import (
    AdaptationFrozenError,
    ConfigError,
    DataError,
    NumericalError,
)
from momsjump.exact import enumerate_models, PosteriorSummary, summarize_exact
from momsjump.linmodel import load_data
from momsjump.moms import merge_chain_outputs
from momsjump.runner import run_chains
from momsjump.serialization import (
    chain_path,
    chain_summary_dict,
    exact_summary_dict,
    read_chain_csv,
    read_timing_json,
    timing_dict,
    write_chain_csv,
    write_json,
    write_predictors_csv,
    write_top_models_json,
)
from momsjump.utils import timeit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

SAMPLING_METHODS = ("moms", "rjmcmc")
_CHAIN_FILE = re.compile(r"chain_(\d+)\.csv$")


def cmd_enumerate(
    data_path: str,
    config: SamplerConfig,
    out_dir: str,
    response: Optional[str] = None,
) -> PosteriorSummary:
    """Scores every model and writes the exact posterior summary to ``out_dir``."""
    config = config.update(method="enumerate")
    config.validate()
    data = load_data(data_path, response)
    quad = config.quadrature()
    scores = enumerate_models(
        data,
        quad,
        workers=config.workers,
        max_p=config.max_enumeration_p,
        cond_cap=config.cond_cap,
    )
    summary = summarize_exact(scores, data, quad, top_k=config.top_k)
    os.makedirs(out_dir, exist_ok=True)
    config.save(os.path.join(out_dir, "config.json"))
    write_predictors_csv(summary, os.path.join(out_dir, "predictors.csv"))
    write_top_models_json(summary, os.path.join(out_dir, "top_models.json"))
    write_json(
        exact_summary_dict(summary, len(scores)), os.path.join(out_dir, "summary.json")
    )
    return summary


def _write_chain_summary(
    chain_summary: ChainSummary, out_dir: str, summary_name: str
) -> None:
    write_json(chain_summary_dict(chain_summary), os.path.join(out_dir, summary_name))
    write_predictors_csv(
        chain_summary.summary,
        os.path.join(out_dir, "predictors.csv"),
        chain_summary=chain_summary,
    )
    write_top_models_json(chain_summary.summary, os.path.join(out_dir, "top_models.json"))


def cmd_sample(
    data_path: str,
    config: SamplerConfig,
    out_dir: str,
    response: Optional[str] = None,
) -> ChainSummary:
    """Runs ``config.chains`` chains and writes their draws and pooled summary."""
    config.validate()
    if config.method not in SAMPLING_METHODS:
        raise ConfigError(
            f"sampling needs method in {SAMPLING_METHODS}, got '{config.method}'."
        )
    data = load_data(data_path, response)
    outputs = run_chains(data, config)
    chain_summary = summarize_chain(merge_chain_outputs(outputs), top_k=config.top_k)

    os.makedirs(out_dir, exist_ok=True)
    config.save(os.path.join(out_dir, "config.json"))
    for k, output in enumerate(outputs):
        write_chain_csv(output, chain_path(out_dir, k))
    _write_chain_summary(chain_summary, out_dir, "summary.json")
    write_json(
        timing_dict(chain_summary, [out.wall_time for out in outputs]),
        os.path.join(out_dir, "timing.json"),
    )
    return chain_summary


def _expand_chain_files(paths: Sequence[str]) -> List[str]:
    files = []
    for path in paths:
        if os.path.isdir(path):
            found = [
                f for f in glob.glob(os.path.join(path, "chain_*.csv")) if _CHAIN_FILE.search(f)
            ]
            if not found:
                raise DataError(f"no chain_<k>.csv file in directory {path}.")
            found.sort(key=lambda f: int(_CHAIN_FILE.search(f).group(1)))
            files += found
        else:
            files.append(path)
    if not files:
        raise DataError("no chain file given.")
    return files


def cmd_diagnose(
    chain_files: Sequence[str],
    out_dir: Optional[str] = None,
    top_k: int = 10,
) -> Dict[str, Any]:
    """Recomputes the pooled summary and indicator diagnostics from chain files.

    ``chain_files`` may name run directories, whose ``chain_<k>.csv`` files
    are read in chain order. If a ``timing.json`` file sits next to the first
    chain file, the wall times it stores are used for the ESS per second.
    The document is written to ``out_dir/diagnostics.json`` (next to the first
    chain file by default).
    """
    files = _expand_chain_files(chain_files)
    run_dir = os.path.dirname(os.path.abspath(files[0]))
    timing_path = os.path.join(run_dir, "timing.json")
    wall_times = [0.0] * len(files)
    if os.path.exists(timing_path):
        stored = read_timing_json(timing_path)
        if len(stored) == len(files):
            wall_times = stored
        else:
            logger.warning(
                "%s holds %d wall times for %d chain files, ignoring it.",
                timing_path,
                len(stored),
                len(files),
            )
    outputs = [read_chain_csv(f, w) for f, w in zip(files, wall_times)]
    chain_summary = summarize_chain(merge_chain_outputs(outputs), top_k=top_k)
    doc = chain_summary_dict(chain_summary)
    if any(wall_times):
        doc["timing"] = timing_dict(chain_summary, wall_times)
    out_dir = out_dir if out_dir is not None else run_dir
    os.makedirs(out_dir, exist_ok=True)
    write_json(doc, os.path.join(out_dir, "diagnostics.json"))
    return doc


def _cell(value: Optional[float], fmt: str = "{:.4f}") -> str:
    return "." if value is None else fmt.format(value)


def format_bench_table(report: Dict[str, Any]) -> str:
    """Plain-text rendering of a bench report, undefined values shown as ``.``."""
    methods = list(report["methods"])
    names = [rec["name"] for rec in report["methods"][methods[0]]["predictors"]]
    exact = report.get("exact")
    width = max([len(name) for name in names] + [14])

    def row(label, cells):
        return label.ljust(width) + "".join(c.rjust(12) for c in cells)

    lines = ["Posterior inclusion probability / BMA mean (sd)", ""]
    header = (["Exact"] if exact else []) + [m.upper() for m in methods]
    lines.append(row("", header))
    for j, name in enumerate(names):
        recs = ([exact["predictors"][j]] if exact else []) + [
            report["methods"][m]["predictors"][j] for m in methods
        ]
        lines.append(row(name, [_cell(r["pip"], "{:.3f}") for r in recs]))
        lines.append(row("", [_cell(r["bma_mean"], "{:.3f}") for r in recs]))
        lines.append(row("", ["(" + _cell(r["bma_sd"], "{:.3f}") + ")" for r in recs]))
    lines += ["", "Indicator ESS per iteration and per second", ""]
    lines.append(
        row("", [f"{m.upper()}/it" for m in methods] + [f"{m.upper()}/s" for m in methods])
    )
    for j, name in enumerate(names):
        recs = [report["methods"][m]["predictors"][j] for m in methods]
        cells = [_cell(r["ess_per_iter"]) for r in recs]
        cells += [_cell(r["ess_per_sec"], "{:.1f}") for r in recs]
        lines.append(row(name, cells))
    lines.append(
        row(
            "wall time (s)",
            ["" for _ in methods]
            + [f"{report['methods'][m]['wall_time']:.1f}" for m in methods],
        )
    )
    return "\n".join(lines) + "\n"


def cmd_bench(
    data_path: str,
    config: SamplerConfig,
    out_dir: str,
    response: Optional[str] = None,
) -> Dict[str, Any]:
    """Matched-iteration runs of both samplers, next to the exact posterior when available.

    Writes ``bench.json`` and its text rendering ``bench.txt``. ESS per second
    depends on the hardware and is reported, not compared.
    """
    config.validate()
    data = load_data(data_path, response)
    report: Dict[str, Any] = {
        "iterations": config.iterations,
        "warmup": config.warmup,
        "chains": config.chains,
        "seed": config.seed,
        "methods": {},
        "exact": None,
    }
    if data.p <= config.max_enumeration_p:
        quad = config.quadrature()
        scores = enumerate_models(
            data,
            quad,
            workers=config.workers,
            max_p=config.max_enumeration_p,
            cond_cap=config.cond_cap,
        )
        report["exact"] = exact_summary_dict(
            summarize_exact(scores, data, quad, top_k=config.top_k), len(scores)
        )
    else:
        logger.info("skipping the exact posterior, p=%d is above the enumeration limit", data.p)
    for method in SAMPLING_METHODS:
        method_config = config.update(method=method)
        outputs = run_chains(data, method_config)
        chain_summary = summarize_chain(
            merge_chain_outputs(outputs), top_k=config.top_k
        )
        report["methods"][method] = {
            "wall_time": chain_summary.wall_time,
            "chain_wall_times": [out.wall_time for out in outputs],
            "predictors": chain_summary.to_records(),
        }
    os.makedirs(out_dir, exist_ok=True)
    config.save(os.path.join(out_dir, "config.json"))
    write_json(report, os.path.join(out_dir, "bench.json"))
    with open(os.path.join(out_dir, "bench.txt"), "w") as f:
        f.write(format_bench_table(report))
    return report


def _add_run_arguments(parser: argparse.ArgumentParser, sampling: bool) -> None:
    parser.add_argument(
        "--data",
        required=True,
        help="CSV file with a header row, or 'diabetes' for the bundled data "
        "(an existing file named 'diabetes' takes precedence)",
    )
    parser.add_argument(
        "--response", default=None, help="response column (default: last column)"
    )
    parser.add_argument("--config", default=None, help="JSON or YAML config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--top-k", dest="top_k", type=int, default=None)
    if sampling:
        parser.add_argument("--method", choices=SAMPLING_METHODS, default=None)
        parser.add_argument("--iterations", type=int, default=None)
        parser.add_argument("--warmup", type=int, default=None)
        parser.add_argument("--chains", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momsjump",
        description="Bayesian variable selection under the JZS prior.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    enum = commands.add_parser("enumerate", help="exact posterior by enumeration")
    _add_run_arguments(enum, sampling=False)
    sample = commands.add_parser("sample", help="run MoMS or reversible-jump chains")
    _add_run_arguments(sample, sampling=True)
    bench = commands.add_parser("bench", help="compare both samplers on matched runs")
    _add_run_arguments(bench, sampling=True)
    diag = commands.add_parser("diagnose", help="diagnostics of stored chain files")
    diag.add_argument("chain_files", nargs="+", help="chain files or run directories")
    diag.add_argument("--out", default=None, help="output directory")
    diag.add_argument("--top-k", dest="top_k", type=int, default=10)
    return parser


def _config_from_args(args: argparse.Namespace) -> SamplerConfig:
    config = (
        SamplerConfig.from_file(args.config) if args.config else SamplerConfig()
    )
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "workers", "top_k", "method", "iterations", "warmup", "chains")
    }
    config = config.update(**overrides)
    config.validate()
    return config


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s"
    )
    logging.getLogger("momsjump").setLevel(level)
    logging.captureWarnings(True)


def _run(args: argparse.Namespace) -> None:
    if args.command == "diagnose":
        cmd_diagnose(args.chain_files, args.out, args.top_k)
        return
    config = _config_from_args(args)
    out_dir = args.out if args.out is not None else f"momsjump-{args.command}"
    if args.command == "enumerate":
        cmd_enumerate(args.data, config, out_dir, args.response)
    elif args.command == "sample":
        cmd_sample(args.data, config, out_dir, args.response)
    else:
        cmd_bench(args.data, config, out_dir, args.response)
    logger.info("results written to %s", out_dir)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``momsjump`` command. Returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    _configure_logging(args)
    try:
        _run(args)
    except ConfigError as err:
        logger.error("configuration error: %s", err)
        return EXIT_USAGE
    except DataError as err:
        logger.error("data error: %s", err)
        return EXIT_DATA
    except (NumericalError, AdaptationFrozenError) as err:
        logger.error("numerical error: %s", err)
        return EXIT_NUMERICAL
    if args.verbose:
        timeit.print()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
