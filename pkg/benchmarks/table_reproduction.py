# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Exact, MoMS and reversible-jump posterior summaries of the diabetes data.

Checks the sampler summaries against the exact posterior (inclusion
probabilities within 0.01 and 3 MCSE, model-averaged means within 3 batch
means standard errors) and the indicator ESS pattern between the samplers.

    python benchmarks/table_reproduction.py --iterations 50000 --chains 4
"""

import argparse
import logging
import math

from momsjump.cli import cmd_bench, format_bench_table
from momsjump.config import SamplerConfig

parser = argparse.ArgumentParser()
parser.add_argument("--iterations", type=int, default=50000)
parser.add_argument("--warmup", type=int, default=5000)
parser.add_argument("--chains", type=int, default=4)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="bench-diabetes")

EXACT_PIP = {
    "AGE": 0.079,
    "SEX": 0.987,
    "BMI": 1.000,
    "BP": 1.000,
    "S1": 0.661,
    "S2": 0.453,
    "S3": 0.515,
    "S4": 0.257,
    "S5": 1.000,
    "S6": 0.125,
}
EXACT_MEAN_SD = {
    "AGE": (-0.001, 0.061),
    "SEX": (-21.399, 6.234),
    "BMI": (5.699, 0.712),
    "BP": (1.115, 0.219),
    "S1": (-0.448, 0.464),
    "S2": (0.260, 0.432),
    "S3": (-0.484, 0.548),
    "S4": (1.830, 4.324),
    "S5": (55.362, 14.173),
    "S6": (0.035, 0.133),
}
FASTER_RJ = ("S1", "S2", "S3", "S5")


def _check(label, ok):
    print(f"[{'ok' if ok else 'FAIL'}] {label}")
    return ok


if __name__ == "__main__":
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    config = SamplerConfig(
        iterations=args.iterations,
        warmup=args.warmup,
        chains=args.chains,
        seed=args.seed,
    )
    report = cmd_bench("diabetes", config, args.out)
    print(format_bench_table(report))

    exact = {r["name"]: r for r in report["exact"]["predictors"]}
    passed = True
    for name, pip in EXACT_PIP.items():
        passed &= _check(
            f"exact pip({name}) = {exact[name]['pip']:.3f}",
            round(exact[name]["pip"], 3) == pip,
        )
    for name, (mean, sd) in EXACT_MEAN_SD.items():
        for key, ref in (("bma_mean", mean), ("bma_sd", sd)):
            value = exact[name][key]
            passed &= _check(
                f"exact {key}({name}) = {value:.3f}",
                abs(value - ref) <= max(0.005, 1e-3 * abs(ref)),
            )

    for method, records in report["methods"].items():
        for rec in records["predictors"]:
            name = rec["name"]
            gap = abs(rec["pip"] - exact[name]["pip"])
            mcse = rec["mcse"] if rec["mcse"] is not None else 0.0
            passed &= _check(
                f"{method} pip({name}) = {rec['pip']:.4f}, |gap| = {gap:.4f}",
                gap <= 0.01 and (gap <= 3 * mcse or gap < 1e-3),
            )
            se = rec["bma_mean_mcse"]
            gap = abs(rec["bma_mean"] - exact[name]["bma_mean"])
            passed &= _check(
                f"{method} mean({name}) = {rec['bma_mean']:.4f}, |gap| = {gap:.4f}, se = {se:.4f}",
                gap <= 3 * se or math.isclose(gap, 0.0, abs_tol=1e-3),
            )

    moms = {r["name"]: r for r in report["methods"]["moms"]["predictors"]}
    rj = {r["name"]: r for r in report["methods"]["rjmcmc"]["predictors"]}
    for name in FASTER_RJ:
        passed &= _check(
            f"ESS/iter({name}): rjmcmc {rj[name]['ess_per_iter']} >= moms {moms[name]['ess_per_iter']}",
            rj[name]["ess_per_iter"] is not None
            and moms[name]["ess_per_iter"] is not None
            and rj[name]["ess_per_iter"] >= moms[name]["ess_per_iter"],
        )
    passed &= _check(
        "BMI ESS undefined for both samplers",
        moms["BMI"]["ess"] is None and rj["BMI"]["ess"] is None,
    )
    print("all checks passed" if passed else "some checks failed")
