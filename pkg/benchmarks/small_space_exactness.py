# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Model visit frequencies of both samplers against enumeration on a 4-model space.

    python benchmarks/small_space_exactness.py --sweeps 1000000
"""

import argparse
import logging
import math

import torch
import torch.nn.functional as F
from momsjump.config import SamplerConfig
from momsjump.diagnostics import batch_means_mcse
from momsjump.exact import enumerate_models
from momsjump.linmodel import load_data
from momsjump.runner import run_chains

parser = argparse.ArgumentParser()
parser.add_argument("--sweeps", type=int, default=1_000_000)
parser.add_argument("--chains", type=int, default=4)
parser.add_argument("--n", type=int, default=30)
parser.add_argument("--seed", type=int, default=0)


def synthetic_rows(n, seed):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        x = torch.randn(n, 2, dtype=torch.float64)
        # weak x2 effect
        y = 0.6 * x[:, 0] + 0.15 * x[:, 1] + torch.randn(n, dtype=torch.float64)
    return [tuple(row) for row in torch.cat([x, y.unsqueeze(-1)], 1).tolist()]


if __name__ == "__main__":
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    data = load_data(synthetic_rows(args.n, args.seed), columns=["x1", "x2", "y"])
    exact = {s.gamma.key: math.exp(s.log_post_prob) for s in enumerate_models(data)}

    passed = True
    for method in ("moms", "rjmcmc"):
        config = SamplerConfig(
            method=method,
            iterations=args.sweeps // args.chains,
            warmup=2000,
            chains=args.chains,
            seed=args.seed,
        )
        outputs = run_chains(data, config)
        one_hot = []
        for out in outputs:
            keys = out.gamma_draws[:, 0].long() * 2 + out.gamma_draws[:, 1].long()
            one_hot.append(F.one_hot(keys, 4).to(torch.float64))
        freq = torch.cat(one_hot).mean(0)
        mcse = batch_means_mcse(one_hot)
        for key in range(4):
            gap = abs(float(freq[key]) - exact[key])
            ok = gap <= 3 * float(mcse[key])
            passed &= ok
            print(
                f"[{'ok' if ok else 'FAIL'}] {method} model {key:02b}: "
                f"visits {float(freq[key]):.5f}, exact {exact[key]:.5f}, mcse {float(mcse[key]):.5f}"
            )
    print("all checks passed" if passed else "some checks failed")
