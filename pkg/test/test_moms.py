# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.
import argparse
import math
import warnings

import pytest
import torch
import torch.distributions as D
import torch.nn.functional as F
from _utils_internal import (
    assert_balanced_flows,
    diabetes,
    flip_flows,
    random_state,
    small_config,
    synthetic_data,
    synthetic_rows,
)
from momsjump import moms
from momsjump.diagnostics import batch_means_mcse
from momsjump.errors import CorruptedStateError
from momsjump.exact import enumerate_models, model_conditional_moments
from momsjump.linmodel import load_data, ModelCache, ModelIndicator
from momsjump.moms import (
    adapt_scales,
    ChainState,
    initial_state,
    log_joint,
    merge_chain_outputs,
    moms_flip_log_ratio,
    moms_flip_step,
    run_moms,
    within_model_gibbs,
)
from momsjump.tuning import AcceptanceRule, ProposalScales
from momsjump.utils import normal_logpdf


def log_joint_oracle(state, data):
    """Same density from torch.distributions on the raw response."""
    gamma = state.gamma
    index = list(gamma.included)
    resid = data.y_centered + (data.y_mean - state.mu) - data.X_centered @ state.beta
    scale = torch.tensor(math.sqrt(state.sigma2), dtype=torch.float64)
    value = D.Normal(torch.zeros((), dtype=torch.float64), scale).log_prob(resid).sum()
    if index:
        A = data.XtX[index][:, index]
        prior = D.MultivariateNormal(
            torch.zeros(len(index), dtype=torch.float64),
            covariance_matrix=state.g * state.sigma2 * torch.linalg.inv(A),
        )
        value = value + prior.log_prob(state.beta[index])
    g = torch.tensor(state.g, dtype=torch.float64)
    value = value + D.InverseGamma(
        torch.tensor(0.5, dtype=torch.float64), torch.tensor(0.5 * data.n, dtype=torch.float64)
    ).log_prob(g)
    return float(value) - math.log(state.sigma2)


class TestState:
    def test_initial_state(self):
        data = diabetes()
        cache = ModelCache(data)
        state = initial_state(data, cache)
        assert state.gamma == ModelIndicator.full(data.p)
        torch.testing.assert_close(state.beta, cache.fit(state.gamma).beta_hat)
        assert state.g == data.n
        state.check()

    def test_initial_state_in_model(self):
        data = diabetes()
        gamma = ModelIndicator.from_indices(data.p, [2, 8])
        state = initial_state(data, ModelCache(data), gamma)
        assert state.gamma == gamma
        assert (state.beta[[0, 1, 3, 4, 5, 6, 7, 9]] == 0).all()

    def test_check(self):
        data = synthetic_data()
        state = ChainState(
            ModelIndicator((True, False)),
            torch.tensor([0.5, 0.1], dtype=torch.float64),
            0.0,
            1.0,
            1.0,
        )
        with pytest.raises(CorruptedStateError, match="excluded coefficients"):
            state.check()
        state.beta[1] = 0.0
        state.check()
        state.sigma2 = -1.0
        with pytest.raises(CorruptedStateError, match="must be positive"):
            state.check()

    @pytest.mark.parametrize("seed", range(5))
    def test_log_joint(self, seed):
        data = diabetes()
        cache = ModelCache(data)
        state = random_state(data, cache, torch.Generator().manual_seed(seed))
        state.mu = data.y_mean + 0.3
        assert log_joint(state, data, cache) == pytest.approx(
            log_joint_oracle(state, data), rel=1e-10, abs=1e-8
        )


class TestFlip:
    def test_add_ratio(self):
        data = diabetes()
        cache = ModelCache(data)
        state = initial_state(data, cache, ModelIndicator.from_indices(data.p, [2, 3, 8]))
        scales = ProposalScales.initial(data.p, 2.0)
        log_ratio, candidate = moms_flip_log_ratio(state, data, scales, 4, 0.3, cache)
        assert candidate.gamma == state.gamma.flip(4)
        assert float(candidate.beta[4]) == 0.6
        expected = (
            log_joint(candidate, data, cache)
            - log_joint(state, data, cache)
            - normal_logpdf(0.6, 0.0, 2.0)
        )
        assert log_ratio == pytest.approx(expected, rel=1e-12)

    def test_delete_ratio(self):
        data = diabetes()
        cache = ModelCache(data)
        state = initial_state(data, cache, ModelIndicator.from_indices(data.p, [2, 3, 8]))
        scales = ProposalScales.initial(data.p, 3.0)
        log_ratio, candidate = moms_flip_log_ratio(state, data, scales, 3, 0.0, cache)
        assert not candidate.gamma[3]
        assert float(candidate.beta[3]) == 0.0
        expected = (
            log_joint(candidate, data, cache)
            - log_joint(state, data, cache)
            + normal_logpdf(float(state.beta[3]), 0.0, 3.0)
        )
        assert log_ratio == pytest.approx(expected, rel=1e-12)

    def test_zero_proposal_rejected(self):
        data = synthetic_data()
        cache = ModelCache(data)
        state = initial_state(data, cache, ModelIndicator.null(2))
        scales = ProposalScales.initial(2)
        log_ratio, candidate = moms_flip_log_ratio(state, data, scales, 0, 0.0, cache)
        assert log_ratio == -math.inf
        assert candidate is state

    @pytest.mark.parametrize("u,accepted", [(0.0, True), (1.0, False)])
    def test_flip_step(self, u, accepted):
        data = synthetic_data()
        cache = ModelCache(data)
        state = initial_state(data, cache, ModelIndicator.null(2))
        new = moms_flip_step(
            state, data, ProposalScales.initial(2), AcceptanceRule(), 0, cache, z=0.5, u=u
        )
        assert (new.gamma[0]) is accepted
        new.check()

    def test_flip_step_draws(self):
        data = synthetic_data()
        state = initial_state(data, ModelCache(data))
        torch.manual_seed(0)
        for i in [0, 1, 0, 1]:
            state = moms_flip_step(state, data, ProposalScales.initial(2), AcceptanceRule(), i)
            state.check()


class TestGibbs:
    def test_support(self):
        data = diabetes()
        cache = ModelCache(data)
        state = initial_state(data, cache, ModelIndicator.from_indices(data.p, [1, 2]))
        torch.manual_seed(0)
        for _ in range(20):
            state = within_model_gibbs(state, data, cache)
            state.check()
            assert (state.beta[[0, 3, 4, 5, 6, 7, 8, 9]] == 0).all()

    def test_reproducible(self):
        data = synthetic_data()
        state = initial_state(data, ModelCache(data))
        torch.manual_seed(3)
        a = within_model_gibbs(state, data)
        torch.manual_seed(3)
        b = within_model_gibbs(state, data)
        assert torch.equal(a.beta, b.beta)
        assert (a.mu, a.sigma2, a.g) == (b.mu, b.sigma2, b.g)

    def test_conditional_moments(self):
        data = synthetic_data(n=40, coef=(0.8, 0.3), seed=1)
        cache = ModelCache(data)
        gamma = ModelIndicator.full(2)
        state = initial_state(data, cache, gamma)
        torch.manual_seed(0)
        draws = []
        for t in range(6000):
            state = within_model_gibbs(state, data, cache)
            if t >= 500:
                draws.append(state.beta.clone())
        draws = torch.stack(draws)
        mean, sd = model_conditional_moments(data, gamma)
        mcse = batch_means_mcse(draws)
        assert ((draws.mean(0) - mean).abs() < 4 * mcse + 1e-3).all()
        torch.testing.assert_close(draws.std(0), sd, rtol=0.08, atol=0.0)


class TestAdaptation:
    def test_frozen_after_warmup(self):
        data = diabetes()
        cache = ModelCache(data)
        state = initial_state(data, cache)
        scales = ProposalScales.initial(data.p)
        torch.manual_seed(0)
        state, tuned = adapt_scales(state, data, scales, AcceptanceRule(), 200, cache)
        assert not tuned.adapting
        assert not torch.equal(tuned.tau, scales.tau)
        assert state.gamma == ModelIndicator.full(data.p)

    def test_no_warmup(self):
        data = synthetic_data()
        cache = ModelCache(data)
        state = initial_state(data, cache)
        scales = ProposalScales.initial(2, 0.7)
        _, tuned = adapt_scales(state, data, scales, AcceptanceRule(), 0, cache)
        assert tuned.tau.tolist() == [0.7, 0.7]
        assert not tuned.adapting

    def test_barker_warns(self):
        data = synthetic_data()
        cache = ModelCache(data)
        state = initial_state(data, cache)
        with pytest.warns(UserWarning, match="Barker"):
            adapt_scales(state, data, ProposalScales.initial(2), AcceptanceRule("barker"), 5, cache)

    def test_singular_full_model(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = load_data(synthetic_rows(4, [1.0, 0.5, 0.2, 0.1]))
        cache = ModelCache(data)
        state = initial_state(data, cache)
        assert state.gamma == ModelIndicator.null(4)
        with pytest.warns(UserWarning, match="full model is singular"):
            _, tuned = adapt_scales(
                state, data, ProposalScales.initial(4), AcceptanceRule(), 10, cache
            )
        assert tuned.tau.tolist() == [1.0] * 4


class TestRunMoms:
    def test_shapes(self):
        data = diabetes()
        out = run_moms(data, small_config(iterations=50, warmup=20))
        assert out.gamma_draws.shape == (50, 10)
        assert out.beta_draws.shape == (50, 10)
        assert out.mu_draws.shape == out.sigma2_draws.shape == out.g_draws.shape == (50,)
        assert out.method == "moms"
        assert out.names == data.column_names
        assert (out.beta_draws[~out.gamma_draws] == 0).all()
        assert (out.propose_counts == 50).all()
        assert ((out.acceptance_rate >= 0) & (out.acceptance_rate <= 1)).all()
        assert out.wall_time > 0
        assert out.tau is not None

    def test_deterministic(self):
        data = diabetes()
        config = small_config(iterations=40, warmup=20, seed=1)
        a, b = run_moms(data, config), run_moms(data, config)
        assert torch.equal(a.gamma_draws, b.gamma_draws)
        assert torch.equal(a.beta_draws, b.beta_draws)
        assert torch.equal(a.g_draws, b.g_draws)
        c = run_moms(data, config, chain=1)
        assert c.seed == 2
        assert not torch.equal(a.beta_draws, c.beta_draws)

    def test_global_generator_untouched(self):
        data = synthetic_data()
        torch.manual_seed(0)
        expected = torch.rand(3)
        torch.manual_seed(0)
        run_moms(data, small_config(iterations=10, warmup=5))
        assert torch.equal(torch.rand(3), expected)

    @pytest.mark.parametrize("scan_order", ["systematic", "random"])
    def test_small_space(self, scan_order):
        data = synthetic_data(n=30, coef=(0.6, 0.15))
        exact = torch.tensor(
            [math.exp(s.log_post_prob) for s in enumerate_models(data)], dtype=torch.float64
        )
        config = small_config(iterations=5000, warmup=500, scan_order=scan_order)
        one_hot = []
        for chain in range(2):
            out = run_moms(data, config, chain)
            keys = out.gamma_draws[:, 0].long() * 2 + out.gamma_draws[:, 1].long()
            one_hot.append(F.one_hot(keys, 4).to(torch.float64))
        freq = torch.cat(one_hot).mean(0)
        mcse = batch_means_mcse(one_hot)
        assert ((freq - exact).abs() <= 4 * mcse + 0.01).all()

    @pytest.mark.parametrize("rule", [AcceptanceRule("metropolis"), AcceptanceRule("barker")])
    def test_flows_balance(self, rule):
        data = synthetic_data(n=30, coef=(0.6, 0.15))
        cache = ModelCache(data)
        scales = ProposalScales.initial(data.p, 0.3)

        def step(state, i):
            return moms_flip_step(state, data, scales, rule, i, cache)

        assert_balanced_flows(flip_flows(step, data, cache, sweeps=4000))

    def test_cache_bounded(self, monkeypatch):
        caches = []

        def small_cache(data, cond_cap):
            cache = ModelCache(data, cond_cap, max_size=8)
            caches.append(cache)
            return cache

        monkeypatch.setattr(moms, "ModelCache", small_cache)
        data = synthetic_data(n=60, coef=(0.5, 0.0, 0.3, 0.0, 0.0, 0.2, 0.0))
        config = small_config(iterations=200, warmup=50, chains=1)
        out = run_moms(data, config)
        assert len(caches) == 1 and len(caches[0]) <= 8
        monkeypatch.undo()
        reference = run_moms(data, config)
        assert torch.equal(out.gamma_draws, reference.gamma_draws)
        assert torch.equal(out.beta_draws, reference.beta_draws)


def test_merge_chain_outputs():
    data = synthetic_data()
    config = small_config(iterations=30, warmup=10)
    outs = [run_moms(data, config, k) for k in range(3)]
    merged = merge_chain_outputs(outs)
    assert merged.iterations == 90
    assert merged.chain_lengths == (30, 30, 30)
    assert [g.shape[0] for g in merged.split_gamma()] == [30, 30, 30]
    assert torch.equal(merged.propose_counts, sum(out.propose_counts for out in outs))
    assert merged.wall_time == pytest.approx(sum(out.wall_time for out in outs))
    with pytest.raises(ValueError, match="empty"):
        merge_chain_outputs([])
    other = run_moms(diabetes(), small_config(iterations=5, warmup=0))
    with pytest.raises(ValueError, match="different samplers or predictors"):
        merge_chain_outputs([outs[0], other])


if __name__ == "__main__":
    args, unknown = argparse.ArgumentParser().parse_known_args()
    pytest.main([__file__, "--capture", "no", "--exitfirst"] + unknown)
